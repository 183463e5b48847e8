use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("path loss model is undefined below the 1 m reference distance (d = {0} m)")]
    DistanceBelowReference(f64),

    #[error("invalid power split: {0}")]
    PowerSplit(String),

    #[error("power allocation subproblem is infeasible: {0}")]
    Infeasible(String),

    #[error("malformed subproblem: {0}")]
    Subproblem(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("failed to parse configuration: {0}")]
    Parse(#[from] toml::de::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
