//! Monte Carlo harness: reference schemes, parameter sweeps with CSV output,
//! convergence traces, execution-time ratios and the small-M oracle.

mod baselines;
mod oracle;
mod sweep;
mod trace;

use std::fmt;
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use baselines::{baseline_relay_only, baseline_ris_only, ris_only_config, ris_only_structure};
pub use oracle::{brute_force_oracle, OracleResult, MAX_COMBINATIONS};
pub use sweep::{
    run_sweep, write_plot_script, BenchReport, PointSummary, SweepParameter, SweepRecord,
    SweepSpec, ZetaSummary, CSV_HEADER, PLOT_SCRIPT,
};
pub use trace::{convergence_trace, execution_time_ratio, TraceRow, ZetaPoint};

use crate::aodriver::alternating_optimization;
use crate::error::{Error, Result};
use crate::jointopt::joint_optimization;
use crate::ratemodel::{Criterion, PhaseConfig, PowerSplit, Protocol};
use crate::report::{SolveReport, SolveStatus};
use crate::scenario::{ChannelRealization, ScenarioConfig};

/// An optimization scheme the harness can run on a channel draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "AO")]
    Ao,
    #[serde(rename = "JO")]
    Jo,
    #[serde(rename = "relay_only")]
    RelayOnly,
    #[serde(rename = "ris_only")]
    RisOnly,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Ao => "AO",
            Method::Jo => "JO",
            Method::RelayOnly => "relay_only",
            Method::RisOnly => "ris_only",
        }
    }

    /// The RIS-only scheme has no relay and hence no protocol.
    pub fn uses_protocol(self) -> bool {
        self != Method::RisOnly
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ao" => Ok(Method::Ao),
            "jo" => Ok(Method::Jo),
            "relay_only" | "relay-only" => Ok(Method::RelayOnly),
            "ris_only" | "ris-only" => Ok(Method::RisOnly),
            _ => Err(Error::Config(format!("unknown method '{s}'"))),
        }
    }
}

/// Scheme-independent result of one run. Rates are NaN for infeasible runs.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub status: SolveStatus,
    pub r_n: f64,
    pub r_d: f64,
    pub objective: f64,
    pub split: Option<PowerSplit>,
    pub phases: Option<PhaseConfig>,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub objective_trace: Vec<f64>,
    pub wall_time: Duration,
}

impl RunSummary {
    pub fn infeasible(wall_time: Duration) -> Self {
        Self {
            status: SolveStatus::Infeasible,
            r_n: f64::NAN,
            r_d: f64::NAN,
            objective: f64::NAN,
            split: None,
            phases: None,
            outer_iterations: 0,
            inner_iterations: 0,
            objective_trace: Vec::new(),
            wall_time,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.status != SolveStatus::Infeasible
    }
}

impl From<SolveReport> for RunSummary {
    fn from(r: SolveReport) -> Self {
        let (r_n, r_d) = r.rates.map_or((f64::NAN, f64::NAN), |x| (x.r_n, x.r_d));
        Self {
            status: r.status,
            r_n,
            r_d,
            objective: r.objective,
            split: r.split,
            phases: r.phases,
            outer_iterations: r.outer_iterations,
            inner_iterations: r.inner_iterations,
            objective_trace: r.objective_trace,
            wall_time: r.wall_time,
        }
    }
}

/// Runs `method` on one channel draw. `rng` supplies the random initial
/// phases; AO and JO consume it identically, so cloning it before the call
/// gives both the same start.
pub fn run_method<R: Rng + ?Sized>(
    ch: &ChannelRealization,
    cfg: &ScenarioConfig,
    method: Method,
    protocol: Protocol,
    criterion: Criterion,
    rng: &mut R,
) -> Result<RunSummary> {
    match method {
        Method::Ao => {
            alternating_optimization(ch, cfg, protocol, criterion, rng).map(|t| t.report.into())
        }
        Method::Jo => joint_optimization(ch, cfg, protocol, criterion, rng).map(RunSummary::from),
        Method::RelayOnly => baseline_relay_only(ch, cfg, protocol, criterion),
        Method::RisOnly => baseline_ris_only(ch, cfg, criterion, rng),
    }
}

/// Median of a sample; NaN when empty.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    if v.len() % 2 == 1 {
        v[k]
    } else {
        0.5 * (v[k - 1] + v[k])
    }
}

/// Sample mean and (n-1) standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_and_spread() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn method_names_round_trip() {
        for m in [Method::Ao, Method::Jo, Method::RelayOnly, Method::RisOnly] {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
    }
}
