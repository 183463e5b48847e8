use std::time::Duration;

use serde::Serialize;

use crate::ratemodel::{PhaseConfig, PowerSplit, ProtocolRates};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    Converged,
    /// An iteration cap stopped the run; the best iterate is reported.
    IterationCap,
    Infeasible,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::IterationCap => "iteration_cap",
            SolveStatus::Infeasible => "infeasible",
        }
    }
}

/// Outcome of one optimization run. Rates are always recomputed from the
/// reported split and extracted unit-modulus phases.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub extraction_degraded: bool,
    /// True objective after each outer iteration.
    pub objective_trace: Vec<f64>,
    pub split: Option<PowerSplit>,
    pub phases: Option<PhaseConfig>,
    pub rates: Option<ProtocolRates>,
    pub objective: f64,
    /// Largest rank-one penalty over the optimized stages at termination.
    pub penalty: f64,
    pub reconstruction_error: f64,
    /// Largest KKT residual reported by the conic solver over all solves.
    pub kkt_max: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub wall_time: Duration,
}

impl SolveReport {
    pub fn infeasible(wall_time: Duration) -> Self {
        Self {
            status: SolveStatus::Infeasible,
            extraction_degraded: false,
            objective_trace: Vec::new(),
            split: None,
            phases: None,
            rates: None,
            objective: f64::NAN,
            penalty: f64::NAN,
            reconstruction_error: f64::NAN,
            kkt_max: f64::NAN,
            outer_iterations: 0,
            inner_iterations: 0,
            wall_time,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.status != SolveStatus::Infeasible
    }

    /// Largest drop between consecutive trace entries (0 for a monotone
    /// trace).
    pub fn max_trace_drop(&self) -> f64 {
        self.objective_trace
            .windows(2)
            .map(|w| (w[0] - w[1]).max(0.0))
            .fold(0.0, f64::max)
    }
}
