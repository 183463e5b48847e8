//! RIS phase optimization for a fixed power split: semidefinite lifting,
//! successive convex approximation and a rank-one penalty loop.

mod lifting;
mod structure;
mod surrogate;

use std::time::Instant;

pub use lifting::{
    dc_penalty, dc_penalty_surrogate, extract_phases, gain_vector, mix_identity,
    principal_eigenvector, Extraction, PenaltyAnchor, RECONSTRUCTION_TOL,
};
pub use structure::{Branches, RateStructure, Share, SinrTerm};
pub use surrogate::{FreeVars, LemmaPoint, ProductPoint, SurrogateBuilder};

use crate::conic::{self, ConicStatus, SolveOptions};
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64};
use crate::ratemodel::{
    effective_gains, rates, Criterion, PhaseConfig, PowerSplit, Protocol, ProtocolRates,
};
use crate::report::{SolveReport, SolveStatus};
use crate::scenario::{ChannelRealization, Link, ScenarioConfig};

/// Initial barrier parameter of the convexified subproblems; rates of a
/// few bits against a barrier of degree about `2M` put the start near the
/// central path at this value.
const BARRIER_T0: f64 = 100.0;

/// A phase optimization problem: which rates, which criterion, which stages.
#[derive(Debug, Clone)]
pub struct PhaseTask<'a> {
    pub ch: &'a ChannelRealization,
    pub cfg: &'a ScenarioConfig,
    pub structure: RateStructure,
    /// Set when `structure` is one of the two relaying protocols; enables
    /// the full per-rate breakdown in reports.
    pub protocol: Option<Protocol>,
    pub criterion: Criterion,
    /// Stages whose phases are optimized; the others stay as given.
    pub stages: [bool; 2],
    pub enforce_qos: bool,
}

impl<'a> PhaseTask<'a> {
    /// Under H-NOMA only the first-stage phases are optimized; the second
    /// stage uses [`closed_form_relay_phases`].
    pub fn new(
        ch: &'a ChannelRealization,
        cfg: &'a ScenarioConfig,
        protocol: Protocol,
        criterion: Criterion,
    ) -> Self {
        Self {
            ch,
            cfg,
            structure: RateStructure::new(protocol),
            protocol: Some(protocol),
            criterion,
            stages: match protocol {
                Protocol::Full => [true, true],
                Protocol::Hybrid => [true, false],
            },
            enforce_qos: criterion.has_qos(),
        }
    }

    /// `(R_n, R_d)` at the given phases.
    pub fn rates(&self, phases: &PhaseConfig, split: &PowerSplit) -> (f64, f64) {
        self.structure
            .rates(&effective_gains(self.ch, phases, self.cfg), split)
    }

    pub fn objective_of(&self, r: (f64, f64)) -> f64 {
        match self.criterion {
            Criterion::SumRate => r.0 + r.1,
            Criterion::MinRate => r.0.min(r.1),
        }
    }

    pub fn objective(&self, phases: &PhaseConfig, split: &PowerSplit) -> f64 {
        self.objective_of(self.rates(phases, split))
    }

    /// QoS holds up to `slack` in rate.
    pub fn qos_ok(&self, r: (f64, f64), slack: f64) -> bool {
        !self.enforce_qos || (r.0 >= self.cfg.r_min_n - slack && r.1 >= self.cfg.r_min_d - slack)
    }

    /// SINR targets of the QoS constraints, if enforced.
    pub fn sinr_targets(&self) -> Option<(f64, f64)> {
        let p = self.structure.prelog;
        self.enforce_qos.then(|| {
            (
                (self.cfg.r_min_n / p).exp2() - 1.0,
                (self.cfg.r_min_d / p).exp2() - 1.0,
            )
        })
    }

    pub fn protocol_rates(
        &self,
        phases: &PhaseConfig,
        split: &PowerSplit,
    ) -> Option<ProtocolRates> {
        self.protocol
            .map(|p| rates(self.ch, phases, split, p, self.cfg))
    }

    pub fn conic_options(&self) -> SolveOptions {
        SolveOptions {
            tol: self.cfg.solver.conic_tol,
            t0: BARRIER_T0,
            ..SolveOptions::default()
        }
    }
}

/// Second-stage phases that co-phase the RIS path of the relay-to-d link
/// with its direct path, maximizing `Gamma_Rd`.
pub fn closed_form_relay_phases(ch: &ChannelRealization) -> Vec<f64> {
    let r = ch.direct(Link::Rd);
    let omega = if r.norm() > 0.0 { r.arg() } else { 0.0 };
    ch.cascade(Link::Rd)
        .iter()
        .map(|q| omega - q.arg())
        .collect()
}

/// Result of one convex subproblem.
#[derive(Debug, Clone)]
pub struct PhaseStep {
    pub w: [CMatrix; 2],
    /// Split at the optimum; equals the input split when it was frozen.
    pub split: PowerSplit,
    /// Optimal value of the surrogate, penalty included.
    pub surrogate: f64,
    pub kkt_max: f64,
    pub newton_steps: usize,
}

/// Solves the convexified phase subproblem around `local` with penalty
/// weight `weight = 1/eta`. Fails with [`Error::Infeasible`] when the
/// linearized QoS constraints admit no point.
pub fn solve_phase_subproblem(
    task: &PhaseTask<'_>,
    split: &PowerSplit,
    local: &[CMatrix; 2],
    weight: f64,
) -> Result<PhaseStep> {
    let free = FreeVars {
        alpha: false,
        beta: false,
        stages: task.stages,
    };
    solve_surrogate(task, split, local, weight, free)
}

/// Convexified subproblem with any subset of `alpha_n`, `beta_d` and the
/// task's stages free.
pub fn solve_surrogate(
    task: &PhaseTask<'_>,
    split: &PowerSplit,
    local: &[CMatrix; 2],
    weight: f64,
    free: FreeVars,
) -> Result<PhaseStep> {
    let mut b = SurrogateBuilder::new(task.ch, task.cfg, split, local, free);
    let mut obj = vec![b.rate_objective(&task.structure, task.criterion, task.sinr_targets())];
    for t in 0..2 {
        if free.stages[t] {
            let anchor = PenaltyAnchor::at(&local[t]);
            obj.push(b.penalty(t, &anchor, weight));
        }
    }
    b.spec.objective = crate::conic::Concave::sum(obj);
    let sol = conic::solve(&b.spec, &b.start_point(), &task.conic_options())?;
    if sol.status == ConicStatus::Infeasible {
        return Err(Error::Infeasible("convexified subproblem".into()));
    }
    let mut w = local.clone();
    for t in 0..2 {
        if let Some(k) = b.stage_block(t) {
            w[t] = sol.point.blocks[k].clone();
        }
    }
    let scalar = |v: Option<crate::conic::Var>, fallback: f64| match v {
        Some(crate::conic::Var::Scalar(i)) => sol.point.scalars[i].clamp(0.0, 0.5),
        _ => fallback,
    };
    let split = PowerSplit::new(
        scalar(b.alpha_var(), split.alpha_n),
        scalar(b.beta_var(), split.beta_d),
    )?;
    Ok(PhaseStep {
        w,
        split,
        surrogate: sol.objective,
        kkt_max: sol.kkt.max(),
        newton_steps: sol.iterations,
    })
}

/// Output of the penalty loop.
#[derive(Debug, Clone)]
pub struct PhaseOutcome {
    pub phases: PhaseConfig,
    pub report: SolveReport,
    /// Final lifted matrices.
    pub w: [CMatrix; 2],
}

/// Penalty-SCA loop for the phases at a fixed split, starting from the
/// unit-modulus `init`. The penalty weight grows by `1/c` per outer round
/// until every optimized stage is numerically rank one.
pub fn optimize_phases(
    task: &PhaseTask<'_>,
    split: &PowerSplit,
    init: &PhaseConfig,
) -> Result<PhaseOutcome> {
    optimize_phases_from(task, split, init, task.cfg.solver.penalty_eta0)
}

/// [`optimize_phases`] with an explicit initial penalty parameter `eta0`.
pub fn optimize_phases_from(
    task: &PhaseTask<'_>,
    split: &PowerSplit,
    init: &PhaseConfig,
    eta0: f64,
) -> Result<PhaseOutcome> {
    let started = Instant::now();
    let s = &task.cfg.solver;
    if init.elements() != task.ch.elements() {
        return Err(Error::Dimension {
            expected: task.ch.elements(),
            got: init.elements(),
        });
    }
    let mut w = [init.lifted(0), init.lifted(1)];
    let mut eta = eta0;
    let mut trace = Vec::new();
    let mut kkt_max: f64 = 0.0;
    let (mut outer, mut inner) = (0, 0);
    let mut converged = false;
    let mut penalty = max_penalty(task, &w);
    for _ in 0..s.max_penalty_rounds {
        outer += 1;
        let mut prev: Option<f64> = None;
        for _ in 0..s.r_max_inner {
            let step = match solve_phase_subproblem(task, split, &w, 1.0 / eta) {
                Ok(step) => step,
                Err(Error::Infeasible(_)) if prev.is_some() || outer > 1 => break,
                Err(e) => return Err(e),
            };
            inner += 1;
            kkt_max = kkt_max.max(step.kkt_max);
            w = step.w;
            let done = prev.is_some_and(|p| {
                (step.surrogate - p).abs() <= s.eps_objective * p.abs().max(1e-12)
            });
            prev = Some(step.surrogate);
            if done {
                break;
            }
        }
        penalty = max_penalty(task, &w);
        let phases = phases_from(task, init, &w).0;
        trace.push(task.objective(&phases, split));
        log::debug!(
            "penalty round {outer}: eta {eta:e}, penalty {penalty:e}, objective {}",
            trace.last().unwrap()
        );
        if penalty <= s.eps_violation {
            converged = true;
            break;
        }
        eta *= s.penalty_scale_c;
    }
    let (phases, reconstruction_error, degraded) = phases_from(task, init, &w);
    let r = task.rates(&phases, split);
    let report = SolveReport {
        status: if converged {
            SolveStatus::Converged
        } else {
            SolveStatus::IterationCap
        },
        extraction_degraded: degraded,
        objective_trace: trace,
        split: Some(*split),
        phases: Some(phases.clone()),
        rates: task.protocol_rates(&phases, split),
        objective: task.objective_of(r),
        penalty,
        reconstruction_error,
        kkt_max,
        outer_iterations: outer,
        inner_iterations: inner,
        wall_time: started.elapsed(),
    };
    Ok(PhaseOutcome { phases, report, w })
}

fn max_penalty(task: &PhaseTask<'_>, w: &[CMatrix; 2]) -> f64 {
    (0..2)
        .filter(|&t| task.stages[t])
        .map(|t| dc_penalty(&w[t]))
        .fold(0.0, f64::max)
}

/// Extracted phases for optimized stages, `init` for the rest.
fn phases_from(
    task: &PhaseTask<'_>,
    init: &PhaseConfig,
    w: &[CMatrix; 2],
) -> (PhaseConfig, f64, bool) {
    let mut phases = init.clone();
    let (mut err, mut degraded) = (0.0f64, false);
    for t in 0..2 {
        if task.stages[t] {
            let ex = extract_phases(&w[t]);
            err = err.max(ex.reconstruction_error);
            degraded |= ex.degraded;
            phases.set_stage(t, ex.theta);
        }
    }
    (phases, err, degraded)
}

/// Unit-modulus lifted matrix of arbitrary phases, used in tests and
/// oracles.
pub fn lift(theta: &[f64]) -> CMatrix {
    let n = theta.len() + 1;
    let w = crate::linalg::CVector::from_fn(n, |m, _| {
        if m + 1 < n {
            C64::from_polar(1.0, theta[m])
        } else {
            C64::new(1.0, 0.0)
        }
    });
    crate::linalg::outer(&w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratemodel::link_gain;
    use crate::scenario::synthesize;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(m: usize, seed: u64) -> (ScenarioConfig, ChannelRealization) {
        let cfg = ScenarioConfig::default().with_elements(m);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ch = synthesize(&cfg, &mut rng).unwrap();
        (cfg, ch)
    }

    #[test]
    fn closed_form_maximizes_relay_gain() {
        let (cfg, ch) = setup(6, 11);
        let theta = closed_form_relay_phases(&ch);
        let best = link_gain(&ch, Link::Rd, &theta, &cfg);
        // |r| + sum |Q[m]| is the triangle-inequality ceiling.
        let ceiling =
            ch.direct(Link::Rd).norm() + ch.cascade(Link::Rd).iter().map(|q| q.norm()).sum::<f64>();
        let expected = ceiling * ceiling * Link::Rd.snr_scale(&cfg);
        assert!((best - expected).abs() <= 1e-9 * expected);
    }

    #[test]
    fn closed_form_single_element_example() {
        let one = C64::new(1.0, 0.0);
        let v = |z: C64| crate::linalg::CVector::from_element(1, z);
        let ch = ChannelRealization::from_parts(
            [0.0; 3],
            [0.0; 3],
            one,
            one,
            one,
            one,
            v(one),
            v(C64::from_polar(1.0, std::f64::consts::FRAC_PI_3)),
            v(one),
            v(one),
            v(one),
        )
        .unwrap();
        let theta = closed_form_relay_phases(&ch);
        assert!(
            (theta[0] + std::f64::consts::FRAC_PI_3).abs() < 1e-12,
            "{theta:?}"
        );
        assert!((ch.composite(Link::Rd, &theta).norm() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn single_element_against_phase_grid() {
        let split = PowerSplit::new(0.2, 0.3).unwrap();
        let levels = 256;
        let step = 2.0 * std::f64::consts::PI / levels as f64;
        for seed in 0..4 {
            let (cfg, ch) = setup(1, seed);
            let task = PhaseTask {
                enforce_qos: false,
                ..PhaseTask::new(&ch, &cfg, Protocol::Full, Criterion::SumRate)
            };
            let mut grid_best = (f64::NEG_INFINITY, PhaseConfig::zeros(1));
            for i in 0..levels {
                for j in 0..levels {
                    let ph = PhaseConfig::new(vec![i as f64 * step], vec![j as f64 * step]);
                    let v = task.objective(&ph, &split);
                    if v > grid_best.0 {
                        grid_best = (v, ph);
                    }
                }
            }
            let warm = optimize_phases(&task, &split, &grid_best.1).unwrap();
            assert!(
                warm.report.objective >= grid_best.0 - 1e-9,
                "seed {seed}: {} vs grid {}",
                warm.report.objective,
                grid_best.0
            );

            // From an arbitrary start the result is at least locally optimal.
            let cold = optimize_phases(&task, &split, &PhaseConfig::zeros(1)).unwrap();
            let ph = cold.report.phases.clone().unwrap();
            for (d1, d2) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)] {
                let h = 1e-3;
                let moved =
                    PhaseConfig::new(vec![ph.theta1[0] + d1 * h], vec![ph.theta2[0] + d2 * h]);
                let v = task.objective(&moved, &split);
                assert!(
                    v <= cold.report.objective * (1.0 + 1e-5),
                    "seed {seed}: {v} > {}",
                    cold.report.objective
                );
            }
        }
    }

    #[test]
    fn subproblem_improves_on_start() {
        let (cfg, ch) = setup(4, 5);
        let task = PhaseTask {
            enforce_qos: false,
            ..PhaseTask::new(&ch, &cfg, Protocol::Full, Criterion::SumRate)
        };
        let split = PowerSplit::equal();
        let init = PhaseConfig::zeros(4);
        let start = task.objective(&init, &split);
        let out = optimize_phases(&task, &split, &init).unwrap();
        assert!(
            out.report.objective >= start - 1e-6,
            "{} < {start}",
            out.report.objective
        );
    }
}
