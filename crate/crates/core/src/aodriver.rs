//! Alternating optimization: exhaustive power search, then the phase
//! penalty loop, until the true objective stops improving.

use std::time::{Duration, Instant};

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::phaseopt::{closed_form_relay_phases, optimize_phases, PhaseTask};
use crate::powerfeas::grid_search_gains;
use crate::ratemodel::{
    effective_gains, qos_against, rates, Criterion, PhaseConfig, PowerSplit, Protocol,
    ProtocolRates,
};
use crate::report::{SolveReport, SolveStatus};
use crate::scenario::{ChannelRealization, ScenarioConfig};

/// Allowed decrease between consecutive trace entries.
pub const MONOTONE_SLACK: f64 = 1e-6;

/// One accepted AO iterate. Index 0 is the initial point.
#[derive(Debug, Clone, Serialize)]
pub struct AoIterate {
    pub split: PowerSplit,
    pub phases: PhaseConfig,
    pub objective: f64,
    pub r_n: f64,
    pub r_d: f64,
    /// Time since the start of the run.
    pub elapsed: Duration,
}

impl AoIterate {
    /// Lifted phase matrices of both stages.
    pub fn lifted(&self) -> [CMatrix; 2] {
        [self.phases.lifted(0), self.phases.lifted(1)]
    }
}

#[derive(Debug, Clone)]
pub struct AoTrace {
    pub iterates: Vec<AoIterate>,
    pub report: SolveReport,
    /// Phase steps whose extracted phases were rejected because they lowered
    /// the true objective or broke QoS.
    pub rejected_phase_steps: usize,
    /// Report of every phase penalty loop, accepted or not.
    pub phase_runs: Vec<SolveReport>,
}

impl AoTrace {
    pub fn objectives(&self) -> Vec<f64> {
        self.iterates.iter().map(|i| i.objective).collect()
    }
}

/// Starting point: equal power split and uniformly drawn phases (stage 2
/// from the closed form under H-NOMA). QoS-violating draws are redrawn; if
/// all redraws fail, a QoS-free max-min phase solve and then a power search
/// are tried. `Ok(None)` means no feasible start was found.
pub fn initial_point<R: Rng + ?Sized>(
    ch: &ChannelRealization,
    cfg: &ScenarioConfig,
    protocol: Protocol,
    criterion: Criterion,
    rng: &mut R,
) -> Result<Option<(PowerSplit, PhaseConfig)>> {
    let split = PowerSplit::equal();
    let m = ch.elements();
    let draw = |rng: &mut R| {
        let mut p = PhaseConfig::random(rng, m);
        if protocol == Protocol::Hybrid {
            p.set_stage(1, closed_form_relay_phases(ch));
        }
        p
    };
    let ok = |p: &PhaseConfig, s: &PowerSplit| {
        let r = rates(ch, p, s, protocol, cfg);
        !criterion.has_qos() || qos_against(r.r_n, r.r_d, cfg.r_min_n, cfg.r_min_d).satisfied
    };
    let mut phases = draw(rng);
    for _ in 0..cfg.solver.init_redraws {
        if ok(&phases, &split) {
            return Ok(Some((split, phases)));
        }
        phases = draw(rng);
    }
    if ok(&phases, &split) {
        return Ok(Some((split, phases)));
    }
    let warm = PhaseTask {
        enforce_qos: false,
        ..PhaseTask::new(ch, cfg, protocol, Criterion::MinRate)
    };
    let phases = match optimize_phases(&warm, &split, &phases) {
        Ok(out) => out.phases,
        Err(Error::Infeasible(_)) => phases,
        Err(e) => return Err(e),
    };
    if ok(&phases, &split) {
        return Ok(Some((split, phases)));
    }
    let g = effective_gains(ch, &phases, cfg);
    let qos = Some((cfg.r_min_n, cfg.r_min_d));
    match grid_search_gains(
        &g,
        qos,
        protocol,
        criterion,
        cfg.solver.grid_step_kappa,
        None,
    ) {
        Ok(out) => Ok(Some((out.split, phases))),
        Err(Error::Infeasible(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Runs AO from [`initial_point`].
pub fn alternating_optimization<R: Rng + ?Sized>(
    ch: &ChannelRealization,
    cfg: &ScenarioConfig,
    protocol: Protocol,
    criterion: Criterion,
    rng: &mut R,
) -> Result<AoTrace> {
    let started = Instant::now();
    match initial_point(ch, cfg, protocol, criterion, rng)? {
        Some((split, phases)) => {
            alternating_optimization_from(ch, cfg, protocol, criterion, split, phases)
        }
        None => Ok(AoTrace {
            iterates: Vec::new(),
            report: SolveReport::infeasible(started.elapsed()),
            rejected_phase_steps: 0,
            phase_runs: Vec::new(),
        }),
    }
}

/// AO from a given feasible point.
pub fn alternating_optimization_from(
    ch: &ChannelRealization,
    cfg: &ScenarioConfig,
    protocol: Protocol,
    criterion: Criterion,
    split: PowerSplit,
    phases: PhaseConfig,
) -> Result<AoTrace> {
    let started = Instant::now();
    let s = &cfg.solver;
    let task = PhaseTask::new(ch, cfg, protocol, criterion);
    let qos = criterion.has_qos().then_some((cfg.r_min_n, cfg.r_min_d));
    let evaluate =
        |split: &PowerSplit, phases: &PhaseConfig| rates(ch, phases, split, protocol, cfg);
    let push = |iterates: &mut Vec<AoIterate>,
                split: PowerSplit,
                phases: PhaseConfig,
                r: ProtocolRates| {
        iterates.push(AoIterate {
            split,
            phases,
            objective: r.objective(criterion),
            r_n: r.r_n,
            r_d: r.r_d,
            elapsed: started.elapsed(),
        });
    };
    let qos_ok =
        |r: &ProtocolRates| qos.is_none_or(|(n, d)| qos_against(r.r_n, r.r_d, n, d).satisfied);

    let mut iterates = Vec::new();
    let r0 = evaluate(&split, &phases);
    let start_feasible = qos_ok(&r0);
    push(&mut iterates, split, phases.clone(), r0);
    let (mut split, mut phases) = (split, phases);
    let (mut kkt_max, mut inner, mut penalty, mut recon) = (0.0f64, 0usize, 0.0f64, 0.0f64);
    let mut degraded = false;
    let mut rejected = 0;
    let mut phase_runs = Vec::new();
    let mut status = SolveStatus::IterationCap;
    for _ in 0..s.max_ao_iters {
        let prev = iterates.last().unwrap().objective;
        let g = effective_gains(ch, &phases, cfg);
        let incumbent = start_feasible.then_some(split);
        split = match grid_search_gains(&g, qos, protocol, criterion, s.grid_step_kappa, incumbent)
        {
            Ok(out) => out.split,
            Err(Error::Infeasible(_)) if iterates.len() == 1 => {
                let mut report = SolveReport::infeasible(started.elapsed());
                report.objective_trace = vec![prev];
                return Ok(AoTrace {
                    iterates,
                    report,
                    rejected_phase_steps: rejected,
                    phase_runs,
                });
            }
            Err(e) => return Err(e),
        };
        let current = evaluate(&split, &phases);
        match optimize_phases(&task, &split, &phases) {
            Ok(out) => {
                kkt_max = kkt_max.max(out.report.kkt_max);
                inner += out.report.inner_iterations;
                let cand = evaluate(&split, &out.phases);
                if qos_ok(&cand) && cand.objective(criterion) >= current.objective(criterion) {
                    phases = out.phases;
                    penalty = out.report.penalty;
                    recon = out.report.reconstruction_error;
                    degraded = out.report.extraction_degraded;
                } else {
                    rejected += 1;
                    log::debug!(
                        "phase step rejected: {} < {}",
                        cand.objective(criterion),
                        current.objective(criterion)
                    );
                }
                phase_runs.push(out.report);
            }
            Err(Error::Infeasible(_)) => rejected += 1,
            Err(e) => return Err(e),
        }
        let r = evaluate(&split, &phases);
        let obj = r.objective(criterion);
        push(&mut iterates, split, phases.clone(), r);
        if obj - prev <= s.eps_objective * prev.abs().max(f64::MIN_POSITIVE) {
            status = SolveStatus::Converged;
            break;
        }
    }
    let last = iterates.last().unwrap();
    let final_rates = evaluate(&last.split, &last.phases);
    let report = SolveReport {
        status,
        extraction_degraded: degraded,
        objective_trace: iterates.iter().map(|i| i.objective).collect(),
        split: Some(last.split),
        phases: Some(last.phases.clone()),
        rates: Some(final_rates),
        objective: last.objective,
        penalty,
        reconstruction_error: recon,
        kkt_max,
        outer_iterations: iterates.len() - 1,
        inner_iterations: inner,
        wall_time: started.elapsed(),
    };
    Ok(AoTrace {
        iterates,
        report,
        rejected_phase_steps: rejected,
        phase_runs,
    })
}
