//! Joint optimization: every convex subproblem updates the power split and
//! the phases together, inside the same rank-one penalty loop as the phase
//! optimizer.

use std::time::Instant;

use rand::Rng;

use crate::aodriver::initial_point;
use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::phaseopt::{
    dc_penalty, extract_phases, solve_surrogate, FreeVars, PhaseStep, PhaseTask,
};
use crate::ratemodel::{
    qos_against, rates, Criterion, PhaseConfig, PowerSplit, Protocol, ProtocolRates,
};
use crate::report::{SolveReport, SolveStatus};
use crate::scenario::{ChannelRealization, ScenarioConfig};

/// Variables updated jointly: `alpha_n` always, `beta_d` only under F-NOMA,
/// and the stages optimized by the phase task.
pub fn joint_free_vars(protocol: Protocol) -> FreeVars {
    FreeVars {
        alpha: true,
        beta: protocol == Protocol::Full,
        stages: match protocol {
            Protocol::Full => [true, true],
            Protocol::Hybrid => [true, false],
        },
    }
}

/// One joint convex subproblem around `(split, local)`.
pub fn solve_joint_subproblem(
    task: &PhaseTask<'_>,
    protocol: Protocol,
    split: &PowerSplit,
    local: &[CMatrix; 2],
    weight: f64,
) -> Result<PhaseStep> {
    solve_surrogate(task, split, local, weight, joint_free_vars(protocol))
}

/// Runs the joint algorithm from the same starting point as AO.
pub fn joint_optimization<R: Rng + ?Sized>(
    ch: &ChannelRealization,
    cfg: &ScenarioConfig,
    protocol: Protocol,
    criterion: Criterion,
    rng: &mut R,
) -> Result<SolveReport> {
    let started = Instant::now();
    match initial_point(ch, cfg, protocol, criterion, rng)? {
        Some((split, phases)) => {
            joint_optimization_from(ch, cfg, protocol, criterion, split, phases)
        }
        None => Ok(SolveReport::infeasible(started.elapsed())),
    }
}

/// Joint algorithm from a given feasible point. The objective trace holds
/// the true objective of the incumbent after every joint update; an
/// extracted point replaces the incumbent only if it meets QoS and does not
/// lower the objective.
pub fn joint_optimization_from(
    ch: &ChannelRealization,
    cfg: &ScenarioConfig,
    protocol: Protocol,
    criterion: Criterion,
    split: PowerSplit,
    phases: PhaseConfig,
) -> Result<SolveReport> {
    let started = Instant::now();
    let s = &cfg.solver;
    let task = PhaseTask::new(ch, cfg, protocol, criterion);
    let evaluate =
        |split: &PowerSplit, phases: &PhaseConfig| rates(ch, phases, split, protocol, cfg);
    let qos_ok = |r: &ProtocolRates| {
        !criterion.has_qos() || qos_against(r.r_n, r.r_d, cfg.r_min_n, cfg.r_min_d).satisfied
    };

    let mut best = (
        split,
        phases.clone(),
        evaluate(&split, &phases).objective(criterion),
    );
    let mut trace = vec![best.2];
    let mut w = [phases.lifted(0), phases.lifted(1)];
    let mut current = split;
    let mut eta = s.penalty_eta0;
    let (mut outer, mut inner) = (0, 0);
    let mut kkt_max: f64 = 0.0;
    let (mut penalty, mut recon, mut degraded) = (0.0f64, 0.0f64, false);
    let mut converged = false;
    let max_penalty = |w: &[CMatrix; 2]| {
        (0..2)
            .filter(|&t| task.stages[t])
            .map(|t| dc_penalty(&w[t]))
            .fold(0.0, f64::max)
    };

    for _ in 0..s.max_penalty_rounds {
        outer += 1;
        let mut prev: Option<f64> = None;
        for _ in 0..s.r_max_inner {
            let step = match solve_joint_subproblem(&task, protocol, &current, &w, 1.0 / eta) {
                Ok(step) => step,
                Err(Error::Infeasible(_)) => break,
                Err(e) => return Err(e),
            };
            inner += 1;
            kkt_max = kkt_max.max(step.kkt_max);
            w = step.w;
            current = step.split;

            let mut cand = phases.clone();
            let (mut err, mut bad) = (0.0f64, false);
            for t in 0..2 {
                if task.stages[t] {
                    let ex = extract_phases(&w[t]);
                    err = err.max(ex.reconstruction_error);
                    bad |= ex.degraded;
                    cand.set_stage(t, ex.theta);
                }
            }
            let r = evaluate(&current, &cand);
            if qos_ok(&r) && r.objective(criterion) >= best.2 {
                best = (current, cand, r.objective(criterion));
                recon = err;
                degraded = bad;
            }
            trace.push(best.2);

            let done = prev.is_some_and(|p| {
                (step.surrogate - p).abs() <= s.eps_objective * p.abs().max(1e-12)
            });
            prev = Some(step.surrogate);
            if done {
                break;
            }
        }
        penalty = max_penalty(&w);
        log::debug!(
            "joint penalty round {outer}: eta {eta:e}, penalty {penalty:e}, incumbent {}",
            best.2
        );
        if penalty <= s.eps_violation {
            converged = true;
            break;
        }
        eta *= s.penalty_scale_c;
    }
    let (split, phases, objective) = best;
    Ok(SolveReport {
        status: if converged {
            SolveStatus::Converged
        } else {
            SolveStatus::IterationCap
        },
        extraction_degraded: degraded,
        objective_trace: trace,
        split: Some(split),
        rates: Some(evaluate(&split, &phases)),
        phases: Some(phases),
        objective,
        penalty,
        reconstruction_error: recon,
        kkt_max,
        outer_iterations: outer,
        inner_iterations: inner,
        wall_time: started.elapsed(),
    })
}

/// Joint updates until the trace first comes within `fraction` of its
/// final value.
pub fn updates_to_within(trace: &[f64], fraction: f64) -> usize {
    let Some(&last) = trace.last() else { return 0 };
    trace
        .iter()
        .position(|&v| v >= last - fraction * last.abs())
        .unwrap_or(trace.len() - 1)
}
