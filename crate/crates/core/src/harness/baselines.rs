//! Reference schemes: a relay without the RIS, and an RIS without the relay.

use std::time::Instant;

use rand::Rng;

use crate::error::{Error, Result};
use crate::phaseopt::{optimize_phases, Branches, PhaseTask, RateStructure, Share, SinrTerm};
use crate::powerfeas::grid_search_gains;
use crate::ratemodel::{
    effective_gains, Criterion, PhaseConfig, PowerSplit, Protocol, HALF_PRELOG,
};
use crate::report::SolveStatus;
use crate::scenario::{ChannelRealization, Link, ScenarioConfig};

use super::RunSummary;

/// Relay-only scheme: every RIS channel is zeroed and the power split is
/// found by the exhaustive grid search alone.
pub fn baseline_relay_only(
    ch: &ChannelRealization,
    cfg: &ScenarioConfig,
    protocol: Protocol,
    criterion: Criterion,
) -> Result<RunSummary> {
    let started = Instant::now();
    let bare = ch.without_ris();
    let phases = PhaseConfig::zeros(ch.elements());
    let g = effective_gains(&bare, &phases, cfg);
    let qos = criterion.has_qos().then_some((cfg.r_min_n, cfg.r_min_d));
    match grid_search_gains(
        &g,
        qos,
        protocol,
        criterion,
        cfg.solver.grid_step_kappa,
        None,
    ) {
        Ok(out) => Ok(RunSummary {
            status: SolveStatus::Converged,
            r_n: out.rates.r_n,
            r_d: out.rates.r_d,
            objective: out.objective,
            split: Some(out.split),
            phases: None,
            outer_iterations: 1,
            inner_iterations: 0,
            objective_trace: vec![out.objective],
            wall_time: started.elapsed(),
        }),
        Err(Error::Infeasible(_)) => Ok(RunSummary::infeasible(started.elapsed())),
        Err(e) => Err(e),
    }
}

/// Single-stage NOMA rate structure of the RIS-only scheme. User d is
/// reached only through the RIS; `prelog` is 1 for transmission over the
/// whole slot.
pub fn ris_only_structure(prelog: f64) -> RateStructure {
    let near: Branches = vec![vec![SinrTerm::Linear {
        share: Share::ALPHA_N,
        link: Link::An,
    }]];
    let far: Branches = vec![vec![SinrTerm::Ratio {
        own: Share::ALPHA_D,
        link: Link::Ad,
    }]];
    RateStructure { prelog, near, far }
}

/// Configuration seen by the RIS-only scheme: the AP transmits with the
/// combined budget of AP and relay.
pub fn ris_only_config(cfg: &ScenarioConfig) -> ScenarioConfig {
    let mut c = cfg.clone();
    c.p_ap = cfg.p_ap + cfg.p_relay;
    c
}

/// RIS-only scheme: the AP alone serves both users at doubled power. The
/// split `alpha_n` comes from a 1-D grid and the phases from the penalty
/// loop, alternated until the objective stops improving.
pub fn baseline_ris_only<R: Rng + ?Sized>(
    ch: &ChannelRealization,
    cfg: &ScenarioConfig,
    criterion: Criterion,
    rng: &mut R,
) -> Result<RunSummary> {
    let started = Instant::now();
    let c = ris_only_config(cfg);
    let prelog = if cfg.ris_only_half_prelog {
        HALF_PRELOG
    } else {
        1.0
    };
    let task = PhaseTask {
        ch,
        cfg: &c,
        structure: ris_only_structure(prelog),
        protocol: None,
        criterion,
        stages: [true, false],
        enforce_qos: criterion.has_qos(),
    };
    let s = &c.solver;
    let mut phases = PhaseConfig::random(rng, ch.elements());
    let mut split = match best_alpha(&task, &phases, None) {
        Some(split) => split,
        None => {
            let warm = PhaseTask {
                enforce_qos: false,
                criterion: Criterion::MinRate,
                ..task.clone()
            };
            phases = match optimize_phases(&warm, &PowerSplit::equal(), &phases) {
                Ok(out) => out.phases,
                Err(Error::Infeasible(_)) => phases,
                Err(e) => return Err(e),
            };
            match best_alpha(&task, &phases, None) {
                Some(split) => split,
                None => return Ok(RunSummary::infeasible(started.elapsed())),
            }
        }
    };
    let mut trace = vec![task.objective(&phases, &split)];
    let (mut outer, mut inner) = (0, 0);
    let mut status = SolveStatus::IterationCap;
    for _ in 0..s.max_ao_iters {
        outer += 1;
        let prev = *trace.last().unwrap();
        split = best_alpha(&task, &phases, Some(split)).expect("incumbent split is feasible");
        let current = task.objective(&phases, &split);
        match optimize_phases(&task, &split, &phases) {
            Ok(out) => {
                inner += out.report.inner_iterations;
                let r = task.rates(&out.phases, &split);
                if task.qos_ok(r, crate::ratemodel::QOS_TOLERANCE)
                    && task.objective_of(r) >= current
                {
                    phases = out.phases;
                }
            }
            Err(Error::Infeasible(_)) => {}
            Err(e) => return Err(e),
        }
        let obj = task.objective(&phases, &split);
        trace.push(obj);
        if obj - prev <= s.eps_objective * prev.abs().max(f64::MIN_POSITIVE) {
            status = SolveStatus::Converged;
            break;
        }
    }
    let (r_n, r_d) = task.rates(&phases, &split);
    Ok(RunSummary {
        status,
        r_n,
        r_d,
        objective: task.objective_of((r_n, r_d)),
        split: Some(split),
        phases: Some(phases),
        outer_iterations: outer,
        inner_iterations: inner,
        objective_trace: trace,
        wall_time: started.elapsed(),
    })
}

/// Best `alpha_n` on the grid at fixed phases; the incumbent is kept unless
/// a grid point is strictly better.
fn best_alpha(
    task: &PhaseTask<'_>,
    phases: &PhaseConfig,
    incumbent: Option<PowerSplit>,
) -> Option<PowerSplit> {
    let g = effective_gains(task.ch, phases, task.cfg);
    let kappa = task.cfg.solver.grid_step_kappa;
    let steps = (0.5 / kappa).round() as usize;
    let grid = (0..=steps).map(|k| (k as f64 * kappa).min(0.5));
    let mut best: Option<(PowerSplit, f64)> = None;
    for split in grid
        .filter_map(|a| PowerSplit::new(a, 0.5).ok())
        .chain(incumbent)
    {
        let r = task.structure.rates(&g, &split);
        if !task.qos_ok(r, crate::ratemodel::QOS_TOLERANCE) {
            continue;
        }
        let obj = task.objective_of(r);
        if best.is_none_or(|(_, b)| obj > b) {
            best = Some((split, obj));
        }
    }
    best.map(|(s, _)| s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::CVector;
    use crate::ratemodel::rates;
    use crate::scenario::synthesize;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn draw(m: usize, seed: u64) -> (ScenarioConfig, ChannelRealization, ChaCha8Rng) {
        let cfg = ScenarioConfig::default().with_elements(m);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ch = synthesize(&cfg, &mut rng).unwrap();
        (cfg, ch, rng)
    }

    #[test]
    fn relay_only_ignores_ris() {
        let (cfg, ch, _) = draw(6, 3);
        for protocol in [Protocol::Hybrid, Protocol::Full] {
            let a = baseline_relay_only(&ch, &cfg, protocol, Criterion::MinRate).unwrap();
            let b =
                baseline_relay_only(&ch.without_ris(), &cfg, protocol, Criterion::MinRate).unwrap();
            assert_eq!(a.objective, b.objective);
            let split = a.split.unwrap();
            let r = rates(
                &ch.without_ris(),
                &PhaseConfig::random(&mut ChaCha8Rng::seed_from_u64(1), 6),
                &split,
                protocol,
                &cfg,
            );
            assert!((r.min - a.objective).abs() < 1e-12);
        }
    }

    #[test]
    fn relay_only_independent_of_element_count() {
        let (cfg, ch, _) = draw(4, 5);
        let bare = ch.without_ris();
        let small = ChannelRealization::from_parts(
            bare.user_n_pos,
            bare.user_d_pos,
            bare.direct(Link::Ar),
            bare.direct(Link::An),
            bare.direct(Link::Rn),
            bare.direct(Link::Rd),
            CVector::zeros(1),
            CVector::zeros(1),
            CVector::zeros(1),
            CVector::zeros(1),
            CVector::zeros(1),
        )
        .unwrap();
        let a = baseline_relay_only(&bare, &cfg, Protocol::Full, Criterion::SumRate).unwrap();
        let b = baseline_relay_only(
            &small,
            &cfg.clone().with_elements(1),
            Protocol::Full,
            Criterion::SumRate,
        )
        .unwrap();
        assert_eq!(a.status, b.status);
        if a.status != SolveStatus::Infeasible {
            assert_eq!(a.objective, b.objective);
        }
    }

    #[test]
    fn ris_only_unreachable_far_user() {
        let (cfg, ch, mut rng) = draw(3, 2);
        let z = CVector::zeros(3);
        let blind = ChannelRealization::from_parts(
            ch.user_n_pos,
            ch.user_d_pos,
            ch.direct(Link::Ar),
            ch.direct(Link::An),
            ch.direct(Link::Rn),
            ch.direct(Link::Rd),
            ch.g_ai.clone(),
            ch.g_ri.clone(),
            ch.h_ir.clone(),
            ch.h_in.clone(),
            z,
        )
        .unwrap();
        let r = baseline_ris_only(&blind, &cfg, Criterion::MinRate, &mut rng).unwrap();
        assert_eq!(r.r_d, 0.0);
        assert_eq!(r.objective, 0.0);
    }

    #[test]
    fn ris_only_sinr_linear_in_power() {
        let (cfg, ch, mut rng) = draw(4, 8);
        let phases = PhaseConfig::random(&mut rng, 4);
        let split = PowerSplit::new(0.3, 0.5).unwrap();
        let rs = ris_only_structure(1.0);
        let base = rs.sinrs(
            &effective_gains(&ch, &phases, &ris_only_config(&cfg)),
            &split,
        );
        let doubled = cfg.clone().with_transmit_power(2.0 * cfg.p_ap);
        let twice = rs.sinrs(
            &effective_gains(&ch, &phases, &ris_only_config(&doubled)),
            &split,
        );
        assert!((twice.0 - 2.0 * base.0).abs() <= 1e-12 * twice.0);
        let g = effective_gains(&ch, &phases, &ris_only_config(&cfg));
        let far = |g: &crate::ratemodel::EffectiveGains| 0.7 * g.ad / (0.3 * g.ad + 1.0);
        assert!((base.1 - far(&g)).abs() <= 1e-12 * base.1);
    }

    #[test]
    fn ris_only_run_is_monotone() {
        let (cfg, ch, mut rng) = draw(4, 4);
        for criterion in [Criterion::SumRate, Criterion::MinRate] {
            let r = baseline_ris_only(&ch, &cfg, criterion, &mut rng).unwrap();
            assert!(r.status != SolveStatus::Infeasible);
            assert!(r.objective_trace.windows(2).all(|w| w[1] >= w[0] - 1e-12));
            if criterion.has_qos() {
                assert!(r.r_n >= cfg.r_min_n - 1e-9 && r.r_d >= cfg.r_min_d - 1e-9);
            }
        }
    }
}
