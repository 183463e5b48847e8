//! Closed-form feasibility region of the power split and the exhaustive grid
//! search over it.

use crate::error::{Error, Result};
use crate::ratemodel::{
    effective_gains, gamma_min, qos_against, rates_from_gains, Criterion, EffectiveGains,
    PhaseConfig, PowerSplit, Protocol, ProtocolRates,
};
use crate::scenario::{ChannelRealization, ScenarioConfig};

/// Closed interval; `lo > hi` means empty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const EMPTY: Interval = Interval {
        lo: f64::INFINITY,
        hi: f64::NEG_INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn is_empty(&self) -> bool {
        !(self.lo <= self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    /// `lo, lo + step, ...` up to `hi`.
    pub fn grid(&self, step: f64) -> impl Iterator<Item = f64> {
        let (lo, hi) = (self.lo, self.hi);
        let n = if self.is_empty() {
            0
        } else {
            ((hi - lo) / step + 1e-9).floor() as usize + 1
        };
        (0..n).map(move |i| (lo + i as f64 * step).min(hi))
    }
}

/// Range of `alpha_n` for which the relay can decode both messages in the
/// first half-slot (full protocol).
pub fn alpha_bounds(g: &EffectiveGains, gamma_n: f64, gamma_d: f64) -> Interval {
    if !(g.ar > 0.0) {
        return Interval::EMPTY;
    }
    let lo = gamma_n / g.ar;
    let hi = ((g.ar - gamma_d) / (g.ar * (gamma_d + 1.0))).min(0.5);
    Interval::new(lo, hi)
}

/// Range of `beta_d` meeting both users' combined-SINR targets at a given
/// `alpha_n` (full protocol).
pub fn beta_bounds(alpha_n: f64, g: &EffectiveGains, gamma_n: f64, gamma_d: f64) -> Interval {
    let residual_d = gamma_d - (1.0 - alpha_n) * g.ad / (alpha_n * g.ad + 1.0);
    let lo = if residual_d <= 0.0 {
        0.0
    } else if g.rd > 0.0 {
        residual_d / g.rd
    } else {
        f64::INFINITY
    };
    let residual_n = gamma_n - alpha_n * g.an;
    let hi = if residual_n <= 0.0 {
        0.5
    } else if g.rn > 0.0 {
        ((g.rn + 1.0) / ((residual_n + 1.0) * g.rn) - 1.0 / g.rn).min(0.5)
    } else {
        f64::NEG_INFINITY
    };
    Interval::new(lo, hi)
}

/// Range of `alpha_n` under the hybrid protocol, where the relay spends its
/// full power on the far user and the near user is served in the first
/// half-slot only.
pub fn alpha_bounds_hybrid(g: &EffectiveGains, gamma_n: f64, gamma_d: f64) -> Interval {
    let lo = if gamma_n <= 0.0 {
        0.0
    } else if g.an > 0.0 {
        gamma_n / g.an
    } else {
        return Interval::EMPTY;
    };
    if !(g.ar > 0.0) {
        return Interval::EMPTY;
    }
    let mut hi = ((g.ar - gamma_d) / (g.ar * (gamma_d + 1.0))).min(0.5);
    let residual_d = gamma_d - g.rd;
    if residual_d > 0.0 {
        if g.ad > 0.0 {
            hi = hi.min((g.ad - residual_d) / (g.ad * (1.0 + residual_d)));
        } else {
            return Interval::EMPTY;
        }
    }
    Interval::new(lo, hi)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleRegion {
    pub protocol: Protocol,
    pub alpha: Interval,
    pub gamma_n: f64,
    pub gamma_d: f64,
    gains: EffectiveGains,
    pub feasible: bool,
}

impl FeasibleRegion {
    /// `beta_d` range at `alpha_n`; the hybrid protocol has no relay split and
    /// reports the degenerate interval `[0, 0]`.
    pub fn beta(&self, alpha_n: f64) -> Interval {
        match self.protocol {
            Protocol::Full => beta_bounds(alpha_n, &self.gains, self.gamma_n, self.gamma_d),
            Protocol::Hybrid => Interval::new(0.0, 0.0),
        }
    }
}

/// Feasibility of the power subproblem; existence of a `beta_d` interval is
/// checked on the `alpha_n` grid of step `kappa` plus the interval ends.
pub fn feasible_region(
    g: &EffectiveGains,
    gamma_n: f64,
    gamma_d: f64,
    protocol: Protocol,
    kappa: f64,
) -> FeasibleRegion {
    let alpha = match protocol {
        Protocol::Full => alpha_bounds(g, gamma_n, gamma_d),
        Protocol::Hybrid => alpha_bounds_hybrid(g, gamma_n, gamma_d),
    };
    let mut region = FeasibleRegion {
        protocol,
        alpha,
        gamma_n,
        gamma_d,
        gains: *g,
        feasible: false,
    };
    region.feasible = !alpha.is_empty()
        && match protocol {
            Protocol::Hybrid => true,
            Protocol::Full => alpha
                .grid(kappa)
                .chain([alpha.hi])
                .any(|a| !region.beta(a).is_empty()),
        };
    region
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridOutcome {
    pub split: PowerSplit,
    pub rates: ProtocolRates,
    pub objective: f64,
    pub candidates: usize,
}

/// Grid search on precomputed gains. QoS targets are rates; `None` drops the
/// QoS constraints and searches the box `[0, 1/2]^2`. An `incumbent` split is
/// evaluated after the grid and kept only if strictly better.
pub fn grid_search_gains(
    g: &EffectiveGains,
    qos: Option<(f64, f64)>,
    protocol: Protocol,
    criterion: Criterion,
    kappa: f64,
    incumbent: Option<PowerSplit>,
) -> Result<GridOutcome> {
    let box_half = Interval::new(0.0, 0.5);
    let (gamma_n, gamma_d) = qos
        .map(|(n, d)| (gamma_min(n), gamma_min(d)))
        .unwrap_or((0.0, 0.0));
    let alpha = match (qos, protocol) {
        (None, _) => box_half,
        (Some(_), Protocol::Full) => alpha_bounds(g, gamma_n, gamma_d),
        (Some(_), Protocol::Hybrid) => alpha_bounds_hybrid(g, gamma_n, gamma_d),
    };
    let mut best: Option<GridOutcome> = None;
    let mut candidates = 0usize;
    let consider = |split: PowerSplit, best: &mut Option<GridOutcome>| {
        let rates = rates_from_gains(g, &split, protocol);
        if let Some((rn, rd)) = qos {
            if !qos_against(rates.r_n, rates.r_d, rn, rd).satisfied {
                return;
            }
        }
        let objective = rates.objective(criterion);
        if best.as_ref().is_none_or(|b| objective > b.objective) {
            *best = Some(GridOutcome {
                split,
                rates,
                objective,
                candidates: 0,
            });
        }
    };
    for a in alpha.grid(kappa) {
        let beta = match (qos, protocol) {
            (_, Protocol::Hybrid) => Interval::new(0.5, 0.5),
            (None, Protocol::Full) => box_half,
            (Some(_), Protocol::Full) => beta_bounds(a, g, gamma_n, gamma_d),
        };
        for b in beta.grid(kappa) {
            candidates += 1;
            if let Ok(split) = PowerSplit::new(a, b) {
                consider(split, &mut best);
            }
        }
    }
    if let Some(inc) = incumbent {
        consider(inc, &mut best);
    }
    match best {
        Some(mut b) => {
            b.candidates = candidates;
            Ok(b)
        }
        None => Err(Error::Infeasible(format!(
            "no power split meets the QoS targets (alpha_n range [{:.4}, {:.4}])",
            alpha.lo, alpha.hi
        ))),
    }
}

pub fn grid_search(
    ch: &ChannelRealization,
    phases: &PhaseConfig,
    cfg: &ScenarioConfig,
    protocol: Protocol,
    criterion: Criterion,
) -> Result<GridOutcome> {
    let g = effective_gains(ch, phases, cfg);
    let qos = criterion.has_qos().then_some((cfg.r_min_n, cfg.r_min_d));
    grid_search_gains(
        &g,
        qos,
        protocol,
        criterion,
        cfg.solver.grid_step_kappa,
        None,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratemodel::{sinr_ib_from_gains, sinr_ir_from_gains};
    use proptest::prelude::*;

    const G04: f64 = 0.741_101_126_592_248;

    fn gains(ar: f64, an: f64, ad: f64, rn: f64, rd: f64) -> EffectiveGains {
        EffectiveGains { ar, an, ad, rn, rd }
    }

    /// Constraint check straight from the SINR definitions.
    fn meets_sinr_targets(g: &EffectiveGains, a: f64, b: f64, gn: f64, gd: f64) -> bool {
        let s = PowerSplit {
            alpha_n: a,
            alpha_d: 1.0 - a,
            beta_n: 1.0 - b,
            beta_d: b,
        };
        let ib = sinr_ib_from_gains(g, &s);
        let ir = sinr_ir_from_gains(g, &s, Protocol::Full);
        ib.r_to_n >= gn
            && ib.r_to_d >= gd
            && ib.n_to_n + ir.n_to_n >= gn
            && ib.d_to_d + ir.d_to_d >= gd
    }

    #[test]
    fn alpha_bounds_examples() {
        let g = gains(100.0, 1.0, 1.0, 1.0, 1.0);
        let i = alpha_bounds(&g, G04, G04);
        assert!((i.lo - 0.007411011265922).abs() < 1e-12);
        assert_eq!(i.hi, 0.5);
        assert!(alpha_bounds(&gains(0.5, 1.0, 1.0, 1.0, 1.0), 0.1, G04).is_empty());
        let free = alpha_bounds(&g, 0.0, 0.0);
        assert_eq!((free.lo, free.hi), (0.0, 0.5));
        assert!(alpha_bounds(&gains(0.0, 1.0, 1.0, 1.0, 1.0), G04, G04).is_empty());
    }

    #[test]
    fn alpha_bounds_match_dense_scan() {
        let g = gains(100.0, 1.0, 1.0, 1.0, 1.0);
        let i = alpha_bounds(&g, G04, G04);
        for k in 0..=5000 {
            let a = k as f64 * 1e-4;
            let s = PowerSplit {
                alpha_n: a,
                alpha_d: 1.0 - a,
                beta_n: 0.5,
                beta_d: 0.5,
            };
            let ib = sinr_ib_from_gains(&g, &s);
            let relay_ok = ib.r_to_n >= G04 && ib.r_to_d >= G04;
            assert_eq!(relay_ok, i.contains(a), "alpha_n = {a}");
        }
    }

    #[test]
    fn beta_bounds_examples() {
        let strong_d = gains(100.0, 10.0, 1000.0, 10.0, 10.0);
        assert_eq!(beta_bounds(0.1, &strong_d, G04, G04).lo, 0.0);
        let strong_n = gains(100.0, 1000.0, 1.0, 10.0, 10.0);
        assert_eq!(beta_bounds(0.2, &strong_n, G04, G04).hi, 0.5);
    }

    #[test]
    fn beta_bounds_symmetric_instance_scan() {
        let g = gains(100.0, 2.0, 10.0, 10.0, 10.0);
        let a = 0.2;
        let i = beta_bounds(a, &g, G04, G04);
        let step = 1e-3;
        let mut lo_scan = f64::INFINITY;
        let mut hi_scan = f64::NEG_INFINITY;
        for k in 0..=500 {
            let b = k as f64 * step;
            if meets_sinr_targets(&g, a, b, G04, G04) {
                lo_scan = lo_scan.min(b);
                hi_scan = hi_scan.max(b);
            }
        }
        assert!(
            (i.lo - lo_scan).abs() <= step,
            "{i:?} vs [{lo_scan}, {hi_scan}]"
        );
        assert!(
            (i.hi - hi_scan).abs() <= step,
            "{i:?} vs [{lo_scan}, {hi_scan}]"
        );
    }

    #[test]
    fn single_grid_point_is_returned() {
        // alpha range collapses to one point
        let ar = 3.0;
        let gd = G04;
        let hi = (ar - gd) / (ar * (gd + 1.0));
        let gn = hi * ar;
        let g = gains(ar, 1e6, 1e6, 1e6, 1e6);
        let qos = Some((0.5 * (1.0 + gn).log2(), 0.5 * (1.0 + gd).log2()));
        let out =
            grid_search_gains(&g, qos, Protocol::Full, Criterion::SumRate, 1e-3, None).unwrap();
        assert!((out.split.alpha_n - hi).abs() < 1e-12);
    }

    #[test]
    fn coarse_grid_never_beats_nested_fine_grid() {
        let g = gains(300.0, 40.0, 20.0, 80.0, 60.0);
        let coarse = grid_search_gains(
            &g,
            Some((0.4, 0.4)),
            Protocol::Full,
            Criterion::SumRate,
            0.01,
            None,
        )
        .unwrap();
        let fine = grid_search_gains(
            &g,
            Some((0.4, 0.4)),
            Protocol::Full,
            Criterion::SumRate,
            0.001,
            None,
        )
        .unwrap();
        assert!(coarse.objective <= fine.objective + 1e-12);
        assert!(fine.objective - coarse.objective < 0.05);
    }

    #[test]
    fn min_rate_uses_box_and_favors_weak_user() {
        let g = gains(500.0, 200.0, 2.0, 100.0, 3.0);
        let sum = grid_search_gains(
            &g,
            Some((0.4, 0.4)),
            Protocol::Full,
            Criterion::SumRate,
            1e-3,
            None,
        )
        .unwrap();
        let min =
            grid_search_gains(&g, None, Protocol::Full, Criterion::MinRate, 1e-3, None).unwrap();
        assert!(min.split.alpha_n <= 0.5 && min.split.beta_d <= 0.5);
        assert!(min.rates.r_d >= sum.rates.r_d - 1e-12);
    }

    #[test]
    fn infeasible_region_is_reported() {
        let g = gains(0.1, 0.1, 0.0, 0.1, 0.1);
        let r = grid_search_gains(
            &g,
            Some((0.4, 0.4)),
            Protocol::Full,
            Criterion::SumRate,
            1e-3,
            None,
        );
        assert!(matches!(r, Err(Error::Infeasible(_))));
        assert!(!feasible_region(&g, G04, G04, Protocol::Full, 1e-3).feasible);
    }

    #[test]
    fn hybrid_search_is_one_dimensional() {
        let g = gains(300.0, 40.0, 5.0, 80.0, 60.0);
        let out = grid_search_gains(
            &g,
            Some((0.4, 0.4)),
            Protocol::Hybrid,
            Criterion::SumRate,
            1e-3,
            None,
        )
        .unwrap();
        let region = alpha_bounds_hybrid(&g, G04, G04);
        assert_eq!(out.candidates, region.grid(1e-3).count());
        assert!(out.rates.r_n >= 0.4 - 1e-9 && out.rates.r_d >= 0.4 - 1e-9);
    }

    #[test]
    fn incumbent_kept_when_better() {
        let g = gains(300.0, 40.0, 20.0, 80.0, 60.0);
        let base = grid_search_gains(
            &g,
            Some((0.4, 0.4)),
            Protocol::Full,
            Criterion::SumRate,
            0.1,
            None,
        )
        .unwrap();
        let fine = grid_search_gains(
            &g,
            Some((0.4, 0.4)),
            Protocol::Full,
            Criterion::SumRate,
            1e-3,
            None,
        )
        .unwrap();
        let with_inc = grid_search_gains(
            &g,
            Some((0.4, 0.4)),
            Protocol::Full,
            Criterion::SumRate,
            0.1,
            Some(fine.split),
        )
        .unwrap();
        assert!(with_inc.objective >= base.objective);
        assert_eq!(with_inc.objective, fine.objective.max(base.objective));
    }

    fn arb_gains() -> impl Strategy<Value = EffectiveGains> {
        (
            0.5..500.0f64,
            0.1..200.0f64,
            0.0..50.0f64,
            0.1..200.0f64,
            0.1..200.0f64,
        )
            .prop_map(|(a, b, c, d, e)| gains(a, b, c, d, e))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn bounds_sound_and_complete(g in arb_gains()) {
            let step = 1e-3;
            let alpha = alpha_bounds(&g, G04, G04);
            for i in 0..=500 {
                let a = i as f64 * step;
                let beta = if alpha.contains(a) { beta_bounds(a, &g, G04, G04) } else { Interval::EMPTY };
                for j in 0..=500 {
                    let b = j as f64 * step;
                    let inside = beta.contains(b);
                    let ok = meets_sinr_targets(&g, a, b, G04, G04);
                    if inside {
                        prop_assert!(ok, "({a}, {b}) inside bounds but violates targets");
                    } else if ok {
                        // a feasible point outside the bounds must be within one grid step
                        let near_alpha = a >= alpha.lo - step && a <= alpha.hi + step;
                        let near_beta = {
                            let ac = a.clamp(alpha.lo.max(0.0), alpha.hi.min(0.5));
                            let bb = beta_bounds(ac, &g, G04, G04);
                            b >= bb.lo - step && b <= bb.hi + step
                        };
                        prop_assert!(near_alpha && near_beta, "({a}, {b}) feasible but outside bounds");
                    }
                }
            }
        }

        #[test]
        fn grid_output_is_valid(g in arb_gains(), f in any::<bool>()) {
            let protocol = if f { Protocol::Full } else { Protocol::Hybrid };
            if let Ok(out) = grid_search_gains(&g, Some((0.4, 0.4)), protocol, Criterion::SumRate, 0.01, None) {
                prop_assert!(out.split.validate().is_ok());
                prop_assert!(out.rates.r_n >= 0.4 - 1e-9 && out.rates.r_d >= 0.4 - 1e-9);
            }
        }
    }
}
