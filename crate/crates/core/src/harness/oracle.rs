//! Exhaustive reference optimum for small arrays: every phase combination
//! on a uniform per-element grid, crossed with the power grid search.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::powerfeas::{grid_search_gains, GridOutcome};
use crate::ratemodel::{link_gain, Criterion, EffectiveGains, PhaseConfig, PowerSplit, Protocol};
use crate::scenario::{ChannelRealization, Link, ScenarioConfig};

/// Largest number of phase combinations enumerated per stage.
pub const MAX_COMBINATIONS: usize = 1 << 24;

#[derive(Debug, Clone, Serialize)]
pub struct OracleResult {
    pub objective: f64,
    pub split: PowerSplit,
    pub phases: PhaseConfig,
    pub r_n: f64,
    pub r_d: f64,
    /// Non-dominated gain tuples kept per stage.
    pub front_sizes: [usize; 2],
}

/// Brute-force optimum over `levels` phases per element and stage and the
/// power grid search of step `kappa` over the closed-form feasible region.
/// Every rate is nondecreasing in every effective gain, so only
/// Pareto-maximal gain tuples of each stage are crossed with the power grid. `Ok(None)` means no grid point meets QoS.
pub fn brute_force_oracle(
    ch: &ChannelRealization,
    cfg: &ScenarioConfig,
    protocol: Protocol,
    criterion: Criterion,
    levels: usize,
    kappa: f64,
) -> Result<Option<OracleResult>> {
    let m = ch.elements();
    let total = u32::try_from(m)
        .ok()
        .and_then(|m| levels.checked_pow(m))
        .filter(|&n| n <= MAX_COMBINATIONS)
        .ok_or_else(|| {
            Error::Config(format!(
                "{levels}^{m} phase combinations exceed the oracle limit"
            ))
        })?;
    if levels == 0 || !(kappa > 0.0 && kappa <= 0.5) {
        return Err(Error::Config(
            "oracle needs at least one phase level and kappa in (0, 1/2]".into(),
        ));
    }
    let step = 2.0 * std::f64::consts::PI / levels as f64;
    let theta_of = |mut idx: usize| {
        let mut th = vec![0.0; m];
        for t in th.iter_mut() {
            *t = (idx % levels) as f64 * step;
            idx /= levels;
        }
        th
    };
    let stage_links: [&[Link]; 2] = [&[Link::Ar, Link::An, Link::Ad], &[Link::Rn, Link::Rd]];
    let fronts: Vec<Vec<(Vec<f64>, usize)>> = stage_links
        .iter()
        .map(|links| {
            let points = (0..total).map(|i| {
                let th = theta_of(i);
                (
                    links
                        .iter()
                        .map(|&l| link_gain(ch, l, &th, cfg))
                        .collect::<Vec<_>>(),
                    i,
                )
            });
            pareto_front(points)
        })
        .collect();

    let qos = criterion.has_qos().then_some((cfg.r_min_n, cfg.r_min_d));
    let mut best: Option<(GridOutcome, usize, usize)> = None;
    for (g1, i1) in &fronts[0] {
        for (g2, i2) in &fronts[1] {
            let g = EffectiveGains {
                ar: g1[0],
                an: g1[1],
                ad: g1[2],
                rn: g2[0],
                rd: g2[1],
            };
            match grid_search_gains(&g, qos, protocol, criterion, kappa, None) {
                Ok(out) if best.as_ref().is_none_or(|b| out.objective > b.0.objective) => {
                    best = Some((out, *i1, *i2))
                }
                Ok(_) | Err(Error::Infeasible(_)) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok(best.map(|(out, i1, i2)| OracleResult {
        objective: out.objective,
        split: out.split,
        phases: PhaseConfig::new(theta_of(i1), theta_of(i2)),
        r_n: out.rates.r_n,
        r_d: out.rates.r_d,
        front_sizes: [fronts[0].len(), fronts[1].len()],
    }))
}

/// Points not weakly dominated by any other point (ties keep the first).
fn pareto_front<T>(points: impl Iterator<Item = (Vec<f64>, T)>) -> Vec<(Vec<f64>, T)> {
    let mut all: Vec<(Vec<f64>, T)> = points.collect();
    all.sort_by(|a, b| b.0.iter().sum::<f64>().total_cmp(&a.0.iter().sum::<f64>()));
    let mut front: Vec<(Vec<f64>, T)> = Vec::new();
    for p in all {
        let dominated = front
            .iter()
            .any(|q| q.0.iter().zip(&p.0).all(|(x, y)| x >= y));
        if !dominated {
            front.push(p);
        }
    }
    front
}
