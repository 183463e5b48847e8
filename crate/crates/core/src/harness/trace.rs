//! Per-iteration objective traces and AO/JO execution-time ratios.

use serde::Serialize;

use super::{median, run_method, Method};
use crate::error::{Error, Result};
use crate::ratemodel::{Criterion, Protocol};
use crate::scenario::{synthesize, trial_rng, ScenarioConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub algorithm: Method,
    pub protocol: Protocol,
    pub criterion: Criterion,
    pub trial: usize,
    /// 0 is the initial point.
    pub iteration: usize,
    pub objective: f64,
}

/// True objective after every outer AO iteration or joint JO update, for
/// each requested algorithm, protocol, criterion and trial at `m`
/// elements. AO and JO of the same trial share the channel and the start.
pub fn convergence_trace(
    cfg: &ScenarioConfig,
    m: usize,
    algorithms: &[Method],
    protocols: &[Protocol],
    criteria: &[Criterion],
    trials: usize,
) -> Result<Vec<TraceRow>> {
    if let Some(a) = algorithms
        .iter()
        .find(|a| !matches!(a, Method::Ao | Method::Jo))
    {
        return Err(Error::Config(format!("no convergence trace for '{a}'")));
    }
    let cfg = cfg.clone().with_elements(m);
    let mut rows = Vec::new();
    for trial in 0..trials {
        for &protocol in protocols {
            for &criterion in criteria {
                for &algorithm in algorithms {
                    let mut rng = trial_rng(cfg.rng_seed, trial as u64);
                    let ch = synthesize(&cfg, &mut rng)?;
                    let run = run_method(&ch, &cfg, algorithm, protocol, criterion, &mut rng)?;
                    rows.extend(run.objective_trace.iter().enumerate().map(
                        |(iteration, &objective)| TraceRow {
                            algorithm,
                            protocol,
                            criterion,
                            trial,
                            iteration,
                            objective,
                        },
                    ));
                }
            }
        }
    }
    Ok(rows)
}

/// Paired AO/JO wall-time ratios at one array size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZetaPoint {
    pub elements: usize,
    pub ratios: Vec<f64>,
    pub median: f64,
}

/// `time(AO) / time(JO)` over `trials` matched draws per array size. Draws
/// where either algorithm finds no feasible point are skipped.
pub fn execution_time_ratio(
    cfg: &ScenarioConfig,
    sizes: &[usize],
    trials: usize,
    protocol: Protocol,
    criterion: Criterion,
) -> Result<Vec<ZetaPoint>> {
    sizes
        .iter()
        .map(|&m| {
            let cfg = cfg.clone().with_elements(m);
            let mut ratios = Vec::new();
            for trial in 0..trials {
                let mut rng = trial_rng(cfg.rng_seed, trial as u64);
                let ch = synthesize(&cfg, &mut rng)?;
                let mut rng_jo = rng.clone();
                let ao = run_method(&ch, &cfg, Method::Ao, protocol, criterion, &mut rng)?;
                let jo = run_method(&ch, &cfg, Method::Jo, protocol, criterion, &mut rng_jo)?;
                if ao.is_feasible() && jo.is_feasible() && !jo.wall_time.is_zero() {
                    ratios.push(ao.wall_time.as_secs_f64() / jo.wall_time.as_secs_f64());
                }
            }
            Ok(ZetaPoint {
                elements: m,
                median: median(&ratios),
                ratios,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aodriver::MONOTONE_SLACK;

    #[test]
    fn traces_start_at_zero_and_are_monotone() {
        let cfg = ScenarioConfig::default();
        let rows = convergence_trace(
            &cfg,
            3,
            &[Method::Ao, Method::Jo],
            &[Protocol::Hybrid],
            &[Criterion::MinRate],
            1,
        )
        .unwrap();
        for algorithm in [Method::Ao, Method::Jo] {
            let t: Vec<&TraceRow> = rows.iter().filter(|r| r.algorithm == algorithm).collect();
            assert!(!t.is_empty());
            assert_eq!(t[0].iteration, 0);
            assert!(t
                .windows(2)
                .all(|w| w[1].objective >= w[0].objective - MONOTONE_SLACK));
        }
        assert!(convergence_trace(
            &cfg,
            3,
            &[Method::RisOnly],
            &[Protocol::Hybrid],
            &[Criterion::MinRate],
            1
        )
        .is_err());
    }
}
