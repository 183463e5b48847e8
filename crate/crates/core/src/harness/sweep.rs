//! Parameter sweeps: trial dispatch on a worker pool, CSV output and
//! per-point aggregates.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{mean_std, median, run_method, Method, RunSummary};
use crate::error::{Error, Result};
use crate::ratemodel::{Criterion, Protocol};
use crate::scenario::{dbm_to_watts, synthesize, trial_rng, ScenarioConfig};

pub const CSV_HEADER: [&str; 12] = [
    "sweep_value",
    "trial",
    "algorithm",
    "protocol",
    "criterion",
    "R_n",
    "R_d",
    "objective",
    "outer_iters",
    "inner_iters_total",
    "wall_ms",
    "status",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParameter {
    /// Number of RIS elements.
    #[serde(rename = "M")]
    Elements,
    /// Transmit power of AP and relay in dBm.
    #[serde(rename = "P_T")]
    TransmitPowerDbm,
    /// x coordinate of the RIS in meters.
    #[serde(rename = "ris_x")]
    RisX,
    /// x coordinate of the relay in meters.
    #[serde(rename = "relay_x")]
    RelayX,
}

impl SweepParameter {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParameter::Elements => "M",
            SweepParameter::TransmitPowerDbm => "P_T",
            SweepParameter::RisX => "ris_x",
            SweepParameter::RelayX => "relay_x",
        }
    }

    /// `cfg` with the parameter set to `value`.
    pub fn apply(self, cfg: &ScenarioConfig, value: f64) -> Result<ScenarioConfig> {
        let mut c = cfg.clone();
        match self {
            SweepParameter::Elements => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(Error::Config(format!(
                        "element count must be a positive integer, got {value}"
                    )));
                }
                c.elements = value as usize;
            }
            SweepParameter::TransmitPowerDbm => c = c.with_transmit_power(dbm_to_watts(value)),
            SweepParameter::RisX => c.ris_pos[0] = value,
            SweepParameter::RelayX => c.relay_pos[0] = value,
        }
        c.validate()?;
        Ok(c)
    }
}

impl FromStr for SweepParameter {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "M" | "m" | "elements" => Ok(SweepParameter::Elements),
            "P_T" | "p_t" | "power" => Ok(SweepParameter::TransmitPowerDbm),
            "ris_x" => Ok(SweepParameter::RisX),
            "relay_x" => Ok(SweepParameter::RelayX),
            _ => Err(Error::Config(format!("unknown sweep parameter '{s}'"))),
        }
    }
}

fn parsed_list<'de, D, T>(d: D) -> std::result::Result<Vec<T>, D::Error>
where
    D: Deserializer<'de>,
    T: FromStr<Err = Error>,
{
    Vec::<String>::deserialize(d)?
        .iter()
        .map(|s| s.parse().map_err(serde::de::Error::custom))
        .collect()
}

/// What to sweep and what to run at every point. Read from TOML, e.g.
///
/// ```toml
/// parameter = "M"
/// values = [10, 20, 30]
/// trials = 50
/// algorithms = ["AO", "JO"]
/// protocols = ["H", "F"]
/// criteria = ["sum", "min"]
/// baselines = ["relay_only", "ris_only"]
/// ```
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    pub trials: usize,
    #[serde(default, deserialize_with = "parsed_list")]
    pub algorithms: Vec<Method>,
    #[serde(default, deserialize_with = "parsed_list")]
    pub protocols: Vec<Protocol>,
    #[serde(deserialize_with = "parsed_list")]
    pub criteria: Vec<Criterion>,
    #[serde(default, deserialize_with = "parsed_list")]
    pub baselines: Vec<Method>,
}

impl SweepSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: SweepSpec = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config("sweep needs at least one value".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("sweep needs at least one trial".into()));
        }
        if self.criteria.is_empty() {
            return Err(Error::Config("sweep needs at least one criterion".into()));
        }
        if let Some(m) = self
            .algorithms
            .iter()
            .find(|m| !matches!(m, Method::Ao | Method::Jo))
        {
            return Err(Error::Config(format!("'{m}' is not an algorithm")));
        }
        if let Some(m) = self
            .baselines
            .iter()
            .find(|m| !matches!(m, Method::RelayOnly | Method::RisOnly))
        {
            return Err(Error::Config(format!("'{m}' is not a baseline")));
        }
        if self.algorithms.is_empty() && self.baselines.is_empty() {
            return Err(Error::Config("sweep runs no scheme".into()));
        }
        if self.methods().any(Method::uses_protocol) && self.protocols.is_empty() {
            return Err(Error::Config("sweep needs at least one protocol".into()));
        }
        Ok(())
    }

    fn methods(&self) -> impl Iterator<Item = Method> + '_ {
        self.algorithms.iter().chain(&self.baselines).copied()
    }

    /// Every run of the sweep in output order.
    fn jobs(&self) -> Vec<Job> {
        let mut jobs = Vec::new();
        for (point, &value) in self.values.iter().enumerate() {
            for trial in 0..self.trials {
                for method in self.methods() {
                    let protocols: Vec<Option<Protocol>> = if method.uses_protocol() {
                        self.protocols.iter().copied().map(Some).collect()
                    } else {
                        vec![None]
                    };
                    for protocol in protocols {
                        for &criterion in &self.criteria {
                            jobs.push(Job {
                                point,
                                value,
                                trial,
                                method,
                                protocol,
                                criterion,
                            });
                        }
                    }
                }
            }
        }
        jobs
    }
}

#[derive(Debug, Clone, Copy)]
struct Job {
    point: usize,
    value: f64,
    trial: usize,
    method: Method,
    protocol: Option<Protocol>,
    criterion: Criterion,
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRecord {
    pub sweep_value: f64,
    pub trial: usize,
    pub algorithm: Method,
    pub protocol: Option<Protocol>,
    pub criterion: Criterion,
    pub r_n: f64,
    pub r_d: f64,
    pub objective: f64,
    pub outer_iters: usize,
    pub inner_iters_total: usize,
    pub wall_ms: f64,
    /// `converged`, `iteration_cap`, `infeasible` or `error`.
    pub status: String,
}

impl SweepRecord {
    pub fn is_feasible(&self) -> bool {
        self.status == "converged" || self.status == "iteration_cap"
    }

    fn fields(&self) -> [String; 12] {
        [
            self.sweep_value.to_string(),
            self.trial.to_string(),
            self.algorithm.to_string(),
            self.protocol.map_or("-".to_string(), |p| p.to_string()),
            self.criterion.to_string(),
            self.r_n.to_string(),
            self.r_d.to_string(),
            self.objective.to_string(),
            self.outer_iters.to_string(),
            self.inner_iters_total.to_string(),
            format!("{:.3}", self.wall_ms),
            self.status.clone(),
        ]
    }
}

/// Aggregate of one (sweep value, scheme, protocol, criterion) cell. Means
/// cover feasible trials only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointSummary {
    pub sweep_value: f64,
    pub algorithm: Method,
    #[serde(serialize_with = "protocol_or_dash")]
    pub protocol: Option<Protocol>,
    pub criterion: Criterion,
    pub trials: usize,
    pub feasible: usize,
    pub infeasible: usize,
    pub errors: usize,
    pub mean_objective: f64,
    pub std_objective: f64,
    pub mean_r_n: f64,
    pub mean_r_d: f64,
    pub median_outer_iters: f64,
    pub mean_wall_ms: f64,
}

fn protocol_or_dash<S: Serializer>(
    p: &Option<Protocol>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(p.map_or("-", Protocol::as_str))
}

/// AO to JO wall-time ratio at one sweep value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZetaSummary {
    pub sweep_value: f64,
    pub protocol: Protocol,
    pub criterion: Criterion,
    /// Ratio of the mean wall times.
    pub zeta_mean: f64,
    /// Median of the per-trial ratios.
    pub zeta_median: f64,
    pub pairs: usize,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub parameter: SweepParameter,
    pub records: Vec<SweepRecord>,
    pub points: Vec<PointSummary>,
    pub zeta: Vec<ZetaSummary>,
}

/// Runs every trial of `spec` on `workers` threads (0 picks the rayon
/// default). Trials are seeded from `cfg.rng_seed` and their index, and
/// rows come out in job order, so the output does not depend on the worker
/// count. Failed trials become `error` rows.
pub fn run_sweep(spec: &SweepSpec, cfg: &ScenarioConfig, workers: usize) -> Result<BenchReport> {
    spec.validate()?;
    let configs = spec
        .values
        .iter()
        .map(|&v| spec.parameter.apply(cfg, v))
        .collect::<Result<Vec<_>>>()?;
    let jobs = spec.jobs();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let records: Vec<SweepRecord> = pool.install(|| {
        jobs.par_iter()
            .map(|job| run_job(job, &configs[job.point]))
            .collect()
    });
    Ok(BenchReport::new(spec.parameter, records))
}

fn run_job(job: &Job, cfg: &ScenarioConfig) -> SweepRecord {
    let mut rng = trial_rng(cfg.rng_seed, job.trial as u64);
    let protocol = job.protocol.unwrap_or(Protocol::Full);
    let outcome = synthesize(cfg, &mut rng)
        .and_then(|ch| run_method(&ch, cfg, job.method, protocol, job.criterion, &mut rng));
    let record = |status: String, run: Option<&RunSummary>| SweepRecord {
        sweep_value: job.value,
        trial: job.trial,
        algorithm: job.method,
        protocol: job.protocol,
        criterion: job.criterion,
        r_n: run.map_or(f64::NAN, |r| r.r_n),
        r_d: run.map_or(f64::NAN, |r| r.r_d),
        objective: run.map_or(f64::NAN, |r| r.objective),
        outer_iters: run.map_or(0, |r| r.outer_iterations),
        inner_iters_total: run.map_or(0, |r| r.inner_iterations),
        wall_ms: run.map_or(0.0, |r| r.wall_time.as_secs_f64() * 1e3),
        status,
    };
    match outcome {
        Ok(run) => record(run.status.as_str().to_string(), Some(&run)),
        Err(e) => {
            log::warn!(
                "trial {} of {} at {} failed: {e}",
                job.trial,
                job.method,
                job.value
            );
            record("error".to_string(), None)
        }
    }
}

type CellKey = (usize, Method, Option<Protocol>, Criterion);

impl BenchReport {
    pub fn new(parameter: SweepParameter, records: Vec<SweepRecord>) -> Self {
        let mut order: Vec<f64> = Vec::new();
        for r in &records {
            if !order.contains(&r.sweep_value) {
                order.push(r.sweep_value);
            }
        }
        let point_of = |v: f64| order.iter().position(|&x| x == v).unwrap();
        let mut cells: BTreeMap<CellKey, Vec<&SweepRecord>> = BTreeMap::new();
        for r in &records {
            cells
                .entry((
                    point_of(r.sweep_value),
                    r.algorithm,
                    r.protocol,
                    r.criterion,
                ))
                .or_default()
                .push(r);
        }
        let points = cells
            .iter()
            .map(|(&(p, algorithm, protocol, criterion), rs)| {
                let ok: Vec<&&SweepRecord> = rs.iter().filter(|r| r.is_feasible()).collect();
                let col = |f: fn(&SweepRecord) -> f64| ok.iter().map(|r| f(r)).collect::<Vec<_>>();
                let (mean_objective, std_objective) = mean_std(&col(|r| r.objective));
                PointSummary {
                    sweep_value: order[p],
                    algorithm,
                    protocol,
                    criterion,
                    trials: rs.len(),
                    feasible: ok.len(),
                    infeasible: rs.iter().filter(|r| r.status == "infeasible").count(),
                    errors: rs.iter().filter(|r| r.status == "error").count(),
                    mean_objective,
                    std_objective,
                    mean_r_n: mean_std(&col(|r| r.r_n)).0,
                    mean_r_d: mean_std(&col(|r| r.r_d)).0,
                    median_outer_iters: median(&col(|r| r.outer_iters as f64)),
                    mean_wall_ms: mean_std(&col(|r| r.wall_ms)).0,
                }
            })
            .collect();

        let mut zeta = Vec::new();
        for (&(p, method, protocol, criterion), ao) in &cells {
            let Some(protocol) = protocol.filter(|_| method == Method::Ao) else {
                continue;
            };
            let Some(jo) = cells.get(&(p, Method::Jo, Some(protocol), criterion)) else {
                continue;
            };
            let jo_by_trial: BTreeMap<usize, &SweepRecord> = jo
                .iter()
                .filter(|r| r.is_feasible())
                .map(|r| (r.trial, *r))
                .collect();
            let pairs: Vec<(f64, f64)> = ao
                .iter()
                .filter(|r| r.is_feasible())
                .filter_map(|a| jo_by_trial.get(&a.trial).map(|j| (a.wall_ms, j.wall_ms)))
                .filter(|&(_, j)| j > 0.0)
                .collect();
            if pairs.is_empty() {
                continue;
            }
            let ratios: Vec<f64> = pairs.iter().map(|(a, j)| a / j).collect();
            let total = |f: fn(&(f64, f64)) -> f64| pairs.iter().map(f).sum::<f64>();
            zeta.push(ZetaSummary {
                sweep_value: order[p],
                protocol,
                criterion,
                zeta_mean: total(|x| x.0) / total(|x| x.1),
                zeta_median: median(&ratios),
                pairs: pairs.len(),
            });
        }
        Self {
            parameter,
            records,
            points,
            zeta,
        }
    }

    /// Trial rows in the fixed CSV schema.
    pub fn write_records<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for r in &self.records {
            w.write_record(r.fields())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_summary<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for p in &self.points {
            w.serialize(p)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_zeta<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for z in &self.zeta {
            w.serialize(z)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `trials.csv`, `summary.csv`, `zeta.csv` and `plot.py` into
    /// `dir`, creating it if needed.
    pub fn write_all(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.write_records(fs::File::create(dir.join("trials.csv"))?)?;
        self.write_summary(fs::File::create(dir.join("summary.csv"))?)?;
        self.write_zeta(fs::File::create(dir.join("zeta.csv"))?)?;
        write_plot_script(dir)
    }
}

/// Matplotlib template that plots `summary.csv` and `zeta.csv`.
pub const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
"""Plots the aggregates written next to this script."""
import csv
import sys
from collections import defaultdict
from pathlib import Path

import matplotlib.pyplot as plt

here = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parent

series = defaultdict(list)
with open(here / "summary.csv") as f:
    for row in csv.DictReader(f):
        if int(row["feasible"]) == 0:
            continue
        key = (row["algorithm"], row["protocol"], row["criterion"])
        series[key].append((float(row["sweep_value"]), float(row["mean_objective"]), float(row["std_objective"])))

for criterion in ("sum", "min"):
    keys = [k for k in series if k[2] == criterion]
    if not keys:
        continue
    plt.figure()
    for key in sorted(keys):
        pts = sorted(series[key])
        x, y, s = zip(*pts)
        plt.errorbar(x, y, yerr=s, marker="o", capsize=3, label=" ".join(p for p in key[:2] if p != "-"))
    plt.xlabel("sweep value")
    plt.ylabel("rate [bit/s/Hz]")
    plt.legend()
    plt.grid(True)
    plt.savefig(here / f"rates_{criterion}.png", dpi=150)

zeta = defaultdict(list)
zeta_file = here / "zeta.csv"
if zeta_file.exists() and zeta_file.stat().st_size > 0:
    with open(zeta_file) as f:
        for row in csv.DictReader(f):
            zeta[(row["protocol"], row["criterion"])].append((float(row["sweep_value"]), float(row["zeta_median"])))
if zeta:
    plt.figure()
    for key, pts in sorted(zeta.items()):
        x, y = zip(*sorted(pts))
        plt.plot(x, y, marker="s", label=" ".join(key))
    plt.xlabel("sweep value")
    plt.ylabel("time(AO) / time(JO)")
    plt.legend()
    plt.grid(True)
    plt.savefig(here / "zeta.png", dpi=150)
"#;

pub fn write_plot_script(dir: &Path) -> Result<()> {
    fs::write(dir.join("plot.py"), PLOT_SCRIPT)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SweepSpec {
        SweepSpec::from_toml_str(
            r#"
            parameter = "M"
            values = [2]
            trials = 1
            algorithms = ["AO"]
            protocols = ["H"]
            criteria = ["min"]
            "#,
        )
        .unwrap()
    }

    #[test]
    fn one_trial_one_row() {
        let report = run_sweep(&small_spec(), &ScenarioConfig::default(), 1).unwrap();
        let mut buf = Vec::new();
        report.write_records(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], CSV_HEADER.join(","));
        assert!(lines[1].starts_with("2,0,AO,H,min,"));
    }

    #[test]
    fn same_seed_same_bytes() {
        let spec = SweepSpec::from_toml_str(
            "parameter = \"M\"\nvalues = [1, 2]\ntrials = 2\nalgorithms = [\"AO\", \"JO\"]\nprotocols = [\"F\"]\ncriteria = [\"sum\"]\nbaselines = [\"ris_only\"]",
        )
        .unwrap();
        // Wall time is the one column that legitimately differs between runs.
        let bytes = |workers| {
            let mut report = run_sweep(&spec, &ScenarioConfig::default(), workers).unwrap();
            report.records.iter_mut().for_each(|r| r.wall_ms = 0.0);
            let mut buf = Vec::new();
            report.write_records(&mut buf).unwrap();
            buf
        };
        let first = bytes(1);
        assert_eq!(first, bytes(1));
        assert_eq!(first, bytes(2));
    }

    #[test]
    fn spec_validation() {
        let bad = |text: &str| SweepSpec::from_toml_str(text).is_err();
        assert!(bad("parameter = \"M\"\nvalues = []\ntrials = 1\nalgorithms = [\"AO\"]\nprotocols = [\"H\"]\ncriteria = [\"sum\"]"));
        assert!(bad("parameter = \"M\"\nvalues = [2]\ntrials = 0\nalgorithms = [\"AO\"]\nprotocols = [\"H\"]\ncriteria = [\"sum\"]"));
        assert!(bad("parameter = \"M\"\nvalues = [2]\ntrials = 1\nalgorithms = [\"ris_only\"]\nprotocols = [\"H\"]\ncriteria = [\"sum\"]"));
        assert!(bad("parameter = \"Q\"\nvalues = [2]\ntrials = 1\nalgorithms = [\"AO\"]\nprotocols = [\"H\"]\ncriteria = [\"sum\"]"));
        assert!(!bad("parameter = \"P_T\"\nvalues = [10]\ntrials = 1\nbaselines = [\"ris_only\"]\ncriteria = [\"sum\"]"));
    }

    #[test]
    fn parameters_apply() {
        let cfg = ScenarioConfig::default();
        assert_eq!(
            SweepParameter::Elements.apply(&cfg, 7.0).unwrap().elements,
            7
        );
        assert!(SweepParameter::Elements.apply(&cfg, 2.5).is_err());
        let c = SweepParameter::TransmitPowerDbm.apply(&cfg, 30.0).unwrap();
        assert!((c.p_ap - 1.0).abs() < 1e-12 && (c.p_relay - 1.0).abs() < 1e-12);
        assert_eq!(
            SweepParameter::RisX.apply(&cfg, 25.0).unwrap().ris_pos[0],
            25.0
        );
        assert_eq!(
            SweepParameter::RelayX.apply(&cfg, 28.0).unwrap().relay_pos[0],
            28.0
        );
    }

    #[test]
    fn zeta_pairs_trials() {
        let rec = |trial, algorithm, wall_ms| SweepRecord {
            sweep_value: 8.0,
            trial,
            algorithm,
            protocol: Some(Protocol::Full),
            criterion: Criterion::SumRate,
            r_n: 1.0,
            r_d: 1.0,
            objective: 2.0,
            outer_iters: 1,
            inner_iters_total: 1,
            wall_ms,
            status: "converged".into(),
        };
        let report = BenchReport::new(
            SweepParameter::Elements,
            vec![
                rec(0, Method::Ao, 4.0),
                rec(0, Method::Jo, 2.0),
                rec(1, Method::Ao, 3.0),
                rec(1, Method::Jo, 3.0),
            ],
        );
        assert_eq!(report.zeta.len(), 1);
        let z = &report.zeta[0];
        assert_eq!(z.pairs, 2);
        assert!((z.zeta_mean - 7.0 / 5.0).abs() < 1e-15);
        assert!((z.zeta_median - 1.5).abs() < 1e-15);
        assert_eq!(report.points.len(), 2);
    }
}
