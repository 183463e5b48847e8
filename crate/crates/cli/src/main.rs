use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use risrelay_core::harness::{
    brute_force_oracle, convergence_trace, run_method, run_sweep, Method, SweepSpec, TraceRow,
};
use risrelay_core::scenario::{synthesize, trial_rng};
use risrelay_core::{Criterion, Protocol, Result, ScenarioConfig};

#[derive(Parser, Debug)]
#[command(
    name = "risrelay",
    version,
    about = "RIS-assisted relay NOMA downlink optimization"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Scenario configuration (TOML); defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of Monte Carlo trials.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimize one channel draw and print the per-iteration trace.
    Run {
        #[arg(long, default_value = "AO")]
        algorithm: Method,
        #[arg(long, default_value = "F")]
        protocol: Protocol,
        #[arg(long, default_value = "sum")]
        criterion: Criterion,
        /// Trial index of the draw.
        #[arg(long, default_value_t = 0)]
        trial: u64,
        /// Number of RIS elements; overrides the configuration.
        #[arg(long)]
        elements: Option<usize>,
    },
    /// Run a parameter sweep described by a TOML file.
    Sweep { spec: PathBuf },
    /// Record objective traces of AO and JO.
    Convergence {
        #[arg(long)]
        elements: Option<usize>,
        #[arg(long, value_delimiter = ',', default_value = "AO,JO")]
        algorithms: Vec<Method>,
        #[arg(long, value_delimiter = ',', default_value = "H,F")]
        protocols: Vec<Protocol>,
        #[arg(long, value_delimiter = ',', default_value = "sum,min")]
        criteria: Vec<Criterion>,
    },
    /// Compare AO and JO with exhaustive phase enumeration on small arrays.
    Oracle {
        #[arg(long, default_value_t = 1)]
        elements: usize,
        #[arg(long, default_value = "F")]
        protocol: Protocol,
        #[arg(long, default_value = "sum")]
        criterion: Criterion,
        /// Phase levels per element.
        #[arg(long, default_value_t = 64)]
        levels: usize,
        /// Power grid step.
        #[arg(long, default_value_t = 0.01)]
        kappa: f64,
    },
}

#[derive(Debug, Serialize)]
struct OracleRow {
    trial: usize,
    oracle: f64,
    ao: f64,
    jo: f64,
    ao_gap: f64,
    jo_gap: f64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(common: &Common) -> Result<ScenarioConfig> {
    let mut cfg = match &common.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.rng_seed = seed;
    }
    Ok(cfg)
}

fn out_dir(common: &Common) -> Result<Option<&Path>> {
    if let Some(dir) = &common.out {
        fs::create_dir_all(dir)?;
    }
    Ok(common.out.as_deref())
}

/// `Ok(false)` when some trial hit an internal error but output was still written.
fn execute(cli: &Cli) -> Result<bool> {
    let common = &cli.common;
    let cfg = load_config(common)?;
    match &cli.command {
        Command::Run {
            algorithm,
            protocol,
            criterion,
            trial,
            elements,
        } => {
            let cfg = match elements {
                Some(m) => cfg.with_elements(*m),
                None => cfg,
            };
            cfg.validate()?;
            let mut rng = trial_rng(cfg.rng_seed, *trial);
            let ch = synthesize(&cfg, &mut rng)?;
            let run = run_method(&ch, &cfg, *algorithm, *protocol, *criterion, &mut rng)?;
            println!(
                "{algorithm} {protocol} {criterion} M={} trial={trial}",
                cfg.elements
            );
            for (i, v) in run.objective_trace.iter().enumerate() {
                println!("iter {i:3}  objective {v:.6}");
            }
            println!("status {}", run.status.as_str());
            println!(
                "R_n {:.6}  R_d {:.6}  objective {:.6}",
                run.r_n, run.r_d, run.objective
            );
            if let Some(s) = &run.split {
                println!(
                    "alpha_n {:.6}  alpha_d {:.6}  beta_n {:.6}  beta_d {:.6}",
                    s.alpha_n, s.alpha_d, s.beta_n, s.beta_d
                );
            }
            println!(
                "outer {}  inner {}  wall {:.3} ms",
                run.outer_iterations,
                run.inner_iterations,
                run.wall_time.as_secs_f64() * 1e3
            );
            if let Some(dir) = out_dir(common)? {
                let rows: Vec<TraceRow> = run
                    .objective_trace
                    .iter()
                    .enumerate()
                    .map(|(iteration, &objective)| TraceRow {
                        algorithm: *algorithm,
                        protocol: *protocol,
                        criterion: *criterion,
                        trial: *trial as usize,
                        iteration,
                        objective,
                    })
                    .collect();
                write_csv(&dir.join("run.csv"), &rows)?;
            }
            Ok(true)
        }
        Command::Sweep { spec } => {
            let mut spec = SweepSpec::load(spec)?;
            if let Some(t) = common.trials {
                spec.trials = t;
            }
            let report = run_sweep(&spec, &cfg, common.workers)?;
            let dir = out_dir(common)?.unwrap_or(Path::new("."));
            report.write_all(dir)?;
            let errors = report
                .records
                .iter()
                .filter(|r| r.status == "error")
                .count();
            println!("{} rows written to {}", report.records.len(), dir.display());
            if errors > 0 {
                eprintln!("{errors} trials failed with internal errors");
            }
            Ok(errors == 0)
        }
        Command::Convergence {
            elements,
            algorithms,
            protocols,
            criteria,
        } => {
            let m = elements.unwrap_or(cfg.elements);
            let rows = convergence_trace(
                &cfg,
                m,
                algorithms,
                protocols,
                criteria,
                common.trials.unwrap_or(1),
            )?;
            match out_dir(common)? {
                Some(dir) => write_csv(&dir.join("convergence.csv"), &rows)?,
                None => {
                    let mut w = csv::Writer::from_writer(std::io::stdout());
                    for r in &rows {
                        w.serialize(r)?;
                    }
                    w.flush()?;
                }
            }
            Ok(true)
        }
        Command::Oracle {
            elements,
            protocol,
            criterion,
            levels,
            kappa,
        } => {
            let cfg = cfg.with_elements(*elements);
            cfg.validate()?;
            let mut rows = Vec::new();
            for trial in 0..common.trials.unwrap_or(10) {
                let mut rng = trial_rng(cfg.rng_seed, trial as u64);
                let ch = synthesize(&cfg, &mut rng)?;
                let mut rng_jo = rng.clone();
                let oracle = brute_force_oracle(&ch, &cfg, *protocol, *criterion, *levels, *kappa)?;
                let ao = run_method(&ch, &cfg, Method::Ao, *protocol, *criterion, &mut rng)?;
                let jo = run_method(&ch, &cfg, Method::Jo, *protocol, *criterion, &mut rng_jo)?;
                let best = oracle.map_or(f64::NAN, |o| o.objective);
                let row = OracleRow {
                    trial,
                    oracle: best,
                    ao: ao.objective,
                    jo: jo.objective,
                    ao_gap: (ao.objective - best) / best.abs(),
                    jo_gap: (jo.objective - best) / best.abs(),
                };
                println!(
                    "trial {trial:3}  oracle {:.6}  AO {:.6} ({:+.3}%)  JO {:.6} ({:+.3}%)",
                    row.oracle,
                    row.ao,
                    100.0 * row.ao_gap,
                    row.jo,
                    100.0 * row.jo_gap
                );
                rows.push(row);
            }
            if let Some(dir) = out_dir(common)? {
                write_csv(&dir.join("oracle.csv"), &rows)?;
            }
            Ok(true)
        }
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
