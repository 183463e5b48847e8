use std::fs;
use std::process::Command;

fn risrelay() -> Command {
    Command::new(env!("CARGO_BIN_EXE_risrelay"))
}

#[test]
fn run_prints_trace_and_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = risrelay()
        .args([
            "run",
            "--elements",
            "2",
            "--protocol",
            "H",
            "--criterion",
            "min",
            "--seed",
            "7",
            "--out",
        ])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("iter   0"));
    assert!(stdout.contains("status "));
    let csv = fs::read_to_string(dir.path().join("run.csv")).unwrap();
    assert!(csv.starts_with("algorithm,protocol,criterion,trial,iteration,objective"));
}

#[test]
fn sweep_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.toml");
    fs::write(
        &spec,
        r#"
parameter = "M"
values = [1, 2]
trials = 1
algorithms = ["AO"]
protocols = ["F"]
criteria = ["sum"]
baselines = ["relay_only"]
"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let status = risrelay()
        .arg("sweep")
        .arg(&spec)
        .args(["--workers", "1", "--out"])
        .arg(&out_dir)
        .status()
        .unwrap();
    assert!(status.success());
    for f in ["trials.csv", "summary.csv", "zeta.csv", "plot.py"] {
        assert!(out_dir.join(f).exists(), "{f} missing");
    }
    let rows = fs::read_to_string(out_dir.join("trials.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 2 * 2);
}

#[test]
fn trials_flag_overrides_spec() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.toml");
    fs::write(
        &spec,
        "parameter = \"P_T\"\nvalues = [30]\ntrials = 5\nprotocols = [\"H\"]\ncriteria = [\"min\"]\nbaselines = [\"relay_only\"]\n",
    )
    .unwrap();
    let status = risrelay()
        .arg("sweep")
        .arg(&spec)
        .args(["--trials", "2", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let rows = fs::read_to_string(dir.path().join("trials.csv")).unwrap();
    assert_eq!(rows.lines().count(), 3);
}

#[test]
fn convergence_and_oracle_run() {
    let dir = tempfile::tempdir().unwrap();
    let status = risrelay()
        .args([
            "convergence",
            "--elements",
            "2",
            "--algorithms",
            "AO",
            "--protocols",
            "F",
            "--criteria",
            "sum",
        ])
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    assert!(
        fs::read_to_string(dir.path().join("convergence.csv"))
            .unwrap()
            .lines()
            .count()
            > 1
    );

    let out = risrelay()
        .args([
            "oracle",
            "--elements",
            "1",
            "--levels",
            "16",
            "--kappa",
            "0.05",
            "--trials",
            "1",
            "--out",
        ])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(dir.path().join("oracle.csv")).unwrap();
    assert!(csv.starts_with("trial,oracle,ao,jo,ao_gap,jo_gap"));
}

#[test]
fn bad_input_fails() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.toml");
    fs::write(
        &spec,
        "parameter = \"M\"\nvalues = []\ntrials = 1\ncriteria = [\"sum\"]\n",
    )
    .unwrap();
    assert!(!risrelay()
        .arg("sweep")
        .arg(&spec)
        .status()
        .unwrap()
        .success());
    assert!(!risrelay()
        .args(["--config", "/nonexistent.toml", "run"])
        .status()
        .unwrap()
        .success());
    assert!(!risrelay()
        .args(["oracle", "--elements", "5"])
        .status()
        .unwrap()
        .success());
}

#[test]
fn shipped_configs_parse() {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    risrelay_core::ScenarioConfig::load(&root.join("scenario.toml")).unwrap();
    for f in ["sweep_elements.toml", "sweep_power.toml"] {
        risrelay_core::harness::SweepSpec::load(&root.join(f)).unwrap();
    }
}
