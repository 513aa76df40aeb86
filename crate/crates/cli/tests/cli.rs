use std::path::Path;
use std::process::{Command, Output};

use cfisac::harness::{prepare_setup, ExperimentSpec, PipelineOptions};
use cfisac::detection::DetectorConfig;
use cfisac::SystemConfig;

fn cfisac(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cfisac")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn tiny_spec(dir: &Path) -> std::path::PathBuf {
    let spec = ExperimentSpec {
        name: "tiny".into(),
        base: SystemConfig { num_aps: 16, num_ues: 3, num_ssas: 2, tau_s: 5, ..Default::default() },
        n_setups: 2,
        seed: 3,
        options: PipelineOptions {
            n_mc: 30,
            n_norm: 20,
            detector: DetectorConfig { n_calib: 300, n_trials: 100, ..Default::default() },
            ..Default::default()
        },
        ..Default::default()
    };
    let path = dir.join("spec.json");
    std::fs::write(&path, serde_json::to_string_pretty(&spec).unwrap()).unwrap();
    path
}

#[test]
fn validate_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = cfisac(&["validate"], dir.path());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}\n{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout.lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn missing_spec_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = cfisac(&["run", "nope.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not found"));
}

#[test]
fn unknown_flag_and_subcommand_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cfisac(&["run", "x.json", "--bogus"], dir.path()).status.code(), Some(2));
    assert_eq!(cfisac(&["frobnicate"], dir.path()).status.code(), Some(2));
    let out = cfisac(&["sweep", "x.json", "--param", "nonsense", "--values", "1"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn malformed_spec_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), "{ not json").unwrap();
    assert_eq!(cfisac(&["run", "bad.json"], dir.path()).status.code(), Some(1));
}

#[test]
fn sweep_writes_one_row_per_value_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let spec = tiny_spec(dir.path());
    let spec = spec.to_str().unwrap();
    for out in ["a", "b"] {
        let o = cfisac(&["sweep", spec, "--param", "omega0", "--values", "0.001,1,1000", "--threads", "2", "--out", out], dir.path());
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = std::fs::read_to_string(dir.path().join("a/results.csv")).unwrap();
    let b = std::fs::read_to_string(dir.path().join("b/results.csv")).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 4);
    assert!(a.lines().nth(1).unwrap().starts_with("omega0,0.001,"));
    assert!(dir.path().join("a/manifest.json").is_file());
}

#[test]
fn run_and_calibrate_with_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let spec = tiny_spec(dir.path());
    let spec = spec.to_str().unwrap();
    let o = cfisac(&["run", spec, "--seed", "9", "--out", "r"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("r/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 9);
    let o = cfisac(&["calibrate", spec, "--out", "c"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let cal = std::fs::read_to_string(dir.path().join("c/calibration.csv")).unwrap();
    assert_eq!(cal.lines().count(), 1 + 2 * 2);
}

#[test]
fn power_runs_on_a_saved_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SystemConfig { num_aps: 9, num_ues: 2, num_ssas: 2, tau_s: 4, ..Default::default() };
    let prep = prepare_setup(&cfg, 5, &PipelineOptions { n_mc: 30, n_norm: 20, ..Default::default() }).unwrap();
    std::fs::write(dir.path().join("bundle.json"), prep.bundle().to_json().unwrap()).unwrap();
    let o = cfisac(&["power", "bundle.json", "--out", "p"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("converged"));
    assert!(dir.path().join("p/ccp_trace.csv").is_file());
    assert_eq!(cfisac(&["power", "missing.json"], dir.path()).status.code(), Some(2));
}

#[test]
fn shipped_specs_parse_and_quick_runs() {
    let specs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../specs");
    let mut n = 0;
    for entry in std::fs::read_dir(&specs).unwrap() {
        let path = entry.unwrap().path();
        let spec = ExperimentSpec::from_json_file(&path).unwrap();
        spec.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        n += 1;
    }
    assert!(n >= 5);
    let dir = tempfile::tempdir().unwrap();
    let out = cfisac(&["run", specs.join("quick.json").to_str().unwrap(), "--out", "q"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_to_string(dir.path().join("q/results.csv")).unwrap().lines().count(), 3);
}
