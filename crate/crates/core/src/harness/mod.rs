//! Experiment orchestration: parameter sweeps averaged over UE drops, with
//! reproducible seeding and plot-ready output.

mod pipeline;

pub use pipeline::*;

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::SystemConfig;
use crate::error::{IsacError, Result};
use crate::linalg::from_db;
use crate::rng::{derive_seed, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    /// RCS variance in dBsm.
    SigmaRcs2,
    Omega0,
    VExponent,
    #[serde(rename = "R")]
    R,
    #[serde(rename = "T")]
    T,
    #[serde(rename = "S")]
    S,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            Self::SigmaRcs2 => "sigma_rcs2",
            Self::Omega0 => "omega0",
            Self::VExponent => "v_exponent",
            Self::R => "R",
            Self::T => "T",
            Self::S => "S",
        }
    }

    /// Writes `value` into a copy of the configuration and options.
    pub fn apply(self, value: f64, cfg: &SystemConfig, opts: &PipelineOptions) -> Result<(SystemConfig, PipelineOptions)> {
        let (mut cfg, mut opts) = (cfg.clone(), opts.clone());
        let count = || {
            if value >= 1.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(IsacError::InvalidConfig(format!("{} must be a positive integer, got {value}", self.name())))
            }
        };
        match self {
            Self::SigmaRcs2 => cfg.sigma_rcs2 = from_db(value),
            Self::Omega0 => opts.ccp.omega0 = value,
            Self::VExponent => opts.detector.v_exponent = value,
            Self::R => cfg.rx_per_ssa = count()?,
            Self::T => cfg.tx_per_ssa = count()?,
            Self::S => cfg.num_ssas = count()?,
        }
        cfg.validate()?;
        Ok((cfg, opts))
    }
}

impl FromStr for SweepParam {
    type Err = IsacError;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "sigma_rcs2" => Self::SigmaRcs2,
            "omega0" => Self::Omega0,
            "v_exponent" => Self::VExponent,
            "R" => Self::R,
            "T" => Self::T,
            "S" => Self::S,
            other => return Err(IsacError::InvalidConfig(format!("unknown sweep parameter `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub name: String,
    pub base: SystemConfig,
    pub sweep: Option<Sweep>,
    pub n_setups: usize,
    pub seed: u64,
    pub options: PipelineOptions,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self { name: "experiment".into(), base: SystemConfig::default(), sweep: None, n_setups: 20, seed: 1, options: PipelineOptions::default(), output_dir: None }
    }
}

impl ExperimentSpec {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let spec: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        self.options.ccp.validate()?;
        self.options.detector.validate()?;
        if self.n_setups == 0 {
            return Err(IsacError::InvalidConfig("n_setups must be at least 1".into()));
        }
        if let Some(sw) = &self.sweep {
            for &v in &sw.values {
                sw.param.apply(v, &self.base, &self.options)?;
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON of the spec, without the output path.
    pub fn config_hash(&self) -> String {
        let mut canon = self.clone();
        canon.output_dir = None;
        let text = serde_json::to_string(&canon).expect("spec serialises");
        format!("{:x}", Sha256::digest(text.as_bytes()))
    }

    /// Setup seeds are shared by every sweep value, so sweeps are paired.
    pub fn setup_seeds(&self) -> Vec<u64> {
        (0..self.n_setups as u64).map(|i| derive_seed(self.seed, Purpose::Setup, i)).collect()
    }

    /// `(value, config, options)` per sweep point; a single point without a sweep.
    pub fn points(&self) -> Result<Vec<(Option<f64>, SystemConfig, PipelineOptions)>> {
        match &self.sweep {
            None => Ok(vec![(None, self.base.clone(), self.options.clone())]),
            Some(sw) => sw
                .values
                .iter()
                .map(|&v| sw.param.apply(v, &self.base, &self.options).map(|(c, o)| (Some(v), c, o)))
                .collect(),
        }
    }
}

/// One row per sweep value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub sweep_param: String,
    pub sweep_value: f64,
    /// Mean over setups of the per-setup minimum detection probability.
    pub min_detection_prob: f64,
    /// Standard error of that mean across setups.
    pub min_detection_prob_se: f64,
    pub mean_min_comm_sinr_db: f64,
    pub mean_min_sensing_sinr_db: f64,
    pub mean_gamma_s_db: f64,
    pub mean_gamma_c_db: f64,
    pub ccp_converged_fraction: f64,
    pub n_setups: usize,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetupRow {
    pub sweep_param: String,
    pub sweep_value: f64,
    pub setup: usize,
    pub setup_seed: u64,
    pub min_p_d: f64,
    pub min_comm_sinr_db: f64,
    pub min_sensing_sinr_db: f64,
    pub gamma_s_db: f64,
    pub gamma_c_db: f64,
    pub ccp_converged: bool,
    pub ccp_iterations: usize,
    pub max_fresh_pfa_error: Option<f64>,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub seed: u64,
    pub config_hash: String,
    pub rows: Vec<ReportRow>,
    pub setups: Vec<SetupRow>,
    /// Seconds per sweep value; kept out of the CSV files so they stay
    /// byte-identical across runs.
    pub wall_time: Vec<f64>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn std_err(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64 / xs.len() as f64).sqrt()
}

fn summarize(param: &str, value: f64, outcomes: &[SetupOutcome], hash: &str) -> ReportRow {
    let col = |f: fn(&SetupOutcome) -> f64| outcomes.iter().map(f).collect::<Vec<_>>();
    let pd = col(|o| o.min_p_d);
    ReportRow {
        sweep_param: param.to_string(),
        sweep_value: value,
        min_detection_prob: mean(&pd),
        min_detection_prob_se: std_err(&pd),
        mean_min_comm_sinr_db: mean(&col(|o| o.min_comm_sinr_db)),
        mean_min_sensing_sinr_db: mean(&col(|o| o.min_sensing_sinr_db)),
        mean_gamma_s_db: mean(&col(|o| o.gamma_s_db)),
        mean_gamma_c_db: mean(&col(|o| o.gamma_c_db)),
        ccp_converged_fraction: mean(&col(|o| if o.ccp_converged { 1.0 } else { 0.0 })),
        n_setups: outcomes.len(),
        config_hash: hash.to_string(),
    }
}

/// Runs every sweep point over every setup seed. Setups run in parallel;
/// results are combined in setup order. On failure, rows completed so far
/// are written to `output_dir` (if set) before the error is returned.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let hash = spec.config_hash();
    let param = spec.sweep.as_ref().map_or("none", |s| s.param.name());
    let seeds = spec.setup_seeds();
    let mut report = ExperimentReport { name: spec.name.clone(), seed: spec.seed, config_hash: hash.clone(), rows: vec![], setups: vec![], wall_time: vec![] };
    for (value, cfg, opts) in spec.points()? {
        let start = Instant::now();
        let v = value.unwrap_or(f64::NAN);
        let results: Vec<Result<SetupOutcome>> = seeds.par_iter().map(|&seed| run_setup(&cfg, seed, &opts)).collect();
        let mut outcomes = Vec::with_capacity(results.len());
        for (r, &seed) in results.into_iter().zip(&seeds) {
            match r {
                Ok(o) => outcomes.push(o),
                Err(e) => {
                    if let Some(dir) = &spec.output_dir {
                        emit_results(&report, dir)?;
                    }
                    return Err(IsacError::Experiment { sweep_value: v, setup_seed: seed, source: Box::new(e) });
                }
            }
        }
        for (i, o) in outcomes.iter().enumerate() {
            let fa_err = o.fresh_pfa.as_ref().map(|f| f.iter().map(|x| (x - opts.detector.p_fa).abs()).fold(0.0, f64::max));
            report.setups.push(SetupRow {
                sweep_param: param.into(),
                sweep_value: v,
                setup: i,
                setup_seed: o.setup_seed,
                min_p_d: o.min_p_d,
                min_comm_sinr_db: o.min_comm_sinr_db,
                min_sensing_sinr_db: o.min_sensing_sinr_db,
                gamma_s_db: o.gamma_s_db,
                gamma_c_db: o.gamma_c_db,
                ccp_converged: o.ccp_converged,
                ccp_iterations: o.ccp_iterations,
                max_fresh_pfa_error: fa_err,
                config_hash: hash.clone(),
            });
        }
        report.rows.push(summarize(param, v, &outcomes, &hash));
        report.wall_time.push(start.elapsed().as_secs_f64());
    }
    if let Some(dir) = &spec.output_dir {
        emit_results(&report, dir)?;
    }
    Ok(report)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(!rows.is_empty()).from_path(path)?;
    if rows.is_empty() {
        w.write_record(header)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub const RESULTS_HEADER: [&str; 11] = [
    "sweep_param",
    "sweep_value",
    "min_detection_prob",
    "min_detection_prob_se",
    "mean_min_comm_sinr_db",
    "mean_min_sensing_sinr_db",
    "mean_gamma_s_db",
    "mean_gamma_c_db",
    "ccp_converged_fraction",
    "n_setups",
    "config_hash",
];

const SETUPS_HEADER: [&str; 13] = [
    "sweep_param",
    "sweep_value",
    "setup",
    "setup_seed",
    "min_p_d",
    "min_comm_sinr_db",
    "min_sensing_sinr_db",
    "gamma_s_db",
    "gamma_c_db",
    "ccp_converged",
    "ccp_iterations",
    "max_fresh_pfa_error",
    "config_hash",
];

#[derive(Serialize)]
struct Manifest<'a> {
    name: &'a str,
    seed: u64,
    config_hash: &'a str,
    crate_version: &'static str,
    files: [&'static str; 2],
    wall_time: &'a [f64],
    report: &'a ExperimentReport,
}

/// Writes `results.csv` (one row per sweep value), `setups.csv` (one row
/// per setup and sweep value) and `manifest.json`.
pub fn emit_results(report: &ExperimentReport, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_csv(&dir.join("results.csv"), &report.rows, &RESULTS_HEADER)?;
    write_csv(&dir.join("setups.csv"), &report.setups, &SETUPS_HEADER)?;
    let manifest = Manifest {
        name: &report.name,
        seed: report.seed,
        config_hash: &report.config_hash,
        crate_version: env!("CARGO_PKG_VERSION"),
        files: ["results.csv", "setups.csv"],
        wall_time: &report.wall_time,
        report,
    };
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

/// Reads a report back from `manifest.json`.
pub fn load_report(dir: impl AsRef<Path>) -> Result<ExperimentReport> {
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.as_ref().join("manifest.json"))?)?;
    Ok(serde_json::from_value(v["report"].clone())?)
}

/// Per-setup thresholds and false-alarm rates, without detection trials.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub setup: usize,
    pub setup_seed: u64,
    pub ssa: usize,
    pub threshold: f64,
    pub in_sample_pfa: f64,
    pub fresh_pfa: f64,
}

/// Power allocation and calibration for every setup at the base
/// configuration, followed by a fresh false-alarm check with `n_calib`
/// trials per SSA.
pub fn run_calibration(spec: &ExperimentSpec) -> Result<Vec<CalibrationRow>> {
    spec.validate()?;
    let opts = &spec.options;
    let seeds = spec.setup_seeds();
    let per_setup: Vec<Result<Vec<CalibrationRow>>> = seeds
        .par_iter()
        .enumerate()
        .map(|(i, &seed)| {
            let prep = prepare_setup(&spec.base, seed, opts)?;
            let ccp = allocate_power(&prep, &opts.ccp)?;
            let system = sensing_system(&prep, ccp.state.rho, opts.detector.v_exponent)?;
            let cal = crate::detection::calibrate_threshold(&system, &opts.detector, derive_seed(seed, Purpose::Calibration, 0))?;
            let fresh = crate::detection::false_alarm_rate(&system, &opts.detector, &cal.thresholds, opts.detector.n_calib, derive_seed(seed, Purpose::Validation, 0))?;
            Ok((0..system.num_ssas())
                .map(|s| CalibrationRow { setup: i, setup_seed: seed, ssa: s, threshold: cal.thresholds[s], in_sample_pfa: cal.in_sample_pfa[s], fresh_pfa: fresh[s] })
                .collect())
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_setup {
        rows.extend(r?);
    }
    if let Some(dir) = &spec.output_dir {
        std::fs::create_dir_all(dir)?;
        write_csv(&dir.join("calibration.csv"), &rows, &["setup", "setup_seed", "ssa", "threshold", "in_sample_pfa", "fresh_pfa"])?;
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::DetectorConfig;

    fn tiny_spec() -> ExperimentSpec {
        ExperimentSpec {
            name: "tiny".into(),
            base: SystemConfig { num_aps: 16, num_ues: 3, num_ssas: 2, tau_s: 5, ..Default::default() },
            sweep: Some(Sweep { param: SweepParam::SigmaRcs2, values: vec![-10.0, 0.0] }),
            n_setups: 2,
            seed: 4,
            options: PipelineOptions {
                n_mc: 30,
                n_norm: 20,
                detector: DetectorConfig { n_calib: 300, n_trials: 100, ..Default::default() },
                ..Default::default()
            },
            output_dir: None,
        }
    }

    #[test]
    fn sweep_parameter_application() {
        let cfg = SystemConfig::default();
        let opts = PipelineOptions::default();
        let (c, _) = SweepParam::SigmaRcs2.apply(-5.0, &cfg, &opts).unwrap();
        assert!((c.sigma_rcs2 - 10f64.powf(-0.5)).abs() < 1e-15);
        let (c, _) = SweepParam::R.apply(3.0, &cfg, &opts).unwrap();
        assert_eq!(c.rx_per_ssa, 3);
        assert!(SweepParam::R.apply(1.5, &cfg, &opts).is_err());
        let (_, o) = SweepParam::Omega0.apply(1e3, &cfg, &opts).unwrap();
        assert_eq!(o.ccp.omega0, 1e3);
        assert_eq!("v_exponent".parse::<SweepParam>().unwrap(), SweepParam::VExponent);
        assert!("bogus".parse::<SweepParam>().is_err());
    }

    #[test]
    fn spec_json_round_trip_and_hash() {
        let spec = tiny_spec();
        let text = serde_json::to_string(&spec).unwrap();
        let back: ExperimentSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
        assert_eq!(back.config_hash(), spec.config_hash());
        let mut other = spec.clone();
        other.seed = 5;
        assert_ne!(other.config_hash(), spec.config_hash());
        let minimal: ExperimentSpec = serde_json::from_str(r#"{"sweep": {"param": "R", "values": [1, 2]}}"#).unwrap();
        assert_eq!(minimal.n_setups, 20);
        minimal.validate().unwrap();
    }

    #[test]
    fn deterministic_report_and_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = tiny_spec();
        spec.output_dir = Some(dir.path().join("a"));
        let a = run_experiment(&spec).unwrap();
        spec.output_dir = Some(dir.path().join("b"));
        let b = run_experiment(&spec).unwrap();
        assert_eq!(a.rows, b.rows);
        for f in ["results.csv", "setups.csv"] {
            assert_eq!(std::fs::read(dir.path().join("a").join(f)).unwrap(), std::fs::read(dir.path().join("b").join(f)).unwrap());
        }
        let csv = std::fs::read_to_string(dir.path().join("a/results.csv")).unwrap();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().skip(1).all(|l| l.ends_with(&a.config_hash)));
        let back = load_report(dir.path().join("a")).unwrap();
        assert_eq!(back, a);
        for r in &a.rows {
            assert!((0.0..=1.0).contains(&r.min_detection_prob));
        }
    }

    #[test]
    fn empty_report_gives_header_only_csv() {
        let dir = tempfile::tempdir().unwrap();
        let report = ExperimentReport { name: "e".into(), seed: 0, config_hash: "x".into(), rows: vec![], setups: vec![], wall_time: vec![] };
        emit_results(&report, dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
        assert_eq!(text.trim_end(), RESULTS_HEADER.join(","));
    }
}
