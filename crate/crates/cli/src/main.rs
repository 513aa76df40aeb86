use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use cfisac::harness::{self, ExperimentReport, ExperimentSpec, Sweep, SweepParam};
use cfisac::power::{ccp_power_allocation, CcpConfig, PowerVector};
use cfisac::sinr::SinrBundle;
use cfisac::validate;

/// Cell-free ISAC simulator: power allocation and distributed multi-target detection.
#[derive(Parser)]
#[command(name = "cfisac", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Master seed; overrides the one in the spec file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory; overrides the one in the spec file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment spec and write results.csv, setups.csv and manifest.json.
    Run { spec: PathBuf },
    /// Allocate power and calibrate thresholds per setup, then check the false-alarm rate on fresh trials.
    Calibrate { spec: PathBuf },
    /// Run a spec with its sweep replaced.
    Sweep {
        spec: PathBuf,
        /// sigma_rcs2 (dBsm), omega0, v_exponent, R, T or S.
        #[arg(long)]
        param: SweepParam,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Run the oracle and property self-checks.
    Validate,
    /// Run the power allocation alone on a saved SINR bundle.
    Power {
        bundle: PathBuf,
        /// CCP settings as JSON; defaults when omitted.
        #[arg(long)]
        ccp: Option<PathBuf>,
    },
}

/// Failures that are the caller's fault: exit code 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn load_spec(path: &Path, global: &Global) -> Result<ExperimentSpec> {
    if !path.is_file() {
        return Err(UsageError(format!("spec file {} not found", path.display())).into());
    }
    let mut spec = ExperimentSpec::from_json_file(path).with_context(|| format!("reading spec {}", path.display()))?;
    if let Some(seed) = global.seed {
        spec.seed = seed;
    }
    if let Some(out) = &global.out {
        spec.output_dir = Some(out.clone());
    }
    if spec.output_dir.is_none() {
        spec.output_dir = Some(PathBuf::from("results").join(&spec.name));
    }
    Ok(spec)
}

fn print_report(report: &ExperimentReport, out: &Path) {
    println!("{:>12} {:>10} {:>8} {:>14} {:>14} {:>6}", "value", "min_p_d", "se", "comm_sinr_db", "sens_sinr_db", "conv");
    for r in &report.rows {
        println!(
            "{:>12} {:>10.4} {:>8.4} {:>14.2} {:>14.2} {:>6.2}",
            r.sweep_value, r.min_detection_prob, r.min_detection_prob_se, r.mean_min_comm_sinr_db, r.mean_min_sensing_sinr_db, r.ccp_converged_fraction
        );
    }
    println!("config hash {}", report.config_hash);
    println!("wrote {}", out.display());
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.global.threads {
        if n == 0 {
            return Err(UsageError("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    match &cli.command {
        Command::Run { spec } => {
            let spec = load_spec(spec, &cli.global)?;
            let report = harness::run_experiment(&spec)?;
            print_report(&report, spec.output_dir.as_deref().unwrap_or(Path::new(".")));
        }
        Command::Sweep { spec, param, values } => {
            let mut spec = load_spec(spec, &cli.global)?;
            spec.sweep = Some(Sweep { param: *param, values: values.clone() });
            spec.validate().map_err(|e| UsageError(e.to_string()))?;
            let report = harness::run_experiment(&spec)?;
            print_report(&report, spec.output_dir.as_deref().unwrap_or(Path::new(".")));
        }
        Command::Calibrate { spec } => {
            let spec = load_spec(spec, &cli.global)?;
            let rows = harness::run_calibration(&spec)?;
            println!("{:>6} {:>4} {:>14} {:>10} {:>10}", "setup", "ssa", "threshold", "in_pfa", "fresh_pfa");
            for r in &rows {
                println!("{:>6} {:>4} {:>14.6e} {:>10.4} {:>10.4}", r.setup, r.ssa, r.threshold, r.in_sample_pfa, r.fresh_pfa);
            }
            if let Some(out) = &spec.output_dir {
                println!("wrote {}", out.join("calibration.csv").display());
            }
        }
        Command::Validate => {
            let report = validate::run_validation(cli.global.seed.unwrap_or(1))?;
            for c in &report.checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if let Some(out) = &cli.global.out {
                std::fs::create_dir_all(out)?;
                std::fs::write(out.join("validation.json"), serde_json::to_string_pretty(&report)?)?;
            }
            if !report.passed() {
                anyhow::bail!("validation failed");
            }
        }
        Command::Power { bundle, ccp } => {
            if !bundle.is_file() {
                return Err(UsageError(format!("bundle file {} not found", bundle.display())).into());
            }
            let b = SinrBundle::from_json(&std::fs::read_to_string(bundle)?)?;
            let cfg: CcpConfig = match ccp {
                Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
                None => CcpConfig::default(),
            };
            let init = PowerVector::equal_split(&b.plan, b.p_tx);
            let out = ccp_power_allocation(&b.comm, &b.sensing, &b.plan, b.p_tx, &cfg, init, cli.global.seed.unwrap_or(1))?;
            let st = &out.state;
            println!(
                "gamma_s {:.6e} gamma_c {:.6e} iterations {} converged {} retries {}",
                st.gamma_s, st.gamma_c, st.iteration, st.converged, out.retries
            );
            if let Some(dir) = &cli.global.out {
                std::fs::create_dir_all(dir)?;
                out.write_trace_csv(dir.join("ccp_trace.csv"))?;
                std::fs::write(dir.join("power.json"), serde_json::to_string_pretty(&out)?)?;
                println!("wrote {}", dir.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
