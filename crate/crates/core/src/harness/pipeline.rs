//! One setup end to end: UE drop, AP modes, SINR terms, power allocation,
//! calibration and detection.

use serde::{Deserialize, Serialize};

use crate::assignment::{assign, AssignmentPlan};
use crate::beamforming::{build_precoders, draw_symbols, estimate_norm_scale, mrc_combiners, Normalization, PrecoderSet};
use crate::channel::{build_two_way_channels, draw_comm_channels, estimate_channels, ChannelStatistics, TwoWayChannelSet};
use crate::config::SystemConfig;
use crate::detection::{calibrate_threshold, detection_probability, false_alarm_rate, Calibration, DetectionReport, DetectorConfig, SensingSystem};
use crate::error::Result;
use crate::linalg::to_db;
use crate::power::{ccp_power_allocation, true_min_sinrs, CcpConfig, CcpOutcome, PowerVector};
use crate::rng::{derive_seed, stream, Purpose};
use crate::scenario::Scenario;
use crate::sinr::{build_sensing_vectors, estimate_comm_sinr_for_setup, sensing_quadratic_forms, CommSinrModel, SensingQuadraticForms, SinrBundle};

/// Monte Carlo and solver settings shared by every setup of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineOptions {
    /// Draws for the communication SINR expectations.
    pub n_mc: usize,
    /// Draws for the LP-MMSE normalisation.
    pub n_norm: usize,
    pub normalization: Normalization,
    pub ccp: CcpConfig,
    pub detector: DetectorConfig,
    /// Fresh H0 trials per SSA for an out-of-sample false-alarm check; 0
    /// skips it.
    pub fresh_fa_trials: usize,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self { n_mc: 500, n_norm: 200, normalization: Normalization::Ensemble, ccp: CcpConfig::default(), detector: DetectorConfig::default(), fresh_fa_trials: 0 }
    }
}

/// Everything up to (not including) power allocation.
#[derive(Debug, Clone)]
pub struct PreparedSetup {
    pub setup_seed: u64,
    pub scenario: Scenario,
    pub plan: AssignmentPlan,
    pub stats: ChannelStatistics,
    pub two_way: TwoWayChannelSet,
    pub precoders: PrecoderSet,
    pub comm: CommSinrModel,
    pub sensing: SensingQuadraticForms,
}

impl PreparedSetup {
    pub fn bundle(&self) -> SinrBundle {
        SinrBundle { plan: self.plan.clone(), p_tx: self.scenario.config.p_tx, comm: self.comm.clone(), sensing: self.sensing.clone() }
    }
}

pub fn prepare_setup(cfg: &SystemConfig, setup_seed: u64, opts: &PipelineOptions) -> Result<PreparedSetup> {
    let scenario = Scenario::build(cfg, setup_seed)?;
    let plan = assign(&scenario)?;
    let stats = ChannelStatistics::new(&scenario)?;
    let norm_scale = estimate_norm_scale(&stats, &plan, cfg.p_ul, cfg.sigma_n2, opts.n_norm, &mut stream(setup_seed, Purpose::Normalization, 0));
    let comm = estimate_comm_sinr_for_setup(&scenario, &stats, &plan, &norm_scale, opts.n_mc, derive_seed(setup_seed, Purpose::CommMonteCarlo, 0));
    // the resource block under optimisation: one channel draw and one symbol block
    let mut rng = stream(setup_seed, Purpose::Channels, 0);
    let ch = draw_comm_channels(&stats, &mut rng);
    let est = estimate_channels(&ch, &stats, &mut rng);
    let precoders = build_precoders(&scenario, &plan, &est, &norm_scale, opts.normalization);
    let combiners = mrc_combiners(&scenario, &plan);
    let two_way = build_two_way_channels(&scenario);
    let symbols = draw_symbols(cfg.num_ues, cfg.num_ssas, cfg.tau_s, &mut stream(setup_seed, Purpose::Symbols, 0));
    let vectors = build_sensing_vectors(&two_way, &plan, &precoders, &combiners, &symbols);
    let sensing = sensing_quadratic_forms(&vectors, cfg.num_ues, cfg.num_ssas, cfg.sigma_n2);
    Ok(PreparedSetup { setup_seed, scenario, plan, stats, two_way, precoders, comm, sensing })
}

pub fn allocate_power(prep: &PreparedSetup, ccp: &CcpConfig) -> Result<CcpOutcome> {
    let p_tx = prep.scenario.config.p_tx;
    let init = PowerVector::equal_split(&prep.plan, p_tx);
    ccp_power_allocation(&prep.comm, &prep.sensing, &prep.plan, p_tx, ccp, init, derive_seed(prep.setup_seed, Purpose::Reinit, 0))
}

pub fn sensing_system(prep: &PreparedSetup, power: PowerVector, v_exponent: f64) -> Result<SensingSystem> {
    let combiners = mrc_combiners(&prep.scenario, &prep.plan);
    SensingSystem::new(&prep.scenario, &prep.plan, prep.two_way.clone(), prep.precoders.clone(), combiners, power, v_exponent)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SetupOutcome {
    pub setup_seed: u64,
    pub min_p_d: f64,
    pub p_d: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub in_sample_pfa: Vec<f64>,
    pub fresh_pfa: Option<Vec<f64>>,
    pub min_comm_sinr_db: f64,
    pub min_sensing_sinr_db: f64,
    pub gamma_s_db: f64,
    pub gamma_c_db: f64,
    pub ccp_converged: bool,
    pub ccp_iterations: usize,
}

/// Calibration and detection for an already allocated setup.
pub fn detect(prep: &PreparedSetup, power: PowerVector, opts: &PipelineOptions) -> Result<(Calibration, DetectionReport, Option<Vec<f64>>)> {
    let system = sensing_system(prep, power, opts.detector.v_exponent)?;
    let cal = calibrate_threshold(&system, &opts.detector, derive_seed(prep.setup_seed, Purpose::Calibration, 0))?;
    let rep = detection_probability(&system, &opts.detector, &cal, derive_seed(prep.setup_seed, Purpose::Detection, 0))?;
    let fresh = if opts.fresh_fa_trials > 0 {
        Some(false_alarm_rate(&system, &opts.detector, &cal.thresholds, opts.fresh_fa_trials, derive_seed(prep.setup_seed, Purpose::Validation, 0))?)
    } else {
        None
    };
    Ok((cal, rep, fresh))
}

pub fn run_setup(cfg: &SystemConfig, setup_seed: u64, opts: &PipelineOptions) -> Result<SetupOutcome> {
    let prep = prepare_setup(cfg, setup_seed, opts)?;
    let ccp = allocate_power(&prep, &opts.ccp)?;
    let (ts, tc) = true_min_sinrs(&prep.comm, &prep.sensing, &ccp.state.rho);
    let (cal, rep, fresh) = detect(&prep, ccp.state.rho.clone(), opts)?;
    Ok(SetupOutcome {
        setup_seed,
        min_p_d: rep.min_p_d,
        p_d: rep.p_d,
        thresholds: cal.thresholds,
        in_sample_pfa: cal.in_sample_pfa,
        fresh_pfa: fresh,
        min_comm_sinr_db: to_db(tc),
        min_sensing_sinr_db: to_db(ts),
        gamma_s_db: to_db(ccp.state.gamma_s),
        gamma_c_db: to_db(ccp.state.gamma_c),
        ccp_converged: ccp.state.converged,
        ccp_iterations: ccp.state.iteration,
    })
}
