//! Sensing reception under per-SSA hypotheses, local and fused test
//! statistics, threshold calibration and detection probability.

mod statistic;
mod weights;

pub use statistic::{fis_statistic, pis_statistic, rcs_precision, PisPrior, PisResult};
pub use weights::{aggregate, compute_weights, normalize_weights, raw_weights};

use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::AssignmentPlan;
use crate::beamforming::{assemble_transmit, draw_symbols, transmit_covariance, CombinerSet, PrecoderSet, TransmitFrame};
use crate::channel::{draw_rcs, RcsRealization, TwoWayChannelSet};
use crate::error::{IsacError, Result};
use crate::linalg::CVector;
use crate::power::PowerVector;
use crate::rng::{complex_normal, derive_seed, stream, Purpose, StreamRng};
use crate::scenario::Scenario;
use crate::sinr::sensing_pairs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum DetectorMode {
    /// RX-APs know the transmitted waveforms.
    #[default]
    Fis,
    /// RX-APs know only the transmit covariance.
    Pis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub mode: DetectorMode,
    pub v_exponent: f64,
    pub p_fa: f64,
    pub n_calib: usize,
    pub n_trials: usize,
    pub pis_max_iters: usize,
    pub pis_tol: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self { mode: DetectorMode::Fis, v_exponent: 0.25, p_fa: 0.03, n_calib: 10_000, n_trials: 2_000, pis_max_iters: 10, pis_tol: 1e-4 }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_fa > 0.0 && self.p_fa <= 1.0) {
            return Err(IsacError::InvalidConfig(format!("p_fa must lie in (0, 1], got {}", self.p_fa)));
        }
        if !(self.v_exponent >= 0.0) || self.n_calib == 0 || self.n_trials == 0 || self.pis_max_iters == 0 {
            return Err(IsacError::InvalidConfig("v_exponent must be non-negative and trial counts positive".into()));
        }
        Ok(())
    }
}

/// Everything frozen for one setup: geometry, plan, beamformers and power.
#[derive(Debug, Clone)]
pub struct SensingSystem {
    pub plan: AssignmentPlan,
    pub two_way: TwoWayChannelSet,
    pub precoders: PrecoderSet,
    pub combiners: CombinerSet,
    pub power: PowerVector,
    pub antennas: usize,
    pub sigma_n2: f64,
    pub tau_s: usize,
    pub pairs: Vec<(usize, usize)>,
    /// Fusion weights, one per pair.
    pub weights: Vec<f64>,
    /// `v_{s,r}^H a(φ_{s,r}, θ_{s,r})` per pair.
    h: Vec<Complex64>,
    /// Prior variance of `c_l[m] = sqrt(β_{s,r,l}) a^T(φ_{s,l}) x_l[m]`,
    /// indexed `[pair][li]`.
    prior_var: Vec<Vec<f64>>,
}

impl SensingSystem {
    pub fn new(
        scenario: &Scenario,
        plan: &AssignmentPlan,
        two_way: TwoWayChannelSet,
        precoders: PrecoderSet,
        combiners: CombinerSet,
        power: PowerVector,
        v_exponent: f64,
    ) -> Result<Self> {
        power.check(plan, scenario.config.p_tx, 1e-9)?;
        let cfg = &scenario.config;
        let pairs = sensing_pairs(plan);
        let weights = compute_weights(scenario, plan, &combiners, v_exponent);
        let covs: Vec<_> = (0..plan.num_tx()).map(|li| transmit_covariance(plan, &precoders, &power, li, cfg.antennas)).collect();
        let mut h = Vec::with_capacity(pairs.len());
        let mut prior_var = Vec::with_capacity(pairs.len());
        for &(s, r) in &pairs {
            let v = combiners.get(s, r).expect("combiner exists for every RX-AP of an SSA");
            h.push(v.dotc(two_way.steering(s, r)));
            prior_var.push(
                plan.tx_aps
                    .iter()
                    .enumerate()
                    .map(|(li, &l)| {
                        let a = two_way.steering(s, l);
                        let g = two_way.gain_sqrt(s, r, l);
                        g * g * (a.transpose() * &covs[li] * a.conjugate())[(0, 0)].re.max(0.0)
                    })
                    .collect(),
            );
        }
        Ok(Self { plan: plan.clone(), two_way, precoders, combiners, power, antennas: cfg.antennas, sigma_n2: cfg.sigma_n2, tau_s: cfg.tau_s, pairs, weights, h, prior_var })
    }

    pub fn num_ssas(&self) -> usize {
        self.plan.num_ssas
    }

    pub fn set_weights(&mut self, weights: Vec<f64>) {
        self.weights = weights;
    }
}

/// Combined received samples `y_{s,r}[m]` for every sensing pair.
#[derive(Debug, Clone)]
pub struct ReceivedSensingBlock {
    pub tau_s: usize,
    pub hypotheses: Vec<bool>,
    /// Indexed `pair * τ_s + m`.
    pub y: Vec<Complex64>,
}

impl ReceivedSensingBlock {
    pub fn pair(&self, p: usize) -> &[Complex64] {
        &self.y[p * self.tau_s..(p + 1) * self.tau_s]
    }
}

/// `a^T(φ_{t,l}) x_l[m]`, indexed `(t * L_tx + li) * τ + m`.
fn tx_projections(two_way: &TwoWayChannelSet, plan: &AssignmentPlan, frame: &TransmitFrame) -> Vec<Complex64> {
    let tau = frame.tau_s;
    let mut z = Vec::with_capacity(plan.num_ssas * plan.num_tx() * tau);
    for t in 0..plan.num_ssas {
        for (li, &l) in plan.tx_aps.iter().enumerate() {
            let a = two_way.steering(t, l);
            for m in 0..tau {
                z.push(a.dot(frame.get(li, m)));
            }
        }
    }
    z
}

/// `y_{s,r}[m] = Σ_{t under H1} Σ_l α_{t,r,l} v_{s,r}^H G_{t,r,l} x_l[m] + v_{s,r}^H n_r[m]`
/// for every pair, with `n_r[m] ~ CN(0, σ² I)` shared by all SSAs served at RX-AP `r`.
/// `only_ssa` restricts the output to that SSA's pairs (others are left zero).
pub fn simulate_reception(
    system: &SensingSystem,
    frame: &TransmitFrame,
    rcs: &RcsRealization,
    hypotheses: &[bool],
    only_ssa: Option<usize>,
    noise_rng: &mut StreamRng,
) -> ReceivedSensingBlock {
    let plan = &system.plan;
    let tau = frame.tau_s;
    let nt = plan.num_tx();
    let z = tx_projections(&system.two_way, plan, frame);
    let noise_std = system.sigma_n2.sqrt();
    let noise: Vec<Vec<CVector>> = plan
        .rx_aps
        .iter()
        .map(|_| (0..tau).map(|_| CVector::from_fn(system.antennas, |_, _| complex_normal(noise_rng) * noise_std)).collect())
        .collect();
    let mut y = vec![Complex64::default(); system.pairs.len() * tau];
    for (p, &(s, r)) in system.pairs.iter().enumerate() {
        if only_ssa.is_some_and(|o| o != s) {
            continue;
        }
        let ri = plan.rx_index(r).expect("sensing pairs use RX-APs");
        let v = system.combiners.get(s, r).expect("combiner exists for every RX-AP of an SSA");
        let out = &mut y[p * tau..(p + 1) * tau];
        for t in (0..plan.num_ssas).filter(|&t| hypotheses[t]) {
            let rx = v.dotc(system.two_way.steering(t, r));
            for (li, &l) in plan.tx_aps.iter().enumerate() {
                let coef = rx * rcs.get(t, ri, li) * system.two_way.gain_sqrt(t, r, l);
                for (m, o) in out.iter_mut().enumerate() {
                    *o += coef * z[(t * nt + li) * tau + m];
                }
            }
        }
        for (m, o) in out.iter_mut().enumerate() {
            *o += v.dotc(&noise[ri][m]);
        }
    }
    ReceivedSensingBlock { tau_s: tau, hypotheses: hypotheses.to_vec(), y }
}

/// FIS regressors `b_l[m] = v^H G_{s,r,l} x_l[m]` of one pair.
pub fn fis_regressors(system: &SensingSystem, p: usize, frame: &TransmitFrame) -> Vec<CVector> {
    let (s, r) = system.pairs[p];
    let plan = &system.plan;
    (0..frame.tau_s)
        .map(|m| {
            CVector::from_fn(plan.num_tx(), |li, _| {
                let l = plan.tx_aps[li];
                system.h[p] * system.two_way.gain_sqrt(s, r, l) * system.two_way.steering(s, l).dot(frame.get(li, m))
            })
        })
        .collect()
}

/// PIS prior of one pair: zero mean, variance from the transmit covariance.
pub fn pis_prior(system: &SensingSystem, p: usize) -> PisPrior {
    PisPrior::zero_mean(system.h[p], system.prior_var[p].clone(), system.tau_s)
}

/// Local statistic per pair; NaN for pairs outside `only_ssa`.
pub fn local_statistics(
    system: &SensingSystem,
    frame: &TransmitFrame,
    block: &ReceivedSensingBlock,
    cfg: &DetectorConfig,
    only_ssa: Option<usize>,
) -> Result<(Vec<f64>, usize)> {
    let mut out = vec![f64::NAN; system.pairs.len()];
    let mut nonconverged = 0;
    for (p, &(s, _)) in system.pairs.iter().enumerate() {
        if only_ssa.is_some_and(|o| o != s) {
            continue;
        }
        out[p] = match cfg.mode {
            DetectorMode::Fis => fis_statistic(block.pair(p), &fis_regressors(system, p, frame), None, system.sigma_n2)?,
            DetectorMode::Pis => {
                let r = pis_statistic(block.pair(p), &pis_prior(system, p), None, system.sigma_n2, cfg.pis_max_iters, cfg.pis_tol)?;
                if !r.converged {
                    nonconverged += 1;
                }
                r.statistic
            }
        };
    }
    Ok((out, nonconverged))
}

/// One Monte Carlo trial: fresh symbols, RCS and noise, each from its own
/// stream under `trial_seed`. Returns the fused statistic per SSA (zero
/// outside `only_ssa`) and the count of non-converged PIS solves.
pub fn run_trial(
    system: &SensingSystem,
    cfg: &DetectorConfig,
    hypotheses: &[bool],
    only_ssa: Option<usize>,
    trial_seed: u64,
) -> Result<(Vec<f64>, usize)> {
    let plan = &system.plan;
    let symbols = draw_symbols(plan.num_ues, plan.num_ssas, system.tau_s, &mut stream(trial_seed, Purpose::Symbols, 0));
    let rcs = draw_rcs(plan.num_ssas, plan.rx_aps.len(), plan.num_tx(), None, &mut stream(trial_seed, Purpose::Rcs, 0));
    let frame = assemble_transmit(plan, &system.precoders, &system.power, &symbols, system.antennas)?;
    let block = simulate_reception(system, &frame, &rcs, hypotheses, only_ssa, &mut stream(trial_seed, Purpose::Noise, 0));
    let (local, nc) = local_statistics(system, &frame, &block, cfg, only_ssa)?;
    Ok((aggregate(&system.pairs, &local, &system.weights, plan.num_ssas), nc))
}

/// Fused statistics of SSA `s` over `n` trials with `s` under `h_s` and all
/// other SSAs under H1.
fn trial_batch(system: &SensingSystem, cfg: &DetectorConfig, s: usize, h_s: bool, n: usize, seed: u64, purpose: Purpose) -> Result<(Vec<f64>, usize)> {
    let mut hyp = vec![true; system.num_ssas()];
    hyp[s] = h_s;
    let results: Vec<Result<(f64, usize)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let trial_seed = derive_seed(seed, purpose, ((s as u64) << 40) | i as u64);
            run_trial(system, cfg, &hyp, Some(s), trial_seed).map(|(t, nc)| (t[s], nc))
        })
        .collect();
    let mut stats = Vec::with_capacity(n);
    let mut nc = 0;
    for r in results {
        let (t, c) = r?;
        stats.push(t);
        nc += c;
    }
    Ok((stats, nc))
}

/// Empirical `(1 − p_fa)` quantile: the order statistic at index
/// `ceil((1 − p_fa) n) − 1`, clamped to the sample range.
pub fn empirical_threshold(samples: &[f64], p_fa: f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let idx = ((1.0 - p_fa) * n as f64).ceil() as isize - 1;
    sorted[idx.clamp(0, n as isize - 1) as usize]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Calibration {
    pub thresholds: Vec<f64>,
    /// Fraction of the calibration samples at or above the threshold.
    pub in_sample_pfa: Vec<f64>,
    pub n_calib: usize,
    #[serde(skip)]
    pub samples: Vec<Vec<f64>>,
}

/// Per-SSA thresholds from `n_calib` trials with that SSA under H0 and all
/// others under H1.
pub fn calibrate_threshold(system: &SensingSystem, cfg: &DetectorConfig, seed: u64) -> Result<Calibration> {
    cfg.validate()?;
    let mut thresholds = Vec::new();
    let mut in_sample = Vec::new();
    let mut samples = Vec::new();
    for s in 0..system.num_ssas() {
        let (t, _) = trial_batch(system, cfg, s, false, cfg.n_calib, seed, Purpose::Calibration)?;
        let lam = empirical_threshold(&t, cfg.p_fa);
        in_sample.push(t.iter().filter(|&&x| x >= lam).count() as f64 / t.len() as f64);
        thresholds.push(lam);
        samples.push(t);
    }
    Ok(Calibration { thresholds, in_sample_pfa: in_sample, n_calib: cfg.n_calib, samples })
}

/// Fresh-sample false-alarm rate per SSA at the given thresholds.
pub fn false_alarm_rate(system: &SensingSystem, cfg: &DetectorConfig, thresholds: &[f64], n: usize, seed: u64) -> Result<Vec<f64>> {
    (0..system.num_ssas())
        .map(|s| {
            let (t, _) = trial_batch(system, cfg, s, false, n, seed, Purpose::Validation)?;
            Ok(t.iter().filter(|&&x| x >= thresholds[s]).count() as f64 / n as f64)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionReport {
    pub thresholds: Vec<f64>,
    pub p_fa: Vec<f64>,
    pub p_d: Vec<f64>,
    pub min_p_d: f64,
    pub pairs: Vec<(usize, usize)>,
    pub weights: Vec<f64>,
    pub n_trials: usize,
    pub pis_nonconverged: usize,
    #[serde(skip)]
    pub samples: Vec<Vec<f64>>,
}

/// `n_trials` trials with every SSA under H1; per-SSA fraction of fused
/// statistics at or above the threshold. The reported false-alarm rates
/// are the in-sample calibration rates.
pub fn detection_probability(system: &SensingSystem, cfg: &DetectorConfig, calibration: &Calibration, seed: u64) -> Result<DetectionReport> {
    cfg.validate()?;
    let ns = system.num_ssas();
    let hyp = vec![true; ns];
    let results: Vec<Result<(Vec<f64>, usize)>> = (0..cfg.n_trials)
        .into_par_iter()
        .map(|i| run_trial(system, cfg, &hyp, None, derive_seed(seed, Purpose::Detection, i as u64)))
        .collect();
    let mut samples = vec![Vec::with_capacity(cfg.n_trials); ns];
    let mut nc = 0;
    for r in results {
        let (t, c) = r?;
        nc += c;
        for s in 0..ns {
            samples[s].push(t[s]);
        }
    }
    let p_d: Vec<f64> = (0..ns)
        .map(|s| samples[s].iter().filter(|&&x| x >= calibration.thresholds[s]).count() as f64 / cfg.n_trials as f64)
        .collect();
    let min_p_d = p_d.iter().copied().fold(1.0, f64::min);
    Ok(DetectionReport {
        thresholds: calibration.thresholds.clone(),
        p_fa: calibration.in_sample_pfa.clone(),
        p_d,
        min_p_d,
        pairs: system.pairs.clone(),
        weights: system.weights.clone(),
        n_trials: cfg.n_trials,
        pis_nonconverged: nc,
        samples,
    })
}

#[derive(Serialize)]
struct TrialRecord {
    ssa: usize,
    trial: usize,
    statistic: f64,
    hypothesis: &'static str,
}

/// Per-trial fused statistics as CSV (`ssa,trial,statistic,hypothesis`).
pub fn write_trial_csv(path: impl AsRef<Path>, calibration: &Calibration, report: &DetectionReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (hyp, sets) in [("H0", &calibration.samples), ("H1", &report.samples)] {
        for (ssa, set) in sets.iter().enumerate() {
            for (trial, &statistic) in set.iter().enumerate() {
                w.serialize(TrialRecord { ssa, trial, statistic, hypothesis: hyp })?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests;
