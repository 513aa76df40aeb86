//! Self-checks: oracle comparisons and property checks over random small
//! instances. Used by the `validate` command and the acceptance tests.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::RngExt;
use serde::Serialize;

use crate::assignment::AssignmentPlan;
use crate::beamforming::{draw_symbols, CombinerSet, PrecoderSet, SymbolBlock};
use crate::channel::TwoWayChannelSet;
use crate::config::SystemConfig;
use crate::detection::{fis_statistic, normalize_weights, pis_statistic, PisPrior};
use crate::error::Result;
use crate::harness::{allocate_power, prepare_setup, PipelineOptions, PreparedSetup};
use crate::linalg::CVector;
use crate::power::{ccp_power_allocation, linearize_comm_constraint, linearize_sensing_constraint, true_min_sinrs, CcpConfig, LinearizedConstraint, PowerVector};
use crate::rng::{complex_normal, stream, uniform, Purpose, StreamRng};
use crate::sinr::{build_sensing_vectors, sensing_quadratic_forms, sensing_sinr, sensing_sinr_direct};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.into(), passed, detail }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// A random sensing instance with arbitrary sparse serving sets.
#[derive(Debug, Clone)]
pub struct RandomInstance {
    pub plan: AssignmentPlan,
    pub two_way: TwoWayChannelSet,
    pub precoders: PrecoderSet,
    pub combiners: CombinerSet,
    pub symbols: SymbolBlock,
    pub power: PowerVector,
    pub antennas: usize,
    pub sigma_n2: f64,
}

fn pick(rng: &mut StreamRng, lo: usize, hi: usize) -> usize {
    rng.random_range(lo..=hi)
}

/// Nonempty random subset of `0..n`, ascending.
fn subset(rng: &mut StreamRng, n: usize) -> Vec<usize> {
    loop {
        let s: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.6)).collect();
        if !s.is_empty() {
            return s;
        }
    }
}

fn random_vec(rng: &mut StreamRng, m: usize, scale: f64) -> CVector {
    CVector::from_fn(m, |_, _| complex_normal(rng) * scale)
}

/// Draws an instance with `L_tx ≤ max_tx`, `K ≤ max_ues`, `S ≤ max_ssas`,
/// `M ≤ max_antennas`, `τ_s ≤ max_tau` and one or two RX-APs per SSA.
pub fn random_instance(seed: u64, max_tx: usize, max_ues: usize, max_ssas: usize, max_antennas: usize, max_tau: usize) -> RandomInstance {
    let mut rng = stream(seed, Purpose::Validation, 0);
    let nt = pick(&mut rng, 1, max_tx);
    let nk = pick(&mut rng, 1, max_ues);
    let ns = pick(&mut rng, 1, max_ssas);
    let m = pick(&mut rng, 1, max_antennas);
    let tau = pick(&mut rng, 1, max_tau);
    let nr = pick(&mut rng, 1, 2);
    let l_count = nt + nr;
    let tx_aps: Vec<usize> = (0..nt).collect();
    let rx_aps: Vec<usize> = (nt..l_count).collect();

    let serving_sets: Vec<Vec<usize>> = (0..nk).map(|_| subset(&mut rng, nt)).collect();
    let ssa_tx: Vec<Vec<usize>> = (0..ns).map(|_| subset(&mut rng, nt)).collect();
    let ssa_rx: Vec<Vec<usize>> = (0..ns).map(|_| subset(&mut rng, nr).into_iter().map(|i| nt + i).collect()).collect();
    let mut ap_ues = vec![Vec::new(); l_count];
    let mut ap_targets = vec![Vec::new(); l_count];
    for (k, set) in serving_sets.iter().enumerate() {
        for &l in set {
            ap_ues[l].push(k);
        }
    }
    for (s, set) in ssa_tx.iter().enumerate() {
        for &l in set {
            ap_targets[l].push(s);
        }
    }
    let plan = AssignmentPlan {
        num_aps: l_count,
        num_ues: nk,
        num_ssas: ns,
        tx_aps,
        rx_aps,
        idle_aps: vec![],
        serving_sets,
        ssa_tx,
        ssa_rx,
        ap_ues,
        ap_targets,
    };

    let steering: Vec<CVector> = (0..ns * l_count).map(|_| random_vec(&mut rng, m, 1.0)).collect();
    let gain_sqrt: Vec<f64> = (0..ns * l_count * l_count).map(|_| 0.1 + uniform(&mut rng)).collect();
    let two_way = TwoWayChannelSet::from_parts(l_count, steering, gain_sqrt).expect("consistent factor lengths");

    let mut w_comm = vec![None; nk * l_count];
    let mut w_sens = vec![None; ns * l_count];
    for &l in &plan.tx_aps {
        for &k in &plan.ap_ues[l] {
            w_comm[k * l_count + l] = Some(random_vec(&mut rng, m, 0.5));
        }
        for &s in &plan.ap_targets[l] {
            w_sens[s * l_count + l] = Some(random_vec(&mut rng, m, 0.5));
        }
    }
    let precoders = PrecoderSet { num_aps: l_count, w_comm, w_sens, norm_scale: vec![1.0; nk * l_count] };
    let mut v = vec![None; ns * l_count];
    for (s, rx) in plan.ssa_rx.iter().enumerate() {
        for &r in rx {
            v[s * l_count + r] = Some(random_vec(&mut rng, m, 1.0));
        }
    }
    let combiners = CombinerSet { num_aps: l_count, v };
    let symbols = draw_symbols(nk, ns, tau, &mut rng);
    let mut power = PowerVector::for_plan(&plan);
    for (i, on) in PowerVector::support(&plan).into_iter().enumerate() {
        if on {
            power.rho[i] = 0.05 + uniform(&mut rng);
        }
    }
    let sigma_n2 = 0.01 + uniform(&mut rng);
    RandomInstance { plan, two_way, precoders, combiners, symbols, power, antennas: m, sigma_n2 }
}

/// Largest relative difference between the quadratic-form sensing SINR and
/// the literal matrix evaluation over `n` random instances.
pub fn quadratic_form_oracle_error(n: usize, seed: u64) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for i in 0..n as u64 {
        let inst = random_instance(crate::rng::derive_seed(seed, Purpose::Validation, i), 3, 3, 3, 4, 5);
        let vecs = build_sensing_vectors(&inst.two_way, &inst.plan, &inst.precoders, &inst.combiners, &inst.symbols);
        let forms = sensing_quadratic_forms(&vecs, inst.plan.num_ues, inst.plan.num_ssas, inst.sigma_n2);
        let quad = sensing_sinr(&forms, &inst.power);
        for (p, &(s, r)) in forms.pairs.iter().enumerate() {
            let direct = sensing_sinr_direct(
                &inst.two_way,
                &inst.plan,
                &inst.precoders,
                &inst.combiners,
                &inst.symbols,
                &inst.power,
                s,
                r,
                inst.antennas,
                inst.sigma_n2,
            )?;
            worst = worst.max((quad[p] - direct).abs() / direct.abs().max(f64::MIN_POSITIVE));
        }
    }
    Ok(worst)
}

/// Result of the linearization checks for one setup.
#[derive(Debug, Clone, Serialize)]
pub struct LinearizationCheck {
    pub constraints: usize,
    /// Largest relative gap between surrogate and true ratio at the point.
    pub max_tangency_error: f64,
    /// Largest relative gradient mismatch at the point.
    pub max_gradient_error: f64,
    /// Number of sampled points where the surrogate exceeded the true ratio.
    pub overestimates: usize,
    pub samples: usize,
}

fn check_constraint(c: &LinearizedConstraint, samples: usize, rng: &mut StreamRng, acc: &mut LinearizationCheck) {
    let f0 = c.signal_at_point();
    let at = c.true_ratio(&c.rho_c, c.gamma_c);
    let scale = at.abs().max(f64::MIN_POSITIVE);
    acc.max_tangency_error = acc.max_tangency_error.max((c.surrogate(&c.rho_c, c.gamma_c) - at).abs() / scale);
    // gradient of ρ ↦ ρᵀAρ/γ^c at ρ^c is 2Aρ^c/γ^c; compare with a central difference
    let g = c.gradient();
    let h = 1e-6 * c.rho_c.norm().max(1e-3);
    let n = c.rho_c.len();
    for j in 0..n.min(6) {
        let mut e = DVector::zeros(n);
        e[j] = h;
        let fd = (c.true_ratio(&(&c.rho_c + &e), c.gamma_c) - c.true_ratio(&(&c.rho_c - &e), c.gamma_c)) / (2.0 * h);
        acc.max_gradient_error = acc.max_gradient_error.max((fd - g[j]).abs() / g.norm().max(f64::MIN_POSITIVE));
    }
    for _ in 0..samples {
        let rho = DVector::from_fn(n, |i, _| if c.rho_c[i] != 0.0 || rng.random_bool(0.5) { 2.0 * uniform(rng) } else { 0.0 });
        let gamma = c.gamma_c * (0.05 + 4.0 * uniform(rng));
        let lhs = c.surrogate(&rho, gamma);
        let rhs = c.true_ratio(&rho, gamma);
        if lhs > rhs + 1e-9 * (rhs.abs() + f0 / (c.gamma_c * c.gamma_c) * gamma) {
            acc.overestimates += 1;
        }
        acc.samples += 1;
    }
    acc.constraints += 1;
}

/// Tangency and global under-estimation of every linearized constraint at
/// the equal-split start of `prep`, with `samples` random points each.
pub fn check_linearizations(prep: &PreparedSetup, samples: usize, seed: u64) -> Result<LinearizationCheck> {
    let p_tx = prep.scenario.config.p_tx;
    let init = PowerVector::equal_split(&prep.plan, p_tx);
    let (gs, gc) = true_min_sinrs(&prep.comm, &prep.sensing, &init);
    let mut rng = stream(seed, Purpose::Validation, 1);
    let mut acc = LinearizationCheck { constraints: 0, max_tangency_error: 0.0, max_gradient_error: 0.0, overestimates: 0, samples: 0 };
    for k in 0..prep.comm.num_ues {
        let c = linearize_comm_constraint(&prep.comm, k, &init, gc.max(1e-6))?;
        check_constraint(&c, samples, &mut rng, &mut acc);
    }
    for p in 0..prep.sensing.pairs.len() {
        let c = linearize_sensing_constraint(&prep.sensing, p, &init, gs.max(1e-6))?;
        check_constraint(&c, samples, &mut rng, &mut acc);
    }
    Ok(acc)
}

/// Properties of a full CCP run.
#[derive(Debug, Clone, Serialize)]
pub struct CcpRunCheck {
    pub iterations: usize,
    pub converged: bool,
    /// Largest relative increase of the penalized objective between
    /// consecutive iterates.
    pub max_objective_increase: f64,
    pub final_slack: f64,
    /// `max(0, 1 − true/returned)` over sensing and communication.
    pub certificate_gap: f64,
    pub max_ap_power_excess: f64,
}

pub fn check_ccp_run(prep: &PreparedSetup, cfg: &CcpConfig) -> Result<CcpRunCheck> {
    let out = allocate_power(prep, cfg)?;
    let mut inc: f64 = 0.0;
    for w in out.trace.windows(2) {
        inc = inc.max((w[1].objective - w[0].objective) / w[0].objective.abs().max(1e-12));
    }
    let st = &out.state;
    let (ts, tc) = true_min_sinrs(&prep.comm, &prep.sensing, &st.rho);
    let gap = |truth: f64, claimed: f64| if claimed > cfg.gamma_floor * 10.0 { (1.0 - truth / claimed).max(0.0) } else { 0.0 };
    let p_tx = prep.scenario.config.p_tx;
    let excess = (0..st.rho.num_tx).map(|li| st.rho.ap_power(li) - p_tx).fold(f64::NEG_INFINITY, f64::max);
    Ok(CcpRunCheck {
        iterations: st.iteration,
        converged: st.converged,
        max_objective_increase: inc,
        final_slack: st.slack_sum(),
        certificate_gap: gap(ts, st.gamma_s).max(gap(tc, st.gamma_c)),
        max_ap_power_excess: excess,
    })
}

/// Weight properties on random raw weights: per-SSA sums, v = 0, single
/// RX-AP, and invariance to common scaling. Returns failure messages.
pub fn check_weight_properties(cases: usize, seed: u64) -> Vec<String> {
    let mut rng = stream(seed, Purpose::Validation, 2);
    let mut fails = Vec::new();
    for case in 0..cases {
        let ns = pick(&mut rng, 1, 4);
        let pairs: Vec<(usize, usize)> = (0..ns).flat_map(|s| (0..pick(&mut rng, 1, 5)).map(move |r| (s, r))).collect();
        let raw: Vec<f64> = pairs.iter().map(|_| 10f64.powf(6.0 * uniform(&mut rng) - 3.0)).collect();
        let v = 2.0 * uniform(&mut rng);
        let w = normalize_weights(&pairs, Some(&raw), v);
        for s in 0..ns {
            let idx: Vec<usize> = (0..pairs.len()).filter(|&i| pairs[i].0 == s).collect();
            let sum = idx.iter().fold(0.0, |a, &i| a + w[i]);
            if sum != 1.0 {
                fails.push(format!("case {case}: SSA {s} weights sum to {sum:e}"));
            }
            if idx.len() == 1 && w[idx[0]] != 1.0 {
                fails.push(format!("case {case}: single RX-AP weight {}", w[idx[0]]));
            }
        }
        let u = normalize_weights(&pairs, Some(&raw), 0.0);
        let none = normalize_weights(&pairs, None, v);
        if u != none {
            fails.push(format!("case {case}: v = 0 weights are not uniform"));
        }
        for c in [0.25, 2.0, 1024.0] {
            let scaled: Vec<f64> = raw.iter().map(|x| x * c).collect();
            if normalize_weights(&pairs, Some(&scaled), v) != w {
                fails.push(format!("case {case}: weights changed under scaling by {c}"));
            }
        }
    }
    fails
}

/// Detector invariants on random inputs. Returns failure messages.
pub fn check_detector_invariants(cases: usize, seed: u64) -> Result<Vec<String>> {
    let mut rng = stream(seed, Purpose::Validation, 3);
    let mut fails = Vec::new();
    for case in 0..cases {
        let n = pick(&mut rng, 1, 4);
        let tau = pick(&mut rng, 1, 8);
        let s2 = 0.01 + uniform(&mut rng);
        let b: Vec<CVector> = (0..tau).map(|_| random_vec(&mut rng, n, 1.0)).collect();
        let y: Vec<Complex64> = (0..tau).map(|_| complex_normal(&mut rng) * 2.0).collect();
        let t = fis_statistic(&y, &b, None, s2)?;
        if !(t >= 0.0) {
            fails.push(format!("case {case}: FIS statistic {t} is negative"));
        }
        let zero = fis_statistic(&vec![Complex64::default(); tau], &b, None, s2)?;
        if zero != 0.0 {
            fails.push(format!("case {case}: FIS statistic on zero input is {zero}"));
        }
        let rot = Complex64::from_polar(1.0, 6.0 * uniform(&mut rng));
        let yr: Vec<Complex64> = y.iter().map(|v| v * rot).collect();
        let tr = fis_statistic(&yr, &b, None, s2)?;
        if (t - tr).abs() > 1e-10 * t.max(f64::MIN_POSITIVE) {
            fails.push(format!("case {case}: FIS phase invariance {t} vs {tr}"));
        }
        let h = complex_normal(&mut rng);
        let point = PisPrior { h, mean: b.iter().map(|bm| bm / h).collect(), var: vec![0.0; n] };
        let pis = pis_statistic(&y, &point, None, s2, 10, 1e-4)?.statistic;
        if (pis - t).abs() > 1e-6 * t.max(f64::MIN_POSITIVE) {
            fails.push(format!("case {case}: collapsed PIS {pis} vs FIS {t}"));
        }
        let var: Vec<f64> = (0..n).map(|_| 0.1 + uniform(&mut rng)).collect();
        let mean: Vec<CVector> = (0..tau).map(|_| random_vec(&mut rng, n, 0.5)).collect();
        let prior = PisPrior { h, mean, var };
        let r = pis_statistic(&y, &prior, None, s2, 25, 0.0)?;
        for w in r.objective_trace.windows(2) {
            if w[1] < w[0] - 1e-9 * w[0].abs().max(1.0) {
                fails.push(format!("case {case}: PIS objective decreased {} -> {}", w[0], w[1]));
                break;
            }
        }
        if r.statistic < 0.0 {
            fails.push(format!("case {case}: PIS statistic negative"));
        }
    }
    Ok(fails)
}

/// Desk-sized configuration for the quick self-check.
pub fn quick_config() -> SystemConfig {
    SystemConfig { num_aps: 16, num_ues: 4, num_ssas: 2, tau_s: 8, ..Default::default() }
}

/// The full self-check suite; takes a few seconds.
pub fn run_validation(seed: u64) -> Result<ValidationReport> {
    let mut report = ValidationReport::default();
    let err = quadratic_form_oracle_error(100, seed)?;
    report.checks.push(Check::new("sensing quadratic form matches direct evaluation", err <= 1e-10, format!("max relative error {err:.3e} over 100 instances")));

    let opts = PipelineOptions { n_mc: 100, n_norm: 50, ..Default::default() };
    let prep = prepare_setup(&quick_config(), crate::rng::derive_seed(seed, Purpose::Setup, 0), &opts)?;
    let lin = check_linearizations(&prep, 100, seed)?;
    report.checks.push(Check::new(
        "linearizations are tangent at the expansion point",
        lin.max_tangency_error <= 1e-12 && lin.max_gradient_error <= 1e-5,
        format!("value error {:.3e}, gradient error {:.3e}, {} constraints", lin.max_tangency_error, lin.max_gradient_error, lin.constraints),
    ));
    report.checks.push(Check::new(
        "linearizations under-estimate the SINR ratio",
        lin.overestimates == 0,
        format!("{} of {} sampled points overestimated", lin.overestimates, lin.samples),
    ));
    let run = check_ccp_run(&prep, &opts.ccp)?;
    report.checks.push(Check::new(
        "CCP objective is non-increasing",
        run.max_objective_increase <= 1e-6,
        format!("largest relative increase {:.3e} over {} iterations", run.max_objective_increase, run.iterations),
    ));
    report.checks.push(Check::new(
        "CCP result is certified by the true SINRs",
        run.final_slack > 1e-6 || run.certificate_gap <= 1e-3,
        format!("slack {:.3e}, certificate gap {:.3e}, converged {}", run.final_slack, run.certificate_gap, run.converged),
    ));
    report.checks.push(Check::new("per-AP power budget holds", run.max_ap_power_excess <= 1e-9, format!("largest excess {:.3e} W", run.max_ap_power_excess)));
    let bad = ccp_power_allocation(&prep.comm, &prep.sensing, &prep.plan, prep.scenario.config.p_tx, &opts.ccp, {
        let mut p = PowerVector::equal_split(&prep.plan, prep.scenario.config.p_tx);
        p.rho *= 2.0;
        p
    }, seed);
    report.checks.push(Check::new("infeasible start is rejected", bad.is_err(), "start at twice the power budget".into()));

    let wf = check_weight_properties(200, seed);
    report.checks.push(Check::new("weight properties", wf.is_empty(), wf.first().cloned().unwrap_or_else(|| "200 random cases".into())));
    let df = check_detector_invariants(200, seed)?;
    report.checks.push(Check::new("detector invariants", df.is_empty(), df.first().cloned().unwrap_or_else(|| "200 random cases".into())));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_instances_respect_bounds() {
        for seed in 0..30 {
            let inst = random_instance(seed, 3, 3, 3, 4, 5);
            assert!(inst.plan.num_tx() <= 3 && inst.plan.num_ues <= 3 && inst.plan.num_ssas <= 3);
            assert!(inst.antennas <= 4 && inst.symbols.tau_s <= 5);
            inst.power.check(&inst.plan, 10.0, 0.0).unwrap();
        }
    }

    #[test]
    fn quick_suite_passes() {
        let report = run_validation(1).unwrap();
        for c in &report.checks {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
