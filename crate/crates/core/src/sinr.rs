//! Communication SINR from Monte Carlo expectation terms, and the sensing
//! SINR in both literal and block-diagonal quadratic-form representations.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::AssignmentPlan;
use crate::beamforming::{
    assemble_transmit, lp_mmse_precoders, mrt_sensing_precoders, CombinerSet, Normalization, PrecoderSet, SymbolBlock,
};
use crate::channel::{draw_comm_channels, estimate_channels, ChannelStatistics, TwoWayChannelSet};
use crate::error::Result;
use crate::linalg::{project_psd, symmetric_part, CVector};
use crate::power::PowerVector;
use crate::rng::{stream, Purpose};

/// Draws per parallel work unit; fixed so that the reduction order does not
/// depend on the thread count.
const MC_CHUNK: usize = 25;

/// Expectation terms of the communication SINR, indexed by TX-AP position.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CommSinrModel {
    pub num_ues: usize,
    pub num_ssas: usize,
    pub num_tx: usize,
    pub sigma_n2: f64,
    pub n_mc: usize,
    /// `[a_k]_l = E{h_kl^H w_kl}`.
    pub a: Vec<DVector<f64>>,
    /// `B_kj`, indexed `k * K + j`.
    pub b: Vec<DMatrix<f64>>,
    /// `C_ks`, indexed `k * S + s`.
    pub c: Vec<DMatrix<f64>>,
}

impl CommSinrModel {
    pub fn b(&self, k: usize, j: usize) -> &DMatrix<f64> {
        &self.b[k * self.num_ues + j]
    }

    pub fn c(&self, k: usize, s: usize) -> &DMatrix<f64> {
        &self.c[k * self.num_ssas + s]
    }

    /// `|a_k^T ρ_k|²`.
    pub fn signal(&self, k: usize, power: &PowerVector) -> f64 {
        self.a[k].dot(&power.ue_slice(k)).powi(2)
    }

    /// `Σ_j ρ_j^T B_kj ρ_j + Σ_s q_s^T C_ks q_s + σ_n²`.
    pub fn interference_plus_noise(&self, k: usize, power: &PowerVector) -> f64 {
        let mut total = self.sigma_n2;
        for j in 0..self.num_ues {
            let r = power.ue_slice(j);
            total += r.dot(&(self.b(k, j) * &r));
        }
        for s in 0..self.num_ssas {
            let q = power.ssa_slice(s);
            total += q.dot(&(self.c(k, s) * &q));
        }
        total
    }
}

/// Accumulator of raw complex moments over a batch of draws.
struct CommMoments {
    a: Vec<Complex64>,
    b: Vec<Complex64>,
    c: Vec<Complex64>,
}

impl CommMoments {
    fn zeros(k: usize, s: usize, n: usize) -> Self {
        Self { a: vec![Complex64::default(); k * n], b: vec![Complex64::default(); k * k * n * n], c: vec![Complex64::default(); k * s * n * n] }
    }

    fn add(&mut self, other: &Self) {
        for (x, y) in self.a.iter_mut().zip(&other.a) {
            *x += y;
        }
        for (x, y) in self.b.iter_mut().zip(&other.b) {
            *x += y;
        }
        for (x, y) in self.c.iter_mut().zip(&other.c) {
            *x += y;
        }
    }
}

/// Sample means of the expectation terms over `n_mc` independent channel
/// and estimate draws; each draw recomputes the LP-MMSE precoders.
pub fn estimate_comm_sinr_terms(
    stats: &ChannelStatistics,
    plan: &AssignmentPlan,
    sensing_precoders: &[Option<CVector>],
    norm_scale: &[f64],
    p_ul: f64,
    sigma_n2: f64,
    n_mc: usize,
    seed: u64,
) -> CommSinrModel {
    let (nk, ns, nt, nl) = (plan.num_ues, plan.num_ssas, plan.num_tx(), plan.num_aps);
    let n_mc = n_mc.max(1);
    let chunks: Vec<usize> = (0..n_mc.div_ceil(MC_CHUNK)).collect();
    let partial: Vec<CommMoments> = chunks
        .par_iter()
        .map(|&c| {
            let mut acc = CommMoments::zeros(nk, ns, nt);
            // h_kl^H w_jl and h_kl^H ω_sl, per TX-AP position
            let mut hw = vec![Complex64::default(); nk * nk * nt];
            let mut hom = vec![Complex64::default(); nk * ns * nt];
            for draw in c * MC_CHUNK..((c + 1) * MC_CHUNK).min(n_mc) {
                let mut rng = stream(seed, Purpose::CommMonteCarlo, draw as u64);
                let ch = draw_comm_channels(stats, &mut rng);
                let est = estimate_channels(&ch, stats, &mut rng);
                let (w, _) = lp_mmse_precoders(&est, plan, p_ul, sigma_n2, norm_scale, Normalization::Ensemble);
                for k in 0..nk {
                    for (li, &l) in plan.tx_aps.iter().enumerate() {
                        let h = ch.get(k, l);
                        for j in 0..nk {
                            hw[(k * nk + j) * nt + li] = w[j * nl + l].as_ref().map_or(Complex64::default(), |w| h.dotc(w));
                        }
                        for s in 0..ns {
                            hom[(k * ns + s) * nt + li] =
                                sensing_precoders[s * nl + l].as_ref().map_or(Complex64::default(), |w| h.dotc(w));
                        }
                    }
                }
                for k in 0..nk {
                    for li in 0..nt {
                        acc.a[k * nt + li] += hw[(k * nk + k) * nt + li];
                    }
                    for j in 0..nk {
                        let row = &hw[(k * nk + j) * nt..(k * nk + j + 1) * nt];
                        let out = &mut acc.b[(k * nk + j) * nt * nt..(k * nk + j + 1) * nt * nt];
                        for li in 0..nt {
                            for lj in 0..nt {
                                out[li * nt + lj] += row[li].conj() * row[lj];
                            }
                        }
                    }
                    for s in 0..ns {
                        let row = &hom[(k * ns + s) * nt..(k * ns + s + 1) * nt];
                        let out = &mut acc.c[(k * ns + s) * nt * nt..(k * ns + s + 1) * nt * nt];
                        for li in 0..nt {
                            for lj in 0..nt {
                                out[li * nt + lj] += row[li].conj() * row[lj];
                            }
                        }
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = CommMoments::zeros(nk, ns, nt);
    for p in &partial {
        total.add(p);
    }
    let inv = 1.0 / n_mc as f64;
    let a: Vec<DVector<f64>> = (0..nk).map(|k| DVector::from_fn(nt, |li, _| (total.a[k * nt + li].re * inv).max(0.0))).collect();
    let mut b = Vec::with_capacity(nk * nk);
    for k in 0..nk {
        for j in 0..nk {
            let raw = DMatrix::from_fn(nt, nt, |i, l| total.b[(k * nk + j) * nt * nt + i * nt + l].re * inv);
            let mut m = symmetric_part(&raw);
            if k == j {
                m -= &a[k] * a[k].transpose();
            }
            b.push(project_psd(&m));
        }
    }
    let c = (0..nk * ns)
        .map(|ks| {
            let raw = DMatrix::from_fn(nt, nt, |i, l| total.c[ks * nt * nt + i * nt + l].re * inv);
            project_psd(&symmetric_part(&raw))
        })
        .collect();
    CommSinrModel { num_ues: nk, num_ssas: ns, num_tx: nt, sigma_n2, n_mc, a, b, c }
}

/// Convenience wrapper using the setup's MRT sensing precoders.
pub fn estimate_comm_sinr_for_setup(
    scenario: &crate::Scenario,
    stats: &ChannelStatistics,
    plan: &AssignmentPlan,
    norm_scale: &[f64],
    n_mc: usize,
    seed: u64,
) -> CommSinrModel {
    let cfg = &scenario.config;
    let sens = mrt_sensing_precoders(scenario, plan);
    estimate_comm_sinr_terms(stats, plan, &sens, norm_scale, cfg.p_ul, cfg.sigma_n2, n_mc, seed)
}

/// Linear SINR per UE.
pub fn comm_sinr(model: &CommSinrModel, power: &PowerVector) -> Vec<f64> {
    (0..model.num_ues).map(|k| model.signal(k, power) / model.interference_plus_noise(k, power)).collect()
}

/// The d, e, f, g families for every sensing pair `(s, r ∈ R_s)`. For pair
/// `p`, TX-AP position `li` and channel use `m`, `de` holds `[d; e]`
/// (length K+S) and `fg` holds `[f; g]` for each interfering SSA `t ≠ s` in
/// ascending order.
#[derive(Debug, Clone)]
pub struct SensingVectors {
    pub pairs: Vec<(usize, usize)>,
    pub num_tx: usize,
    pub tau_s: usize,
    pub num_interferers: usize,
    de: Vec<CVector>,
    fg: Vec<CVector>,
}

impl SensingVectors {
    pub fn de(&self, p: usize, li: usize, m: usize) -> &CVector {
        &self.de[(p * self.num_tx + li) * self.tau_s + m]
    }

    pub fn fg(&self, p: usize, li: usize, m: usize, ti: usize) -> &CVector {
        &self.fg[((p * self.num_tx + li) * self.tau_s + m) * self.num_interferers + ti]
    }
}

/// Every `(s, r)` with `r ∈ R_s`, in SSA-major order.
pub fn sensing_pairs(plan: &AssignmentPlan) -> Vec<(usize, usize)> {
    plan.ssa_rx.iter().enumerate().flat_map(|(s, rx)| rx.iter().map(move |&r| (s, r))).collect()
}

/// Entries `v_{s,r}^H G_{t,r,l} w s[m]` over all UEs and SSAs for one
/// (target `t`, combiner, TX-AP) triple.
fn stacked_projection(
    two_way: &TwoWayChannelSet,
    precoders: &PrecoderSet,
    symbols: &SymbolBlock,
    t: usize,
    r: usize,
    l: usize,
    v: &CVector,
    m: usize,
) -> CVector {
    let (nk, ns) = (symbols.comm.len() / symbols.tau_s, symbols.sens.len() / symbols.tau_s);
    // v^H G x = sqrt(β) (v^H a_r)(a_l^T x)
    let rx = v.dotc(two_way.steering(t, r)) * two_way.gain_sqrt(t, r, l);
    let a_l = two_way.steering(t, l);
    CVector::from_fn(nk + ns, |i, _| {
        if i < nk {
            precoders.comm(i, l).map_or(Complex64::default(), |w| rx * a_l.dot(w) * symbols.comm(i, m))
        } else {
            let u = i - nk;
            precoders.sens(u, l).map_or(Complex64::default(), |w| rx * a_l.dot(w) * symbols.sens(u, m))
        }
    })
}

pub fn build_sensing_vectors(
    two_way: &TwoWayChannelSet,
    plan: &AssignmentPlan,
    precoders: &PrecoderSet,
    combiners: &CombinerSet,
    symbols: &SymbolBlock,
) -> SensingVectors {
    let pairs = sensing_pairs(plan);
    let (nt, tau, ns) = (plan.num_tx(), symbols.tau_s, plan.num_ssas);
    let ni = ns.saturating_sub(1);
    let mut de = Vec::with_capacity(pairs.len() * nt * tau);
    let mut fg = Vec::with_capacity(pairs.len() * nt * tau * ni);
    for &(s, r) in &pairs {
        let v = combiners.get(s, r).expect("combiner exists for every RX-AP of an SSA");
        for &l in &plan.tx_aps {
            for m in 0..tau {
                de.push(stacked_projection(two_way, precoders, symbols, s, r, l, v, m));
                for t in (0..ns).filter(|&t| t != s) {
                    fg.push(stacked_projection(two_way, precoders, symbols, t, r, l, v, m));
                }
            }
        }
    }
    SensingVectors { pairs, num_tx: nt, tau_s: tau, num_interferers: ni, de, fg }
}

/// Block-diagonal quadratic forms of the sensing SINR, one per sensing pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensingQuadraticForms {
    pub num_ues: usize,
    pub num_ssas: usize,
    pub num_tx: usize,
    pub tau_s: usize,
    pub sigma_n2: f64,
    pub pairs: Vec<(usize, usize)>,
    /// `[A_{s,r}]_l`, indexed `[pair][li]`.
    pub a_blocks: Vec<Vec<DMatrix<f64>>>,
    /// `[B_{s,r}]_l`, indexed `[pair][li]`.
    pub b_blocks: Vec<Vec<DMatrix<f64>>>,
}

fn real_outer_sum<'a>(vs: impl Iterator<Item = &'a CVector>, n: usize) -> DMatrix<f64> {
    let mut acc = DMatrix::zeros(n, n);
    for v in vs {
        for i in 0..n {
            for j in 0..n {
                acc[(i, j)] += (v[i] * v[j].conj()).re;
            }
        }
    }
    symmetric_part(&acc)
}

fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(n, n);
    let mut off = 0;
    for b in blocks {
        out.view_mut((off, off), (b.nrows(), b.ncols())).copy_from(b);
        off += b.nrows();
    }
    out
}

fn block_quad(blocks: &[DMatrix<f64>], rho: &DVector<f64>) -> f64 {
    let mut off = 0;
    let mut total = 0.0;
    for b in blocks {
        let x = rho.rows(off, b.nrows());
        total += x.dot(&(b * x));
        off += b.nrows();
    }
    total
}

pub fn sensing_quadratic_forms(vectors: &SensingVectors, num_ues: usize, num_ssas: usize, sigma_n2: f64) -> SensingQuadraticForms {
    let n = num_ues + num_ssas;
    let (nt, tau, ni) = (vectors.num_tx, vectors.tau_s, vectors.num_interferers);
    let mut a_blocks = Vec::with_capacity(vectors.pairs.len());
    let mut b_blocks = Vec::with_capacity(vectors.pairs.len());
    for p in 0..vectors.pairs.len() {
        a_blocks.push((0..nt).map(|li| real_outer_sum((0..tau).map(|m| vectors.de(p, li, m)), n)).collect());
        b_blocks.push(
            (0..nt)
                .map(|li| real_outer_sum((0..tau).flat_map(|m| (0..ni).map(move |ti| (m, ti))).map(|(m, ti)| vectors.fg(p, li, m, ti)), n))
                .collect(),
        );
    }
    SensingQuadraticForms { num_ues, num_ssas, num_tx: nt, tau_s: tau, sigma_n2, pairs: vectors.pairs.clone(), a_blocks, b_blocks }
}

impl SensingQuadraticForms {
    pub fn a_dense(&self, p: usize) -> DMatrix<f64> {
        block_diag(&self.a_blocks[p])
    }

    pub fn b_dense(&self, p: usize) -> DMatrix<f64> {
        block_diag(&self.b_blocks[p])
    }

    /// `ρ^T A_{s,r} ρ`.
    pub fn signal(&self, p: usize, power: &PowerVector) -> f64 {
        block_quad(&self.a_blocks[p], &power.rho)
    }

    /// `ρ^T B_{s,r} ρ + τ_s σ_n²`.
    pub fn interference_plus_noise(&self, p: usize, power: &PowerVector) -> f64 {
        block_quad(&self.b_blocks[p], &power.rho) + self.tau_s as f64 * self.sigma_n2
    }
}

/// Linear sensing SINR per pair, in the order of `forms.pairs`.
pub fn sensing_sinr(forms: &SensingQuadraticForms, power: &PowerVector) -> Vec<f64> {
    (0..forms.pairs.len()).map(|p| forms.signal(p, power) / forms.interference_plus_noise(p, power)).collect()
}

/// Literal evaluation with full M×M two-way matrices and assembled transmit
/// vectors: per TX-AP and channel use, `|v^H G_{s,r,l} x_l[m]|²` summed for
/// the target, and `|v^H G_{t,r,l} x_l[m]|²` summed over `t ≠ s` for the
/// interference.
pub fn sensing_sinr_direct(
    two_way: &TwoWayChannelSet,
    plan: &AssignmentPlan,
    precoders: &PrecoderSet,
    combiners: &CombinerSet,
    symbols: &SymbolBlock,
    power: &PowerVector,
    s: usize,
    r: usize,
    antennas: usize,
    sigma_n2: f64,
) -> Result<f64> {
    let frame = assemble_transmit(plan, precoders, power, symbols, antennas)?;
    let v = combiners.get(s, r).expect("combiner exists for every RX-AP of an SSA");
    let mut signal = 0.0;
    let mut interference = 0.0;
    for (li, &l) in plan.tx_aps.iter().enumerate() {
        let g_s = two_way.matrix(s, r, l);
        let g_t: Vec<_> = (0..plan.num_ssas).filter(|&t| t != s).map(|t| two_way.matrix(t, r, l)).collect();
        for m in 0..symbols.tau_s {
            let x = frame.get(li, m);
            signal += v.dotc(&(&g_s * x)).norm_sqr();
            for g in &g_t {
                interference += v.dotc(&(g * x)).norm_sqr();
            }
        }
    }
    Ok(signal / (interference + symbols.tau_s as f64 * sigma_n2))
}

/// Self-contained input of the power allocation step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SinrBundle {
    pub plan: AssignmentPlan,
    pub p_tx: f64,
    pub comm: CommSinrModel,
    pub sensing: SensingQuadraticForms,
}

impl SinrBundle {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignment::assign;
    use crate::beamforming::{build_precoders, draw_symbols, estimate_norm_scale, mrc_combiners};
    use crate::channel::build_two_way_channels;
    use crate::config::SystemConfig;
    use crate::linalg::min_eigenvalue;
    use crate::Scenario;

    struct Setup {
        sc: Scenario,
        plan: AssignmentPlan,
        stats: ChannelStatistics,
        scale: Vec<f64>,
    }

    fn setup(num_ues: usize, num_ssas: usize) -> Setup {
        let cfg = SystemConfig { num_aps: 9, num_ues, num_ssas, ..Default::default() };
        let sc = Scenario::build(&cfg, 11).unwrap();
        let plan = assign(&sc).unwrap();
        let stats = ChannelStatistics::new(&sc).unwrap();
        let mut rng = stream(5, Purpose::Normalization, 0);
        let scale = estimate_norm_scale(&stats, &plan, cfg.p_ul, cfg.sigma_n2, 50, &mut rng);
        Setup { sc, plan, stats, scale }
    }

    #[test]
    fn comm_model_shape_and_psd() {
        let st = setup(3, 2);
        let model = estimate_comm_sinr_for_setup(&st.sc, &st.stats, &st.plan, &st.scale, 100, 9);
        for k in 0..3 {
            assert!(model.a[k].iter().all(|&x| x >= 0.0));
            assert!(model.a[k].iter().any(|&x| x > 0.0));
            for (li, &l) in st.plan.tx_aps.iter().enumerate() {
                if !st.plan.serves_ue(l, k) {
                    assert_eq!(model.a[k][li], 0.0);
                }
            }
            for j in 0..3 {
                let b = model.b(k, j);
                assert!(min_eigenvalue(b) >= -1e-10 * b.norm().max(1e-300));
                assert_eq!(b, &b.transpose());
            }
            for s in 0..2 {
                let c = model.c(k, s);
                assert!(min_eigenvalue(c) >= -1e-10 * c.norm().max(1e-300));
                assert!(c.diagonal().iter().all(|&x| x >= 0.0));
            }
        }
        let zero = PowerVector::for_plan(&st.plan);
        assert!(comm_sinr(&model, &zero).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn comm_model_independent_of_thread_count() {
        let st = setup(2, 1);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let many = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let m1 = one.install(|| estimate_comm_sinr_for_setup(&st.sc, &st.stats, &st.plan, &st.scale, 120, 3));
        let m4 = many.install(|| estimate_comm_sinr_for_setup(&st.sc, &st.stats, &st.plan, &st.scale, 120, 3));
        assert_eq!(m1.a, m4.a);
        assert_eq!(m1.b, m4.b);
        assert_eq!(m1.c, m4.c);
    }

    #[test]
    fn comm_standard_error_shrinks_with_n_mc() {
        let st = setup(2, 1);
        let spread = |n: usize| {
            let vals: Vec<f64> = (0..12)
                .map(|rep| estimate_comm_sinr_for_setup(&st.sc, &st.stats, &st.plan, &st.scale, n, 100 + rep).a[0].sum())
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64).sqrt()
        };
        let ratio = spread(400) / spread(100);
        // ideal 0.5; 12 repeats leave a wide band
        assert!(ratio > 0.2 && ratio < 0.9, "{ratio}");
    }

    #[test]
    fn comm_sinr_scaling_increases() {
        let st = setup(3, 2);
        let model = estimate_comm_sinr_for_setup(&st.sc, &st.stats, &st.plan, &st.scale, 50, 1);
        let p = PowerVector::equal_split(&st.plan, 0.5);
        let mut p2 = p.clone();
        p2.rho *= 1.5;
        for (a, b) in comm_sinr(&model, &p).iter().zip(comm_sinr(&model, &p2)) {
            assert!(b > *a);
        }
    }

    fn sensing_parts(st: &Setup, tau: usize, seed: u64) -> (TwoWayChannelSet, PrecoderSet, CombinerSet, SymbolBlock) {
        let cfg = &st.sc.config;
        let mut rng = stream(seed, Purpose::Channels, 0);
        let ch = draw_comm_channels(&st.stats, &mut rng);
        let est = estimate_channels(&ch, &st.stats, &mut rng);
        let pre = build_precoders(&st.sc, &st.plan, &est, &st.scale, Normalization::Ensemble);
        let comb = mrc_combiners(&st.sc, &st.plan);
        let sym = draw_symbols(cfg.num_ues, cfg.num_ssas, tau, &mut stream(seed, Purpose::Symbols, 0));
        (build_two_way_channels(&st.sc), pre, comb, sym)
    }

    #[test]
    fn quadratic_forms_match_literal_sums() {
        let st = setup(3, 3);
        let cfg = &st.sc.config;
        let (tw, pre, comb, sym) = sensing_parts(&st, 4, 2);
        let vecs = build_sensing_vectors(&tw, &st.plan, &pre, &comb, &sym);
        let forms = sensing_quadratic_forms(&vecs, 3, 3, cfg.sigma_n2);
        let p = PowerVector::equal_split(&st.plan, cfg.p_tx);
        let quad = sensing_sinr(&forms, &p);
        for (i, &(s, r)) in forms.pairs.iter().enumerate() {
            let direct = sensing_sinr_direct(&tw, &st.plan, &pre, &comb, &sym, &p, s, r, cfg.antennas, cfg.sigma_n2).unwrap();
            assert!((quad[i] - direct).abs() <= 1e-10 * direct, "{} vs {direct}", quad[i]);
            let a = forms.a_dense(i);
            let b = forms.b_dense(i);
            assert!(min_eigenvalue(&a) >= -1e-10 * a.norm());
            assert!(min_eigenvalue(&b) >= -1e-10 * b.norm().max(1e-300));
            let n = 6;
            for bi in 0..forms.num_tx {
                for bj in 0..forms.num_tx {
                    if bi != bj {
                        assert!(a.view((bi * n, bj * n), (n, n)).iter().all(|&x| x == 0.0));
                    }
                }
            }
        }
    }

    #[test]
    fn single_ssa_has_noise_only_denominator() {
        let st = setup(2, 1);
        let cfg = &st.sc.config;
        let (tw, pre, comb, sym) = sensing_parts(&st, 3, 4);
        let forms = sensing_quadratic_forms(&build_sensing_vectors(&tw, &st.plan, &pre, &comb, &sym), 2, 1, cfg.sigma_n2);
        let p = PowerVector::equal_split(&st.plan, cfg.p_tx);
        for i in 0..forms.pairs.len() {
            assert_eq!(forms.interference_plus_noise(i, &p), 3.0 * cfg.sigma_n2);
        }
        assert!(sensing_sinr(&forms, &PowerVector::for_plan(&st.plan)).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn zero_symbol_zeroes_its_entry() {
        let st = setup(2, 2);
        let (tw, pre, comb, mut sym) = sensing_parts(&st, 2, 6);
        sym.comm[1 * 2] = Complex64::default(); // s_1[0]
        let vecs = build_sensing_vectors(&tw, &st.plan, &pre, &comb, &sym);
        for p in 0..vecs.pairs.len() {
            for li in 0..vecs.num_tx {
                assert_eq!(vecs.de(p, li, 0)[1], Complex64::default());
            }
        }
    }

    #[test]
    fn bundle_round_trip() {
        let st = setup(2, 2);
        let cfg = &st.sc.config;
        let model = estimate_comm_sinr_for_setup(&st.sc, &st.stats, &st.plan, &st.scale, 20, 1);
        let (tw, pre, comb, sym) = sensing_parts(&st, 2, 6);
        let forms = sensing_quadratic_forms(&build_sensing_vectors(&tw, &st.plan, &pre, &comb, &sym), 2, 2, cfg.sigma_n2);
        let bundle = SinrBundle { plan: st.plan.clone(), p_tx: cfg.p_tx, comm: model, sensing: forms };
        let back = SinrBundle::from_json(&bundle.to_json().unwrap()).unwrap();
        let p = PowerVector::equal_split(&st.plan, 1.0);
        assert_eq!(comm_sinr(&back.comm, &p), comm_sinr(&bundle.comm, &p));
        let (x, y) = (sensing_sinr(&back.sensing, &p), sensing_sinr(&bundle.sensing, &p));
        for (x, y) in x.iter().zip(&y) {
            assert!((x - y).abs() <= 1e-14 * y.abs());
        }
    }
}
