//! Max-min power allocation by the convex-concave procedure. Each round
//! replaces the concave SINR numerators by their tangent planes and solves
//! the resulting second-order cone program.

use std::collections::BTreeMap;
use std::path::Path;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::PowerVector;
use crate::assignment::AssignmentPlan;
use crate::error::{IsacError, Result};
use crate::linalg::{quad_form, real_psd_factor};
use crate::rng::{stream, Purpose};
use crate::sinr::{comm_sinr, sensing_sinr, CommSinrModel, SensingQuadraticForms};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CcpConfig {
    /// Weight of the minimum sensing SINR.
    pub omega0: f64,
    /// Weight of the minimum communication SINR.
    pub omega1: f64,
    /// Slack penalty; `None` means `100 * max(omega0, omega1)`.
    pub lambda_penalty: Option<f64>,
    pub eps1: f64,
    pub eps2: f64,
    pub eps3: f64,
    pub eps4: f64,
    pub c_max: usize,
    pub subproblem_tol: f64,
    pub max_retries: usize,
    /// Lower bound on γ_s and γ_c inside the subproblem.
    pub gamma_floor: f64,
}

impl Default for CcpConfig {
    fn default() -> Self {
        Self {
            omega0: 1.0,
            omega1: 1.0,
            lambda_penalty: None,
            eps1: 1e-3,
            eps2: 1e-3,
            eps3: 0.1,
            eps4: 1e-6,
            c_max: 150,
            subproblem_tol: 1e-8,
            max_retries: 3,
            gamma_floor: 1e-9,
        }
    }
}

impl CcpConfig {
    pub fn lambda(&self) -> f64 {
        self.lambda_penalty.unwrap_or(100.0 * self.omega0.max(self.omega1))
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [self.omega0, self.omega1, self.lambda(), self.eps1, self.eps2, self.eps3, self.eps4, self.subproblem_tol, self.gamma_floor];
        if vals.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) || self.omega0 + self.omega1 <= 0.0 || self.c_max == 0 {
            return Err(IsacError::InvalidConfig("CCP weights, tolerances and c_max must be positive".into()));
        }
        if self.lambda() <= self.omega0.max(self.omega1) {
            return Err(IsacError::InvalidConfig("slack penalty must exceed both objective weights".into()));
        }
        Ok(())
    }
}

/// Iterate of the procedure. Slacks are in SINR units: constraint `i` reads
/// `SINR_i(ρ) ≥ γ − ξ_i`, and is linearised at its own target
/// `g_i = γ − ξ_i` (see [`LinearizedConstraint`]).
#[derive(Debug, Clone, Serialize)]
pub struct CcpState {
    pub rho: PowerVector,
    pub gamma_s: f64,
    pub gamma_c: f64,
    pub xi: Vec<f64>,
    pub chi: Vec<f64>,
    pub iteration: usize,
    pub converged: bool,
}

impl CcpState {
    pub fn slack_sum(&self) -> f64 {
        self.xi.iter().sum::<f64>() + self.chi.iter().sum::<f64>()
    }

    /// `−ω0 γ_s − ω1 γ_c + λ (Σξ + Σχ)`.
    pub fn objective(&self, cfg: &CcpConfig) -> f64 {
        -cfg.omega0 * self.gamma_s - cfg.omega1 * self.gamma_c + cfg.lambda() * self.slack_sum()
    }
}

/// Linearised SINR constraint `S(ρ)/γ ≥ I(ρ)` around `(ρ^c, γ^c)`, with the
/// signal `S(ρ) = ρ^T A ρ` and interference-plus-noise `I(ρ) = ρ^T Q ρ + n`:
///
/// `2 (Aρ^c)^T ρ / γ^c − S(ρ^c) γ / (γ^c)² + slack ≥ ρ^T Q ρ + n`.
///
/// Inside the cone program the whole inequality is multiplied by
/// `κ = (γ^c)² / S(ρ^c)`, which turns the γ coefficient into −1. With a slack,
/// γ is replaced by the per-constraint target `γ − ξ`, and `γ^c` is that
/// target at the linearisation point, so the surrogate is tangent to the
/// jointly convex `S(ρ)/g` and the relaxed problem is the same every iteration.
#[derive(Debug, Clone)]
pub struct LinearizedConstraint {
    pub signal: DMatrix<f64>,
    pub interference: DMatrix<f64>,
    pub noise: f64,
    pub rho_c: DVector<f64>,
    pub gamma_c: f64,
    pub kappa: f64,
}

impl LinearizedConstraint {
    fn new(signal: DMatrix<f64>, interference: DMatrix<f64>, noise: f64, rho_c: &PowerVector, gamma_c: f64) -> Result<Self> {
        if !(gamma_c > 0.0) {
            return Err(IsacError::Contract(format!("linearisation needs γ^c > 0, got {gamma_c}")));
        }
        let f0 = quad_form(&signal, &rho_c.rho);
        // a zero signal leaves no tangent plane to scale by; fall back to the noise scale
        let kappa = if f0 > 1e-300 { gamma_c * gamma_c / f0 } else { 1.0 / noise };
        Ok(Self { signal, interference, noise, rho_c: rho_c.rho.clone(), gamma_c, kappa })
    }

    pub fn signal_at_point(&self) -> f64 {
        quad_form(&self.signal, &self.rho_c)
    }

    /// Gradient `2 A ρ^c / γ^c` of the affine surrogate with respect to ρ.
    pub fn gradient(&self) -> DVector<f64> {
        &self.signal * &self.rho_c * (2.0 / self.gamma_c)
    }

    /// Affine surrogate of `S(ρ)/γ`.
    pub fn surrogate(&self, rho: &DVector<f64>, gamma: f64) -> f64 {
        self.gradient().dot(rho) - self.signal_at_point() * gamma / (self.gamma_c * self.gamma_c)
    }

    pub fn true_ratio(&self, rho: &DVector<f64>, gamma: f64) -> f64 {
        quad_form(&self.signal, rho) / gamma
    }

    pub fn interference_plus_noise(&self, rho: &DVector<f64>) -> f64 {
        quad_form(&self.interference, rho) + self.noise
    }

    /// Smallest slack (unnormalised) that satisfies the constraint.
    pub fn required_slack(&self, rho: &DVector<f64>, gamma: f64) -> f64 {
        (self.interference_plus_noise(rho) - self.surrogate(rho, gamma)).max(0.0)
    }
}

/// Full-length `(K+S)L_tx` signal and interference matrices of UE `k`.
pub fn comm_constraint_matrices(model: &CommSinrModel, k: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let template = PowerVector::zeros(model.num_ues, model.num_ssas, model.num_tx);
    let n = template.len();
    let nt = model.num_tx;
    let mut signal = DMatrix::zeros(n, n);
    let mut interference = DMatrix::zeros(n, n);
    for li in 0..nt {
        for lj in 0..nt {
            signal[(template.comm_index(li, k), template.comm_index(lj, k))] = model.a[k][li] * model.a[k][lj];
            for j in 0..model.num_ues {
                interference[(template.comm_index(li, j), template.comm_index(lj, j))] += model.b(k, j)[(li, lj)];
            }
            for s in 0..model.num_ssas {
                interference[(template.sens_index(li, s), template.sens_index(lj, s))] += model.c(k, s)[(li, lj)];
            }
        }
    }
    (signal, interference)
}

pub fn linearize_comm_constraint(model: &CommSinrModel, k: usize, rho_c: &PowerVector, gamma_c: f64) -> Result<LinearizedConstraint> {
    let (signal, interference) = comm_constraint_matrices(model, k);
    LinearizedConstraint::new(signal, interference, model.sigma_n2, rho_c, gamma_c)
}

/// Sensing pair `p` (index into `forms.pairs`), linearised at `γ_s^c`.
pub fn linearize_sensing_constraint(forms: &SensingQuadraticForms, p: usize, rho_c: &PowerVector, gamma_s: f64) -> Result<LinearizedConstraint> {
    LinearizedConstraint::new(forms.a_dense(p), forms.b_dense(p), forms.tau_s as f64 * forms.sigma_n2, rho_c, gamma_s)
}

/// Smallest γ used as the unit of the scaled cone-program variables.
const UNIT_FLOOR: f64 = 1e-6;

/// Sparse matrix builder for the `A` of `Ax + s = b`.
struct ConeRows {
    entries: BTreeMap<(usize, usize), f64>,
    b: Vec<f64>,
    cones: Vec<SupportedConeT<f64>>,
}

impl ConeRows {
    fn new() -> Self {
        Self { entries: BTreeMap::new(), b: Vec::new(), cones: Vec::new() }
    }

    fn row(&mut self, coeffs: &[(usize, f64)], b: f64) {
        let r = self.b.len();
        for &(c, v) in coeffs {
            if v != 0.0 {
                *self.entries.entry((r, c)).or_insert(0.0) += v;
            }
        }
        self.b.push(b);
    }

    fn matrix(&self, n: usize) -> CscMatrix<f64> {
        let (mut i, mut j, mut v) = (Vec::new(), Vec::new(), Vec::new());
        for (&(r, c), &x) in &self.entries {
            i.push(r);
            j.push(c);
            v.push(x);
        }
        CscMatrix::new_from_triplets(self.b.len(), n, i, j, v)
    }
}

/// Variable layout of one subproblem.
struct Layout {
    /// Indices into ρ that are free (assigned) entries.
    support: Vec<usize>,
    gamma_s: usize,
    gamma_c: usize,
    xi: usize,
    chi: usize,
    n: usize,
}

/// One convex subproblem around `state`. Returns the optimiser with
/// `iteration` incremented.
pub fn solve_convex_subproblem(
    model: &CommSinrModel,
    forms: &SensingQuadraticForms,
    plan: &AssignmentPlan,
    p_tx: f64,
    state: &CcpState,
    cfg: &CcpConfig,
) -> Result<CcpState> {
    let mask = PowerVector::support(plan);
    let support: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    let nv = support.len();
    let (nk, np) = (model.num_ues, forms.pairs.len());
    let lay = Layout { gamma_s: nv, gamma_c: nv + 1, xi: nv + 2, chi: nv + 2 + nk, n: nv + 2 + nk + np, support };

    let mut rows = ConeRows::new();
    let sqrt_p = p_tx.sqrt();
    // γ and slack variables are carried in units of the current iterate's γ
    // so every variable of the cone program is of order one
    let (unit_s, unit_c) = (state.gamma_s.max(UNIT_FLOOR), state.gamma_c.max(UNIT_FLOOR));

    // linear inequalities: 0 ≤ ρ_i ≤ √P_tx, γ ≥ floor, slacks ≥ 0
    let mut n_lin = 0;
    for i in 0..nv {
        rows.row(&[(i, -1.0)], 0.0);
        rows.row(&[(i, 1.0)], sqrt_p);
        n_lin += 2;
    }
    for (g, unit) in [(lay.gamma_s, unit_s), (lay.gamma_c, unit_c)] {
        rows.row(&[(g, -1.0)], -cfg.gamma_floor / unit);
        n_lin += 1;
    }
    // without constraints of one kind its γ would be unbounded; pin it
    if np == 0 {
        rows.row(&[(lay.gamma_s, 1.0)], cfg.gamma_floor / unit_s);
        n_lin += 1;
    }
    if nk == 0 {
        rows.row(&[(lay.gamma_c, 1.0)], cfg.gamma_floor / unit_c);
        n_lin += 1;
    }
    for i in 0..nk + np {
        rows.row(&[(lay.xi + i, -1.0)], 0.0);
        n_lin += 1;
    }
    rows.cones.push(SupportedConeT::NonnegativeConeT(n_lin));

    // per-AP power: ||ρ_block|| ≤ √P_tx
    let block = model.num_ues + model.num_ssas;
    for li in 0..plan.num_tx() {
        let members: Vec<usize> = (0..nv).filter(|&v| lay.support[v] / block == li).collect();
        if members.is_empty() {
            continue;
        }
        rows.row(&[], sqrt_p);
        for &v in &members {
            rows.row(&[(v, -1.0)], 0.0);
        }
        rows.cones.push(SupportedConeT::SecondOrderConeT(members.len() + 1));
    }

    // linearised SINR constraints
    let rho_c = &state.rho;
    if state.xi.len() != nk || state.chi.len() != np {
        return Err(IsacError::Contract(format!("state has {}+{} slacks for {nk}+{np} constraints", state.xi.len(), state.chi.len())));
    }
    // iterates come from `tighten`, so γ − ξ = min(γ, SINR) > 0
    let target = |gamma: f64, slack: f64| (gamma - slack).max(f64::MIN_POSITIVE);
    let mut constraints = Vec::with_capacity(nk + np);
    for k in 0..nk {
        let con = linearize_comm_constraint(model, k, rho_c, target(state.gamma_c, state.xi[k]))?;
        constraints.push(Scaled { con, gamma_var: lay.gamma_c, slack_var: lay.xi + k, unit: unit_c });
    }
    for p in 0..np {
        let con = linearize_sensing_constraint(forms, p, rho_c, target(state.gamma_s, state.chi[p]))?;
        constraints.push(Scaled { con, gamma_var: lay.gamma_s, slack_var: lay.chi + p, unit: unit_s });
    }
    for c in &constraints {
        add_linearized_rows(&mut rows, c, &lay);
    }

    let mut q = vec![0.0; lay.n];
    q[lay.gamma_s] = -cfg.omega0 * unit_s;
    q[lay.gamma_c] = -cfg.omega1 * unit_c;
    for c in &constraints {
        q[c.slack_var] = cfg.lambda() * c.unit;
    }
    let q_scale = q.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    q.iter_mut().for_each(|v| *v /= q_scale);
    let p_mat = CscMatrix::zeros((lay.n, lay.n));
    let a_mat = rows.matrix(lay.n);
    let solve = |tol: f64| -> std::result::Result<(SolverStatus, Vec<f64>), String> {
        let settings = DefaultSettings { verbose: false, tol_gap_abs: tol, tol_gap_rel: tol, tol_feas: tol, max_iter: 200, ..DefaultSettings::default() };
        let mut solver = DefaultSolver::new(&p_mat, &q, &a_mat, &rows.b, &rows.cones, settings).map_err(|e| format!("{e:?}"))?;
        solver.solve();
        Ok((solver.solution.status, solver.solution.x.clone()))
    };
    let fail = |status: String| IsacError::Solver { iteration: state.iteration, status };
    let (mut status, mut x) = solve(cfg.subproblem_tol).map_err(fail)?;
    if !matches!(status, SolverStatus::Solved | SolverStatus::AlmostSolved) {
        (status, x) = solve((cfg.subproblem_tol * 100.0).min(1e-5)).map_err(fail)?;
    }
    let usable = match status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => true,
        // a stalled interior point still carries a feasible-looking ρ; it is
        // only taken if it does not worsen the surrogate objective below
        SolverStatus::InsufficientProgress | SolverStatus::MaxIterations | SolverStatus::MaxTime => false,
        other => return Err(fail(format!("{other:?}"))),
    };
    let candidate = x[..nv].iter().all(|v| v.is_finite()).then(|| {
        let mut rho = PowerVector::zeros(model.num_ues, model.num_ssas, model.num_tx);
        for (v, &i) in lay.support.iter().enumerate() {
            rho.rho[i] = x[v].clamp(0.0, sqrt_p);
        }
        // interior-point iterates sit strictly inside the cone; pull back onto it
        for li in 0..plan.num_tx() {
            let pw = rho.ap_power(li);
            if pw > p_tx {
                let f = (p_tx / pw).sqrt();
                for i in li * block..(li + 1) * block {
                    rho.rho[i] *= f;
                }
            }
        }
        rho
    });
    if candidate.is_none() && usable {
        return Err(fail("non-finite solution".into()));
    }
    let stay = tighten(model, forms, rho_c.clone(), state.iteration + 1, cfg);
    let next = match candidate {
        Some(rho) => {
            let moved = tighten(model, forms, rho, state.iteration + 1, cfg);
            // the previous point is feasible for this subproblem, so an exact
            // solver never does worse; keeping it guards against solver noise
            if moved.objective(cfg) <= stay.objective(cfg) {
                moved
            } else {
                stay
            }
        }
        None => stay,
    };
    Ok(next)
}

/// One linearised constraint with its place in the cone program.
struct Scaled {
    con: LinearizedConstraint,
    gamma_var: usize,
    slack_var: usize,
    /// Unit of the γ and slack variables of this constraint's kind.
    unit: f64,
}

/// Optimal γ and slacks of the penalised problem for fixed ρ: with λ above
/// both weights, each γ is the smallest true SINR of its kind (floored) and
/// each slack covers what that SINR lacks. The surrogate under-estimates
/// every SINR, so this never scores worse than the subproblem's own γ.
fn tighten(model: &CommSinrModel, forms: &SensingQuadraticForms, rho: PowerVector, iteration: usize, cfg: &CcpConfig) -> CcpState {
    let comm = comm_sinr(model, &rho);
    let sens = sensing_sinr(forms, &rho);
    let gamma_c = min_or(&comm, 0.0).max(cfg.gamma_floor);
    let gamma_s = min_or(&sens, 0.0).max(cfg.gamma_floor);
    CcpState {
        rho,
        gamma_s,
        gamma_c,
        xi: comm.iter().map(|v| (gamma_c - v).max(0.0)).collect(),
        chi: sens.iter().map(|v| (gamma_s - v).max(0.0)).collect(),
        iteration,
        converged: false,
    }
}

/// `κ·(surrogate) + slack − γ ≥ κ·I(ρ)`, divided by `unit`, as a rotated
/// cone `||[2Fρ; t−1]|| ≤ t+1` with `t = κ'∇^Tρ − γ' + slack' − κ'n`,
/// `F^T F = κ'Q`, `κ' = κ/unit` and primed γ and slack in units of `unit`.
fn add_linearized_rows(rows: &mut ConeRows, c: &Scaled, lay: &Layout) {
    let (con, g_var, slack_var) = (&c.con, c.gamma_var, c.slack_var);
    let kappa = con.kappa / c.unit;
    let grad = con.gradient() * kappa;
    let q_sub = DMatrix::from_fn(lay.support.len(), lay.support.len(), |i, j| con.interference[(lay.support[i], lay.support[j])] * kappa);
    let f = real_psd_factor(&q_sub, 1e-12);
    let kn = kappa * con.noise;
    let mut t_row: Vec<(usize, f64)> = lay.support.iter().enumerate().map(|(v, &i)| (v, -grad[i])).collect();
    t_row.push((g_var, 1.0));
    t_row.push((slack_var, -1.0));
    rows.row(&t_row, 1.0 - kn);
    rows.row(&t_row, -1.0 - kn);
    for r in 0..f.nrows() {
        let coeffs: Vec<(usize, f64)> = (0..f.ncols()).map(|c| (c, -2.0 * f[(r, c)])).collect();
        rows.row(&coeffs, 0.0);
    }
    rows.cones.push(SupportedConeT::SecondOrderConeT(2 + f.nrows()));
}

/// One row of the per-iteration trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub gamma_s: f64,
    pub gamma_c: f64,
    pub slack_sum: f64,
    pub objective: f64,
    pub true_min_sensing_sinr: f64,
    pub true_min_comm_sinr: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CcpOutcome {
    pub state: CcpState,
    pub trace: Vec<TraceRow>,
    pub retries: usize,
}

impl CcpOutcome {
    pub fn write_trace_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for row in &self.trace {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn min_or(values: &[f64], empty: f64) -> f64 {
    values.iter().copied().fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.min(v)))).unwrap_or(empty)
}

/// True minimum (sensing, communication) SINRs at `rho`.
pub fn true_min_sinrs(model: &CommSinrModel, forms: &SensingQuadraticForms, rho: &PowerVector) -> (f64, f64) {
    (min_or(&sensing_sinr(forms, rho), 0.0), min_or(&comm_sinr(model, rho), 0.0))
}

/// Start point: `init` with γ set to the true minimum SINRs (floored) and
/// slacks covering any SINR below the floor.
pub fn initial_state(model: &CommSinrModel, forms: &SensingQuadraticForms, init: PowerVector, cfg: &CcpConfig) -> CcpState {
    tighten(model, forms, init, 0, cfg)
}

fn trace_row(model: &CommSinrModel, forms: &SensingQuadraticForms, st: &CcpState, cfg: &CcpConfig) -> TraceRow {
    let (ts, tc) = true_min_sinrs(model, forms, &st.rho);
    TraceRow {
        iteration: st.iteration,
        gamma_s: st.gamma_s,
        gamma_c: st.gamma_c,
        slack_sum: st.slack_sum(),
        objective: st.objective(cfg),
        true_min_sensing_sinr: ts,
        true_min_comm_sinr: tc,
    }
}

/// Iterates convex subproblems from `init` until the γ, ρ and slack
/// tolerances are all met or `c_max` rounds have run. A failed subproblem
/// restarts from a random feasible split drawn from `seed`.
pub fn ccp_power_allocation(
    model: &CommSinrModel,
    forms: &SensingQuadraticForms,
    plan: &AssignmentPlan,
    p_tx: f64,
    cfg: &CcpConfig,
    init: PowerVector,
    seed: u64,
) -> Result<CcpOutcome> {
    cfg.validate()?;
    init.check(plan, p_tx, 1e-9)?;
    let mut retries = 0;
    let mut start = init;
    loop {
        match run_from(model, forms, plan, p_tx, cfg, start) {
            Ok((state, trace)) => return Ok(CcpOutcome { state, trace, retries }),
            Err(e @ IsacError::Solver { .. }) => {
                if retries >= cfg.max_retries {
                    return Err(IsacError::RepeatedInfeasibility { retries, status: e.to_string() });
                }
                retries += 1;
                start = PowerVector::random_split(plan, p_tx, &mut stream(seed, Purpose::Reinit, retries as u64));
            }
            Err(e) => return Err(e),
        }
    }
}

fn run_from(
    model: &CommSinrModel,
    forms: &SensingQuadraticForms,
    plan: &AssignmentPlan,
    p_tx: f64,
    cfg: &CcpConfig,
    init: PowerVector,
) -> Result<(CcpState, Vec<TraceRow>)> {
    let mut state = initial_state(model, forms, init, cfg);
    let mut trace = vec![trace_row(model, forms, &state, cfg)];
    while state.iteration < cfg.c_max {
        let next = solve_convex_subproblem(model, forms, plan, p_tx, &state, cfg)?;
        let done = (next.gamma_s - state.gamma_s).abs() <= cfg.eps1
            && (next.gamma_c - state.gamma_c).abs() <= cfg.eps2
            && (&next.rho.rho - &state.rho.rho).norm() <= cfg.eps3
            && next.slack_sum() <= cfg.eps4;
        state = next;
        trace.push(trace_row(model, forms, &state, cfg));
        if done {
            state.converged = true;
            break;
        }
    }
    Ok((state, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::uniform;
    use rand::Rng;

    fn random_psd(n: usize, scale: f64, rng: &mut impl Rng) -> DMatrix<f64> {
        let f = DMatrix::from_fn(n, n, |_, _| uniform(rng) - 0.5);
        f.transpose() * f * scale
    }

    /// Synthetic plan where every TX-AP serves every UE and SSA.
    fn dense_plan(nk: usize, ns: usize, nt: usize) -> AssignmentPlan {
        let aps: Vec<usize> = (0..nt).collect();
        AssignmentPlan {
            num_aps: nt + 1,
            num_ues: nk,
            num_ssas: ns,
            tx_aps: aps.clone(),
            rx_aps: vec![nt],
            idle_aps: vec![],
            serving_sets: vec![aps.clone(); nk],
            ssa_tx: vec![aps.clone(); ns],
            ssa_rx: vec![vec![nt]; ns],
            ap_ues: (0..=nt).map(|l| if l < nt { (0..nk).collect() } else { vec![] }).collect(),
            ap_targets: (0..=nt).map(|l| if l < nt { (0..ns).collect() } else { vec![] }).collect(),
        }
    }

    fn synthetic(nk: usize, ns: usize, nt: usize, seed: u64) -> (CommSinrModel, SensingQuadraticForms) {
        let mut rng = stream(seed, Purpose::Validation, 0);
        let n = nk + ns;
        let model = CommSinrModel {
            num_ues: nk,
            num_ssas: ns,
            num_tx: nt,
            sigma_n2: 0.05,
            n_mc: 1,
            a: (0..nk).map(|_| DVector::from_fn(nt, |_, _| 0.5 + uniform(&mut rng))).collect(),
            b: (0..nk * nk).map(|_| random_psd(nt, 0.02, &mut rng)).collect(),
            c: (0..nk * ns).map(|_| random_psd(nt, 0.02, &mut rng)).collect(),
        };
        let pairs: Vec<(usize, usize)> = (0..ns).map(|s| (s, nt)).collect();
        let forms = SensingQuadraticForms {
            num_ues: nk,
            num_ssas: ns,
            num_tx: nt,
            tau_s: 2,
            sigma_n2: 0.05,
            pairs: pairs.clone(),
            a_blocks: pairs.iter().map(|_| (0..nt).map(|_| random_psd(n, 0.5, &mut rng)).collect()).collect(),
            b_blocks: pairs.iter().map(|_| (0..nt).map(|_| random_psd(n, 0.01, &mut rng)).collect()).collect(),
        };
        (model, forms)
    }

    #[test]
    fn tangency_and_global_underestimation() {
        let (model, forms) = synthetic(3, 2, 2, 1);
        let plan = dense_plan(3, 2, 2);
        let mut rng = stream(2, Purpose::Validation, 1);
        let rho_c = PowerVector::random_split(&plan, 1.0, &mut rng);
        let mut cons = Vec::new();
        for k in 0..3 {
            cons.push(linearize_comm_constraint(&model, k, &rho_c, 1.7).unwrap());
        }
        for p in 0..2 {
            cons.push(linearize_sensing_constraint(&forms, p, &rho_c, 2.3).unwrap());
        }
        for con in &cons {
            let at = con.surrogate(&rho_c.rho, con.gamma_c);
            let truth = con.true_ratio(&rho_c.rho, con.gamma_c);
            assert!((at - truth).abs() <= 1e-12 * truth.abs().max(1.0));
            for _ in 0..100 {
                let rho = PowerVector::random_split(&plan, 1.0 + 3.0 * uniform(&mut rng), &mut rng).rho;
                let gamma = 0.01 + 10.0 * uniform(&mut rng);
                assert!(con.surrogate(&rho, gamma) <= con.true_ratio(&rho, gamma) + 1e-12);
            }
            // a large slack satisfies the constraint anywhere
            let rho = DVector::from_element(rho_c.len(), 5.0);
            let need = con.required_slack(&rho, 3.0);
            assert!(con.surrogate(&rho, 3.0) + need + 1.0 >= con.interference_plus_noise(&rho));
        }
        let bad = linearize_comm_constraint(&model, 0, &rho_c, 0.0);
        assert!(matches!(bad, Err(IsacError::Contract(_))));
    }

    #[test]
    fn scalar_problem_matches_closed_form() {
        // one UE, one AP, no sensing, B = 0: γ_c* = P a² / σ²
        let model = CommSinrModel {
            num_ues: 1,
            num_ssas: 0,
            num_tx: 1,
            sigma_n2: 0.1,
            n_mc: 1,
            a: vec![DVector::from_element(1, 0.8)],
            b: vec![DMatrix::zeros(1, 1)],
            c: vec![],
        };
        let forms = SensingQuadraticForms {
            num_ues: 1,
            num_ssas: 0,
            num_tx: 1,
            tau_s: 1,
            sigma_n2: 0.1,
            pairs: vec![],
            a_blocks: vec![],
            b_blocks: vec![],
        };
        let plan = dense_plan(1, 0, 1);
        let init = PowerVector { num_ues: 1, num_ssas: 0, num_tx: 1, rho: DVector::from_element(1, 0.3) };
        let cfg = CcpConfig { eps1: 1e-9, eps2: 1e-9, eps3: 1e-9, ..Default::default() };
        let out = ccp_power_allocation(&model, &forms, &plan, 2.0, &cfg, init, 0).unwrap();
        let expect = 2.0 * 0.64 / 0.1;
        assert!((out.state.gamma_c - expect).abs() < 1e-6 * expect, "{}", out.state.gamma_c);
        assert!((out.state.rho.rho[0] - 2f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn monotone_objective_and_true_sinr_certificate() {
        let (model, forms) = synthetic(3, 2, 3, 5);
        let plan = dense_plan(3, 2, 3);
        let cfg = CcpConfig::default();
        let out = ccp_power_allocation(&model, &forms, &plan, 1.0, &cfg, PowerVector::equal_split(&plan, 1.0), 1).unwrap();
        for w in out.trace.windows(2) {
            assert!(w[1].objective <= w[0].objective + 1e-6 * w[0].objective.abs().max(1.0), "{:?}", w);
        }
        let st = &out.state;
        assert!(st.converged);
        assert!(st.slack_sum() <= cfg.eps4);
        st.rho.check(&plan, 1.0, 1e-9).unwrap();
        let (ts, tc) = true_min_sinrs(&model, &forms, &st.rho);
        assert!(ts >= st.gamma_s * (1.0 - 1e-3), "{ts} {}", st.gamma_s);
        assert!(tc >= st.gamma_c * (1.0 - 1e-3), "{tc} {}", st.gamma_c);
        // better than the start
        let first = &out.trace[0];
        assert!(st.objective(&cfg) < first.objective);
    }

    #[test]
    fn weights_shift_the_tradeoff() {
        let (model, forms) = synthetic(2, 2, 2, 9);
        let plan = dense_plan(2, 2, 2);
        let run = |w0: f64| {
            let cfg = CcpConfig { omega0: w0, ..Default::default() };
            ccp_power_allocation(&model, &forms, &plan, 1.0, &cfg, PowerVector::equal_split(&plan, 1.0), 1).unwrap().state
        };
        let lo = run(1e-3);
        let hi = run(1e3);
        assert!(hi.gamma_s >= lo.gamma_s);
        assert!(hi.gamma_c <= lo.gamma_c);
        // ω0 = 0: γ_s is only held up by its own constraints
        let cfg = CcpConfig { omega0: 0.0, ..Default::default() };
        let st = ccp_power_allocation(&model, &forms, &plan, 1.0, &cfg, PowerVector::equal_split(&plan, 1.0), 1).unwrap().state;
        assert!(st.gamma_c >= lo.gamma_c * (1.0 - 1e-3));
    }

    #[test]
    fn rejects_infeasible_start_and_bad_config() {
        let (model, forms) = synthetic(2, 1, 2, 3);
        let plan = dense_plan(2, 1, 2);
        let mut init = PowerVector::equal_split(&plan, 1.0);
        init.rho *= 2.0;
        assert!(ccp_power_allocation(&model, &forms, &plan, 1.0, &CcpConfig::default(), init, 0).is_err());
        let cfg = CcpConfig { lambda_penalty: Some(0.5), ..Default::default() };
        assert!(cfg.validate().is_err());
        assert_eq!(CcpConfig { omega0: 10.0, ..Default::default() }.lambda(), 1000.0);
    }

    #[test]
    fn trace_csv_has_one_row_per_iteration() {
        let (model, forms) = synthetic(2, 1, 2, 4);
        let plan = dense_plan(2, 1, 2);
        let out = ccp_power_allocation(&model, &forms, &plan, 1.0, &CcpConfig::default(), PowerVector::equal_split(&plan, 1.0), 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        out.write_trace_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), out.trace.len() + 1);
        assert!(text.starts_with("iteration,gamma_s,gamma_c,slack_sum,objective"));
    }
}
