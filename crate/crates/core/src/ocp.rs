//! Multiple-shooting optimal control problem per yield/pass configuration,
//! solved by SQP real-time iterations on the sparse interior-point QP.

use std::collections::VecDeque;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, SMatrix, SVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{Decision, EgoExtent, IntervalTable, YieldConfiguration};
use crate::geometry::{GeometryError, HPolytope};
use crate::models::{
    rk4_sensitivity, steering_limit, ControlInput, ErrorState, InputVec, ModelError, StateVec, VehicleParams,
    INPUT_DIM, STATE_DIM,
};
use crate::qp::{kkt_residual, qp_solve_with, QpError, QpProblem, QpSettings, SparseMatrix};
use crate::reference::ReferencePath;
use crate::terminal::TerminalIngredients;

const NX: usize = STATE_DIM;
const NU: usize = INPUT_DIM;
const NZ: usize = NX + NU;
/// Diagonal added to every primal step variable.
const REGULARIZATION: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OcpError {
    #[error("bad dimensions: {0}")]
    BadDimensions(String),
    #[error("missing terminal ingredients: {0}")]
    MissingIngredients(String),
    #[error("QP failed: {0}")]
    Qp(#[from] QpError),
    #[error("SQP iterates diverged (residual {0:.3e})")]
    Diverged(f64),
    #[error("every configuration failed: {0}")]
    AllFailed(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

fn default_q() -> [f64; 6] {
    [1.0, 1.0, 10.0, 1.0, 1.0, 1.0]
}

fn default_r() -> [f64; 2] {
    [4.0, 10.0]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OcpConfig {
    /// Costed horizon N.
    pub horizon_n: usize,
    /// Full horizon M.
    pub horizon_m: usize,
    pub ts: f64,
    /// Stage weights on `(e_y, e_ψ, δ, α, v, a)` errors.
    pub q: [f64; 6],
    /// Input weights on `(a_req, δ_sp)` errors.
    pub r: [f64; 2],
    pub rho_penalty: f64,
    pub rk4_substeps: usize,
    /// SQP iterations per call (1 is a pure real-time iteration).
    pub sqp_iterations: usize,
    /// Proximal weight on the step over the uncosted tail `n > N`.
    pub levenberg: f64,
}

impl Default for OcpConfig {
    fn default() -> Self {
        OcpConfig {
            horizon_n: 20,
            horizon_m: 100,
            ts: 0.05,
            q: default_q(),
            r: default_r(),
            rho_penalty: 1e4,
            rk4_substeps: 5,
            sqp_iterations: 1,
            levenberg: 1e-7,
        }
    }
}

impl OcpConfig {
    pub fn validate(&self) -> Result<(), OcpError> {
        if self.horizon_n < 1 || self.horizon_m < self.horizon_n {
            return Err(OcpError::BadDimensions("M >= N >= 1 required".into()));
        }
        if !(self.ts > 0.0) || self.rk4_substeps == 0 || self.sqp_iterations == 0 {
            return Err(OcpError::BadDimensions("ts, rk4_substeps and sqp_iterations must be positive".into()));
        }
        if self.q.iter().chain(&self.r).any(|w| !(*w > 0.0)) || !(self.rho_penalty > 0.0) {
            return Err(OcpError::BadDimensions("weights and penalty must be positive".into()));
        }
        Ok(())
    }
}

/// Terminal data the transcription needs.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalData {
    /// Weight on `(e_y, e_ψ, e_δ, e_α, e_v, e_a)`.
    pub p: DMatrix<f64>,
    pub lon: HPolytope,
    pub lat: HPolytope,
}

impl TerminalData {
    pub fn from_ingredients(ing: &TerminalIngredients) -> Result<Self, OcpError> {
        let p = ing.terminal_weight();
        if p.nrows() != 6 || p.ncols() != 6 {
            return Err(OcpError::MissingIngredients("terminal weight must be 6x6".into()));
        }
        Ok(TerminalData { p, lon: ing.lon_set()?, lat: ing.lat_set()? })
    }
}

/// Immutable inputs shared by every configuration.
#[derive(Clone, Copy)]
pub struct OcpContext<'a> {
    pub path: &'a ReferencePath,
    pub vehicle: &'a VehicleParams,
    pub terminal: &'a TerminalData,
    pub extent: EgoExtent,
}

/// One collision row: `sign·s_n + offset ≤ slack`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GRow {
    pub step: usize,
    pub obstacle: usize,
    pub decision: Decision,
    pub sigma: f64,
}

impl GRow {
    /// Residual at arc length `s` (≤ 0 when satisfied).
    pub fn residual(&self, s: f64, extent: &EgoExtent) -> f64 {
        match self.decision {
            Decision::Yield => s + extent.front - self.sigma,
            Decision::Pass => self.sigma - (s - extent.rear),
        }
    }

    fn gradient(&self) -> f64 {
        match self.decision {
            Decision::Yield => 1.0,
            Decision::Pass => -1.0,
        }
    }
}

/// Collision rows of one configuration for steps `1..=M`.
pub fn g_rows(table: &IntervalTable, cfg: &YieldConfiguration, horizon_m: usize) -> Vec<GRow> {
    let mut rows = Vec::new();
    for (i, d) in cfg.decisions.iter().enumerate() {
        for n in 1..=horizon_m.min(table.rows[i].len().saturating_sub(1)) {
            let c = table.get(i, n);
            if c.empty {
                continue;
            }
            let sigma = match d {
                Decision::Yield => c.sigma_lo,
                Decision::Pass => c.sigma_hi,
            };
            rows.push(GRow { step: n, obstacle: i, decision: *d, sigma });
        }
    }
    rows
}

/// Primal trajectory the QP is linearized around.
#[derive(Debug, Clone, PartialEq)]
pub struct Iterate {
    pub states: Vec<StateVec>,
    pub inputs: Vec<InputVec>,
}

impl Iterate {
    /// Reference rolled forward from `x0.s` with reference inputs.
    pub fn cold_start(x0: &ErrorState, path: &ReferencePath, cfg: &OcpConfig) -> Self {
        let mut states = Vec::with_capacity(cfg.horizon_m + 1);
        let mut inputs = Vec::with_capacity(cfg.horizon_m);
        states.push(x0.to_vec());
        let mut s = x0.s;
        for _ in 0..cfg.horizon_m {
            let q = path.query_clamped(s);
            inputs.push(InputVec::new(q.a_ref, q.delta_ref));
            s += q.v_ref * cfg.ts;
            let r = path.reference_point(s);
            let q = path.query_clamped(s);
            states.push(StateVec::from([s, 0.0, 0.0, q.delta_ref, r.alpha_ref, q.v_ref, q.a_ref]));
        }
        Iterate { states, inputs }
    }

    /// Drops the first stage and repeats the last (standstill) stage.
    pub fn shifted(&self) -> Self {
        let mut states: Vec<StateVec> = self.states[1..].to_vec();
        states.push(*self.states.last().unwrap());
        let mut inputs: Vec<InputVec> = self.inputs[1..].to_vec();
        let last = self.states.last().unwrap();
        inputs.push(InputVec::new(0.0, last[3]));
        Iterate { states, inputs }
    }

    pub fn horizon(&self) -> usize {
        self.inputs.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcpSolution {
    pub states: Vec<ErrorState>,
    pub inputs: Vec<ControlInput>,
    pub slacks: Vec<f64>,
    pub g_rows: Vec<GRow>,
    /// Tracking cost without the penalty.
    pub cost: f64,
    pub penalized_cost: f64,
    pub config_id: usize,
    pub kkt_residual: f64,
    pub qp_iterations: usize,
    pub solve_time: f64,
}

impl OcpSolution {
    pub fn max_slack(&self) -> f64 {
        self.slacks.iter().copied().fold(0.0, f64::max)
    }

    pub fn iterate(&self) -> Iterate {
        Iterate {
            states: self.states.iter().map(|x| x.to_vec()).collect(),
            inputs: self.inputs.iter().map(|u| u.to_vec()).collect(),
        }
    }
}

/// Reference residual `(e_y, e_ψ, δ − δ^r, α − α^r, v − v^r, a − a^r)` and
/// its Jacobian with respect to the 7-dimensional state.
fn tracking_residual(x: &StateVec, path: &ReferencePath) -> (SVector<f64, 6>, SMatrix<f64, 6, NX>) {
    let s = x[0];
    let q = path.query_clamped(s);
    let sl = path.slopes(s);
    let alpha_ref = sl[1] * q.v_ref;
    let res = SVector::<f64, 6>::from([x[1], x[2], x[3] - q.delta_ref, x[4] - alpha_ref, x[5] - q.v_ref, x[6] - q.a_ref]);
    let mut j = SMatrix::<f64, 6, NX>::zeros();
    for k in 0..6 {
        j[(k, k + 1)] = 1.0;
    }
    j[(2, 0)] = -sl[1];
    j[(3, 0)] = -sl[1] * sl[2];
    j[(4, 0)] = -sl[2];
    j[(5, 0)] = -sl[3];
    (res, j)
}

fn input_reference(s: f64, path: &ReferencePath) -> InputVec {
    let q = path.query_clamped(s);
    InputVec::new(q.a_ref, q.delta_ref)
}

/// Lateral terminal coordinates and their Jacobian. Below the terminal stage
/// the steering-rate reference follows the actual speed; at `M` it is zero.
fn lateral_coords(x: &StateVec, path: &ReferencePath, with_rate: bool) -> (SVector<f64, 4>, SMatrix<f64, 4, NX>) {
    let (res, j) = tracking_residual(x, path);
    let mut c = SVector::<f64, 4>::from([res[0], res[1], res[2], res[3]]);
    let mut jc = j.fixed_rows::<4>(0).into_owned();
    if with_rate {
        let dd = path.slopes(x[0])[1];
        c[3] = x[4] - dd * x[5];
        jc[(3, 0)] = 0.0;
        jc[(3, 5)] = -dd;
    } else {
        c[3] = x[4];
        jc[(3, 0)] = 0.0;
    }
    (c, jc)
}

/// Column layout of the decision vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Layout {
    pub m: usize,
    pub n_slack: usize,
}

impl Layout {
    pub fn state(&self, n: usize) -> usize {
        n * NZ
    }

    pub fn input(&self, n: usize) -> usize {
        n * NZ + NX
    }

    pub fn slack(&self, i: usize) -> usize {
        self.m * NZ + NX + i
    }

    pub fn n_vars(&self) -> usize {
        self.m * NZ + NX + self.n_slack
    }
}

/// Linearized subproblem in step form around an iterate.
#[derive(Debug, Clone)]
pub struct Transcription {
    pub qp: QpProblem,
    pub layout: Layout,
    /// Tracking cost and penalty-free residual data at the iterate.
    pub base_cost: f64,
}

struct Triplets {
    rows: usize,
    t: Vec<(usize, usize, f64)>,
    rhs: Vec<f64>,
}

impl Triplets {
    fn new() -> Self {
        Triplets { rows: 0, t: Vec::new(), rhs: Vec::new() }
    }

    fn push(&mut self, entries: &[(usize, f64)], rhs: f64) {
        for &(c, v) in entries {
            if v != 0.0 {
                self.t.push((self.rows, c, v));
            }
        }
        self.rhs.push(rhs);
        self.rows += 1;
    }

    fn finish(self, ncols: usize) -> (SparseMatrix, DVector<f64>) {
        (SparseMatrix::from_triplets(self.rows, ncols, &self.t), DVector::from_vec(self.rhs))
    }
}

/// Builds the QP in the step `Δz` (slacks enter as absolute values).
/// With `hard_g` the collision rows are imposed without slacks.
pub fn transcribe(
    x0: &ErrorState,
    it: &Iterate,
    cfg: &OcpConfig,
    ctx: &OcpContext,
    rows: &[GRow],
    hard_g: bool,
) -> Result<Transcription, OcpError> {
    let m = cfg.horizon_m;
    let nn = cfg.horizon_n;
    if it.states.len() != m + 1 || it.inputs.len() != m {
        return Err(OcpError::BadDimensions(format!(
            "iterate has {} states / {} inputs for M = {m}",
            it.states.len(),
            it.inputs.len()
        )));
    }
    if rows.iter().any(|r| r.step == 0 || r.step > m) {
        return Err(OcpError::BadDimensions("collision rows must lie in steps 1..=M".into()));
    }
    let layout = Layout { m, n_slack: if hard_g { 0 } else { rows.len() } };
    let nv = layout.n_vars();
    let path = ctx.path;
    let p = ctx.vehicle;
    let b = &p.bounds;

    // Cost.
    let mut h_t: Vec<(usize, usize, f64)> = Vec::new();
    let mut f = DVector::zeros(nv);
    let mut base_cost = 0.0;
    let qd = SMatrix::<f64, 6, 6>::from_diagonal(&SVector::<f64, 6>::from(cfg.q));
    let add_quadratic = |h_t: &mut Vec<(usize, usize, f64)>, col: usize, j: &SMatrix<f64, 6, NX>, w: &SMatrix<f64, 6, 6>, res: &SVector<f64, 6>, f: &mut DVector<f64>| {
        let jw = j.transpose() * w;
        let hh = &jw * j;
        let g = &jw * res;
        for r in 0..NX {
            f[col + r] += g[r];
            for c in 0..NX {
                if hh[(r, c)] != 0.0 {
                    h_t.push((col + r, col + c, hh[(r, c)]));
                }
            }
        }
        0.5 * res.dot(&(w * res))
    };
    for n in 0..nn {
        let (res, j) = tracking_residual(&it.states[n], path);
        base_cost += add_quadratic(&mut h_t, layout.state(n), &j, &qd, &res, &mut f);
        let du = it.inputs[n] - input_reference(it.states[n][0], path);
        for k in 0..NU {
            let c = layout.input(n) + k;
            h_t.push((c, c, cfg.r[k]));
            f[c] += cfg.r[k] * du[k];
            base_cost += 0.5 * cfg.r[k] * du[k] * du[k];
        }
    }
    {
        let pt = SMatrix::<f64, 6, 6>::from_iterator(ctx.terminal.p.iter().copied());
        let (res, j) = tracking_residual(&it.states[nn], path);
        base_cost += add_quadratic(&mut h_t, layout.state(nn), &j, &pt, &res, &mut f);
    }
    for c in 0..layout.slack(0) {
        let w = if c > layout.input(nn.min(m - 1)) + NU - 1 { cfg.levenberg } else { REGULARIZATION };
        h_t.push((c, c, w));
    }
    if !hard_g {
        for i in 0..rows.len() {
            f[layout.slack(i)] = cfg.rho_penalty;
        }
    }
    let h = SparseMatrix::from_triplets(nv, nv, &h_t);

    // Equalities: initial condition, shooting, standstill at M.
    let mut eq = Triplets::new();
    let dx0 = x0.to_vec() - it.states[0];
    for k in 0..NX {
        eq.push(&[(layout.state(0) + k, 1.0)], dx0[k]);
    }
    for n in 0..m {
        let (xn, a, bm) = rk4_sensitivity(&it.states[n], &it.inputs[n], cfg.ts, cfg.rk4_substeps, path, p);
        let gap = xn - it.states[n + 1];
        for r in 0..NX {
            let mut e: Vec<(usize, f64)> = Vec::with_capacity(NZ + 1);
            for c in 0..NX {
                e.push((layout.state(n) + c, -a[(r, c)]));
            }
            for c in 0..NU {
                e.push((layout.input(n) + c, -bm[(r, c)]));
            }
            e.push((layout.state(n + 1) + r, 1.0));
            eq.push(&e, gap[r]);
        }
    }
    let xm = &it.states[m];
    for k in [4usize, 5, 6] {
        eq.push(&[(layout.state(m) + k, 1.0)], -xm[k]);
    }
    let (a_eq, b_eq) = eq.finish(nv);

    // Inequalities.
    let mut iq = Triplets::new();
    let bound = |iq: &mut Triplets, col: usize, cur: f64, lo: f64, hi: f64| {
        iq.push(&[(col, 1.0)], hi - cur);
        iq.push(&[(col, -1.0)], cur - lo);
    };
    for n in 0..m {
        let u = &it.inputs[n];
        bound(&mut iq, layout.input(n), u[0], b.a_min, b.a_max);
        bound(&mut iq, layout.input(n) + 1, u[1], -b.delta_max, b.delta_max);
        if n == 0 {
            continue;
        }
        let x = &it.states[n];
        let c = layout.state(n);
        bound(&mut iq, c + 1, x[1], -b.e_y_max, b.e_y_max);
        bound(&mut iq, c + 2, x[2], -b.e_psi_max, b.e_psi_max);
        bound(&mut iq, c + 3, x[3], -b.delta_max, b.delta_max);
        bound(&mut iq, c + 4, x[4], -b.alpha_max, b.alpha_max);
        bound(&mut iq, c + 5, x[5], 0.0, b.v_max);
        bound(&mut iq, c + 6, x[6], b.a_min, b.a_max);
        if p.steering_limit {
            let lim = steering_limit(x[5]);
            let eps = 1e-6;
            let dlim = (steering_limit(x[5] + eps) - steering_limit(x[5] - eps)) / (2.0 * eps);
            iq.push(&[(c + 3, 1.0), (c + 5, -dlim)], lim - x[3]);
            iq.push(&[(c + 3, -1.0), (c + 5, -dlim)], lim + x[3]);
        }
        if n >= nn {
            terminal_rows(&mut iq, x, c, ctx, true);
        }
    }
    {
        let x = &it.states[m];
        let c = layout.state(m);
        bound(&mut iq, c + 1, x[1], -b.e_y_max, b.e_y_max);
        bound(&mut iq, c + 2, x[2], -b.e_psi_max, b.e_psi_max);
        bound(&mut iq, c + 3, x[3], -b.delta_max, b.delta_max);
        terminal_rows(&mut iq, x, c, ctx, false);
    }
    for (i, r) in rows.iter().enumerate() {
        let s = it.states[r.step][0];
        let mut e = vec![(layout.state(r.step), r.gradient())];
        if !hard_g {
            e.push((layout.slack(i), -1.0));
        }
        iq.push(&e, -r.residual(s, &ctx.extent));
    }
    if !hard_g {
        for i in 0..rows.len() {
            iq.push(&[(layout.slack(i), -1.0)], 0.0);
        }
    }
    let (a_in, b_in) = iq.finish(nv);
    Ok(Transcription { qp: QpProblem { h, f, a_eq, b_eq, a_in, b_in }, layout, base_cost })
}

/// Terminal rows at stage `n < M` (`with_rate`) or the lateral safe-set rows
/// at stage `M`.
fn terminal_rows(iq: &mut Triplets, x: &StateVec, col: usize, ctx: &OcpContext, with_rate: bool) {
    let (lc, lj) = lateral_coords(x, ctx.path, with_rate);
    let lat = &ctx.terminal.lat;
    for i in 0..lat.n_rows() {
        let a = lat.normals().row(i);
        let val: f64 = (0..4).map(|k| a[k] * lc[k]).sum();
        let entries: Vec<(usize, f64)> = (0..NX).map(|c| (col + c, (0..4).map(|k| a[k] * lj[(k, c)]).sum())).collect();
        iq.push(&entries, lat.offsets()[i] - val);
    }
    if with_rate {
        let (res, j) = tracking_residual(x, ctx.path);
        let lon = &ctx.terminal.lon;
        for i in 0..lon.n_rows() {
            let a = lon.normals().row(i);
            let val = a[0] * res[4] + a[1] * res[5];
            let entries: Vec<(usize, f64)> = (0..NX).map(|c| (col + c, a[0] * j[(4, c)] + a[1] * j[(5, c)])).collect();
            iq.push(&entries, lon.offsets()[i] - val);
        }
    }
}

/// Tracking cost of a trajectory (no penalty).
pub fn tracking_cost(it: &Iterate, cfg: &OcpConfig, ctx: &OcpContext) -> f64 {
    let mut c = 0.0;
    for n in 0..cfg.horizon_n {
        let (res, _) = tracking_residual(&it.states[n], ctx.path);
        for k in 0..6 {
            c += 0.5 * cfg.q[k] * res[k] * res[k];
        }
        let du = it.inputs[n] - input_reference(it.states[n][0], ctx.path);
        c += 0.5 * (cfg.r[0] * du[0] * du[0] + cfg.r[1] * du[1] * du[1]);
    }
    let (res, _) = tracking_residual(&it.states[cfg.horizon_n], ctx.path);
    let pm = &ctx.terminal.p;
    for r in 0..6 {
        for k in 0..6 {
            c += 0.5 * res[r] * pm[(r, k)] * res[k];
        }
    }
    c
}

/// Largest shooting gap of a trajectory started at `x0`.
pub fn shooting_gap(x0: &ErrorState, it: &Iterate, cfg: &OcpConfig, ctx: &OcpContext) -> f64 {
    let mut g = (x0.to_vec() - it.states[0]).amax();
    for n in 0..it.horizon() {
        let (xn, _, _) = rk4_sensitivity(&it.states[n], &it.inputs[n], cfg.ts, cfg.rk4_substeps, ctx.path, ctx.vehicle);
        g = g.max((xn - it.states[n + 1]).amax());
    }
    g
}

/// Result of one SQP update.
struct Update {
    iterate: Iterate,
    slacks: Vec<f64>,
    step: f64,
    /// NLP KKT residual at the linearization point with the QP multipliers.
    kkt: f64,
    qp_iterations: usize,
}

fn sqp_update(
    x0: &ErrorState,
    it: &Iterate,
    cfg: &OcpConfig,
    ctx: &OcpContext,
    rows: &[GRow],
    hard_g: bool,
) -> Result<Update, OcpError> {
    let tr = transcribe(x0, it, cfg, ctx, rows, hard_g)?;
    let sol = qp_solve_with(&tr.qp, None, &QpSettings::default())?;
    let l = tr.layout;
    let mut next = it.clone();
    for n in 0..=cfg.horizon_m {
        for k in 0..NX {
            next.states[n][k] += sol.x[l.state(n) + k];
        }
        if n < cfg.horizon_m {
            for k in 0..NU {
                next.inputs[n][k] += sol.x[l.input(n) + k];
            }
        }
    }
    let slacks = (0..l.n_slack).map(|i| sol.x[l.slack(i)].max(0.0)).collect();
    let step = sol.x.rows(0, l.slack(0)).amax();
    let mut at_lin = sol.x.clone();
    at_lin.rows_mut(0, l.slack(0)).fill(0.0);
    let kkt = kkt_residual(&tr.qp, &at_lin, &sol.y, &sol.z).max();
    Ok(Update { iterate: next, slacks, step, kkt, qp_iterations: sol.iterations })
}

fn finish(
    up: Update,
    cfg: &OcpConfig,
    ctx: &OcpContext,
    rows: &[GRow],
    config_id: usize,
    started: Instant,
) -> OcpSolution {
    let cost = tracking_cost(&up.iterate, cfg, ctx);
    let penalty: f64 = up.slacks.iter().sum::<f64>() * cfg.rho_penalty;
    OcpSolution {
        states: up.iterate.states.iter().map(ErrorState::from_vec).collect(),
        inputs: up.iterate.inputs.iter().map(ControlInput::from_vec).collect(),
        slacks: up.slacks,
        g_rows: rows.to_vec(),
        cost,
        penalized_cost: cost + penalty,
        config_id,
        kkt_residual: up.kkt,
        qp_iterations: up.qp_iterations,
        solve_time: started.elapsed().as_secs_f64(),
    }
}

/// `cfg.sqp_iterations` SQP steps for one configuration from `it`.
pub fn solve_configuration(
    x0: &ErrorState,
    it: &Iterate,
    cfg: &OcpConfig,
    ctx: &OcpContext,
    rows: &[GRow],
    config_id: usize,
) -> Result<OcpSolution, OcpError> {
    solve_sqp(x0, it, cfg, ctx, rows, config_id, cfg.sqp_iterations, 0.0, false)
}

/// Full SQP: iterate until the step falls below `tol` or `max_iter` is hit.
#[allow(clippy::too_many_arguments)]
pub fn solve_sqp(
    x0: &ErrorState,
    it: &Iterate,
    cfg: &OcpConfig,
    ctx: &OcpContext,
    rows: &[GRow],
    config_id: usize,
    max_iter: usize,
    tol: f64,
    hard_g: bool,
) -> Result<OcpSolution, OcpError> {
    let started = Instant::now();
    let mut up = sqp_update(x0, it, cfg, ctx, rows, hard_g)?;
    let mut qp_iters = up.qp_iterations;
    for _ in 1..max_iter {
        if up.step <= tol {
            break;
        }
        up = sqp_update(x0, &up.iterate, cfg, ctx, rows, hard_g)?;
        qp_iters += up.qp_iterations;
    }
    up.qp_iterations = qp_iters;
    Ok(finish(up, cfg, ctx, rows, config_id, started))
}

/// Outcome of solving every configuration.
#[derive(Debug, Clone)]
pub struct Selection {
    pub best: OcpSolution,
    /// No configuration reached zero slack.
    pub degraded: bool,
    /// Per-configuration penalized cost (`None` when its QP failed).
    pub costs: Vec<Option<f64>>,
    pub wall_time: f64,
}

/// Residual below which growth is not treated as divergence.
pub const DIVERGENCE_FLOOR: f64 = 1e6;

/// Slack level counted as zero.
pub const SLACK_TOL: f64 = 1e-6;

/// Solves all configurations concurrently from the same iterate and picks
/// the cheapest zero-slack solution, falling back to the cheapest penalized
/// one (flagged degraded).
pub fn solve_all_configurations(
    x0: &ErrorState,
    it: &Iterate,
    configs: &[YieldConfiguration],
    table: &IntervalTable,
    cfg: &OcpConfig,
    ctx: &OcpContext,
) -> Result<Selection, OcpError> {
    if configs.is_empty() {
        return Err(OcpError::BadDimensions("at least one configuration required".into()));
    }
    let started = Instant::now();
    let results: Vec<Result<OcpSolution, OcpError>> = configs
        .par_iter()
        .map(|c| {
            let rows = g_rows(table, c, cfg.horizon_m);
            solve_configuration(x0, it, cfg, ctx, &rows, c.id)
        })
        .collect();
    let costs = results.iter().map(|r| r.as_ref().ok().map(|s| s.penalized_cost)).collect();
    let ok: Vec<&OcpSolution> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
    if ok.is_empty() {
        let msg = results.iter().filter_map(|r| r.as_ref().err()).map(|e| e.to_string()).collect::<Vec<_>>().join("; ");
        return Err(OcpError::AllFailed(msg));
    }
    let by = |a: &&OcpSolution, b: &&OcpSolution, key: fn(&OcpSolution) -> f64| {
        key(a).partial_cmp(&key(b)).unwrap_or(std::cmp::Ordering::Equal).then(a.config_id.cmp(&b.config_id))
    };
    let clean = ok.iter().filter(|s| s.max_slack() <= SLACK_TOL).min_by(|a, b| by(a, b, |s| s.cost));
    let (best, degraded) = match clean {
        Some(s) => ((*s).clone(), false),
        None => ((*ok.iter().min_by(|a, b| by(a, b, |s| s.penalized_cost)).unwrap()).clone(), true),
    };
    Ok(Selection { best, degraded, costs, wall_time: started.elapsed().as_secs_f64() })
}

/// Stateful real-time-iteration controller: keeps the shifted iterate and
/// monitors divergence.
#[derive(Debug, Clone)]
pub struct RtiController {
    pub cfg: OcpConfig,
    iterate: Option<Iterate>,
    history: VecDeque<f64>,
}

impl RtiController {
    pub fn new(cfg: OcpConfig) -> Result<Self, OcpError> {
        cfg.validate()?;
        Ok(RtiController { cfg, iterate: None, history: VecDeque::new() })
    }

    pub fn iterate(&self) -> Option<&Iterate> {
        self.iterate.as_ref()
    }

    /// One control step: solve all configurations from the current iterate
    /// (cold-started on first use), then shift the selected solution.
    pub fn step(
        &mut self,
        x0: &ErrorState,
        configs: &[YieldConfiguration],
        table: &IntervalTable,
        ctx: &OcpContext,
    ) -> Result<Selection, OcpError> {
        let it = match self.iterate.take() {
            Some(it) => it,
            None => Iterate::cold_start(x0, ctx.path, &self.cfg),
        };
        let sel = solve_all_configurations(x0, &it, configs, table, &self.cfg, ctx)?;
        self.record(sel.best.kkt_residual)?;
        self.iterate = Some(sel.best.iterate().shifted());
        Ok(sel)
    }

    /// Re-linearizes without shifting (for repeated solves of a frozen scene).
    pub fn step_in_place(
        &mut self,
        x0: &ErrorState,
        configs: &[YieldConfiguration],
        table: &IntervalTable,
        ctx: &OcpContext,
    ) -> Result<Selection, OcpError> {
        let it = match self.iterate.take() {
            Some(it) => it,
            None => Iterate::cold_start(x0, ctx.path, &self.cfg),
        };
        let sel = solve_all_configurations(x0, &it, configs, table, &self.cfg, ctx)?;
        self.record(sel.best.kkt_residual)?;
        self.iterate = Some(sel.best.iterate());
        Ok(sel)
    }

    fn record(&mut self, r: f64) -> Result<(), OcpError> {
        self.history.push_back(r);
        if self.history.len() > 6 {
            self.history.pop_front();
        }
        if self.history.len() == 6 {
            let growing = self.history.iter().zip(self.history.iter().skip(1)).all(|(a, b)| b > a);
            if growing && self.history[5] > 10.0 * self.history[0] && self.history[5] > DIVERGENCE_FLOOR {
                return Err(OcpError::Diverged(self.history[5]));
            }
        }
        if !r.is_finite() {
            return Err(OcpError::Diverged(r));
        }
        Ok(())
    }

    pub fn reset(&mut self) {
        self.iterate = None;
        self.history.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::PathSpec;
    use crate::terminal::{synthesize, TerminalConfig};
    use std::sync::OnceLock;

    fn terminal() -> &'static TerminalData {
        static T: OnceLock<TerminalData> = OnceLock::new();
        T.get_or_init(|| TerminalData::from_ingredients(&synthesize(&TerminalConfig::default()).unwrap()).unwrap())
    }

    fn setup() -> (ReferencePath, VehicleParams) {
        (PathSpec::straight(200.0, 8.0).build(2.9).unwrap(), VehicleParams::default())
    }

    #[test]
    fn dimension_count_with_one_yield_row_per_stage() {
        let (path, vehicle) = setup();
        let ctx = OcpContext { path: &path, vehicle: &vehicle, terminal: terminal(), extent: EgoExtent::default() };
        let cfg = OcpConfig::default();
        let x0 = ErrorState { v: 8.0, ..Default::default() };
        let it = Iterate::cold_start(&x0, &path, &cfg);
        let rows: Vec<GRow> = (1..=100).map(|n| GRow { step: n, obstacle: 0, decision: Decision::Yield, sigma: 150.0 }).collect();
        let tr = transcribe(&x0, &it, &cfg, &ctx, &rows, false).unwrap();
        assert_eq!(tr.qp.n(), 7 * 101 + 2 * 100 + 100);
        let tr = transcribe(&x0, &it, &cfg, &ctx, &[], false).unwrap();
        assert_eq!(tr.qp.n(), 7 * 101 + 2 * 100);
    }

    #[test]
    fn collapsed_horizon_builds() {
        let (path, vehicle) = setup();
        let ctx = OcpContext { path: &path, vehicle: &vehicle, terminal: terminal(), extent: EgoExtent::default() };
        let cfg = OcpConfig { horizon_n: 40, horizon_m: 40, ..Default::default() };
        let x0 = ErrorState { v: 2.0, ..Default::default() };
        let it = Iterate::cold_start(&x0, &path, &cfg);
        let sol = solve_sqp(&x0, &it, &cfg, &ctx, &[], 0, 10, 1e-9, false).unwrap();
        assert!(sol.states[40].v.abs() < 1e-6);
    }

    #[test]
    fn shift_repeats_standstill_stage() {
        let (path, _) = setup();
        let cfg = OcpConfig { horizon_n: 2, horizon_m: 4, ..Default::default() };
        let it = Iterate::cold_start(&ErrorState { v: 8.0, ..Default::default() }, &path, &cfg);
        let sh = it.shifted();
        assert_eq!(sh.states.len(), 5);
        assert_eq!(sh.states[0], it.states[1]);
        assert_eq!(sh.states[4], it.states[4]);
        assert_eq!(sh.inputs[3][0], 0.0);
    }
}
