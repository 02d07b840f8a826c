//! Offline synthesis and verification of terminal gains, costs and sets.

mod embedding;
mod linalg;

pub use embedding::{
    beta_bound, lateral_continuous, lateral_embedding, longitudinal_continuous, secant_slope_range, LateralBounds,
    LateralEmbedding,
};
pub use linalg::{
    dare, decrease_slack, discrete_lyapunov, lqr_gain, lyapunov_terminal_cost, min_eigenvalue, spectral_radius,
    zoh_discretize, LyapunovCost,
};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    control_invariance_certificate, invariance_certificate, max_control_invariant_set, max_invariant_set,
    GeometryError, HPolytope, SUPPORT_TOL,
};
use crate::models::{ErrorState, ModelError, VehicleParams};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TerminalError {
    #[error("pair is not stabilizable (Riccati iteration diverged)")]
    NotStabilizable,
    #[error("no common Lyapunov function certifies all vertices")]
    InfeasibleCommonLyapunov,
    #[error("closed loop is not Schur stable")]
    UnstableClosedLoop,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Longitudinal tuning and admissible error region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongitudinalTuning {
    /// LQR weights on `(e_v, e_a)` and the input.
    pub lqr_q: [f64; 2],
    pub lqr_r: f64,
    /// Stage-cost weights the terminal cost must dominate.
    pub cost_q: [f64; 2],
    pub cost_r: f64,
    /// Admissible region rows `n·(e_v, e_a) ≤ b`.
    pub rows: Vec<([f64; 2], f64)>,
    /// Bounds on the acceleration-request error.
    pub input_bounds: [f64; 2],
}

impl Default for LongitudinalTuning {
    fn default() -> Self {
        LongitudinalTuning {
            lqr_q: [5e-3, 1.0],
            lqr_r: 1.0,
            cost_q: [1.0, 1.0],
            cost_r: 4.0,
            rows: vec![
                ([1.0, 0.0], 5.0 / 3.6),
                ([0.0, 1.0], 1.0),
                ([0.0, -1.0], 4.0),
                ([1.0, 1.0], 1.4),
                ([-2.0, -1.0], 32.0),
            ],
            input_bounds: [-3.95, 0.95],
        }
    }
}

/// Lateral tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LateralTuning {
    pub lqr_q: [f64; 4],
    pub lqr_r: f64,
    /// Parameter `(ν_ψ, ν_δ)` at which the LQR gain is designed.
    pub nominal: [f64; 2],
    pub cost_q: [f64; 4],
    pub cost_r: f64,
    pub bounds: LateralBounds,
}

impl Default for LateralTuning {
    fn default() -> Self {
        LateralTuning {
            lqr_q: [1.0, 500.0, 1.0, 0.1],
            lqr_r: 1e-4,
            nominal: [13.89, 4.79],
            cost_q: [1.0, 1.0, 10.0, 1.0],
            cost_r: 10.0,
            bounds: LateralBounds::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminalConfig {
    #[serde(default)]
    pub vehicle: VehicleParams,
    #[serde(default = "default_ts")]
    pub ts: f64,
    #[serde(default)]
    pub longitudinal: LongitudinalTuning,
    #[serde(default)]
    pub lateral: LateralTuning,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_ts() -> f64 {
    0.05
}

fn default_max_iter() -> usize {
    200
}

impl Default for TerminalConfig {
    fn default() -> Self {
        TerminalConfig {
            vehicle: VehicleParams::default(),
            ts: default_ts(),
            longitudinal: LongitudinalTuning::default(),
            lateral: LateralTuning::default(),
            max_iter: default_max_iter(),
        }
    }
}

/// Serializable H-representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolytopeData {
    pub normals: Vec<Vec<f64>>,
    pub offsets: Vec<f64>,
}

impl PolytopeData {
    pub fn from_polytope(p: &HPolytope) -> Self {
        PolytopeData {
            normals: (0..p.n_rows()).map(|i| p.normals().row(i).iter().copied().collect()).collect(),
            offsets: p.offsets().iter().copied().collect(),
        }
    }

    pub fn to_polytope(&self, dim: usize) -> Result<HPolytope, GeometryError> {
        if self.normals.iter().any(|r| r.len() != dim) || self.normals.len() != self.offsets.len() {
            return Err(GeometryError::DimensionMismatch { expected: dim, found: self.normals.first().map_or(0, |r| r.len()) });
        }
        let flat: Vec<f64> = self.normals.iter().flatten().copied().collect();
        HPolytope::new(DMatrix::from_row_slice(self.offsets.len(), dim, &flat), DVector::from_vec(self.offsets.clone()))
    }
}

/// One pass/fail check with its numeric margin (pass iff `margin ≥ −tolerance`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub name: String,
    pub margin: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Certificate {
    pub fn new(name: impl Into<String>, margin: f64, tolerance: f64) -> Self {
        Certificate { name: name.into(), margin, tolerance, passed: margin.is_finite() && margin >= -tolerance }
    }
}

/// Terminal ingredients artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminalIngredients {
    pub vehicle: VehicleParams,
    pub ts: f64,
    pub k_lon: Vec<f64>,
    pub p_lon: Vec<Vec<f64>>,
    pub f_lon: Vec<Vec<f64>>,
    pub x_lon: PolytopeData,
    pub lon_input_bounds: [f64; 2],
    pub k_lat: Vec<f64>,
    pub p_lat: Vec<Vec<f64>>,
    pub f_lat: Vec<Vec<f64>>,
    pub x_lat: PolytopeData,
    pub embedding: LateralEmbedding,
    pub certificates: Vec<Certificate>,
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let r = rows.len();
    let c = rows.first().map_or(0, |x| x.len());
    DMatrix::from_row_iterator(r, c, rows.iter().flatten().copied())
}

impl TerminalIngredients {
    pub fn k_lon_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, self.k_lon.len(), &self.k_lon)
    }

    pub fn k_lat_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, self.k_lat.len(), &self.k_lat)
    }

    pub fn p_lon_matrix(&self) -> DMatrix<f64> {
        from_rows(&self.p_lon)
    }

    pub fn p_lat_matrix(&self) -> DMatrix<f64> {
        from_rows(&self.p_lat)
    }

    pub fn lon_set(&self) -> Result<HPolytope, GeometryError> {
        self.x_lon.to_polytope(2)
    }

    pub fn lat_set(&self) -> Result<HPolytope, GeometryError> {
        self.x_lat.to_polytope(4)
    }

    /// Block-diagonal terminal weight on `(e_y, e_ψ, e_δ, e_α, e_v, e_a)`.
    pub fn terminal_weight(&self) -> DMatrix<f64> {
        let mut p = DMatrix::zeros(6, 6);
        p.view_mut((0, 0), (4, 4)).copy_from(&self.p_lat_matrix());
        p.view_mut((4, 4), (2, 2)).copy_from(&self.p_lon_matrix());
        p
    }

    /// Discrete longitudinal pair `(A, B)`.
    pub fn longitudinal_system(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let (a, b) = longitudinal_continuous(&self.vehicle);
        zoh_discretize(&a, &b, self.ts)
    }

    /// Discrete lateral closed loops at every embedding vertex.
    pub fn lateral_closed_loops(&self) -> Vec<DMatrix<f64>> {
        let k = self.k_lat_matrix();
        self.embedding
            .vertices
            .iter()
            .map(|nu| {
                let (ac, bc) = lateral_continuous(*nu, &self.vehicle);
                let (a, b) = zoh_discretize(&ac, &bc, self.ts);
                a - b * &k
            })
            .collect()
    }

    pub fn all_certificates_pass(&self) -> bool {
        self.certificates.iter().all(|c| c.passed)
    }
}

/// Maximal control-invariant longitudinal error set for the admissible rows
/// and the acceleration-request error bounds.
pub fn build_longitudinal_set(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    tuning: &LongitudinalTuning,
    max_iter: usize,
) -> Result<HPolytope, TerminalError> {
    let x0 = longitudinal_admissible(tuning)?;
    let bv = b.column(0).into_owned();
    Ok(max_control_invariant_set(a, &bv, tuning.input_bounds[0], tuning.input_bounds[1], &x0, max_iter)?.set)
}

/// Maximal invariant subset of the admissible longitudinal rows under the
/// fixed feedback `u = −K e`, with the input bounds imposed on `−K e`.
pub fn longitudinal_closed_loop_set(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    k: &DMatrix<f64>,
    tuning: &LongitudinalTuning,
    max_iter: usize,
) -> Result<HPolytope, TerminalError> {
    let k_row = [k[(0, 0)], k[(0, 1)]];
    let input_rows = HPolytope::from_rows(
        2,
        &[
            (vec![-k_row[0], -k_row[1]], tuning.input_bounds[1]),
            (vec![k_row[0], k_row[1]], -tuning.input_bounds[0]),
        ],
    )?;
    let x0 = longitudinal_admissible(tuning)?.intersect(&input_rows)?;
    Ok(max_invariant_set(&[a - b * k], &x0, max_iter)?.set)
}

fn longitudinal_admissible(tuning: &LongitudinalTuning) -> Result<HPolytope, GeometryError> {
    let rows: Vec<(Vec<f64>, f64)> = tuning.rows.iter().map(|(n, o)| (n.to_vec(), *o)).collect();
    HPolytope::from_rows(2, &rows)
}

/// Robust invariant lateral set under every vertex closed loop.
pub fn build_lateral_set(
    emb: &LateralEmbedding,
    k_lat: &DMatrix<f64>,
    closed_loops: &[DMatrix<f64>],
    max_iter: usize,
) -> Result<HPolytope, TerminalError> {
    let ub = [emb.e_y_bar, emb.e_psi_bar, emb.e_delta_bar, emb.e_alpha_bar];
    let lo: Vec<f64> = ub.iter().map(|v| -v).collect();
    let k: Vec<f64> = k_lat.row(0).iter().copied().collect();
    let neg: Vec<f64> = k.iter().map(|v| -v).collect();
    let x0 = HPolytope::from_box(&lo, &ub).intersect(&HPolytope::from_rows(4, &[(k, emb.rho_bar), (neg, emb.rho_bar)])?)?;
    Ok(max_invariant_set(closed_loops, &x0, max_iter)?.set)
}

/// Feedback `−K e` clamped into the interval of admissible inputs that keep
/// the successor inside `set`.
pub fn projected_feedback(
    set: &HPolytope,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    k: &DMatrix<f64>,
    bounds: [f64; 2],
    x: &DVector<f64>,
) -> f64 {
    let ax = a * x;
    let hb = set.normals() * b.column(0);
    let hax = set.normals() * ax;
    let (mut lo, mut hi) = (bounds[0], bounds[1]);
    for i in 0..set.n_rows() {
        let room = set.offsets()[i] - hax[i];
        if hb[i] > 1e-14 {
            hi = hi.min(room / hb[i]);
        } else if hb[i] < -1e-14 {
            lo = lo.max(room / hb[i]);
        }
    }
    let u = -(k * x)[0];
    if lo > hi {
        return u.clamp(bounds[0], bounds[1]);
    }
    u.clamp(lo, hi)
}

/// Full synthesis: gains, Lyapunov costs, invariant sets and certificates.
pub fn synthesize(cfg: &TerminalConfig) -> Result<TerminalIngredients, TerminalError> {
    cfg.vehicle.validate()?;
    if cfg.ts <= 0.0 {
        return Err(TerminalError::InvalidConfig("ts must be positive".into()));
    }
    let p = &cfg.vehicle;
    let lon = &cfg.longitudinal;
    let (a_lon, b_lon) = {
        let (a, b) = longitudinal_continuous(p);
        zoh_discretize(&a, &b, cfg.ts)
    };
    let k_lon = lqr_gain(
        &a_lon,
        &b_lon,
        &DMatrix::from_diagonal(&DVector::from_row_slice(&lon.lqr_q)),
        &DMatrix::from_element(1, 1, lon.lqr_r),
    )?;
    let f_lon = DMatrix::from_diagonal(&DVector::from_row_slice(&lon.cost_q)) + k_lon.transpose() * &k_lon * lon.cost_r;
    let p_lon = lyapunov_terminal_cost(&[&a_lon - &b_lon * &k_lon], &f_lon)?;
    let x_lon = build_longitudinal_set(&a_lon, &b_lon, lon, cfg.max_iter)?;

    let lat = &cfg.lateral;
    let emb = lateral_embedding(p, &lat.bounds);
    let (a_nom, b_nom) = {
        let (a, b) = lateral_continuous(lat.nominal, p);
        zoh_discretize(&a, &b, cfg.ts)
    };
    let k_lat = lqr_gain(
        &a_nom,
        &b_nom,
        &DMatrix::from_diagonal(&DVector::from_row_slice(&lat.lqr_q)),
        &DMatrix::from_element(1, 1, lat.lqr_r),
    )?;
    let loops: Vec<DMatrix<f64>> = emb
        .vertices
        .iter()
        .map(|nu| {
            let (ac, bc) = lateral_continuous(*nu, p);
            let (a, b) = zoh_discretize(&ac, &bc, cfg.ts);
            a - b * &k_lat
        })
        .collect();
    if loops.iter().any(|a| spectral_radius(a) >= 1.0) {
        return Err(TerminalError::UnstableClosedLoop);
    }
    let f_lat = DMatrix::from_diagonal(&DVector::from_row_slice(&lat.cost_q)) + k_lat.transpose() * &k_lat * lat.cost_r;
    let p_lat = lyapunov_terminal_cost(&loops, &f_lat)?;
    let x_lat = build_lateral_set(&emb, &k_lat, &loops, cfg.max_iter)?;

    let mut ing = TerminalIngredients {
        vehicle: *p,
        ts: cfg.ts,
        k_lon: k_lon.row(0).iter().copied().collect(),
        p_lon: to_rows(&p_lon.p),
        f_lon: to_rows(&f_lon),
        x_lon: PolytopeData::from_polytope(&x_lon),
        lon_input_bounds: lon.input_bounds,
        k_lat: k_lat.row(0).iter().copied().collect(),
        p_lat: to_rows(&p_lat.p),
        f_lat: to_rows(&f_lat),
        x_lat: PolytopeData::from_polytope(&x_lat),
        embedding: emb,
        certificates: Vec::new(),
    };
    ing.certificates = verify_ingredients(&ing, 1e-7)?;
    Ok(ing)
}

/// Recomputes every certificate of an artifact. `decrease_tol` is the allowed
/// negative eigenvalue slack of the Lyapunov decrease conditions.
pub fn verify_ingredients(ing: &TerminalIngredients, decrease_tol: f64) -> Result<Vec<Certificate>, TerminalError> {
    let mut out = Vec::new();
    let (a_lon, b_lon) = ing.longitudinal_system();
    let k_lon = ing.k_lon_matrix();
    let p_lon = ing.p_lon_matrix();
    let f_lon = from_rows(&ing.f_lon);
    out.push(Certificate::new("lon closed loop stable", 1.0 - spectral_radius(&(&a_lon - &b_lon * &k_lon)), 0.0));
    out.push(Certificate::new("lon cost positive definite", min_eigenvalue(&p_lon), 0.0));
    out.push(Certificate::new("lon cost decrease", decrease_slack(&p_lon, &(&a_lon - &b_lon * &k_lon), &f_lon), decrease_tol));
    let x_lon = ing.lon_set()?;
    let bv = b_lon.column(0).into_owned();
    let cert = control_invariance_certificate(&x_lon, &a_lon, &bv, ing.lon_input_bounds[0], ing.lon_input_bounds[1])?;
    out.push(Certificate::new("lon set control invariant", -cert, SUPPORT_TOL));
    out.push(Certificate::new("lon set contains origin", -x_lon.max_violation(&DVector::zeros(2)), 0.0));

    let loops = ing.lateral_closed_loops();
    let p_lat = ing.p_lat_matrix();
    let f_lat = from_rows(&ing.f_lat);
    out.push(Certificate::new("lat cost positive definite", min_eigenvalue(&p_lat), 0.0));
    for (i, a) in loops.iter().enumerate() {
        out.push(Certificate::new(format!("lat vertex {i} stable"), 1.0 - spectral_radius(a), 0.0));
        out.push(Certificate::new(format!("lat vertex {i} cost decrease"), decrease_slack(&p_lat, a, &f_lat), decrease_tol));
    }
    let x_lat = ing.lat_set()?;
    out.push(Certificate::new("lat set robustly invariant", -invariance_certificate(&x_lat, &loops)?, SUPPORT_TOL));
    out.push(Certificate::new("lat set contains origin", -x_lat.max_violation(&DVector::zeros(4)), 0.0));
    Ok(out)
}

/// Monte-Carlo invariance check: random members of the longitudinal set under
/// the projected feedback and of the lateral set under randomly switched vertex
/// loops. Returns the number of escapes for each.
pub fn monte_carlo_invariance(ing: &TerminalIngredients, samples: usize, steps: usize, seed: u64) -> Result<(usize, usize), TerminalError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x_lon = ing.lon_set()?;
    let (a, b) = ing.longitudinal_system();
    let k = ing.k_lon_matrix();
    let lon_members = sample_members(&x_lon, samples, &mut rng, [-20.0, -5.0], [2.0, 2.0]);
    let mut lon_escapes = 0;
    for x0 in lon_members {
        let mut x = x0;
        for _ in 0..steps {
            let u = projected_feedback(&x_lon, &a, &b, &k, ing.lon_input_bounds, &x);
            x = &a * &x + b.column(0) * u;
            if !x_lon.contains(&x)? {
                lon_escapes += 1;
                break;
            }
        }
    }
    let x_lat = ing.lat_set()?;
    let loops = ing.lateral_closed_loops();
    let bound = [ing.embedding.e_y_bar, ing.embedding.e_psi_bar, ing.embedding.e_delta_bar, ing.embedding.e_alpha_bar];
    let lat_members = sample_members_nd(&x_lat, samples, &mut rng, &bound);
    let mut lat_escapes = 0;
    for x0 in lat_members {
        let mut x = x0;
        for _ in 0..steps {
            x = &loops[rng.gen_range(0..loops.len())] * &x;
            if !x_lat.contains(&x)? {
                lat_escapes += 1;
                break;
            }
        }
    }
    Ok((lon_escapes, lat_escapes))
}

fn sample_members(set: &HPolytope, n: usize, rng: &mut ChaCha8Rng, lo: [f64; 2], hi: [f64; 2]) -> Vec<DVector<f64>> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let x = DVector::from_vec(vec![rng.gen_range(lo[0]..hi[0]), rng.gen_range(lo[1]..hi[1])]);
        if set.max_violation(&x) <= 0.0 {
            out.push(x);
        }
    }
    out
}

/// Rejection sampling inside a box, mixed with random scalings of accepted
/// boundary directions so thin sets are covered.
fn sample_members_nd(set: &HPolytope, n: usize, rng: &mut ChaCha8Rng, bound: &[f64]) -> Vec<DVector<f64>> {
    let dim = bound.len();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let dir = DVector::from_iterator(dim, bound.iter().map(|b| rng.gen_range(-b..*b)));
        // Largest feasible scaling along `dir`, then a random fraction of it.
        let proj = set.normals() * &dir;
        let mut t_max = f64::INFINITY;
        for i in 0..set.n_rows() {
            if proj[i] > 0.0 {
                t_max = t_max.min(set.offsets()[i] / proj[i]);
            }
        }
        if !t_max.is_finite() {
            continue;
        }
        let x = dir * (t_max * rng.gen_range(0.0..1.0f64).powf(1.0 / dim as f64));
        if set.max_violation(&x) <= 0.0 {
            out.push(x);
        }
    }
    out
}

/// Reference values the terminal coordinates are measured against.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ReferencePoint {
    pub v_ref: f64,
    pub a_ref: f64,
    pub delta_ref: f64,
    pub alpha_ref: f64,
}

/// Lateral terminal coordinates `(e_y, e_ψ, δ − δ^r, α − α^r)`.
pub fn lateral_coordinates(x: &ErrorState, r: &ReferencePoint) -> DVector<f64> {
    DVector::from_vec(vec![x.e_y, x.e_psi, x.delta - r.delta_ref, x.alpha - r.alpha_ref])
}

/// Longitudinal terminal coordinates `(v − v^r, a − a^r)`.
pub fn longitudinal_coordinates(x: &ErrorState, r: &ReferencePoint) -> DVector<f64> {
    DVector::from_vec(vec![x.v - r.v_ref, x.a - r.a_ref])
}

#[derive(Debug, Clone, PartialEq)]
pub struct TerminalMembership {
    pub member: bool,
    pub lon_residuals: DVector<f64>,
    pub lat_residuals: DVector<f64>,
}

/// Membership in the shifted terminal set, intersected with `v ≥ 0`.
pub fn terminal_membership(
    x: &ErrorState,
    r: &ReferencePoint,
    lon: &HPolytope,
    lat: &HPolytope,
) -> TerminalMembership {
    let lon_residuals = lon.residuals(&longitudinal_coordinates(x, r));
    let lat_residuals = lat.residuals(&lateral_coordinates(x, r));
    let member = x.v >= 0.0
        && lon_residuals.iter().all(|v| *v <= 1e-9)
        && lat_residuals.iter().all(|v| *v <= 1e-9);
    TerminalMembership { member, lon_residuals, lat_residuals }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SafeSetResiduals {
    /// Residuals of `v = 0`, `a = 0`, `a_req = 0`, `α = 0`.
    pub equalities: [f64; 4],
    /// Lateral terminal rows (≤ 0 when satisfied).
    pub lateral: DVector<f64>,
}

impl SafeSetResiduals {
    pub fn satisfied(&self, tol: f64) -> bool {
        self.equalities.iter().all(|e| e.abs() <= tol) && self.lateral.iter().all(|v| *v <= tol)
    }
}

/// Safe-set rows at the final stage: standstill plus lateral terminal rows.
/// The steering-rate reference is zero at standstill.
pub fn safe_set_residuals(x: &ErrorState, a_req: f64, delta_ref: f64, lat: &HPolytope) -> SafeSetResiduals {
    let r = ReferencePoint { delta_ref, ..Default::default() };
    SafeSetResiduals { equalities: [x.v, x.a, a_req, x.alpha], lateral: lat.residuals(&lateral_coordinates(x, &r)) }
}

/// Generic single-input linear system for toy syntheses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSystemConfig {
    pub a_c: Vec<Vec<f64>>,
    pub b_c: Vec<Vec<f64>>,
    pub ts: f64,
    pub q: Vec<f64>,
    pub r: f64,
    pub x_lo: Vec<f64>,
    pub x_hi: Vec<f64>,
    pub u_lo: f64,
    pub u_hi: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearIngredients {
    pub k: Vec<f64>,
    pub p: Vec<Vec<f64>>,
    pub set: PolytopeData,
    pub certificates: Vec<Certificate>,
}

/// LQR gain, Lyapunov cost and closed-loop invariant set of a linear system.
pub fn synthesize_linear(cfg: &LinearSystemConfig) -> Result<LinearIngredients, TerminalError> {
    let n = cfg.a_c.len();
    if n == 0 || cfg.b_c.len() != n || cfg.q.len() != n || cfg.x_lo.len() != n || cfg.x_hi.len() != n {
        return Err(TerminalError::InvalidConfig("inconsistent dimensions".into()));
    }
    if cfg.ts <= 0.0 || cfg.r <= 0.0 || cfg.u_lo >= cfg.u_hi {
        return Err(TerminalError::InvalidConfig("ts, r and input bounds must be valid".into()));
    }
    let (a, b) = zoh_discretize(&from_rows(&cfg.a_c), &from_rows(&cfg.b_c), cfg.ts);
    let q = DMatrix::from_diagonal(&DVector::from_row_slice(&cfg.q));
    let r = DMatrix::from_element(1, 1, cfg.r);
    let k = lqr_gain(&a, &b, &q, &r)?;
    let a_cl = &a - &b * &k;
    let f = &q + k.transpose() * &k * cfg.r;
    let p = lyapunov_terminal_cost(&[a_cl.clone()], &f)?;
    let krow: Vec<f64> = k.row(0).iter().copied().collect();
    let neg: Vec<f64> = krow.iter().map(|v| -v).collect();
    let x0 = HPolytope::from_box(&cfg.x_lo, &cfg.x_hi)
        .intersect(&HPolytope::from_rows(n, &[(neg, cfg.u_hi), (krow.clone(), -cfg.u_lo)])?)?;
    let set = max_invariant_set(&[a_cl.clone()], &x0, cfg.max_iter)?.set;
    let certificates = vec![
        Certificate::new("closed loop stable", 1.0 - spectral_radius(&a_cl), 0.0),
        Certificate::new("cost positive definite", min_eigenvalue(&p.p), 0.0),
        Certificate::new("cost decrease", p.min_slack, 1e-7),
        Certificate::new("set invariant", -invariance_certificate(&set, &[a_cl])?, SUPPORT_TOL),
    ];
    Ok(LinearIngredients { k: krow, p: to_rows(&p.p), set: PolytopeData::from_polytope(&set), certificates })
}
