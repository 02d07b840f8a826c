//! Convex QP solver: primal-dual interior point with Mehrotra
//! predictor-corrector on a sparse quasi-definite reduced KKT system.

mod ldl;
mod sparse;

pub use ldl::{reverse_cuthill_mckee, Skyline};
pub use sparse::SparseMatrix;

use nalgebra::DVector;
use thiserror::Error;

/// `minimize ½ xᵀ H x + fᵀ x` subject to `A_eq x = b_eq`, `A_in x ≤ b_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: SparseMatrix,
    pub f: DVector<f64>,
    pub a_eq: SparseMatrix,
    pub b_eq: DVector<f64>,
    pub a_in: SparseMatrix,
    pub b_in: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QpError {
    #[error("inconsistent problem dimensions: {0}")]
    BadDimensions(String),
    #[error("non-finite problem data")]
    NonFinite,
    #[error("problem is infeasible (Farkas certificate with residual {residual:.2e})")]
    Infeasible { y: DVector<f64>, z: DVector<f64>, residual: f64 },
    #[error("no convergence after {iterations} iterations (KKT residual {residual:.2e})")]
    MaxIterations { iterations: usize, residual: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    pub max_iter: usize,
    /// Absolute tolerance on the scaled KKT conditions.
    pub tol: f64,
    /// Tolerance accepted when progress stalls.
    pub stall_tol: f64,
    pub regularization: f64,
    pub refinement_steps: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        QpSettings { max_iter: 80, tol: 1e-9, stall_tol: 1e-6, regularization: 1e-9, refinement_steps: 3 }
    }
}

/// Primal/dual starting point.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub z: DVector<f64>,
}

/// Infinity-norm KKT residuals of the unscaled problem.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktResidual {
    pub stationarity: f64,
    pub equality: f64,
    pub inequality: f64,
    pub complementarity: f64,
    pub dual_sign: f64,
}

impl KktResidual {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.equality).max(self.inequality).max(self.complementarity).max(self.dual_sign)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Multipliers of the equality rows.
    pub y: DVector<f64>,
    /// Multipliers of the inequality rows (nonnegative).
    pub z: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub kkt: KktResidual,
}

impl QpSolution {
    pub fn warm_start(&self) -> WarmStart {
        WarmStart { x: self.x.clone(), y: self.y.clone(), z: self.z.clone() }
    }
}

impl QpProblem {
    /// Problem from dense blocks.
    pub fn from_dense(
        h: &nalgebra::DMatrix<f64>,
        f: &DVector<f64>,
        a_eq: &nalgebra::DMatrix<f64>,
        b_eq: &DVector<f64>,
        a_in: &nalgebra::DMatrix<f64>,
        b_in: &DVector<f64>,
    ) -> Self {
        QpProblem {
            h: SparseMatrix::from_dense(h),
            f: f.clone(),
            a_eq: SparseMatrix::from_dense(a_eq),
            b_eq: b_eq.clone(),
            a_in: SparseMatrix::from_dense(a_in),
            b_in: b_in.clone(),
        }
    }

    pub fn n(&self) -> usize {
        self.f.len()
    }

    fn validate(&self) -> Result<(), QpError> {
        let n = self.n();
        let bad = |m: String| Err(QpError::BadDimensions(m));
        if self.h.nrows() != n || self.h.ncols() != n {
            return bad(format!("H is {}x{}, expected {n}x{n}", self.h.nrows(), self.h.ncols()));
        }
        if self.a_eq.ncols() != n || self.a_eq.nrows() != self.b_eq.len() {
            return bad("equality block".into());
        }
        if self.a_in.ncols() != n || self.a_in.nrows() != self.b_in.len() {
            return bad("inequality block".into());
        }
        let finite = |v: &DVector<f64>| v.iter().all(|x| x.is_finite());
        if !(self.h.is_finite()
            && self.a_eq.is_finite()
            && self.a_in.is_finite()
            && finite(&self.f)
            && finite(&self.b_eq)
            && finite(&self.b_in))
        {
            return Err(QpError::NonFinite);
        }
        Ok(())
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&self.h.mul_vec(x)) + self.f.dot(x)
    }
}

/// KKT residuals of `(x, y, z)` for the unscaled problem.
pub fn kkt_residual(p: &QpProblem, x: &DVector<f64>, y: &DVector<f64>, z: &DVector<f64>) -> KktResidual {
    let stat = p.h.mul_vec(x) + &p.f + p.a_eq.tr_mul_vec(y) + p.a_in.tr_mul_vec(z);
    let eq = p.a_eq.mul_vec(x) - &p.b_eq;
    let slack = &p.b_in - p.a_in.mul_vec(x);
    KktResidual {
        stationarity: stat.amax(),
        equality: eq.amax(),
        inequality: slack.iter().map(|s| (-s).max(0.0)).fold(0.0, f64::max),
        complementarity: slack.iter().zip(z.iter()).map(|(s, z)| (s * z).abs()).fold(0.0, f64::max),
        dual_sign: z.iter().map(|z| (-z).max(0.0)).fold(0.0, f64::max),
    }
}

/// Solves the QP with default settings.
pub fn qp_solve(p: &QpProblem, warm: Option<&WarmStart>) -> Result<QpSolution, QpError> {
    qp_solve_with(p, warm, &QpSettings::default())
}

struct Kkt {
    n: usize,
    p: usize,
    pos: Vec<usize>,
    sky: Skyline,
    signs: Vec<f64>,
    rows_in: Vec<Vec<(usize, f64)>>,
}

impl Kkt {
    fn new(h: &SparseMatrix, e: &SparseMatrix, g: &SparseMatrix) -> Self {
        let n = h.nrows();
        let p = e.nrows();
        let dim = n + p;
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); dim];
        let link = |a: usize, b: usize, adj: &mut Vec<Vec<usize>>| {
            if a != b {
                adj[a].push(b);
                adj[b].push(a);
            }
        };
        for i in 0..n {
            for (j, _) in h.row(i) {
                link(i, j, &mut adj);
            }
        }
        let rows_in: Vec<Vec<(usize, f64)>> = (0..g.nrows()).map(|r| g.row(r).collect()).collect();
        for row in &rows_in {
            for a in 0..row.len() {
                for b in 0..a {
                    link(row[a].0, row[b].0, &mut adj);
                }
            }
        }
        for r in 0..p {
            for (j, _) in e.row(r) {
                link(n + r, j, &mut adj);
            }
        }
        for a in adj.iter_mut() {
            a.sort_unstable();
            a.dedup();
        }
        let perm = reverse_cuthill_mckee(&adj);
        let mut pos = vec![0; dim];
        for (new, old) in perm.iter().enumerate() {
            pos[*old] = new;
        }
        let pattern = adj
            .iter()
            .enumerate()
            .flat_map(|(i, nb)| nb.iter().map(move |&j| (i, j)))
            .filter(|(i, j)| j < i)
            .map(|(i, j)| (pos[i], pos[j]));
        let sky = Skyline::new(dim, pattern.collect::<Vec<_>>().into_iter());
        let mut signs = vec![0.0; dim];
        for i in 0..dim {
            signs[pos[i]] = if i < n { 1.0 } else { -1.0 };
        }
        Kkt { n, p, pos, sky, signs, rows_in }
    }

    fn assemble(&mut self, h: &SparseMatrix, e: &SparseMatrix, w: &DVector<f64>, reg: f64) {
        self.sky.clear();
        let pos = &self.pos;
        for i in 0..self.n {
            for (j, v) in h.row(i) {
                if j <= i {
                    self.sky.add(pos[i], pos[j], v);
                }
            }
            self.sky.add(pos[i], pos[i], reg);
        }
        for (r, row) in self.rows_in.iter().enumerate() {
            let wr = w[r];
            for a in 0..row.len() {
                let (ja, va) = row[a];
                let wa = wr * va;
                for &(jb, vb) in &row[..a] {
                    self.sky.add(pos[ja], pos[jb], wa * vb);
                }
                self.sky.add(pos[ja], pos[ja], wa * va);
            }
        }
        for r in 0..self.p {
            for (j, v) in e.row(r) {
                self.sky.add(pos[self.n + r], pos[j], v);
            }
            self.sky.add(pos[self.n + r], pos[self.n + r], -reg);
        }
        self.sky.factor(&self.signs, 1e-13);
    }

    /// Solves the assembled system with iterative refinement against the
    /// unregularized matrix.
    fn solve(
        &self,
        h: &SparseMatrix,
        e: &SparseMatrix,
        g: &SparseMatrix,
        w: &DVector<f64>,
        r1: &DVector<f64>,
        r2: &DVector<f64>,
        refine: usize,
    ) -> (DVector<f64>, DVector<f64>) {
        let (n, p) = (self.n, self.p);
        let mut sol = vec![0.0; n + p];
        let mut rhs = vec![0.0; n + p];
        for i in 0..n {
            rhs[self.pos[i]] = r1[i];
        }
        for i in 0..p {
            rhs[self.pos[n + i]] = r2[i];
        }
        let mut step = rhs.clone();
        self.sky.solve(&mut step);
        for k in 0..n + p {
            sol[k] = step[k];
        }
        for _ in 0..refine {
            let dx = DVector::from_iterator(n, (0..n).map(|i| sol[self.pos[i]]));
            let dy = DVector::from_iterator(p, (0..p).map(|i| sol[self.pos[n + i]]));
            let gdx = g.mul_vec(&dx).component_mul(w);
            let k1 = h.mul_vec(&dx) + g.tr_mul_vec(&gdx) + e.tr_mul_vec(&dy);
            let k2 = e.mul_vec(&dx);
            let mut res = vec![0.0; n + p];
            let mut worst: f64 = 0.0;
            for i in 0..n {
                res[self.pos[i]] = r1[i] - k1[i];
                worst = worst.max(res[self.pos[i]].abs());
            }
            for i in 0..p {
                res[self.pos[n + i]] = r2[i] - k2[i];
                worst = worst.max(res[self.pos[n + i]].abs());
            }
            if worst <= 1e-14 {
                break;
            }
            self.sky.solve(&mut res);
            for k in 0..n + p {
                sol[k] += res[k];
            }
        }
        (
            DVector::from_iterator(n, (0..n).map(|i| sol[self.pos[i]])),
            DVector::from_iterator(p, (0..p).map(|i| sol[self.pos[n + i]])),
        )
    }
}

fn max_step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    let mut a: f64 = 1.0;
    for (vi, di) in v.iter().zip(dv.iter()) {
        if *di < 0.0 {
            a = a.min(-vi / di);
        }
    }
    a
}

/// Solves the QP. Constraint rows are normalized internally; returned
/// multipliers refer to the original rows.
pub fn qp_solve_with(p: &QpProblem, warm: Option<&WarmStart>, st: &QpSettings) -> Result<QpSolution, QpError> {
    p.validate()?;
    let n = p.n();
    let n_eq = p.b_eq.len();
    let m = p.b_in.len();
    let eq_scale: Vec<f64> = (0..n_eq).map(|i| {
        let r = p.a_eq.row_norm(i);
        if r > 0.0 { 1.0 / r } else { 1.0 }
    }).collect();
    let in_scale: Vec<f64> = (0..m).map(|i| {
        let r = p.a_in.row_norm(i);
        if r > 0.0 { 1.0 / r } else { 1.0 }
    }).collect();
    let e = p.a_eq.scale_rows(&eq_scale);
    let b = DVector::from_iterator(n_eq, (0..n_eq).map(|i| p.b_eq[i] * eq_scale[i]));
    let g = p.a_in.scale_rows(&in_scale);
    let hv = DVector::from_iterator(m, (0..m).map(|i| p.b_in[i] * in_scale[i]));
    let h = &p.h;
    let f = &p.f;

    let mut kkt = Kkt::new(h, &e, &g);
    let reg = st.regularization;

    let finish = |x: DVector<f64>, ys: &DVector<f64>, zs: &DVector<f64>, it: usize| {
        let y = DVector::from_iterator(n_eq, (0..n_eq).map(|i| ys[i] * eq_scale[i]));
        let z = DVector::from_iterator(m, (0..m).map(|i| zs[i] * in_scale[i]));
        let kkt = kkt_residual(p, &x, &y, &z);
        QpSolution { objective: p.objective(&x), x, y, z, iterations: it, kkt }
    };

    let (mut x, mut y, mut z, mut s);
    if let Some(ws) = warm.filter(|w| w.x.len() == n && w.y.len() == n_eq && w.z.len() == m) {
        x = ws.x.clone();
        y = DVector::from_iterator(n_eq, (0..n_eq).map(|i| ws.y[i] / eq_scale[i]));
        z = DVector::from_iterator(m, (0..m).map(|i| ws.z[i] / in_scale[i]));
        s = &hv - g.mul_vec(&x);
        let res = scaled_residuals(h, f, &e, &b, &g, &x, &y, &z, &s);
        if res <= st.tol && s.iter().all(|v| *v >= -st.tol) && z.iter().all(|v| *v >= 0.0) {
            return Ok(finish(x, &y, &z, 0));
        }
        for i in 0..m {
            s[i] = s[i].max(1e-4);
            z[i] = z[i].max(1e-4);
        }
    } else {
        let ones = DVector::from_element(m, 1.0);
        kkt.assemble(h, &e, &ones, reg);
        let r1 = -f + g.tr_mul_vec(&hv);
        let (x0, y0) = kkt.solve(h, &e, &g, &ones, &r1, &b, st.refinement_steps);
        x = x0;
        y = y0;
        let r = &hv - g.mul_vec(&x);
        s = r.clone();
        z = -r;
        if m > 0 {
            let shift_s = -s.min();
            let shift_z = -z.min();
            if shift_s >= 0.0 {
                s.add_scalar_mut(1.0 + shift_s);
            }
            if shift_z >= 0.0 {
                z.add_scalar_mut(1.0 + shift_z);
            }
        }
    }

    let mut best: Option<(f64, DVector<f64>, DVector<f64>, DVector<f64>, usize)> = None;
    let mut since_best = 0;
    for it in 0..st.max_iter {
        let r_d = h.mul_vec(&x) + f + e.tr_mul_vec(&y) + g.tr_mul_vec(&z);
        let r_e = e.mul_vec(&x) - &b;
        let r_i = g.mul_vec(&x) + &s - &hv;
        let comp = s.iter().zip(z.iter()).map(|(a, b)| a * b).fold(0.0, f64::max);
        let res = r_d.amax().max(r_e.amax()).max(r_i.amax()).max(comp);
        if res <= st.tol {
            return Ok(finish(x, &y, &z, it));
        }
        if best.as_ref().map_or(true, |b| res < b.0) {
            best = Some((res, x.clone(), y.clone(), z.clone(), it));
            since_best = 0;
        } else {
            since_best += 1;
        }
        if let Some((b_res, bx, by, bz, b_it)) = &best {
            let diverging = res > 1e3 * b_res || since_best >= 8;
            if diverging && *b_res <= st.stall_tol {
                return Ok(finish(bx.clone(), by, bz, *b_it));
            }
        }
        // Farkas certificate: E'y + G'z ≈ 0 with b'y + h'z < 0.
        let norm = y.amax().max(z.amax());
        if norm > 0.0 {
            let ray = (e.tr_mul_vec(&y) + g.tr_mul_vec(&z)).amax() / norm;
            let gap = (b.dot(&y) + hv.dot(&z)) / norm;
            if ray <= 1e-9 && gap < -1e-7 && norm > 1e6 {
                let yo = DVector::from_iterator(n_eq, (0..n_eq).map(|i| y[i] * eq_scale[i] / norm));
                let zo = DVector::from_iterator(m, (0..m).map(|i| z[i] * in_scale[i] / norm));
                return Err(QpError::Infeasible { y: yo, z: zo, residual: ray });
            }
        }
        let mu = if m > 0 { s.dot(&z) / m as f64 } else { 0.0 };
        let w = z.component_div(&s);
        kkt.assemble(h, &e, &w, reg);

        let solve_dir = |r_c: &DVector<f64>| {
            // dz = S⁻¹(−r_c + Z r_i) + W G dx ; ds = −r_i − G dx
            let t = (r_c - z.component_mul(&r_i)).component_div(&s);
            let r1 = -&r_d + g.tr_mul_vec(&t);
            let r2 = -&r_e;
            let (dx, dy) = kkt.solve(h, &e, &g, &w, &r1, &r2, st.refinement_steps);
            let gdx = g.mul_vec(&dx);
            let dz = -&t + w.component_mul(&gdx);
            let ds = -&r_i - gdx;
            (dx, dy, dz, ds)
        };

        let r_c_aff = s.component_mul(&z);
        let (dx_a, dy_a, dz_a, ds_a) = solve_dir(&r_c_aff);
        let (dx, dy, dz, ds) = if m > 0 {
            let alpha_aff = max_step(&s, &ds_a).min(max_step(&z, &dz_a));
            let mu_aff = (&s + &ds_a * alpha_aff).dot(&(&z + &dz_a * alpha_aff)) / m as f64;
            let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);
            let r_c = &r_c_aff + ds_a.component_mul(&dz_a) - DVector::from_element(m, sigma * mu);
            solve_dir(&r_c)
        } else {
            (dx_a, dy_a, dz_a, ds_a)
        };
        let alpha = if m > 0 { (0.99 * max_step(&s, &ds).min(max_step(&z, &dz))).min(1.0) } else { 1.0 };
        x += &dx * alpha;
        y += &dy * alpha;
        z += &dz * alpha;
        s += &ds * alpha;
        for i in 0..m {
            s[i] = s[i].max(1e-300);
            z[i] = z[i].max(1e-300);
        }
    }
    if let Some((b_res, bx, by, bz, b_it)) = best {
        if b_res <= st.stall_tol {
            return Ok(finish(bx, &by, &bz, b_it));
        }
    }
    let sol = finish(x, &y, &z, st.max_iter);
    Err(QpError::MaxIterations { iterations: st.max_iter, residual: sol.kkt.max() })
}

#[allow(clippy::too_many_arguments)]
fn scaled_residuals(
    h: &SparseMatrix,
    f: &DVector<f64>,
    e: &SparseMatrix,
    b: &DVector<f64>,
    g: &SparseMatrix,
    x: &DVector<f64>,
    y: &DVector<f64>,
    z: &DVector<f64>,
    s: &DVector<f64>,
) -> f64 {
    let r_d = h.mul_vec(x) + f + e.tr_mul_vec(y) + g.tr_mul_vec(z);
    let r_e = e.mul_vec(x) - b;
    let slack_viol = s.iter().map(|v| (-v).max(0.0)).fold(0.0, f64::max);
    let comp = s.iter().zip(z.iter()).map(|(a, b)| (a * b).abs()).fold(0.0, f64::max);
    r_d.amax().max(r_e.amax()).max(slack_viol).max(comp)
}
