//! Dense simplex for `maximize c·x subject to A x <= b` with free `x`.
//!
//! The problem is solved through its dual `minimize b·y s.t. Aᵀy = c, y >= 0`,
//! whose tableau has only `dim(x)` rows. The optimal simplex multipliers of the
//! dual are the primal maximizer.

use nalgebra::{DMatrix, DVector};

const PIVOT_TOL: f64 = 1e-11;
const FEAS_TOL: f64 = 1e-9;

/// `maximize cost·x` subject to `constraint_normals · x <= constraint_offsets`.
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub cost: DVector<f64>,
    pub constraint_normals: DMatrix<f64>,
    pub constraint_offsets: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal {
        value: f64,
        x: DVector<f64>,
        /// Nonnegative multipliers `y` with `Aᵀy = c` (optimality certificate).
        duals: DVector<f64>,
    },
    Unbounded,
    Infeasible,
}

impl LpOutcome {
    pub fn value(&self) -> Option<f64> {
        match self {
            LpOutcome::Optimal { value, .. } => Some(*value),
            _ => None,
        }
    }
}

impl LpProblem {
    pub fn new(cost: DVector<f64>, normals: DMatrix<f64>, offsets: DVector<f64>) -> Self {
        assert_eq!(normals.ncols(), cost.len(), "cost length must equal column count");
        assert_eq!(normals.nrows(), offsets.len(), "offset length must equal row count");
        LpProblem { cost, constraint_normals: normals, constraint_offsets: offsets }
    }

    pub fn solve(&self) -> LpOutcome {
        lp_solve(self)
    }
}

enum StdOutcome {
    Optimal { y: Vec<f64>, multipliers: Vec<f64> },
    Infeasible,
    Unbounded,
}

/// Solves `min d·y s.t. M y = r, y >= 0` with a two-phase tableau simplex
/// using Bland's rule. Returns the primal `y` and the simplex multipliers
/// `π` (one per row of `M`).
fn standard_simplex(d: &[f64], m: &DMatrix<f64>, r: &[f64]) -> StdOutcome {
    let rows = m.nrows();
    let nv = m.ncols();
    let width = nv + rows + 1;
    let rhs = width - 1;
    let mut t = vec![0.0; rows * width];
    let mut sign = vec![1.0; rows];
    for i in 0..rows {
        if r[i] < 0.0 {
            sign[i] = -1.0;
        }
        for j in 0..nv {
            t[i * width + j] = sign[i] * m[(i, j)];
        }
        t[i * width + nv + i] = 1.0;
        t[i * width + rhs] = sign[i] * r[i];
    }
    let mut basis: Vec<usize> = (0..rows).map(|i| nv + i).collect();
    let mut active: Vec<bool> = vec![true; rows];

    // Phase 1: minimize the sum of artificials.
    let mut phase1 = vec![0.0; width - 1];
    for a in phase1.iter_mut().skip(nv) {
        *a = 1.0;
    }
    if !run_simplex(&mut t, width, &mut basis, &active, &phase1, width - 1) {
        return StdOutcome::Unbounded;
    }
    let infeas: f64 = (0..rows)
        .filter(|&i| active[i] && basis[i] >= nv)
        .map(|i| t[i * width + rhs])
        .sum();
    let scale = 1.0 + r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if infeas > FEAS_TOL * scale {
        return StdOutcome::Infeasible;
    }
    // Drive remaining artificials out of the basis or drop redundant rows.
    for i in 0..rows {
        if basis[i] < nv {
            continue;
        }
        let col = (0..nv).find(|&j| t[i * width + j].abs() > 1e-9);
        match col {
            Some(j) => pivot(&mut t, width, rows, i, j, &mut basis),
            None => active[i] = false,
        }
    }
    // Phase 2 over original columns only.
    let mut cost = vec![0.0; width - 1];
    cost[..nv].copy_from_slice(d);
    for c in cost.iter_mut().skip(nv) {
        *c = f64::INFINITY;
    }
    if !run_simplex(&mut t, width, &mut basis, &active, &cost, nv) {
        return StdOutcome::Unbounded;
    }
    let mut y = vec![0.0; nv];
    for i in 0..rows {
        if active[i] && basis[i] < nv {
            y[basis[i]] = t[i * width + rhs].max(0.0);
        }
    }
    // Multipliers from Bᵀπ = d_B on the kept rows.
    let kept: Vec<usize> = (0..rows).filter(|&i| active[i]).collect();
    let k = kept.len();
    let mut bt = DMatrix::zeros(k, k);
    let mut db = DVector::zeros(k);
    for (col, &i) in kept.iter().enumerate() {
        let j = basis[i];
        db[col] = d[j];
        for (row, &ii) in kept.iter().enumerate() {
            bt[(col, row)] = m[(ii, j)];
        }
    }
    let pi_k = bt.lu().solve(&db).unwrap_or_else(|| DVector::zeros(k));
    let mut multipliers = vec![0.0; rows];
    for (idx, &i) in kept.iter().enumerate() {
        multipliers[i] = pi_k[idx];
    }
    StdOutcome::Optimal { y, multipliers }
}

/// Runs simplex iterations with Bland's rule. Columns at index >= `limit` never
/// enter. Returns false when the objective is unbounded below.
fn run_simplex(
    t: &mut [f64],
    width: usize,
    basis: &mut [usize],
    active: &[bool],
    cost: &[f64],
    limit: usize,
) -> bool {
    let rows = basis.len();
    let rhs = width - 1;
    let max_pivots = 50_000;
    for _ in 0..max_pivots {
        // Reduced costs: c_j - c_B B^{-1} a_j.
        let mut entering = None;
        for j in 0..limit {
            if basis.iter().enumerate().any(|(i, &b)| active[i] && b == j) {
                continue;
            }
            let mut rc = cost[j];
            for i in 0..rows {
                if active[i] {
                    let cb = cost[basis[i]];
                    if cb != 0.0 && cb.is_finite() {
                        rc -= cb * t[i * width + j];
                    }
                }
            }
            if rc < -1e-10 {
                entering = Some(j);
                break;
            }
        }
        let Some(j) = entering else { return true };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..rows {
            if !active[i] {
                continue;
            }
            let a = t[i * width + j];
            if a > PIVOT_TOL {
                let ratio = t[i * width + rhs] / a;
                match leave {
                    None => leave = Some((i, ratio)),
                    Some((li, lr)) => {
                        if ratio < lr - 1e-12 || (ratio <= lr + 1e-12 && basis[i] < basis[li]) {
                            leave = Some((i, ratio));
                        }
                    }
                }
            }
        }
        let Some((i, _)) = leave else { return false };
        pivot(t, width, rows, i, j, basis);
    }
    true
}

fn pivot(t: &mut [f64], width: usize, rows: usize, pr: usize, pc: usize, basis: &mut [usize]) {
    let p = t[pr * width + pc];
    for v in &mut t[pr * width..(pr + 1) * width] {
        *v /= p;
    }
    for i in 0..rows {
        if i == pr {
            continue;
        }
        let f = t[i * width + pc];
        if f != 0.0 {
            for j in 0..width {
                t[i * width + j] -= f * t[pr * width + j];
            }
        }
    }
    basis[pr] = pc;
}

/// Solves the LP, returning an optimal point with a dual certificate or the
/// distinct `Unbounded` / `Infeasible` outcomes.
pub fn lp_solve(p: &LpProblem) -> LpOutcome {
    let a = &p.constraint_normals;
    let b = &p.constraint_offsets;
    let c = &p.cost;
    let n = c.len();
    let m = a.nrows();
    if m == 0 {
        return if c.iter().all(|v| *v == 0.0) {
            LpOutcome::Optimal { value: 0.0, x: DVector::zeros(n), duals: DVector::zeros(0) }
        } else {
            LpOutcome::Unbounded
        };
    }
    let at = a.transpose();
    match standard_simplex(b.as_slice(), &at, c.as_slice()) {
        StdOutcome::Optimal { y, multipliers } => {
            let x = DVector::from_vec(multipliers);
            let value = c.dot(&x);
            LpOutcome::Optimal { value, x, duals: DVector::from_vec(y) }
        }
        StdOutcome::Unbounded => LpOutcome::Infeasible,
        StdOutcome::Infeasible => {
            if primal_infeasible(a, b) {
                LpOutcome::Infeasible
            } else {
                LpOutcome::Unbounded
            }
        }
    }
}

/// Farkas test: `{x | A x <= b}` is empty iff some `y >= 0` with `Aᵀy = 0`,
/// `1ᵀy = 1` has `b·y < 0`.
fn primal_infeasible(a: &DMatrix<f64>, b: &DVector<f64>) -> bool {
    let n = a.ncols();
    let m = a.nrows();
    let mut mm = DMatrix::zeros(n + 1, m);
    mm.view_mut((0, 0), (n, m)).copy_from(&a.transpose());
    for j in 0..m {
        mm[(n, j)] = 1.0;
    }
    let mut r = vec![0.0; n + 1];
    r[n] = 1.0;
    match standard_simplex(b.as_slice(), &mm, &r) {
        StdOutcome::Optimal { y, .. } => {
            let v: f64 = y.iter().zip(b.iter()).map(|(yi, bi)| yi * bi).sum();
            v < -FEAS_TOL
        }
        _ => false,
    }
}
