use nalgebra::{DMatrix, DVector};

use super::lp::{lp_solve, LpOutcome, LpProblem};
use super::GeometryError;

const MEMBERSHIP_TOL: f64 = 1e-9;
const REDUNDANCY_TOL: f64 = 1e-9;
/// Support-function tolerance used for set-equality and containment tests.
pub const SUPPORT_TOL: f64 = 1e-7;

/// Polytope `{x | normals · x <= offsets}`.
#[derive(Debug, Clone, PartialEq)]
pub struct HPolytope {
    normals: DMatrix<f64>,
    offsets: DVector<f64>,
}

/// Support value of a polytope in one direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Support {
    Finite(f64),
    Unbounded,
}

impl HPolytope {
    pub fn new(normals: DMatrix<f64>, offsets: DVector<f64>) -> Result<Self, GeometryError> {
        if normals.nrows() != offsets.len() {
            return Err(GeometryError::DimensionMismatch {
                expected: normals.nrows(),
                found: offsets.len(),
            });
        }
        if normals.iter().chain(offsets.iter()).any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        Ok(HPolytope { normals, offsets })
    }

    /// Axis-aligned box `lo <= x <= hi`.
    pub fn from_box(lo: &[f64], hi: &[f64]) -> Self {
        let n = lo.len();
        let mut a = DMatrix::zeros(2 * n, n);
        let mut b = DVector::zeros(2 * n);
        for i in 0..n {
            a[(2 * i, i)] = 1.0;
            b[2 * i] = hi[i];
            a[(2 * i + 1, i)] = -1.0;
            b[2 * i + 1] = -lo[i];
        }
        HPolytope { normals: a, offsets: b }
    }

    /// Builds a polytope from `(normal, offset)` rows.
    pub fn from_rows(dim: usize, rows: &[(Vec<f64>, f64)]) -> Result<Self, GeometryError> {
        let mut a = DMatrix::zeros(rows.len(), dim);
        let mut b = DVector::zeros(rows.len());
        for (i, (n, o)) in rows.iter().enumerate() {
            if n.len() != dim {
                return Err(GeometryError::DimensionMismatch { expected: dim, found: n.len() });
            }
            for j in 0..dim {
                a[(i, j)] = n[j];
            }
            b[i] = *o;
        }
        HPolytope::new(a, b)
    }

    pub fn dim(&self) -> usize {
        self.normals.ncols()
    }

    pub fn n_rows(&self) -> usize {
        self.normals.nrows()
    }

    pub fn normals(&self) -> &DMatrix<f64> {
        &self.normals
    }

    pub fn offsets(&self) -> &DVector<f64> {
        &self.offsets
    }

    pub fn row(&self, i: usize) -> (DVector<f64>, f64) {
        (self.normals.row(i).transpose(), self.offsets[i])
    }

    /// Scales every row to a unit-norm normal. Rows with a zero normal are
    /// dropped when trivially satisfied and reported as empty otherwise.
    pub fn normalize(&self) -> Result<HPolytope, GeometryError> {
        let mut rows = Vec::with_capacity(self.n_rows());
        for i in 0..self.n_rows() {
            let n = self.normals.row(i);
            let norm = n.norm();
            if norm <= 1e-12 {
                if self.offsets[i] < -MEMBERSHIP_TOL {
                    return Err(GeometryError::EmptyPolytope);
                }
                continue;
            }
            rows.push(((n / norm).iter().copied().collect::<Vec<_>>(), self.offsets[i] / norm));
        }
        HPolytope::from_rows(self.dim(), &rows)
    }

    pub fn contains(&self, x: &DVector<f64>) -> Result<bool, GeometryError> {
        if x.len() != self.dim() {
            return Err(GeometryError::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        Ok(self.max_violation(x) <= MEMBERSHIP_TOL)
    }

    /// Largest row residual `normals·x − offsets` (≤ 0 inside).
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let r = &self.normals * x - &self.offsets;
        r.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.normals * x - &self.offsets
    }

    /// Support function `max_{x ∈ P} dir·x`; `Err(EmptyPolytope)` if P is empty.
    pub fn support(&self, dir: &DVector<f64>) -> Result<Support, GeometryError> {
        let p = LpProblem::new(dir.clone(), self.normals.clone(), self.offsets.clone());
        match lp_solve(&p) {
            LpOutcome::Optimal { value, .. } => Ok(Support::Finite(value)),
            LpOutcome::Unbounded => Ok(Support::Unbounded),
            LpOutcome::Infeasible => Err(GeometryError::EmptyPolytope),
        }
    }

    pub fn is_empty(&self) -> bool {
        let zero = DVector::zeros(self.dim());
        matches!(self.support(&zero), Err(GeometryError::EmptyPolytope))
    }

    /// Row-stacked intersection.
    pub fn intersect(&self, other: &HPolytope) -> Result<HPolytope, GeometryError> {
        if other.dim() != self.dim() {
            return Err(GeometryError::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        let n = self.n_rows() + other.n_rows();
        let mut a = DMatrix::zeros(n, self.dim());
        a.view_mut((0, 0), (self.n_rows(), self.dim())).copy_from(&self.normals);
        a.view_mut((self.n_rows(), 0), (other.n_rows(), self.dim())).copy_from(&other.normals);
        let mut b = DVector::zeros(n);
        b.rows_mut(0, self.n_rows()).copy_from(&self.offsets);
        b.rows_mut(self.n_rows(), other.n_rows()).copy_from(&other.offsets);
        HPolytope::new(a, b)
    }

    /// `{x | normals·(A x) <= offsets}`.
    pub fn pre_image(&self, a: &DMatrix<f64>) -> Result<HPolytope, GeometryError> {
        if !a.is_square() || a.nrows() != self.dim() {
            return Err(GeometryError::DimensionMismatch { expected: self.dim(), found: a.nrows() });
        }
        HPolytope::new(&self.normals * a, self.offsets.clone())
    }

    /// One-step controllable set for a scalar input:
    /// `{x | ∃u ∈ [u_lo, u_hi]: normals·(A x + b u) <= offsets}`,
    /// obtained by eliminating `u` from the lifted inequalities.
    pub fn control_pre_image(
        &self,
        a: &DMatrix<f64>,
        b: &DVector<f64>,
        u_lo: f64,
        u_hi: f64,
    ) -> Result<HPolytope, GeometryError> {
        if !a.is_square() || a.nrows() != self.dim() || b.len() != self.dim() {
            return Err(GeometryError::DimensionMismatch { expected: self.dim(), found: a.nrows() });
        }
        let ha = &self.normals * a;
        let hb = &self.normals * b;
        let n = self.dim();
        // Upper bounds u <= off - g·x and lower bounds -u <= off - g·x.
        let mut upper: Vec<(DVector<f64>, f64)> = vec![(DVector::zeros(n), u_hi)];
        let mut lower: Vec<(DVector<f64>, f64)> = vec![(DVector::zeros(n), -u_lo)];
        let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
        for i in 0..self.n_rows() {
            let coef = hb[i];
            let g = ha.row(i).transpose();
            if coef > 1e-12 {
                upper.push((g / coef, self.offsets[i] / coef));
            } else if coef < -1e-12 {
                lower.push((g / -coef, self.offsets[i] / -coef));
            } else {
                rows.push((g.iter().copied().collect(), self.offsets[i]));
            }
        }
        for (gu, ou) in &upper {
            for (gl, ol) in &lower {
                let g = gu + gl;
                rows.push((g.iter().copied().collect(), ou + ol));
            }
        }
        HPolytope::from_rows(n, &rows)
    }

    /// Removes duplicated and implied rows; the returned polytope is normalized.
    pub fn remove_redundancy(&self) -> Result<HPolytope, GeometryError> {
        let p = self.normalize()?;
        if p.is_empty() {
            return Err(GeometryError::EmptyPolytope);
        }
        let n = p.dim();
        // Merge rows with identical normals, keeping the tightest offset.
        let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
        'outer: for i in 0..p.n_rows() {
            let (ni, oi) = p.row(i);
            for (nj, oj) in rows.iter_mut() {
                if (&ni - &*nj).amax() <= 1e-12 {
                    *oj = oj.min(oi);
                    continue 'outer;
                }
            }
            rows.push((ni, oi));
        }
        let mut keep = vec![true; rows.len()];
        for i in 0..rows.len() {
            let others: Vec<usize> = (0..rows.len()).filter(|&j| j != i && keep[j]).collect();
            let mut a = DMatrix::zeros(others.len() + 1, n);
            let mut b = DVector::zeros(others.len() + 1);
            for (r, &j) in others.iter().enumerate() {
                a.row_mut(r).copy_from(&rows[j].0.transpose());
                b[r] = rows[j].1;
            }
            a.row_mut(others.len()).copy_from(&rows[i].0.transpose());
            b[others.len()] = rows[i].1 + 1.0;
            let lp = LpProblem::new(rows[i].0.clone(), a, b);
            if let LpOutcome::Optimal { value, .. } = lp_solve(&lp) {
                if value <= rows[i].1 + REDUNDANCY_TOL {
                    keep[i] = false;
                }
            }
        }
        let kept: Vec<(Vec<f64>, f64)> = rows
            .into_iter()
            .zip(keep)
            .filter(|(_, k)| *k)
            .map(|((nrm, o), _)| (nrm.iter().copied().collect(), o))
            .collect();
        HPolytope::from_rows(n, &kept)
    }

    /// True when `other ⊆ self` (support of `other` along each row of `self`
    /// does not exceed the row offset by more than `tol`).
    pub fn contains_polytope(&self, other: &HPolytope, tol: f64) -> Result<bool, GeometryError> {
        for i in 0..self.n_rows() {
            let (n, o) = self.row(i);
            match other.support(&n)? {
                Support::Finite(v) if v <= o + tol => {}
                _ => return Ok(false),
            }
        }
        Ok(true)
    }

    /// Mutual containment under the support-function tolerance.
    pub fn set_equal(&self, other: &HPolytope, tol: f64) -> Result<bool, GeometryError> {
        Ok(self.contains_polytope(other, tol)? && other.contains_polytope(self, tol)?)
    }

    /// Vertices of a 2-D polytope, counter-clockwise.
    pub fn vertices_2d(&self) -> Result<Vec<[f64; 2]>, GeometryError> {
        if self.dim() != 2 {
            return Err(GeometryError::DimensionMismatch { expected: 2, found: self.dim() });
        }
        let mut pts = Vec::new();
        for i in 0..self.n_rows() {
            for j in (i + 1)..self.n_rows() {
                let (a, c) = (self.normals.row(i), self.normals.row(j));
                let det = a[0] * c[1] - a[1] * c[0];
                if det.abs() < 1e-12 {
                    continue;
                }
                let x = (self.offsets[i] * c[1] - a[1] * self.offsets[j]) / det;
                let y = (a[0] * self.offsets[j] - self.offsets[i] * c[0]) / det;
                if self.max_violation(&DVector::from_vec(vec![x, y])) <= 1e-9 {
                    pts.push([x, y]);
                }
            }
        }
        Ok(convex_hull_2d(&pts))
    }
}

/// Andrew's monotone-chain convex hull, counter-clockwise without repeats.
pub fn convex_hull_2d(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = points.to_vec();
    pts.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap().then(a[1].partial_cmp(&b[1]).unwrap()));
    pts.dedup_by(|a, b| (a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 1e-12 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 1e-12 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}
