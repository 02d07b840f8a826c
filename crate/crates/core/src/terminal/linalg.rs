//! Discretization, LQR, discrete Lyapunov equations and common-Lyapunov synthesis.

use nalgebra::{DMatrix, DVector};

use super::TerminalError;

/// Zero-order-hold discretization via the exponential of the augmented matrix
/// `[[A_c, B_c], [0, 0]]`.
pub fn zoh_discretize(a_c: &DMatrix<f64>, b_c: &DMatrix<f64>, ts: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a_c.nrows();
    let m = b_c.ncols();
    let mut aug = DMatrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(a_c);
    aug.view_mut((0, n), (n, m)).copy_from(b_c);
    let e = (aug * ts).exp();
    (e.view((0, 0), (n, n)).into_owned(), e.view((0, n), (n, m)).into_owned())
}

/// Stabilizing solution of the discrete algebraic Riccati equation by the
/// structure-preserving doubling iteration.
pub fn dare(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>, TerminalError> {
    let n = a.nrows();
    let r_inv = r.clone().try_inverse().ok_or(TerminalError::NotStabilizable)?;
    let mut ak = a.clone();
    let mut gk = b * r_inv * b.transpose();
    let mut hk = q.clone();
    let eye = DMatrix::<f64>::identity(n, n);
    for _ in 0..200 {
        let w = &eye + &gk * &hk;
        let w_inv = w.try_inverse().ok_or(TerminalError::NotStabilizable)?;
        let a_next = &ak * &w_inv * &ak;
        let g_next = &gk + &ak * &w_inv * &gk * ak.transpose();
        let h_next = &hk + ak.transpose() * &hk * &w_inv * &ak;
        if !h_next.iter().all(|v| v.is_finite()) {
            return Err(TerminalError::NotStabilizable);
        }
        let change = (&h_next - &hk).amax();
        ak = a_next;
        gk = g_next;
        hk = h_next;
        if change <= 1e-12 * hk.amax().max(1.0) {
            return Ok((&hk + hk.transpose()) * 0.5);
        }
    }
    Err(TerminalError::NotStabilizable)
}

/// LQR feedback `K` for `u = -K x` from the discrete Riccati solution.
pub fn lqr_gain(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>, TerminalError> {
    let p = dare(a, b, q, r)?;
    let lhs = r + b.transpose() * &p * b;
    let k = lhs
        .lu()
        .solve(&(b.transpose() * &p * a))
        .ok_or(TerminalError::NotStabilizable)?;
    if spectral_radius(&(a - b * &k)) >= 1.0 {
        return Err(TerminalError::NotStabilizable);
    }
    Ok(k)
}

pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Solves `Aᵀ P A − P = −F` by the Kronecker linear system.
pub fn discrete_lyapunov(a: &DMatrix<f64>, f: &DMatrix<f64>) -> Result<DMatrix<f64>, TerminalError> {
    let n = a.nrows();
    let at = a.transpose();
    let kron = at.kronecker(&at);
    let lhs = DMatrix::<f64>::identity(n * n, n * n) - kron;
    // Column-major vec: vec(Aᵀ P A) = (Aᵀ ⊗ Aᵀ) vec(P).
    let rhs = DVector::from_column_slice(f.as_slice());
    let sol = lhs.lu().solve(&rhs).ok_or(TerminalError::InfeasibleCommonLyapunov)?;
    let p = DMatrix::from_column_slice(n, n, sol.as_slice());
    Ok((&p + p.transpose()) * 0.5)
}

/// Smallest eigenvalue of `P − A_clᵀ P A_cl − F` (Lyapunov decrease slack).
pub fn decrease_slack(p: &DMatrix<f64>, a_cl: &DMatrix<f64>, f: &DMatrix<f64>) -> f64 {
    let s = p - a_cl.transpose() * p * a_cl - f;
    min_eigenvalue(&((&s + s.transpose()) * 0.5))
}

pub fn min_eigenvalue(s: &DMatrix<f64>) -> f64 {
    s.clone().symmetric_eigenvalues().min()
}

/// Common quadratic Lyapunov function with the decrease `P − A_iᵀ P A_i ⪰ F`
/// for all listed closed loops and approximately minimal trace.
#[derive(Debug, Clone)]
pub struct LyapunovCost {
    pub p: DMatrix<f64>,
    pub trace: f64,
    /// Smallest decrease slack over all listed maps.
    pub min_slack: f64,
}

/// Trace-minimal common Lyapunov matrix. One map gives the exact Lyapunov
/// solution; several maps are handled by a log-barrier interior-point method.
pub fn lyapunov_terminal_cost(a_cls: &[DMatrix<f64>], f: &DMatrix<f64>) -> Result<LyapunovCost, TerminalError> {
    if a_cls.is_empty() {
        return Err(TerminalError::InfeasibleCommonLyapunov);
    }
    if a_cls.iter().any(|a| spectral_radius(a) >= 1.0) {
        return Err(TerminalError::UnstableClosedLoop);
    }
    let p = if a_cls.len() == 1 {
        discrete_lyapunov(&a_cls[0], f)?
    } else {
        barrier_common_lyapunov(a_cls, f)?
    };
    let min_slack = a_cls.iter().map(|a| decrease_slack(&p, a, f)).fold(f64::INFINITY, f64::min);
    if min_slack < -1e-7 || min_eigenvalue(&p) <= 0.0 {
        return Err(TerminalError::InfeasibleCommonLyapunov);
    }
    Ok(LyapunovCost { trace: p.trace(), p, min_slack })
}

/// Affine matrix family `M(z) = M0 + Σ z_k M_k`.
struct AffineLmi {
    base: DMatrix<f64>,
    terms: Vec<DMatrix<f64>>,
}

impl AffineLmi {
    fn eval(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let mut m = self.base.clone();
        for (k, t) in self.terms.iter().enumerate() {
            m += t * z[k];
        }
        m
    }
}

fn sym_basis(n: usize) -> Vec<DMatrix<f64>> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in i..n {
            let mut e = DMatrix::zeros(n, n);
            e[(i, j)] = 1.0;
            e[(j, i)] = 1.0;
            out.push(e);
        }
    }
    out
}

fn sym_to_vec(p: &DMatrix<f64>) -> DVector<f64> {
    let n = p.nrows();
    let mut v = Vec::new();
    for i in 0..n {
        for j in i..n {
            v.push(p[(i, j)]);
        }
    }
    DVector::from_vec(v)
}

/// Barrier value `-Σ log det M_i(z)`, or `None` outside the feasible cone.
fn barrier_value(lmis: &[AffineLmi], z: &DVector<f64>) -> Option<f64> {
    let mut acc = 0.0;
    for l in lmis {
        let chol = l.eval(z).cholesky()?;
        acc -= 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    }
    Some(acc)
}

/// Minimizes `c·z` over `{z | M_i(z) ≻ 0}` with a barrier path-following
/// Newton method. `stop` may end the iteration early.
fn barrier_minimize<S>(
    c: &DVector<f64>,
    lmis: &[AffineLmi],
    mut z: DVector<f64>,
    gap_tol: f64,
    stop: S,
) -> Result<DVector<f64>, TerminalError>
where
    S: Fn(&DVector<f64>) -> bool,
{
    let nz = z.len();
    let total_dim: usize = lmis.iter().map(|l| l.base.nrows()).sum();
    let mut tau = 1.0;
    for _outer in 0..60 {
        for _newton in 0..100 {
            let mut g = c * tau;
            let mut h = DMatrix::<f64>::zeros(nz, nz);
            for l in lmis {
                let m_inv = l
                    .eval(&z)
                    .cholesky()
                    .ok_or(TerminalError::InfeasibleCommonLyapunov)?
                    .inverse();
                let prods: Vec<DMatrix<f64>> = l.terms.iter().map(|t| &m_inv * t).collect();
                for a in 0..nz {
                    g[a] -= prods[a].trace();
                    for b in a..nz {
                        let v = (&prods[a] * &prods[b]).trace();
                        h[(a, b)] += v;
                        if a != b {
                            h[(b, a)] += v;
                        }
                    }
                }
            }
            let step = match h.clone().cholesky() {
                Some(ch) => -ch.solve(&g),
                None => -g.clone(),
            };
            let decrement = -g.dot(&step);
            if decrement / 2.0 <= 1e-10 {
                break;
            }
            let f0 = tau * c.dot(&z) + barrier_value(lmis, &z).ok_or(TerminalError::InfeasibleCommonLyapunov)?;
            let mut t = 1.0;
            loop {
                let trial = &z + &step * t;
                if let Some(bv) = barrier_value(lmis, &trial) {
                    if tau * c.dot(&trial) + bv <= f0 - 0.25 * t * decrement {
                        z = trial;
                        break;
                    }
                }
                t *= 0.5;
                if t < 1e-14 {
                    break;
                }
            }
            if stop(&z) {
                return Ok(z);
            }
            if t < 1e-14 {
                break;
            }
        }
        if total_dim as f64 / tau < gap_tol {
            break;
        }
        tau *= 8.0;
    }
    Ok(z)
}

fn barrier_common_lyapunov(a_cls: &[DMatrix<f64>], f: &DMatrix<f64>) -> Result<DMatrix<f64>, TerminalError> {
    let n = f.nrows();
    let basis = sym_basis(n);
    let nb = basis.len();
    let p0 = {
        let start = discrete_lyapunov(&a_cls[0], f)?;
        let worst = a_cls.iter().map(|a| decrease_slack(&start, a, f)).fold(f64::INFINITY, f64::min);
        if worst > 0.0 {
            start
        } else {
            start * 2.0
        }
    };
    let trace_cap = 1e3 * p0.trace().max(1.0);
    let decrease_terms = |a: &DMatrix<f64>| -> Vec<DMatrix<f64>> {
        basis.iter().map(|e| e - a.transpose() * e * a).collect()
    };

    // Phase I: find P with strictly positive decrease slack at every map.
    let eye = DMatrix::<f64>::identity(n, n);
    let mut lmis = Vec::new();
    for a in a_cls {
        let mut terms = decrease_terms(a);
        terms.push(eye.clone());
        lmis.push(AffineLmi { base: -f, terms });
    }
    let mut cap_terms: Vec<DMatrix<f64>> = basis.iter().map(|e| DMatrix::from_element(1, 1, -e.trace())).collect();
    cap_terms.push(DMatrix::zeros(1, 1));
    lmis.push(AffineLmi { base: DMatrix::from_element(1, 1, trace_cap), terms: cap_terms });
    let worst = a_cls.iter().map(|a| decrease_slack(&p0, a, f)).fold(f64::INFINITY, f64::min);
    let mut z = sym_to_vec(&p0).insert_row(nb, (-worst).max(0.0) + 1.0);
    let mut c = DVector::zeros(nb + 1);
    c[nb] = 1.0;
    let margin = 1e-6 * f.trace();
    z = barrier_minimize(&c, &lmis, z, 1e-9, |z| z[nb] < -margin)?;
    if z[nb] >= -margin {
        return Err(TerminalError::InfeasibleCommonLyapunov);
    }
    let z = z.rows(0, nb).into_owned();

    // Phase II: minimize the trace inside the feasible cone.
    let lmis: Vec<AffineLmi> = a_cls.iter().map(|a| AffineLmi { base: -f, terms: decrease_terms(a) }).collect();
    let c = DVector::from_iterator(nb, basis.iter().map(|e| e.trace()));
    let z = barrier_minimize(&c, &lmis, z, 1e-7 * trace_cap / 1e3, |_| false)?;
    let mut p = DMatrix::zeros(n, n);
    for (k, e) in basis.iter().enumerate() {
        p += e * z[k];
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(r: usize, c: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, c, v)
    }

    #[test]
    fn integrator_discretization() {
        let (a, b) = zoh_discretize(&DMatrix::zeros(2, 2), &m(2, 1, &[1.0, 2.0]), 0.1);
        assert!((a - DMatrix::identity(2, 2)).amax() < 1e-14);
        assert!((b - m(2, 1, &[0.1, 0.2])).amax() < 1e-14);
    }

    #[test]
    fn longitudinal_discretization_closed_form() {
        let (a, _) = zoh_discretize(&m(2, 2, &[0.0, 1.0, 0.0, -1.8]), &m(2, 1, &[0.0, 1.8]), 0.05);
        assert!((a[(0, 1)] - (1.0 - (-0.09f64).exp()) / 1.8).abs() < 1e-14);
        assert!((a[(1, 1)] - (-0.09f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn discretization_matches_taylor_series() {
        let ac = m(3, 3, &[0.1, 1.0, -0.3, 0.0, -2.0, 0.5, 0.7, 0.0, -1.0]);
        let bc = m(3, 1, &[0.0, 1.0, 2.0]);
        let ts = 0.05;
        let (a, b) = zoh_discretize(&ac, &bc, ts);
        let mut term = DMatrix::<f64>::identity(3, 3);
        let mut sum_a = term.clone();
        let mut sum_int = term.clone() * ts;
        for k in 1..20 {
            term = &term * &ac * (ts / k as f64);
            sum_a += &term;
            sum_int += &term * (ts / (k + 1) as f64);
        }
        assert!((a - sum_a).amax() < 1e-12);
        assert!((b - sum_int * bc).amax() < 1e-12);
    }

    #[test]
    fn scalar_dare_closed_form() {
        // Scalar DARE with a=0.5, q=r=1 reduces to p² − 0.25p − 1 = 0.
        let k = lqr_gain(&m(1, 1, &[0.5]), &m(1, 1, &[1.0]), &m(1, 1, &[1.0]), &m(1, 1, &[1.0])).unwrap();
        let p = (0.25 + (0.0625f64 + 4.0).sqrt()) / 2.0;
        assert!((k[(0, 0)] - 0.5 * p / (1.0 + p)).abs() < 1e-12);
        assert!((0.5 - k[(0, 0)]).abs() < 1.0);
    }

    #[test]
    fn zero_input_gives_zero_gain() {
        let k = lqr_gain(&m(1, 1, &[0.5]), &m(1, 1, &[0.0]), &m(1, 1, &[1.0]), &m(1, 1, &[1.0])).unwrap();
        assert_eq!(k[(0, 0)], 0.0);
    }

    #[test]
    fn unstabilizable_pair_rejected() {
        let r = lqr_gain(&m(1, 1, &[1.5]), &m(1, 1, &[0.0]), &m(1, 1, &[1.0]), &m(1, 1, &[1.0]));
        assert_eq!(r.unwrap_err(), TerminalError::NotStabilizable);
    }

    #[test]
    fn lyapunov_single_vertex_is_exact() {
        let a = m(2, 2, &[0.9, 0.2, -0.1, 0.7]);
        let f = DMatrix::identity(2, 2);
        let p = lyapunov_terminal_cost(&[a.clone()], &f).unwrap();
        let resid = a.transpose() * &p.p * &a - &p.p + &f;
        assert!(resid.amax() < 1e-10);
    }

    #[test]
    fn common_lyapunov_for_two_maps() {
        let a1 = m(2, 2, &[0.9, 0.2, -0.1, 0.7]);
        let a2 = m(2, 2, &[0.8, -0.3, 0.1, 0.6]);
        let f = DMatrix::identity(2, 2);
        let p = lyapunov_terminal_cost(&[a1.clone(), a2.clone()], &f).unwrap();
        assert!(p.min_slack >= -1e-7);
        // Each single-vertex solution is a lower bound on the trace.
        let t1 = discrete_lyapunov(&a1, &f).unwrap().trace();
        let t2 = discrete_lyapunov(&a2, &f).unwrap().trace();
        assert!(p.trace >= t1.max(t2) - 1e-6);
    }
}
