use nalgebra::{DMatrix, DVector};

use super::{GeometryError, HPolytope, Support, SUPPORT_TOL};

/// Converged invariant set and the number of backward-reachability iterations.
#[derive(Debug, Clone)]
pub struct InvariantSet {
    pub set: HPolytope,
    pub iterations: usize,
}

/// Maximal subset of `x0` that is invariant under every map in `closed_loops`
/// (robust invariance for a switched/polytopic family).
pub fn max_invariant_set(
    closed_loops: &[DMatrix<f64>],
    x0: &HPolytope,
    max_iter: usize,
) -> Result<InvariantSet, GeometryError> {
    iterate(x0, max_iter, |omega| {
        let mut acc = omega.clone();
        for a in closed_loops {
            acc = acc.intersect(&omega.pre_image(a)?)?;
        }
        Ok(acc)
    })
}

/// Maximal control-invariant subset of `x0` for `x⁺ = A x + b u` with a scalar
/// input restricted to `[u_lo, u_hi]`.
pub fn max_control_invariant_set(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    u_lo: f64,
    u_hi: f64,
    x0: &HPolytope,
    max_iter: usize,
) -> Result<InvariantSet, GeometryError> {
    iterate(x0, max_iter, |omega| omega.intersect(&omega.control_pre_image(a, b, u_lo, u_hi)?))
}

fn iterate<F>(x0: &HPolytope, max_iter: usize, step: F) -> Result<InvariantSet, GeometryError>
where
    F: Fn(&HPolytope) -> Result<HPolytope, GeometryError>,
{
    let mut omega = x0.remove_redundancy()?;
    for it in 1..=max_iter {
        let next = step(&omega)?.remove_redundancy()?;
        if next.contains_polytope(&omega, SUPPORT_TOL)? {
            return Ok(InvariantSet { set: next, iterations: it });
        }
        omega = next;
    }
    Err(GeometryError::NotConverged(max_iter))
}

/// Invariance certificate: for every map, the pre-image of `set` contains
/// `set` (support-function domination on the pre-image's normals).
pub fn invariance_certificate(set: &HPolytope, maps: &[DMatrix<f64>]) -> Result<f64, GeometryError> {
    let mut worst = f64::NEG_INFINITY;
    for a in maps {
        let pre = set.pre_image(a)?;
        for i in 0..pre.n_rows() {
            let (n, o) = pre.row(i);
            let scale = n.norm().max(1e-300);
            match set.support(&n)? {
                Support::Finite(v) => worst = worst.max((v - o) / scale),
                Support::Unbounded => return Ok(f64::INFINITY),
            }
        }
    }
    Ok(worst)
}

/// Control-invariance certificate for a scalar-input system: worst support
/// excess of `set` over its one-step controllable set.
pub fn control_invariance_certificate(
    set: &HPolytope,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    u_lo: f64,
    u_hi: f64,
) -> Result<f64, GeometryError> {
    let pre = set.control_pre_image(a, b, u_lo, u_hi)?.normalize()?;
    let mut worst = f64::NEG_INFINITY;
    for i in 0..pre.n_rows() {
        let (n, o) = pre.row(i);
        match set.support(&n)? {
            Support::Finite(v) => worst = worst.max(v - o),
            Support::Unbounded => return Ok(f64::INFINITY),
        }
    }
    Ok(worst)
}
