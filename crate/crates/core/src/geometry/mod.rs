//! Polytope algebra in H-representation and the LP solver behind it.

mod invariant;
mod lp;
mod polytope;

pub use invariant::{
    control_invariance_certificate, invariance_certificate, max_control_invariant_set,
    max_invariant_set, InvariantSet,
};
pub use lp::{lp_solve, LpOutcome, LpProblem};
pub use polytope::{convex_hull_2d, HPolytope, Support, SUPPORT_TOL};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite coefficient")]
    NonFinite,
    #[error("polytope is empty")]
    EmptyPolytope,
    #[error("invariant-set iteration did not converge within {0} iterations")]
    NotConverged(usize),
}
