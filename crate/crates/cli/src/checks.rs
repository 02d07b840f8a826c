//! Quick solver self-checks on random instances, reported as certificates.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use safe_mpc::geometry::{lp_solve, LpOutcome, LpProblem};
use safe_mpc::qp::{kkt_residual, qp_solve, QpProblem};
use safe_mpc::terminal::Certificate;

const INSTANCES: usize = 200;

/// Worst KKT residual of the interior-point QP on random feasible instances.
fn qp_check(rng: &mut ChaCha8Rng) -> Certificate {
    let mut worst: f64 = 0.0;
    for _ in 0..INSTANCES {
        let n = rng.gen_range(2..=12);
        let m = rng.gen_range(1..=24);
        let l = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let h = &l * l.transpose() + DMatrix::identity(n, n) * 0.1;
        let f = DVector::from_fn(n, |_, _| rng.gen_range(-3.0..3.0));
        let x_feas = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let g = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
        let hv = &g * &x_feas + DVector::from_fn(m, |_, _| rng.gen_range(0.0..1.0));
        let e = DMatrix::from_fn(1, n, |_, _| rng.gen_range(-1.0..1.0));
        let b = &e * &x_feas;
        let p = QpProblem::from_dense(&h, &f, &e, &b, &g, &hv);
        worst = match qp_solve(&p, None) {
            Ok(s) => worst.max(kkt_residual(&p, &s.x, &s.y, &s.z).max()),
            Err(_) => f64::INFINITY,
        };
    }
    Certificate::new("qp kkt residual (random instances)", 1e-6 - worst, 0.0)
}

/// Worst duality gap and dual infeasibility of the LP on random bounded sets.
fn lp_check(rng: &mut ChaCha8Rng) -> Certificate {
    let mut worst: f64 = 0.0;
    for _ in 0..INSTANCES {
        let dim = rng.gen_range(2..=5);
        let extra = rng.gen_range(0..8);
        let mut a = DMatrix::zeros(2 * dim + extra, dim);
        let mut b = DVector::zeros(2 * dim + extra);
        for i in 0..dim {
            a[(2 * i, i)] = 1.0;
            a[(2 * i + 1, i)] = -1.0;
            b[2 * i] = rng.gen_range(0.5..2.0);
            b[2 * i + 1] = rng.gen_range(0.5..2.0);
        }
        for r in 2 * dim..a.nrows() {
            for c in 0..dim {
                a[(r, c)] = rng.gen_range(-1.0..1.0);
            }
            b[r] = rng.gen_range(0.2..1.5);
        }
        let c = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
        worst = match lp_solve(&LpProblem::new(c.clone(), a.clone(), b.clone())) {
            LpOutcome::Optimal { value, duals, .. } => {
                let gap = (value - b.dot(&duals)).abs();
                let dual_feas = (a.transpose() * &duals - &c).amax();
                let sign = duals.iter().fold(0.0f64, |m, d| m.max(-d));
                worst.max(gap).max(dual_feas).max(sign)
            }
            _ => f64::INFINITY,
        };
    }
    Certificate::new("lp duality gap (random instances)", 1e-8 - worst, 0.0)
}

pub fn solver_checks() -> Vec<Certificate> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    vec![qp_check(&mut rng), lp_check(&mut rng)]
}
