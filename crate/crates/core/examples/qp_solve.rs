//! Solves a small box-constrained QP with the interior-point solver and
//! prints the solution, multipliers and KKT residuals.

use nalgebra::{dmatrix, dvector};
use safe_mpc::qp::{kkt_residual, qp_solve, QpProblem};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // minimize (x0 - 2)^2 + (x1 - 1)^2 + x0 x1  s.t.  x0 + x1 = 1.5,  0 <= x <= 1
    let h = dmatrix![2.0, 1.0; 1.0, 2.0];
    let f = dvector![-4.0, -2.0];
    let a_eq = dmatrix![1.0, 1.0];
    let b_eq = dvector![1.5];
    let a_in = dmatrix![1.0, 0.0; 0.0, 1.0; -1.0, 0.0; 0.0, -1.0];
    let b_in = dvector![1.0, 1.0, 0.0, 0.0];
    let p = QpProblem::from_dense(&h, &f, &a_eq, &b_eq, &a_in, &b_in);
    let sol = qp_solve(&p, None)?;
    println!("x = {:.6?}", sol.x.as_slice());
    println!("y = {:.6?}", sol.y.as_slice());
    println!("z = {:.6?}", sol.z.as_slice());
    println!("objective {:.6} after {} iterations", sol.objective, sol.iterations);
    let r = kkt_residual(&p, &sol.x, &sol.y, &sol.z);
    println!("kkt residual {:.2e} (stationarity {:.1e}, complementarity {:.1e})", r.max(), r.stationarity, r.complementarity);

    let warm = qp_solve(&p, Some(&sol.warm_start()))?;
    println!("warm-started resolve: {} iterations", warm.iterations);
    Ok(())
}
