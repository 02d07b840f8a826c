//! Oracle suites shared by the per-module tests and the acceptance target.
//! Each suite returns a one-line report on success and the first mismatch on
//! failure.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use safe_mpc::constraints::{tube_interval, CorridorParams};
use safe_mpc::geometry::{lp_solve, HPolytope, LpOutcome, LpProblem};
use safe_mpc::models::{rk4_step, ArcPath, ControlInput, ErrorState, VehicleParams};
use safe_mpc::pedestrians::{BoxBounds, Edge, PedestrianBelief, Point, RoadGraph};
use safe_mpc::qp::{qp_solve, QpProblem};
use safe_mpc::reference::{PathSpec, ReferencePath, Segment};

pub type SuiteResult = Result<String, String>;

// ---------------------------------------------------------------- QP

pub struct QpInstance {
    pub h: DMatrix<f64>,
    pub f: DVector<f64>,
    pub e: DMatrix<f64>,
    pub b: DVector<f64>,
    pub g: DMatrix<f64>,
    pub hv: DVector<f64>,
}

pub fn random_qp(rng: &mut ChaCha8Rng) -> QpInstance {
    let n = rng.gen_range(1..=6);
    let m = rng.gen_range(1..=14);
    let p = rng.gen_range(0..=n.min(2) - if n == 1 { 1 } else { 0 });
    let l = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let h = &l * l.transpose() + DMatrix::identity(n, n) * 0.1;
    let f = DVector::from_fn(n, |_, _| rng.gen_range(-3.0..3.0));
    let x_feas = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let g = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
    let hv = &g * &x_feas + DVector::from_fn(m, |_, _| if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..1.0) });
    let e = DMatrix::from_fn(p, n, |_, _| rng.gen_range(-1.0..1.0));
    let b = &e * &x_feas;
    QpInstance { h, f, e, b, g, hv }
}

/// Minimum over all active sets of size ≤ n − p whose KKT point is primal and
/// dual feasible.
pub fn active_set_oracle(inst: &QpInstance) -> Option<f64> {
    let n = inst.h.nrows();
    let p = inst.e.nrows();
    let m = inst.g.nrows();
    let mut best: Option<f64> = None;
    let max_active = n - p;
    let mut subset = Vec::new();
    fn rec(start: usize, m: usize, max_active: usize, subset: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize])) {
        visit(subset);
        if subset.len() == max_active {
            return;
        }
        for i in start..m {
            subset.push(i);
            rec(i + 1, m, max_active, subset, visit);
            subset.pop();
        }
    }
    let mut visit = |act: &[usize]| {
        let k = act.len();
        let dim = n + p + k;
        let mut kkt = DMatrix::zeros(dim, dim);
        let mut rhs = DVector::zeros(dim);
        kkt.view_mut((0, 0), (n, n)).copy_from(&inst.h);
        for i in 0..n {
            rhs[i] = -inst.f[i];
        }
        for r in 0..p {
            for j in 0..n {
                kkt[(n + r, j)] = inst.e[(r, j)];
                kkt[(j, n + r)] = inst.e[(r, j)];
            }
            rhs[n + r] = inst.b[r];
        }
        for (c, &r) in act.iter().enumerate() {
            for j in 0..n {
                kkt[(n + p + c, j)] = inst.g[(r, j)];
                kkt[(j, n + p + c)] = inst.g[(r, j)];
            }
            rhs[n + p + c] = inst.hv[r];
        }
        let Some(sol) = kkt.lu().solve(&rhs) else { return };
        let x = sol.rows(0, n).into_owned();
        if (0..k).any(|c| sol[n + p + c] < -1e-9) {
            return;
        }
        if (&inst.g * &x - &inst.hv).iter().any(|v| *v > 1e-9) {
            return;
        }
        let obj = 0.5 * x.dot(&(&inst.h * &x)) + inst.f.dot(&x);
        if best.map_or(true, |b| obj < b) {
            best = Some(obj);
        }
    };
    rec(0, m, max_active, &mut subset, &mut visit);
    best
}

pub fn qp_suite(count: usize, tol: f64) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for k in 0..count {
        let inst = random_qp(&mut rng);
        let expect = active_set_oracle(&inst).ok_or(format!("instance {k}: oracle found no KKT point"))?;
        let p = QpProblem::from_dense(&inst.h, &inst.f, &inst.e, &inst.b, &inst.g, &inst.hv);
        let sol = qp_solve(&p, None).map_err(|e| format!("instance {k}: {e}"))?;
        if sol.kkt.max() > tol {
            return Err(format!("instance {k}: KKT residual {:?}", sol.kkt));
        }
        let err = (sol.objective - expect).abs();
        worst = worst.max(err);
        if err > tol {
            return Err(format!("instance {k}: {} vs oracle {}", sol.objective, expect));
        }
    }
    Ok(format!("{count} QPs, worst objective gap {worst:.2e}"))
}

// ---------------------------------------------------------------- LP

pub fn random_bounded(rng: &mut ChaCha8Rng, dim: usize, extra: usize) -> HPolytope {
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for i in 0..dim {
        let mut e = vec![0.0; dim];
        e[i] = 1.0;
        rows.push((e.clone(), rng.gen_range(0.5..2.0)));
        e[i] = -1.0;
        rows.push((e, rng.gen_range(0.5..2.0)));
    }
    for _ in 0..extra {
        let n: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        rows.push((n, rng.gen_range(0.2..1.5)));
    }
    HPolytope::from_rows(dim, &rows).unwrap()
}

/// Best objective over all vertices obtained from `dim`-row subsets.
pub fn vertex_enumeration(c: &DVector<f64>, p: &HPolytope) -> f64 {
    let dim = p.dim();
    let m = p.n_rows();
    let mut best = f64::NEG_INFINITY;
    let mut idx: Vec<usize> = (0..dim).collect();
    loop {
        let a = DMatrix::from_fn(dim, dim, |r, k| p.normals()[(idx[r], k)]);
        let b = DVector::from_fn(dim, |r, _| p.offsets()[idx[r]]);
        if let Some(x) = a.lu().solve(&b) {
            if p.max_violation(&x) <= 1e-9 {
                best = best.max(c.dot(&x));
            }
        }
        let mut i = dim;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if idx[i] < m - dim + i {
                idx[i] += 1;
                for j in i + 1..dim {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

pub fn lp_suite(count: usize) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for k in 0..count {
        let extra = rng.gen_range(0..6);
        let p = random_bounded(&mut rng, 5, extra);
        let c = DVector::from_fn(5, |_, _| rng.gen_range(-1.0..1.0));
        let expect = vertex_enumeration(&c, &p);
        match lp_solve(&LpProblem::new(c.clone(), p.normals().clone(), p.offsets().clone())) {
            LpOutcome::Optimal { value, x, duals } => {
                let err = (value - expect).abs();
                worst = worst.max(err);
                if err >= 1e-8 {
                    return Err(format!("case {k}: {value} vs {expect}"));
                }
                if p.max_violation(&x) > 1e-8 {
                    return Err(format!("case {k}: primal infeasible"));
                }
                if duals.iter().any(|d| *d < -1e-8) || (p.normals().transpose() * &duals - &c).amax() >= 1e-8 {
                    return Err(format!("case {k}: dual certificate fails"));
                }
            }
            other => return Err(format!("case {k}: {other:?}")),
        }
    }
    Ok(format!("{count} LPs, worst value gap {worst:.2e}"))
}

// ---------------------------------------------------------------- RK4

/// Error ratio between 4 and 8 substeps against a 640-substep solution.
pub fn rk4_convergence_ratio() -> f64 {
    let p = VehicleParams::default();
    let path = ArcPath { kappa: 0.08, wheelbase: p.wheelbase };
    let x = ErrorState { s: 3.0, e_y: 0.3, e_psi: 0.2, delta: 0.25, alpha: 0.3, v: 9.0, a: 0.5 };
    let u = ControlInput { a_req: -2.0, delta_sp: 0.45 };
    let dt = 0.05;
    let diff = |a: &ErrorState, b: &ErrorState| (a.to_vec() - b.to_vec()).amax();
    let reference = rk4_step(&x, &u, dt, 640, &path, &p).unwrap();
    let coarse = diff(&rk4_step(&x, &u, dt, 4, &path, &p).unwrap(), &reference);
    let fine = diff(&rk4_step(&x, &u, dt, 8, &path, &p).unwrap(), &reference);
    coarse / fine
}

pub fn rk4_suite() -> SuiteResult {
    let ratio = rk4_convergence_ratio();
    if (14.0..=18.0).contains(&ratio) {
        Ok(format!("convergence ratio {ratio:.3}"))
    } else {
        Err(format!("convergence ratio {ratio:.3} outside [14, 18]"))
    }
}

// ---------------------------------------------------------------- tube intervals

pub fn edge(from: usize, to: usize) -> Edge {
    Edge { from, to, path: vec![], v_ped: 1.4, width: 2.0 }
}

pub fn curved_path() -> ReferencePath {
    PathSpec {
        start: [0.0, 0.0, 0.0],
        segments: vec![
            Segment::Straight { length: 10.0 },
            Segment::Arc { curvature: 0.05, length: 25.0 },
            Segment::Straight { length: 10.0 },
        ],
        speed: vec![[0.0, 8.0]],
        spacing: 0.25,
    }
    .build(2.9)
    .unwrap()
}

pub fn point_quad_distance(q: Point, quad: &[Point; 4]) -> f64 {
    let mut inside = true;
    let mut sign = 0.0;
    let mut best = f64::INFINITY;
    for i in 0..4 {
        let (a, b) = (quad[i], quad[(i + 1) % 4]);
        let c = (b[0] - a[0]) * (q[1] - a[1]) - (b[1] - a[1]) * (q[0] - a[0]);
        if c != 0.0 {
            if sign == 0.0 {
                sign = c.signum();
            } else if c.signum() != sign {
                inside = false;
            }
        }
        let d = [b[0] - a[0], b[1] - a[1]];
        let l2 = d[0] * d[0] + d[1] * d[1];
        let t = if l2 > 0.0 { (((q[0] - a[0]) * d[0] + (q[1] - a[1]) * d[1]) / l2).clamp(0.0, 1.0) } else { 0.0 };
        best = best.min((q[0] - a[0] - t * d[0]).hypot(q[1] - a[1] - t * d[1]));
    }
    if inside && sign != 0.0 {
        0.0
    } else {
        best
    }
}

/// Random crossing boxes near a curved path; intervals compared with a 1 cm
/// arc-length grid.
pub fn tube_suite(count: usize, tol: f64) -> SuiteResult {
    let path = curved_path();
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let (s0, s1) = path.s_range();
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    let mut attempts = 0;
    while checked < count {
        attempts += 1;
        let s = rng.gen_range(s0 + 3.0..s1 - 3.0);
        let q = path.query(s).unwrap();
        let off = rng.gen_range(-3.0..3.0);
        let ang = rng.gen_range(0.0..std::f64::consts::PI);
        let c = [q.x - off * q.heading.sin(), q.y + off * q.heading.cos()];
        let a = [c[0] - 5.0 * ang.cos(), c[1] - 5.0 * ang.sin()];
        let b = [c[0] + 5.0 * ang.cos(), c[1] + 5.0 * ang.sin()];
        let g = RoadGraph::new(vec![a, b], vec![edge(0, 1)]).unwrap();
        let lon = rng.gen_range(3.0..7.0);
        let mut belief = PedestrianBelief::measured(0, lon, 0.0, 1.4);
        belief.bounds = BoxBounds {
            lon_lo: lon - rng.gen_range(0.0..1.0),
            lon_hi: lon + rng.gen_range(0.0..1.0),
            lat_lo: -rng.gen_range(0.0..0.5),
            lat_hi: rng.gen_range(0.0..0.5),
        };
        let cp = CorridorParams::default();
        let iv = tube_interval(&path, &g, &belief, &cp, 0, 0);
        let quads = belief.footprint(&g);
        let mut grid: Option<(f64, f64)> = None;
        let mut s = s0;
        while s <= s1 {
            let p = path.query(s).unwrap();
            if quads.iter().any(|qd| point_quad_distance([p.x, p.y], qd) <= cp.delta_total) {
                grid = Some(match grid {
                    None => (s, s),
                    Some((lo, _)) => (lo, s),
                });
            }
            s += 0.01;
        }
        match grid {
            None if !iv.empty => return Err(format!("case {attempts}: interval reported, grid empty")),
            None => {}
            Some((lo, hi)) => {
                if iv.empty {
                    return Err(format!("case {attempts}: grid hit [{lo}, {hi}] but interval empty"));
                }
                let err = (iv.sigma_lo - lo).abs().max((iv.sigma_hi - hi).abs());
                worst = worst.max(err);
                if err > tol {
                    return Err(format!("case {attempts}: [{}, {}] vs grid [{lo}, {hi}]", iv.sigma_lo, iv.sigma_hi));
                }
                checked += 1;
            }
        }
    }
    Ok(format!("{count} intervals, worst gap {:.1} cm", worst * 100.0))
}
