//! Vehicle dynamics in the global frame and in the path (Frenet) frame,
//! RK4 discretization with exact sensitivities, and the known constraint set.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const STATE_DIM: usize = 7;
pub const INPUT_DIM: usize = 2;

pub type StateVec = SVector<f64, STATE_DIM>;
pub type InputVec = SVector<f64, INPUT_DIM>;
pub type StateJacobian = SMatrix<f64, STATE_DIM, STATE_DIM>;
pub type InputJacobian = SMatrix<f64, STATE_DIM, INPUT_DIM>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("Frenet frame singular: 1 - kappa*e_y = {0}")]
    FrenetSingular(f64),
    #[error("invalid vehicle parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleBounds {
    pub e_y_max: f64,
    pub e_psi_max: f64,
    pub delta_max: f64,
    pub v_max: f64,
    pub a_min: f64,
    pub a_max: f64,
    pub alpha_max: f64,
}

impl Default for VehicleBounds {
    fn default() -> Self {
        VehicleBounds {
            e_y_max: 0.4,
            e_psi_max: 0.61,
            delta_max: 0.53,
            v_max: 15.28,
            a_min: -5.0,
            a_max: 2.0,
            alpha_max: 0.35,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleParams {
    /// Steering actuator natural frequency [1/s].
    pub w0: f64,
    /// Steering actuator damping [-].
    pub w1: f64,
    /// Acceleration response rate [1/s].
    pub t_acc: f64,
    /// Wheelbase [m].
    pub wheelbase: f64,
    pub bounds: VehicleBounds,
    /// Velocity-dependent steering limit of the test vehicle.
    #[serde(default)]
    pub steering_limit: bool,
}

impl Default for VehicleParams {
    fn default() -> Self {
        VehicleParams {
            w0: 20.0,
            w1: 0.9,
            t_acc: 1.8,
            wheelbase: 2.9,
            bounds: VehicleBounds::default(),
            steering_limit: false,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let b = &self.bounds;
        let checks = [
            (self.w0 > 0.0, "w0 must be positive"),
            (self.w1 > 0.0, "w1 must be positive"),
            (self.t_acc > 0.0, "t_acc must be positive"),
            (self.wheelbase > 0.0, "wheelbase must be positive"),
            (b.a_min < 0.0 && b.a_max > 0.0, "a_min < 0 < a_max required"),
            (
                b.e_y_max > 0.0 && b.e_psi_max > 0.0 && b.delta_max > 0.0 && b.v_max > 0.0 && b.alpha_max > 0.0,
                "one-sided bounds must be positive",
            ),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(ModelError::InvalidParameter(msg.to_string()));
            }
        }
        Ok(())
    }
}

/// Velocity-dependent steering bound of the experimental vehicle [rad].
pub fn steering_limit(v: f64) -> f64 {
    (1e4 / (1.0 + (0.5 * v).exp()) + 40.0) * 16.8 * std::f64::consts::PI / 180.0
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GlobalState {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub delta: f64,
    pub alpha: f64,
    pub v: f64,
    pub a: f64,
}

/// Path-frame state: arc length `s` plus the six tracked states.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorState {
    pub s: f64,
    pub e_y: f64,
    pub e_psi: f64,
    pub delta: f64,
    pub alpha: f64,
    pub v: f64,
    pub a: f64,
}

impl ErrorState {
    pub fn to_vec(&self) -> StateVec {
        StateVec::from([self.s, self.e_y, self.e_psi, self.delta, self.alpha, self.v, self.a])
    }

    pub fn from_vec(x: &StateVec) -> Self {
        ErrorState { s: x[0], e_y: x[1], e_psi: x[2], delta: x[3], alpha: x[4], v: x[5], a: x[6] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub a_req: f64,
    pub delta_sp: f64,
}

impl ControlInput {
    pub fn to_vec(&self) -> InputVec {
        InputVec::from([self.a_req, self.delta_sp])
    }

    pub fn from_vec(u: &InputVec) -> Self {
        ControlInput { a_req: u[0], delta_sp: u[1] }
    }
}

/// Local path geometry at an arc length: curvature and reference steering
/// with their arc-length slopes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PathPoint {
    pub kappa: f64,
    pub dkappa_ds: f64,
    pub delta_ref: f64,
    pub ddelta_ref_ds: f64,
}

/// Anything that can report curvature and reference steering along `s`.
pub trait PathGeometry {
    fn path_point(&self, s: f64) -> PathPoint;
}

/// Straight path, used in tests and toy setups.
#[derive(Debug, Clone, Copy, Default)]
pub struct StraightPath;

impl PathGeometry for StraightPath {
    fn path_point(&self, _s: f64) -> PathPoint {
        PathPoint::default()
    }
}

/// Constant-curvature path.
#[derive(Debug, Clone, Copy)]
pub struct ArcPath {
    pub kappa: f64,
    pub wheelbase: f64,
}

impl PathGeometry for ArcPath {
    fn path_point(&self, _s: f64) -> PathPoint {
        PathPoint { kappa: self.kappa, delta_ref: (self.wheelbase * self.kappa).atan(), ..Default::default() }
    }
}

/// Time derivative of the path-frame state.
pub fn error_dynamics(
    x: &ErrorState,
    u: &ControlInput,
    path: &dyn PathGeometry,
    p: &VehicleParams,
) -> Result<StateVec, ModelError> {
    let pp = path.path_point(x.s);
    let d = 1.0 - pp.kappa * x.e_y;
    if d <= 0.0 {
        return Err(ModelError::FrenetSingular(d));
    }
    Ok(eval(&x.to_vec(), &u.to_vec(), &pp, p))
}

fn eval(x: &StateVec, u: &InputVec, pp: &PathPoint, p: &VehicleParams) -> StateVec {
    let (e_y, e_psi, delta, alpha, v, a) = (x[1], x[2], x[3], x[4], x[5], x[6]);
    let l = p.wheelbase;
    let d = 1.0 - pp.kappa * e_y;
    let s_dot = v * e_psi.cos() / d;
    StateVec::from([
        s_dot,
        v * e_psi.sin(),
        v / l * delta.tan() - s_dot / l * pp.delta_ref.tan(),
        alpha,
        p.w0 * p.w0 * (u[1] - delta) - 2.0 * p.w0 * p.w1 * alpha,
        a,
        p.t_acc * (u[0] - a),
    ])
}

fn jacobians(x: &StateVec, pp: &PathPoint, p: &VehicleParams) -> (StateJacobian, InputJacobian) {
    let (e_y, e_psi, delta, v) = (x[1], x[2], x[3], x[5]);
    let l = p.wheelbase;
    let d = 1.0 - pp.kappa * e_y;
    let (sn, cs) = e_psi.sin_cos();
    let s_dot = v * cs / d;
    let ds = [v * cs * pp.dkappa_ds * e_y / (d * d), v * cs * pp.kappa / (d * d), -v * sn / d, cs / d];
    let t = pp.delta_ref.tan();
    let dt = (1.0 + t * t) * pp.ddelta_ref_ds;
    let sec2 = 1.0 + delta.tan().powi(2);
    let mut jx = StateJacobian::zeros();
    jx[(0, 0)] = ds[0];
    jx[(0, 1)] = ds[1];
    jx[(0, 2)] = ds[2];
    jx[(0, 5)] = ds[3];
    jx[(1, 2)] = v * cs;
    jx[(1, 5)] = sn;
    jx[(2, 0)] = -(ds[0] * t + s_dot * dt) / l;
    jx[(2, 1)] = -ds[1] * t / l;
    jx[(2, 2)] = -ds[2] * t / l;
    jx[(2, 3)] = v / l * sec2;
    jx[(2, 5)] = delta.tan() / l - ds[3] * t / l;
    jx[(3, 4)] = 1.0;
    jx[(4, 3)] = -p.w0 * p.w0;
    jx[(4, 4)] = -2.0 * p.w0 * p.w1;
    jx[(5, 6)] = 1.0;
    jx[(6, 6)] = -p.t_acc;
    let mut ju = InputJacobian::zeros();
    ju[(4, 1)] = p.w0 * p.w0;
    ju[(6, 0)] = p.t_acc;
    (jx, ju)
}

fn clamp_braking(x: &mut StateVec) {
    if x[5] < 0.0 {
        x[5] = 0.0;
        x[6] = x[6].max(0.0);
    }
}

/// Classical RK4 over `substeps` equal substeps of `dt`, with the braking
/// clamp (no reversing) applied after each substep.
pub fn rk4_step(
    x: &ErrorState,
    u: &ControlInput,
    dt: f64,
    substeps: usize,
    path: &dyn PathGeometry,
    p: &VehicleParams,
) -> Result<ErrorState, ModelError> {
    let uv = u.to_vec();
    let h = dt / substeps as f64;
    let mut xv = x.to_vec();
    let f = |xs: &StateVec| -> Result<StateVec, ModelError> {
        let pp = path.path_point(xs[0]);
        let d = 1.0 - pp.kappa * xs[1];
        if d <= 0.0 {
            return Err(ModelError::FrenetSingular(d));
        }
        Ok(eval(xs, &uv, &pp, p))
    };
    for _ in 0..substeps {
        let k1 = f(&xv)?;
        let k2 = f(&(xv + k1 * (h / 2.0)))?;
        let k3 = f(&(xv + k2 * (h / 2.0)))?;
        let k4 = f(&(xv + k3 * h))?;
        xv += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        clamp_braking(&mut xv);
    }
    Ok(ErrorState::from_vec(&xv))
}

/// Smooth RK4 map (no clamp) with its exact Jacobians with respect to the
/// initial state and the input, as used by the shooting transcription.
pub fn rk4_sensitivity(
    x: &StateVec,
    u: &InputVec,
    dt: f64,
    substeps: usize,
    path: &dyn PathGeometry,
    p: &VehicleParams,
) -> (StateVec, StateJacobian, InputJacobian) {
    let h = dt / substeps as f64;
    let mut xv = *x;
    let mut sx = StateJacobian::identity();
    let mut su = InputJacobian::zeros();
    let stage = |xs: &StateVec| {
        let pp = path.path_point(xs[0]);
        let f = eval(xs, u, &pp, p);
        let (jx, ju) = jacobians(xs, &pp, p);
        (f, jx, ju)
    };
    for _ in 0..substeps {
        let (k1, j1, b1) = stage(&xv);
        let d1x = j1 * sx;
        let d1u = j1 * su + b1;
        let x2 = xv + k1 * (h / 2.0);
        let (k2, j2, b2) = stage(&x2);
        let d2x = j2 * (sx + d1x * (h / 2.0));
        let d2u = j2 * (su + d1u * (h / 2.0)) + b2;
        let x3 = xv + k2 * (h / 2.0);
        let (k3, j3, b3) = stage(&x3);
        let d3x = j3 * (sx + d2x * (h / 2.0));
        let d3u = j3 * (su + d2u * (h / 2.0)) + b3;
        let x4 = xv + k3 * h;
        let (k4, j4, b4) = stage(&x4);
        let d4x = j4 * (sx + d3x * h);
        let d4u = j4 * (su + d3u * h) + b4;
        xv += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        sx += (d1x + d2x * 2.0 + d3x * 2.0 + d4x) * (h / 6.0);
        su += (d1u + d2u * 2.0 + d3u * 2.0 + d4u) * (h / 6.0);
    }
    (xv, sx, su)
}

/// Time derivative of the global single-track state.
pub fn global_dynamics(g: &GlobalState, u: &ControlInput, p: &VehicleParams) -> [f64; 7] {
    [
        g.v * g.psi.cos(),
        g.v * g.psi.sin(),
        g.v / p.wheelbase * g.delta.tan(),
        g.alpha,
        p.w0 * p.w0 * (u.delta_sp - g.delta) - 2.0 * p.w0 * p.w1 * g.alpha,
        g.a,
        p.t_acc * (u.a_req - g.a),
    ]
}

/// RK4 for the global model with the braking clamp after each substep.
pub fn rk4_global(g: &GlobalState, u: &ControlInput, dt: f64, substeps: usize, p: &VehicleParams) -> GlobalState {
    let h = dt / substeps as f64;
    let to = |g: &GlobalState| [g.x, g.y, g.psi, g.delta, g.alpha, g.v, g.a];
    let from = |a: [f64; 7]| GlobalState { x: a[0], y: a[1], psi: a[2], delta: a[3], alpha: a[4], v: a[5], a: a[6] };
    let add = |a: [f64; 7], b: [f64; 7], k: f64| {
        let mut r = a;
        for i in 0..7 {
            r[i] += k * b[i];
        }
        r
    };
    let mut x = to(g);
    for _ in 0..substeps {
        let k1 = global_dynamics(&from(x), u, p);
        let k2 = global_dynamics(&from(add(x, k1, h / 2.0)), u, p);
        let k3 = global_dynamics(&from(add(x, k2, h / 2.0)), u, p);
        let k4 = global_dynamics(&from(add(x, k3, h)), u, p);
        for i in 0..7 {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if x[5] < 0.0 {
            x[5] = 0.0;
            x[6] = x[6].max(0.0);
        }
    }
    from(x)
}

/// Names of the known-constraint residual rows, in evaluation order.
pub const CONSTRAINT_NAMES: [&str; 15] = [
    "e_y upper",
    "e_y lower",
    "e_psi upper",
    "e_psi lower",
    "delta upper",
    "delta lower",
    "delta_sp upper",
    "delta_sp lower",
    "v upper",
    "v lower",
    "a upper",
    "a lower",
    "a_req upper",
    "a_req lower",
    "alpha",
];

/// Residuals `h(x, u)` (all ≤ 0 iff the known constraints hold). The last
/// entry is the steering-limit row when enabled.
pub fn known_constraints(x: &ErrorState, u: &ControlInput, p: &VehicleParams) -> Vec<f64> {
    let b = &p.bounds;
    let mut r = vec![
        x.e_y - b.e_y_max,
        -x.e_y - b.e_y_max,
        x.e_psi - b.e_psi_max,
        -x.e_psi - b.e_psi_max,
        x.delta - b.delta_max,
        -x.delta - b.delta_max,
        u.delta_sp - b.delta_max,
        -u.delta_sp - b.delta_max,
        x.v - b.v_max,
        -x.v,
        x.a - b.a_max,
        b.a_min - x.a,
        u.a_req - b.a_max,
        b.a_min - u.a_req,
        x.alpha.abs() - b.alpha_max,
    ];
    if p.steering_limit {
        r.push(x.delta.abs() - steering_limit(x.v));
    }
    r
}

/// Name of the row in [`known_constraints`] at `index`.
pub fn constraint_name(index: usize) -> &'static str {
    CONSTRAINT_NAMES.get(index).copied().unwrap_or("steering limit")
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, Matrix2};

    fn params() -> VehicleParams {
        VehicleParams::default()
    }

    #[test]
    fn equilibrium_on_straight_reference() {
        let x = ErrorState { v: 8.0, ..Default::default() };
        let d = error_dynamics(&x, &ControlInput::default(), &StraightPath, &params()).unwrap();
        assert_eq!(d[0], 8.0);
        assert!(d.iter().skip(1).all(|v| *v == 0.0));
    }

    #[test]
    fn lateral_rate_direct_evaluation() {
        let x = ErrorState { v: 10.0, e_psi: 0.1, ..Default::default() };
        let d = error_dynamics(&x, &ControlInput::default(), &StraightPath, &params()).unwrap();
        assert!((d[1] - 10.0 * 0.1f64.sin()).abs() < 1e-15);
        assert!((d[1] - 0.998_334_166).abs() < 1e-9);
    }

    #[test]
    fn arc_length_rate_on_curve() {
        let x = ErrorState { v: 10.0, e_y: 0.4, ..Default::default() };
        let path = ArcPath { kappa: 0.05, wheelbase: 2.9 };
        let d = error_dynamics(&x, &ControlInput::default(), &path, &params()).unwrap();
        assert!((d[0] - 10.0 / 0.98).abs() < 1e-12);
        assert!((d[0] - 10.204_081_632_653).abs() < 1e-9);
    }

    #[test]
    fn singular_frame_reported() {
        let x = ErrorState { v: 1.0, e_y: 25.0, ..Default::default() };
        let path = ArcPath { kappa: 0.05, wheelbase: 2.9 };
        assert!(matches!(
            error_dynamics(&x, &ControlInput::default(), &path, &params()),
            Err(ModelError::FrenetSingular(_))
        ));
    }

    #[test]
    fn zero_state_is_fixed_point() {
        let x = ErrorState::default();
        let y = rk4_step(&x, &ControlInput::default(), 0.05, 5, &StraightPath, &params()).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn longitudinal_pair_matches_matrix_exponential() {
        let p = params();
        let x = ErrorState { v: 5.0, a: 0.5, ..Default::default() };
        let u = ControlInput { a_req: 2.0, delta_sp: 0.0 };
        let y = rk4_step(&x, &u, 0.05, 5, &StraightPath, &p).unwrap();
        // Augmented exponential of [[0,1,0],[0,-t,t],[0,0,0]] * dt applied to (v, a, a_req).
        let t = p.t_acc;
        let m = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, -t, t, 0.0, 0.0, 0.0]) * 0.05;
        let e = m.exp();
        let z = e * nalgebra::DVector::from_vec(vec![5.0, 0.5, 2.0]);
        assert!((y.v - z[0]).abs() < 1e-9, "{} vs {}", y.v, z[0]);
        assert!((y.a - z[1]).abs() < 1e-9);
        let _ = Matrix2::<f64>::identity();
    }

    #[test]
    fn braking_clamp_prevents_reversing() {
        let x = ErrorState { v: 0.05, a: -5.0, ..Default::default() };
        let u = ControlInput { a_req: -5.0, delta_sp: 0.0 };
        let y = rk4_step(&x, &u, 0.05, 5, &StraightPath, &params()).unwrap();
        assert_eq!(y.v, 0.0);
        assert!(y.a >= 0.0);
    }

    #[test]
    fn sensitivities_match_finite_differences() {
        let p = params();
        let path = ArcPath { kappa: 0.04, wheelbase: p.wheelbase };
        let x = StateVec::from([3.0, 0.2, 0.05, 0.1, 0.02, 7.0, -0.5]);
        let u = InputVec::from([-1.0, 0.12]);
        let (_, jx, ju) = rk4_sensitivity(&x, &u, 0.05, 5, &path, &p);
        let h = 1e-6;
        for j in 0..STATE_DIM {
            let mut xp = x;
            let mut xm = x;
            xp[j] += h;
            xm[j] -= h;
            let fd = (rk4_sensitivity(&xp, &u, 0.05, 5, &path, &p).0 - rk4_sensitivity(&xm, &u, 0.05, 5, &path, &p).0)
                / (2.0 * h);
            for i in 0..STATE_DIM {
                assert!((fd[i] - jx[(i, j)]).abs() < 1e-6, "x ({i},{j}): {} vs {}", fd[i], jx[(i, j)]);
            }
        }
        for j in 0..INPUT_DIM {
            let mut up = u;
            let mut um = u;
            up[j] += h;
            um[j] -= h;
            let fd = (rk4_sensitivity(&x, &up, 0.05, 5, &path, &p).0 - rk4_sensitivity(&x, &um, 0.05, 5, &path, &p).0)
                / (2.0 * h);
            for i in 0..STATE_DIM {
                assert!((fd[i] - ju[(i, j)]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn known_constraint_residuals() {
        let p = params();
        let r = known_constraints(&ErrorState::default(), &ControlInput::default(), &p);
        assert!(r.iter().all(|v| *v <= 0.0));
        let r = known_constraints(&ErrorState { v: 15.5, ..Default::default() }, &ControlInput::default(), &p);
        assert!((r[8] - 0.22).abs() < 1e-12);
    }

    #[test]
    fn steering_limit_at_standstill() {
        let expect = (1e4 / 2.0 + 40.0) * 16.8 * std::f64::consts::PI / 180.0;
        assert!((steering_limit(0.0) - expect).abs() < 1e-9);
        assert!(steering_limit(0.0) > 0.53);
    }

    #[test]
    fn invalid_parameters_rejected() {
        let mut p = params();
        p.t_acc = -1.0;
        assert!(p.validate().is_err());
    }
}
