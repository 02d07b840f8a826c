//! Polytopic LPV embedding of the lateral error dynamics.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::geometry::convex_hull_2d;
use crate::models::VehicleParams;

/// Terminal-region bounds and reference-path limits that feed the embedding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LateralBounds {
    /// Bound on the reference steering angle [rad].
    pub delta_ref_max: f64,
    /// Terminal lateral offset bound [m].
    pub e_y_max: f64,
    /// Terminal heading-error bound [rad].
    pub e_psi_max: f64,
    /// Steering-angle bound used inside the terminal region [rad].
    pub delta_max: f64,
    /// Steering-rate bound used inside the terminal region [rad/s].
    pub alpha_max: f64,
    /// Bounds on the first and second time derivative of the slip term.
    pub beta_dot_max: f64,
    pub beta_ddot_max: f64,
    /// Speed range covered by the embedding [m/s].
    pub v_min: f64,
    pub v_max: f64,
    /// Grid resolution for the steering nonlinearity bound [rad].
    pub grid_step: f64,
}

impl Default for LateralBounds {
    fn default() -> Self {
        LateralBounds {
            delta_ref_max: 0.2079,
            e_y_max: 0.2,
            e_psi_max: 0.1745,
            delta_max: 0.5295,
            alpha_max: 0.353,
            beta_dot_max: 0.2013,
            beta_ddot_max: 5.9505,
            v_min: 1.0,
            v_max: 55.0 / 3.6,
            grid_step: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LateralEmbedding {
    pub beta_bar: f64,
    pub beta_dot_bar: f64,
    pub beta_ddot_bar: f64,
    pub eps_psi: [f64; 2],
    pub eps_delta: [f64; 2],
    pub e_y_bar: f64,
    pub e_psi_bar: f64,
    pub e_delta_bar: f64,
    pub e_alpha_bar: f64,
    pub rho_bar: f64,
    pub v_range: [f64; 2],
    /// Vertices `(ν_ψ, ν_δ)` of the projected parameter polytope.
    pub vertices: Vec<[f64; 2]>,
}

/// Worst-case slip bound for a reference steering bound, lateral offset bound
/// and wheelbase.
pub fn beta_bound(delta_ref_max: f64, e_y_max: f64, wheelbase: f64) -> f64 {
    let t = delta_ref_max.tan();
    (t / (1.0 - e_y_max * t / wheelbase)).atan()
}

/// Range of the secant slope `(tan δ − tan β) / (δ − β)` over the grid
/// `δ ∈ [−δ̄, δ̄]`, `β ∈ [−β̄, β̄]`.
pub fn secant_slope_range(delta_max: f64, beta_max: f64, step: f64) -> [f64; 2] {
    let nd = (2.0 * delta_max / step).floor() as usize;
    let nb = (2.0 * beta_max / step).floor() as usize;
    let betas: Vec<(f64, f64)> = (0..=nb).map(|j| {
        let b = -beta_max + j as f64 * step;
        (b, b.tan())
    }).collect();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..=nd {
        let d = -delta_max + i as f64 * step;
        let td = d.tan();
        for &(b, tb) in &betas {
            let gap = d - b;
            if gap.abs() < 1e-9 {
                continue;
            }
            let r = (td - tb) / gap;
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    [lo, hi]
}

/// Builds the embedding bounds and the `(ν_ψ, ν_δ)` vertex list.
pub fn lateral_embedding(p: &VehicleParams, b: &LateralBounds) -> LateralEmbedding {
    let l = p.wheelbase;
    let beta_bar = beta_bound(b.delta_ref_max, b.e_y_max, l);
    let eps_psi = [b.e_psi_max.sin() / b.e_psi_max, 1.0];
    let eps_delta = secant_slope_range(b.delta_max, beta_bar, b.grid_step);
    let e_delta_bar = b.delta_max - beta_bar;
    let e_alpha_bar = b.alpha_max - b.beta_dot_max;
    let rho_bar = e_delta_bar - 2.0 * p.w1 / p.w0 * b.beta_dot_max - b.beta_ddot_max / (p.w0 * p.w0);
    let mut corners = Vec::with_capacity(8);
    for v in [b.v_min, b.v_max] {
        for e1 in eps_psi {
            for e2 in eps_delta {
                corners.push([e1 * v, e2 * v / l]);
            }
        }
    }
    LateralEmbedding {
        beta_bar,
        beta_dot_bar: b.beta_dot_max,
        beta_ddot_bar: b.beta_ddot_max,
        eps_psi,
        eps_delta,
        e_y_bar: b.e_y_max,
        e_psi_bar: b.e_psi_max,
        e_delta_bar,
        e_alpha_bar,
        rho_bar,
        v_range: [b.v_min, b.v_max],
        vertices: convex_hull_2d(&corners),
    }
}

/// Continuous-time lateral error dynamics at parameter `(ν_ψ, ν_δ)`, state
/// `(e_y, e_ψ, e_δ, e_α)`, input the steering-setpoint error.
pub fn lateral_continuous(nu: [f64; 2], p: &VehicleParams) -> (DMatrix<f64>, DMatrix<f64>) {
    let w0 = p.w0;
    let a = DMatrix::from_row_slice(
        4,
        4,
        &[
            0.0, nu[0], 0.0, 0.0,
            0.0, 0.0, nu[1], 0.0,
            0.0, 0.0, 0.0, 1.0,
            0.0, 0.0, -w0 * w0, -2.0 * w0 * p.w1,
        ],
    );
    let b = DMatrix::from_row_slice(4, 1, &[0.0, 0.0, 0.0, w0 * w0]);
    (a, b)
}

/// Continuous-time longitudinal error dynamics, state `(e_v, e_a)`.
pub fn longitudinal_continuous(p: &VehicleParams) -> (DMatrix<f64>, DMatrix<f64>) {
    (
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, -p.t_acc]),
        DMatrix::from_row_slice(2, 1, &[0.0, p.t_acc]),
    )
}
