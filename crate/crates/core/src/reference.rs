//! Sampled reference paths with speed profile, reference steering, and the
//! mapping between global poses and path coordinates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{
    constraint_name, known_constraints, rk4_global, ControlInput, ErrorState, GlobalState, PathGeometry, PathPoint,
    VehicleParams,
};
use crate::terminal::ReferencePoint;

pub const DEFAULT_SPACING: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReferenceError {
    #[error("arc length {s} outside [{lo}, {hi}]")]
    OutOfRange { s: f64, lo: f64, hi: f64 },
    #[error("pose is {0:.3} m from the path")]
    TooFarFromPath(f64),
    #[error("invalid path: {0}")]
    InvalidPath(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PathSample {
    pub s: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub kappa: f64,
    pub v_ref: f64,
    pub a_ref: f64,
    pub delta_ref: f64,
}

/// Geometric primitive of a path description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Segment {
    Straight { length: f64 },
    Arc { curvature: f64, length: f64 },
    Clothoid { kappa_start: f64, kappa_end: f64, length: f64 },
}

impl Segment {
    fn length(&self) -> f64 {
        match *self {
            Segment::Straight { length } | Segment::Arc { length, .. } | Segment::Clothoid { length, .. } => length,
        }
    }

    fn kappa_at(&self, u: f64) -> f64 {
        match *self {
            Segment::Straight { .. } => 0.0,
            Segment::Arc { curvature, .. } => curvature,
            Segment::Clothoid { kappa_start, kappa_end, length } => kappa_start + (kappa_end - kappa_start) * u / length,
        }
    }

    /// Heading change after arc length `u` into the segment.
    fn heading_gain(&self, u: f64) -> f64 {
        match *self {
            Segment::Straight { .. } => 0.0,
            Segment::Arc { curvature, .. } => curvature * u,
            Segment::Clothoid { kappa_start, kappa_end, length } => {
                kappa_start * u + 0.5 * (kappa_end - kappa_start) / length * u * u
            }
        }
    }
}

/// Serializable path description: start pose, segments, and speed knots
/// `(s, v)` blended with a raised cosine between knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSpec {
    pub start: [f64; 3],
    pub segments: Vec<Segment>,
    pub speed: Vec<[f64; 2]>,
    #[serde(default = "default_spacing")]
    pub spacing: f64,
}

fn default_spacing() -> f64 {
    DEFAULT_SPACING
}

impl PathSpec {
    pub fn straight(length: f64, speed: f64) -> Self {
        PathSpec {
            start: [0.0, 0.0, 0.0],
            segments: vec![Segment::Straight { length }],
            speed: vec![[0.0, speed]],
            spacing: DEFAULT_SPACING,
        }
    }

    pub fn build(&self, wheelbase: f64) -> Result<ReferencePath, ReferenceError> {
        if self.segments.is_empty() || self.segments.iter().any(|s| !(s.length() > 0.0)) {
            return Err(ReferenceError::InvalidPath("segments must have positive length".into()));
        }
        if self.speed.is_empty() || self.speed.windows(2).any(|w| w[1][0] <= w[0][0]) {
            return Err(ReferenceError::InvalidPath("speed knots must be nonempty with increasing s".into()));
        }
        if !(self.spacing > 0.0) {
            return Err(ReferenceError::InvalidPath("spacing must be positive".into()));
        }
        let total: f64 = self.segments.iter().map(|s| s.length()).sum();
        let mut starts = Vec::with_capacity(self.segments.len());
        let mut pose = (self.start[0], self.start[1], self.start[2]);
        let mut s_acc = 0.0;
        for seg in &self.segments {
            starts.push((s_acc, pose));
            pose = advance(seg, pose, seg.length());
            s_acc += seg.length();
        }
        let n = (total / self.spacing).ceil() as usize;
        let mut samples = Vec::with_capacity(n + 1);
        for j in 0..=n {
            let s = (j as f64 * self.spacing).min(total);
            if j > 0 && s - samples.last().map_or(0.0, |p: &PathSample| p.s) < 1e-9 {
                break;
            }
            let k = starts.iter().rposition(|(s0, _)| *s0 <= s).unwrap_or(0);
            let seg = &self.segments[k];
            let (s0, p0) = starts[k];
            let u = (s - s0).min(seg.length());
            let (x, y, h) = advance(seg, p0, u);
            let kappa = seg.kappa_at(u);
            let (v_ref, dv) = speed_profile(&self.speed, s);
            samples.push(PathSample { s, x, y, heading: h, kappa, v_ref, a_ref: v_ref * dv, delta_ref: (wheelbase * kappa).atan() });
        }
        ReferencePath::from_samples(samples, wheelbase)
    }
}

/// Pose after travelling `u` along `seg` from `p0`, by composite Simpson
/// quadrature of the exact heading.
fn advance(seg: &Segment, p0: (f64, f64, f64), u: f64) -> (f64, f64, f64) {
    let k = ((u / 0.05).ceil() as usize).max(4);
    let step = u / k as f64;
    let (mut sx, mut sy) = (0.0, 0.0);
    for i in 0..=2 * k {
        let t = step * i as f64 / 2.0;
        let w = if i == 0 || i == 2 * k { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        let h = p0.2 + seg.heading_gain(t);
        sx += w * h.cos();
        sy += w * h.sin();
    }
    (p0.0 + sx * step / 6.0, p0.1 + sy * step / 6.0, p0.2 + seg.heading_gain(u))
}

/// Raised-cosine speed blend between knots; returns `(v, dv/ds)`.
fn speed_profile(knots: &[[f64; 2]], s: f64) -> (f64, f64) {
    if s <= knots[0][0] {
        return (knots[0][1], 0.0);
    }
    for w in knots.windows(2) {
        let ([s0, v0], [s1, v1]) = (w[0], w[1]);
        if s <= s1 {
            let u = (s - s0) / (s1 - s0);
            let pi = std::f64::consts::PI;
            let v = v0 + (v1 - v0) * 0.5 * (1.0 - (pi * u).cos());
            let dv = (v1 - v0) * 0.5 * pi * (pi * u).sin() / (s1 - s0);
            return (v, dv);
        }
    }
    (knots[knots.len() - 1][1], 0.0)
}

fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut r = a.rem_euclid(two_pi);
    if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}

/// Piecewise-linear reference path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePath {
    samples: Vec<PathSample>,
    wheelbase: f64,
}

impl ReferencePath {
    pub fn from_samples(samples: Vec<PathSample>, wheelbase: f64) -> Result<Self, ReferenceError> {
        if samples.len() < 2 {
            return Err(ReferenceError::InvalidPath("at least two samples required".into()));
        }
        for w in samples.windows(2) {
            if w[1].s <= w[0].s {
                return Err(ReferenceError::InvalidPath(format!("s not increasing at {}", w[1].s)));
            }
            let chord = (w[1].y - w[0].y).atan2(w[1].x - w[0].x);
            let mid = w[0].heading + 0.5 * wrap_angle(w[1].heading - w[0].heading);
            if wrap_angle(chord - mid).abs() > 1e-3 {
                return Err(ReferenceError::InvalidPath(format!("heading inconsistent with tangent at s = {}", w[0].s)));
            }
        }
        Ok(ReferencePath { samples, wheelbase })
    }

    pub fn samples(&self) -> &[PathSample] {
        &self.samples
    }

    pub fn wheelbase(&self) -> f64 {
        self.wheelbase
    }

    pub fn s_range(&self) -> (f64, f64) {
        (self.samples[0].s, self.samples[self.samples.len() - 1].s)
    }

    /// Index `i` of the interval `[s_i, s_{i+1}]` containing `s` (clamped).
    fn interval(&self, s: f64) -> usize {
        let n = self.samples.len();
        match self.samples.binary_search_by(|p| p.s.partial_cmp(&s).unwrap_or(std::cmp::Ordering::Less)) {
            Ok(i) => i.min(n - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(n - 2),
        }
    }

    fn lerp(&self, s: f64) -> (usize, f64) {
        let i = self.interval(s);
        let (a, b) = (&self.samples[i], &self.samples[i + 1]);
        (i, ((s - a.s) / (b.s - a.s)).clamp(0.0, 1.0))
    }

    /// Linear interpolation of every channel.
    pub fn query(&self, s: f64) -> Result<PathSample, ReferenceError> {
        let (lo, hi) = self.s_range();
        if !(s >= lo && s <= hi) {
            return Err(ReferenceError::OutOfRange { s, lo, hi });
        }
        Ok(self.query_clamped(s))
    }

    /// Interpolation with `s` clamped to the path range.
    pub fn query_clamped(&self, s: f64) -> PathSample {
        let (lo, hi) = self.s_range();
        let s = s.clamp(lo, hi);
        let (i, t) = self.lerp(s);
        let (a, b) = (&self.samples[i], &self.samples[i + 1]);
        let m = |p: f64, q: f64| p + t * (q - p);
        PathSample {
            s,
            x: m(a.x, b.x),
            y: m(a.y, b.y),
            heading: a.heading + t * wrap_angle(b.heading - a.heading),
            kappa: m(a.kappa, b.kappa),
            v_ref: m(a.v_ref, b.v_ref),
            a_ref: m(a.a_ref, b.a_ref),
            delta_ref: m(a.delta_ref, b.delta_ref),
        }
    }

    /// Slopes `(dκ/ds, dδ^r/ds, dv^r/ds, da^r/ds)` of the interval containing `s`.
    pub fn slopes(&self, s: f64) -> [f64; 4] {
        let i = self.interval(s);
        let (a, b) = (&self.samples[i], &self.samples[i + 1]);
        let ds = b.s - a.s;
        [(b.kappa - a.kappa) / ds, (b.delta_ref - a.delta_ref) / ds, (b.v_ref - a.v_ref) / ds, (b.a_ref - a.a_ref) / ds]
    }

    /// Reference values for the terminal coordinates at `s`.
    pub fn reference_point(&self, s: f64) -> ReferencePoint {
        let q = self.query_clamped(s);
        let sl = self.slopes(s);
        ReferencePoint { v_ref: q.v_ref, a_ref: q.a_ref, delta_ref: q.delta_ref, alpha_ref: sl[1] * q.v_ref }
    }

    /// Global position of the path-frame point `(s, e_y)` and its heading.
    pub fn frenet_to_global(&self, x: &ErrorState) -> GlobalState {
        let q = self.query_clamped(x.s);
        let (sn, cs) = q.heading.sin_cos();
        GlobalState {
            x: q.x - x.e_y * sn,
            y: q.y + x.e_y * cs,
            psi: wrap_angle(q.heading + x.e_psi),
            delta: x.delta,
            alpha: x.alpha,
            v: x.v,
            a: x.a,
        }
    }

    /// Projection of a global pose onto the path within `max_offset` (the
    /// validity tube); ties are broken toward smaller `s`.
    pub fn global_to_frenet(&self, g: &GlobalState) -> Result<ErrorState, ReferenceError> {
        self.global_to_frenet_within(g, 5.0)
    }

    pub fn global_to_frenet_within(&self, g: &GlobalState, max_offset: f64) -> Result<ErrorState, ReferenceError> {
        let mut best: Option<(f64, f64)> = None;
        let mut closest = f64::INFINITY;
        for i in 0..self.samples.len() - 1 {
            let (a, b) = (&self.samples[i], &self.samples[i + 1]);
            let cx = 0.5 * (a.x + b.x);
            let cy = 0.5 * (a.y + b.y);
            let half = 0.5 * (b.s - a.s) + max_offset + 1e-6;
            let dc = ((g.x - cx).powi(2) + (g.y - cy).powi(2)).sqrt();
            closest = closest.min(dc - 0.5 * (b.s - a.s));
            if dc > half {
                continue;
            }
            if let Some((s, e_y)) = self.project_on_interval(i, g.x, g.y) {
                if e_y.abs() <= max_offset {
                    let better = match best {
                        None => true,
                        Some((_, be)) => e_y.abs() < be.abs() - 1e-12,
                    };
                    if better {
                        best = Some((s, e_y));
                    }
                }
            }
        }
        let (s, e_y) = best.ok_or(ReferenceError::TooFarFromPath(closest.max(max_offset)))?;
        let q = self.query_clamped(s);
        Ok(ErrorState { s, e_y, e_psi: wrap_angle(g.psi - q.heading), delta: g.delta, alpha: g.alpha, v: g.v, a: g.a })
    }

    /// Root of `(p − r(s))·t(s) = 0` inside interval `i`, if any.
    fn project_on_interval(&self, i: usize, px: f64, py: f64) -> Option<(f64, f64)> {
        let (a, b) = (&self.samples[i], &self.samples[i + 1]);
        let dh = wrap_angle(b.heading - a.heading);
        let f = |t: f64| {
            let x = a.x + t * (b.x - a.x);
            let y = a.y + t * (b.y - a.y);
            let h = a.heading + t * dh;
            (px - x) * h.cos() + (py - y) * h.sin()
        };
        let is_last = i + 2 == self.samples.len();
        let f0 = f(0.0);
        let f1 = f(1.0);
        if f0 < 0.0 || (f1 > 0.0 && !is_last) || (f1 > 0.0 && is_last && f1 > 1e-9) {
            if !(f0.abs() <= 1e-12) {
                return None;
            }
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 {
                break;
            }
        }
        let t = 0.5 * (lo + hi);
        let x = a.x + t * (b.x - a.x);
        let y = a.y + t * (b.y - a.y);
        let h = a.heading + t * dh;
        let e_y = -(px - x) * h.sin() + (py - y) * h.cos();
        Some((a.s + t * (b.s - a.s), e_y))
    }
}

impl PathGeometry for ReferencePath {
    fn path_point(&self, s: f64) -> PathPoint {
        let q = self.query_clamped(s);
        let sl = self.slopes(s);
        PathPoint { kappa: q.kappa, dkappa_ds: sl[0], delta_ref: q.delta_ref, ddelta_ref_ds: sl[1] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub max_position_drift: f64,
    pub max_heading_drift: f64,
    pub max_residual: f64,
    pub violated: Option<String>,
    pub passed: bool,
}

/// Drives the global model with feed-forward inputs reconstructed from the
/// reference and reports tracking drift and known-constraint residuals.
pub fn check_reference_feasibility(path: &ReferencePath, p: &VehicleParams, dt: f64) -> FeasibilityReport {
    let (s0, s_end) = path.s_range();
    let first = path.query_clamped(s0);
    let alpha0 = path.reference_point(s0).alpha_ref;
    let mut g = GlobalState {
        x: first.x,
        y: first.y,
        psi: first.heading,
        delta: first.delta_ref,
        alpha: alpha0,
        v: first.v_ref,
        a: first.a_ref,
    };
    let mut s = s0;
    let mut max_pos: f64 = 0.0;
    let mut max_head: f64 = 0.0;
    let mut max_res = f64::NEG_INFINITY;
    let mut violated = None;
    let steps_cap = 200_000;
    for _ in 0..steps_cap {
        if s >= s_end || first.v_ref <= 0.0 && path.query_clamped(s).v_ref <= 0.0 {
            break;
        }
        let q = path.query_clamped(s);
        let rp = path.reference_point(s);
        let v_mid = path.query_clamped(s + 0.5 * dt * q.v_ref).v_ref;
        let s_next = s + dt * v_mid;
        let s_mid = 0.5 * (s + s_next);
        let mid = path.reference_point(s_mid);
        let next = path.reference_point(s_next);
        let alpha_dot = (next.alpha_ref - rp.alpha_ref) / dt;
        let decay = (-p.t_acc * dt).exp();
        let u = ControlInput {
            a_req: (next.a_ref - q.a_ref * decay) / (1.0 - decay),
            delta_sp: mid.delta_ref + 2.0 * p.w1 / p.w0 * mid.alpha_ref + alpha_dot / (p.w0 * p.w0),
        };
        let x_ref = ErrorState { s, e_y: 0.0, e_psi: 0.0, delta: q.delta_ref, alpha: rp.alpha_ref, v: q.v_ref, a: q.a_ref };
        for (i, r) in known_constraints(&x_ref, &u, p).into_iter().enumerate() {
            if r > max_res {
                max_res = r;
            }
            if r > 0.0 && violated.is_none() {
                violated = Some(constraint_name(i).to_string());
            }
        }
        g = rk4_global(&g, &u, dt, 5, p);
        s = s_next;
        if s > s_end {
            break;
        }
        let r = path.query_clamped(s);
        max_pos = max_pos.max(((g.x - r.x).powi(2) + (g.y - r.y).powi(2)).sqrt());
        max_head = max_head.max(wrap_angle(g.psi - r.heading).abs());
    }
    let passed = max_pos < 0.05 && max_res <= 0.0;
    FeasibilityReport { max_position_drift: max_pos, max_heading_drift: max_head, max_residual: max_res, violated, passed }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight() -> ReferencePath {
        PathSpec::straight(50.0, 8.0).build(2.9).unwrap()
    }

    #[test]
    fn knot_and_midpoint_queries() {
        let path = PathSpec {
            start: [0.0, 0.0, 0.0],
            segments: vec![Segment::Straight { length: 10.0 }, Segment::Arc { curvature: 0.05, length: 20.0 }],
            speed: vec![[0.0, 5.0], [30.0, 8.0]],
            spacing: 0.25,
        }
        .build(2.9)
        .unwrap();
        let k = path.samples()[40];
        assert_eq!(path.query(k.s).unwrap(), k);
        let (a, b) = (path.samples()[50], path.samples()[51]);
        let m = path.query(0.5 * (a.s + b.s)).unwrap();
        assert!((m.v_ref - 0.5 * (a.v_ref + b.v_ref)).abs() < 1e-12);
        assert!((m.kappa - 0.5 * (a.kappa + b.kappa)).abs() < 1e-12);
        assert!(path.query(31.0).is_err());
    }

    #[test]
    fn arc_geometry_is_accurate() {
        let r = 20.0;
        let path = PathSpec {
            start: [0.0, 0.0, 0.0],
            segments: vec![Segment::Arc { curvature: 1.0 / r, length: std::f64::consts::PI * r / 2.0 }],
            speed: vec![[0.0, 5.0]],
            spacing: 0.25,
        }
        .build(2.9)
        .unwrap();
        let last = path.samples().last().unwrap();
        assert!((last.x - r).abs() < 1e-9 && (last.y - r).abs() < 1e-9);
        assert!((last.heading - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn left_offset_is_positive() {
        let path = straight();
        let g = GlobalState { x: 10.0, y: 0.3, ..Default::default() };
        let e = path.global_to_frenet(&g).unwrap();
        assert!((e.s - 10.0).abs() < 1e-12 && (e.e_y - 0.3).abs() < 1e-12 && e.e_psi == 0.0);
    }

    #[test]
    fn far_pose_rejected() {
        let path = straight();
        let g = GlobalState { x: 10.0, y: 8.0, ..Default::default() };
        assert!(matches!(path.global_to_frenet(&g), Err(ReferenceError::TooFarFromPath(_))));
    }

    #[test]
    fn straight_path_feasible() {
        let rep = check_reference_feasibility(&straight(), &VehicleParams::default(), 0.05);
        assert!(rep.passed, "{rep:?}");
        assert!(rep.max_position_drift < 1e-9);
    }

    #[test]
    fn excessive_reference_steering_flagged() {
        let p = VehicleParams::default();
        let kappa = 0.6f64.tan() / p.wheelbase;
        let path = PathSpec {
            start: [0.0, 0.0, 0.0],
            segments: vec![Segment::Arc { curvature: kappa, length: 5.0 }],
            speed: vec![[0.0, 2.0]],
            spacing: 0.25,
        }
        .build(p.wheelbase)
        .unwrap();
        let rep = check_reference_feasibility(&path, &p, 0.05);
        assert!(!rep.passed);
        assert_eq!(rep.violated.as_deref(), Some("delta upper"));
    }
}
