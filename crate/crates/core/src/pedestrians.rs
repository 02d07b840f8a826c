//! Walkable road graph, graph-constrained pedestrian prediction with
//! interval (box) reachable sets, and occlusion-driven virtual pedestrians.
//!
//! A belief lives in chain coordinates: `lon` is the walking distance from
//! the start of the first edge of its chain, `lat` the signed offset to the
//! left of the walking direction.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reference::ReferencePath;

pub type Point = [f64; 2];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PedestrianError {
    #[error("walker reached the end of edge {edge} which has no successor")]
    GraphDisconnected { edge: usize },
    #[error("invalid road graph: {0}")]
    InvalidGraph(String),
    #[error("invalid prediction parameters: {0}")]
    InvalidParams(String),
}

fn default_v_ped() -> f64 {
    1.4
}

fn default_width() -> f64 {
    2.0
}

/// Directed walkable edge. `path` is the full polyline including both
/// endpoints; when empty the edge is the straight segment between its nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    #[serde(default)]
    pub path: Vec<Point>,
    #[serde(default = "default_v_ped")]
    pub v_ped: f64,
    #[serde(default = "default_width")]
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadGraph {
    pub nodes: Vec<Point>,
    pub edges: Vec<Edge>,
}

impl RoadGraph {
    /// Validates the graph and fills in straight polylines.
    pub fn new(nodes: Vec<Point>, edges: Vec<Edge>) -> Result<Self, PedestrianError> {
        let mut g = RoadGraph { nodes, edges };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&mut self) -> Result<(), PedestrianError> {
        let n = self.nodes.len();
        for (i, e) in self.edges.iter_mut().enumerate() {
            if e.from >= n || e.to >= n {
                return Err(PedestrianError::InvalidGraph(format!("edge {i} references a missing node")));
            }
            if e.path.is_empty() {
                e.path = vec![self.nodes[e.from], self.nodes[e.to]];
            }
            let close = |a: Point, b: Point| dist(a, b) <= 1e-6;
            if e.path.len() < 2 || !close(e.path[0], self.nodes[e.from]) || !close(e.path[e.path.len() - 1], self.nodes[e.to]) {
                return Err(PedestrianError::InvalidGraph(format!("edge {i} endpoints do not match its nodes")));
            }
            if e.path.windows(2).any(|w| dist(w[0], w[1]) <= 1e-9) {
                return Err(PedestrianError::InvalidGraph(format!("edge {i} has a zero-length piece")));
            }
            if !(e.v_ped > 0.0) {
                return Err(PedestrianError::InvalidGraph(format!("edge {i} needs v_ped > 0")));
            }
        }
        Ok(())
    }

    pub fn edge_length(&self, edge: usize) -> f64 {
        self.edges[edge].path.windows(2).map(|w| dist(w[0], w[1])).sum()
    }

    pub fn chain_length(&self, chain: &[usize]) -> f64 {
        chain.iter().map(|&e| self.edge_length(e)).sum()
    }

    /// Edges leaving the end node of `edge`, excluding the direct U-turn.
    pub fn successors(&self, edge: usize) -> Vec<usize> {
        let e = &self.edges[edge];
        (0..self.edges.len())
            .filter(|&j| self.edges[j].from == e.to && self.edges[j].to != e.from)
            .collect()
    }

    /// Straight pieces of a chain as `(start lon, end lon, p0, p1)`.
    fn pieces(&self, chain: &[usize]) -> Vec<(f64, f64, Point, Point)> {
        let mut out = Vec::new();
        let mut acc = 0.0;
        for &e in chain {
            for w in self.edges[e].path.windows(2) {
                let l = dist(w[0], w[1]);
                out.push((acc, acc + l, w[0], w[1]));
                acc += l;
            }
        }
        out
    }

    /// World position of chain coordinates; beyond either end the first or
    /// last piece is extended.
    pub fn chain_point(&self, chain: &[usize], lon: f64, lat: f64) -> Point {
        let pieces = self.pieces(chain);
        let idx = pieces.iter().position(|p| lon <= p.1).unwrap_or(pieces.len() - 1);
        let (l0, l1, a, b) = pieces[idx];
        piece_point(l0, l1, a, b, lon, lat)
    }

    /// Edge of `chain` containing `lon`, with the lon offset of that edge.
    pub fn locate(&self, chain: &[usize], lon: f64) -> (usize, f64) {
        let mut acc = 0.0;
        for (i, &e) in chain.iter().enumerate() {
            let l = self.edge_length(e);
            if lon < acc + l || i + 1 == chain.len() {
                return (i, acc);
            }
            acc += l;
        }
        (0, 0.0)
    }

    /// World footprint of a box as one convex quadrilateral per straight
    /// piece it overlaps.
    pub fn footprint(&self, chain: &[usize], b: &BoxBounds) -> Vec<[Point; 4]> {
        let pieces = self.pieces(chain);
        let last = pieces.len() - 1;
        let mut out = Vec::new();
        for (i, &(l0, l1, a, bb)) in pieces.iter().enumerate() {
            let lo = if i == 0 { b.lon_lo } else { b.lon_lo.max(l0) };
            let hi = if i == last { b.lon_hi } else { b.lon_hi.min(l1) };
            if lo > hi || (i > 0 && b.lon_hi < l0) || (i < last && b.lon_lo > l1) {
                continue;
            }
            out.push([
                piece_point(l0, l1, a, bb, lo, b.lat_lo),
                piece_point(l0, l1, a, bb, hi, b.lat_lo),
                piece_point(l0, l1, a, bb, hi, b.lat_hi),
                piece_point(l0, l1, a, bb, lo, b.lat_hi),
            ]);
        }
        out
    }
}

fn piece_point(l0: f64, l1: f64, a: Point, b: Point, lon: f64, lat: f64) -> Point {
    let len = l1 - l0;
    let t = [(b[0] - a[0]) / len, (b[1] - a[1]) / len];
    let u = lon - l0;
    [a[0] + u * t[0] - lat * t[1], a[1] + u * t[1] + lat * t[0]]
}

pub(crate) fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxBounds {
    pub lon_lo: f64,
    pub lon_hi: f64,
    pub lat_lo: f64,
    pub lat_hi: f64,
}

impl BoxBounds {
    pub fn point(lon: f64, lat: f64) -> Self {
        BoxBounds { lon_lo: lon, lon_hi: lon, lat_lo: lat, lat_hi: lat }
    }

    pub fn contains(&self, lon: f64, lat: f64, tol: f64) -> bool {
        lon >= self.lon_lo - tol && lon <= self.lon_hi + tol && lat >= self.lat_lo - tol && lat <= self.lat_hi + tol
    }

    pub fn contains_box(&self, other: &BoxBounds, tol: f64) -> bool {
        self.contains(other.lon_lo, other.lat_lo, tol) && self.contains(other.lon_hi, other.lat_hi, tol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PedestrianBelief {
    /// Edges the mode walks along; coordinates start at `chain[0]`.
    pub chain: Vec<usize>,
    pub w_lon: f64,
    pub w_lat: f64,
    pub bounds: BoxBounds,
    pub mode_weight: f64,
    pub v_ped: f64,
}

impl PedestrianBelief {
    /// Exact measurement on `edge` (degenerate box).
    pub fn measured(edge: usize, lon: f64, lat: f64, v_ped: f64) -> Self {
        PedestrianBelief { chain: vec![edge], w_lon: lon, w_lat: lat, bounds: BoxBounds::point(lon, lat), mode_weight: 1.0, v_ped }
    }

    /// Edge that currently holds the nominal position.
    pub fn edge_id(&self, g: &RoadGraph) -> usize {
        self.chain[g.locate(&self.chain, self.w_lon).0]
    }

    pub fn position(&self, g: &RoadGraph) -> Point {
        g.chain_point(&self.chain, self.w_lon, self.w_lat)
    }

    pub fn footprint(&self, g: &RoadGraph) -> Vec<[Point; 4]> {
        g.footprint(&self.chain, &self.bounds)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictionParams {
    /// Lateral feedback gain K [1/s].
    pub k_gain: f64,
    /// Disturbance bound per axis [m/s].
    pub xi_bar: f64,
    pub ts: f64,
    pub horizon: usize,
    pub transition_threshold: f64,
}

impl Default for PredictionParams {
    fn default() -> Self {
        PredictionParams { k_gain: 1.0, xi_bar: 0.3, ts: 0.05, horizon: 100, transition_threshold: 0.5 }
    }
}

impl PredictionParams {
    pub fn validate(&self) -> Result<(), PedestrianError> {
        let c = self.ts * self.k_gain;
        if !(c > 0.0 && c < 1.0) {
            return Err(PedestrianError::InvalidParams("0 < ts*K < 1 required".into()));
        }
        if !(self.xi_bar >= 0.0) || !(self.transition_threshold >= 0.0) {
            return Err(PedestrianError::InvalidParams("xi_bar and transition_threshold must be nonnegative".into()));
        }
        Ok(())
    }

    /// Half-width of the lateral band that the closed loop keeps invariant.
    pub fn lateral_band(&self) -> f64 {
        self.xi_bar / self.k_gain
    }
}

/// Nominal update without disturbance, with edge transitions: when the
/// walker is within the threshold of its chain end, one mode per successor
/// is returned (weights split equally).
pub fn propagate_nominal(
    b: &PedestrianBelief,
    g: &RoadGraph,
    p: &PredictionParams,
) -> Result<Vec<PedestrianBelief>, PedestrianError> {
    let mut next = b.clone();
    next.w_lon += p.ts * b.v_ped;
    next.w_lat *= 1.0 - p.ts * p.k_gain;
    let reach = next.w_lon;
    branch(next, reach, g, p)
}

/// Interval image of the box under one closed-loop step with bounded
/// disturbance.
pub fn propagate_box(b: &PedestrianBelief, p: &PredictionParams) -> PedestrianBelief {
    let mut next = b.clone();
    let c = 1.0 - p.ts * p.k_gain;
    let d = p.ts * p.xi_bar;
    next.bounds = BoxBounds {
        lon_lo: b.bounds.lon_lo + p.ts * b.v_ped - d,
        lon_hi: b.bounds.lon_hi + p.ts * b.v_ped + d,
        lat_lo: c * b.bounds.lat_lo - d,
        lat_hi: c * b.bounds.lat_hi + d,
    };
    next
}

/// One prediction step: nominal and box together. Modes branch as soon as
/// the box front comes within the threshold of the chain end.
pub fn step_belief(
    b: &PedestrianBelief,
    g: &RoadGraph,
    p: &PredictionParams,
) -> Result<Vec<PedestrianBelief>, PedestrianError> {
    let mut next = propagate_box(b, p);
    next.w_lon += p.ts * b.v_ped;
    next.w_lat *= 1.0 - p.ts * p.k_gain;
    let reach = next.bounds.lon_hi.max(next.w_lon);
    branch(next, reach, g, p)
}

fn branch(
    next: PedestrianBelief,
    reach: f64,
    g: &RoadGraph,
    p: &PredictionParams,
) -> Result<Vec<PedestrianBelief>, PedestrianError> {
    let last = *next.chain.last().expect("nonempty chain");
    let len = g.chain_length(&next.chain);
    if reach < len - p.transition_threshold {
        return Ok(vec![next]);
    }
    let succ = g.successors(last);
    if succ.is_empty() {
        if next.w_lon >= len {
            return Err(PedestrianError::GraphDisconnected { edge: last });
        }
        return Ok(vec![next]);
    }
    let w = next.mode_weight / succ.len() as f64;
    Ok(succ
        .into_iter()
        .map(|e| {
            let mut m = next.clone();
            m.chain.push(e);
            m.mode_weight = w;
            m
        })
        .collect())
}

/// Multimodal prediction over `steps` steps; entry `n` holds all modes at
/// step `n` and entry 0 is `b0` itself.
pub fn predict(
    b0: &PedestrianBelief,
    g: &RoadGraph,
    p: &PredictionParams,
    steps: usize,
) -> Result<Vec<Vec<PedestrianBelief>>, PedestrianError> {
    let mut out = Vec::with_capacity(steps + 1);
    out.push(vec![b0.clone()]);
    for n in 0..steps {
        let mut modes = Vec::new();
        for b in &out[n] {
            modes.extend(step_belief(b, g, p)?);
        }
        out.push(modes);
    }
    Ok(out)
}

fn default_sensor_offset() -> f64 {
    1.5
}

fn default_range() -> f64 {
    f64::INFINITY
}

/// Line-of-sight sensor at the ego position with polyline occluders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcclusionModel {
    #[serde(default = "default_range", with = "range_serde")]
    pub max_range: f64,
    #[serde(default)]
    pub occluders: Vec<Vec<Point>>,
    /// Sensor position ahead of the ego reference point [m].
    #[serde(default = "default_sensor_offset")]
    pub sensor_offset: f64,
}

impl Default for OcclusionModel {
    fn default() -> Self {
        OcclusionModel { max_range: f64::INFINITY, occluders: Vec::new(), sensor_offset: default_sensor_offset() }
    }
}

mod range_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl OcclusionModel {
    /// Sensor origin for an ego pose `(x, y, psi)`.
    pub fn sensor_origin(&self, x: f64, y: f64, psi: f64) -> Point {
        [x + self.sensor_offset * psi.cos(), y + self.sensor_offset * psi.sin()]
    }

    pub fn visible(&self, origin: Point, target: Point) -> bool {
        if dist(origin, target) > self.max_range {
            return false;
        }
        !self.occluders.iter().any(|poly| poly.windows(2).any(|w| segments_intersect(origin, target, w[0], w[1])))
    }
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    p[0] >= a[0].min(b[0]) - 1e-12 && p[0] <= a[0].max(b[0]) + 1e-12 && p[1] >= a[1].min(b[1]) - 1e-12 && p[1] <= a[1].max(b[1]) + 1e-12
}

/// Closed-segment intersection test (touching counts).
pub fn segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

fn distance_to_path(path: &ReferencePath, q: Point) -> f64 {
    path.samples().iter().map(|s| dist([s.x, s.y], q)).fold(f64::INFINITY, f64::min)
}

/// Maximal hidden sub-segments `[a, b]` (edge-local lon) of `edge`.
pub fn hidden_segments(occ: &OcclusionModel, origin: Point, g: &RoadGraph, edge: usize) -> Vec<(f64, f64)> {
    let len = g.edge_length(edge);
    let chain = [edge];
    let n = ((len / 0.05).ceil() as usize).max(1);
    let at = |u: f64| occ.visible(origin, g.chain_point(&chain, u, 0.0));
    let refine = |mut vis: f64, mut hid: f64| {
        for _ in 0..50 {
            let m = 0.5 * (vis + hid);
            if at(m) {
                vis = m;
            } else {
                hid = m;
            }
        }
        hid
    };
    let mut out = Vec::new();
    let mut start: Option<f64> = None;
    let mut prev_u = 0.0;
    for i in 0..=n {
        let u = len * i as f64 / n as f64;
        let vis = at(u);
        match (start, vis) {
            (None, false) => start = Some(if i == 0 { 0.0 } else { refine(prev_u, u) }),
            (Some(a), true) => {
                out.push((a, refine(u, prev_u)));
                start = None;
            }
            _ => {}
        }
        prev_u = u;
    }
    if let Some(a) = start {
        out.push((a, len));
    }
    out
}

/// Virtual pedestrians for every hidden sub-segment of an edge that walks
/// toward the driving corridor. Each sits at the hidden/visible boundary
/// closest to the corridor and its box covers the whole hidden stretch.
pub fn spawn_virtual_pedestrians(
    occ: &OcclusionModel,
    origin: Point,
    g: &RoadGraph,
    corridor: &ReferencePath,
    p: &PredictionParams,
) -> Vec<PedestrianBelief> {
    let band = p.lateral_band();
    let mut out = Vec::new();
    for (i, e) in g.edges.iter().enumerate() {
        let approaching = distance_to_path(corridor, g.nodes[e.to]) < distance_to_path(corridor, g.nodes[e.from]);
        if !approaching {
            continue;
        }
        for (a, b) in hidden_segments(occ, origin, g, i) {
            out.push(PedestrianBelief {
                chain: vec![i],
                w_lon: b,
                w_lat: 0.0,
                bounds: BoxBounds { lon_lo: a, lon_hi: b, lat_lo: -band, lat_hi: band },
                mode_weight: 1.0,
                v_ped: e.v_ped,
            });
        }
    }
    out
}

/// True when one chain is a prefix of the other.
pub fn compatible(chain: &[usize], other: &[usize]) -> bool {
    chain.iter().zip(other).all(|(a, b)| a == b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_graph() -> RoadGraph {
        RoadGraph::new(
            vec![[0.0, 0.0], [100.0, 0.0]],
            vec![Edge { from: 0, to: 1, path: vec![], v_ped: 1.4, width: 2.0 }],
        )
        .unwrap()
    }

    fn t_graph() -> RoadGraph {
        RoadGraph::new(
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 20.0], [1.0, -20.0]],
            vec![
                Edge { from: 0, to: 1, path: vec![], v_ped: 1.4, width: 2.0 },
                Edge { from: 1, to: 2, path: vec![], v_ped: 1.4, width: 2.0 },
                Edge { from: 1, to: 3, path: vec![], v_ped: 1.4, width: 2.0 },
            ],
        )
        .unwrap()
    }

    #[test]
    fn nominal_step_direct_evaluation() {
        let g = line_graph();
        let p = PredictionParams::default();
        let b = PedestrianBelief::measured(0, 0.0, 0.0, 1.4);
        let n = propagate_nominal(&b, &g, &p).unwrap();
        assert_eq!(n.len(), 1);
        assert!((n[0].w_lon - 0.07).abs() < 1e-15);
        assert_eq!(n[0].w_lat, 0.0);
        let b = PedestrianBelief::measured(0, 0.0, 0.5, 1.4);
        assert!((propagate_nominal(&b, &g, &p).unwrap()[0].w_lat - 0.475).abs() < 1e-15);
    }

    #[test]
    fn box_step_interval_arithmetic() {
        let p = PredictionParams::default();
        let b = propagate_box(&PedestrianBelief::measured(0, 0.0, 0.5, 1.4), &p);
        let e = BoxBounds { lon_lo: 0.055, lon_hi: 0.085, lat_lo: 0.46, lat_hi: 0.49 };
        for (x, y) in [(b.bounds.lon_lo, e.lon_lo), (b.bounds.lon_hi, e.lon_hi), (b.bounds.lat_lo, e.lat_lo), (b.bounds.lat_hi, e.lat_hi)] {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
    }

    #[test]
    fn noise_free_box_follows_nominal() {
        let g = line_graph();
        let p = PredictionParams { xi_bar: 0.0, ..Default::default() };
        let pred = predict(&PedestrianBelief::measured(0, 1.0, 0.4, 1.4), &g, &p, 50).unwrap();
        for modes in &pred {
            let b = &modes[0];
            assert!((b.bounds.lon_lo - b.w_lon).abs() < 1e-12 && (b.bounds.lon_hi - b.w_lon).abs() < 1e-12);
            assert!((b.bounds.lat_lo - b.w_lat).abs() < 1e-12 && (b.bounds.lat_hi - b.w_lat).abs() < 1e-12);
        }
    }

    #[test]
    fn single_edge_keeps_one_mode() {
        let g = line_graph();
        let pred = predict(&PedestrianBelief::measured(0, 0.0, 0.0, 1.4), &g, &PredictionParams::default(), 100).unwrap();
        assert_eq!(pred.len(), 101);
        assert!(pred.iter().all(|m| m.len() == 1));
    }

    #[test]
    fn t_junction_splits_into_two_modes() {
        let g = t_graph();
        let p = PredictionParams { xi_bar: 0.0, ..Default::default() };
        // Nominal reaches lon >= 1 - 0.5 = 0.5 after ceil(0.5 / 0.07) = 8 steps.
        let pred = predict(&PedestrianBelief::measured(0, 0.0, 0.0, 1.4), &g, &p, 12).unwrap();
        let counts: Vec<usize> = pred.iter().map(|m| m.len()).collect();
        assert_eq!(counts[7], 1);
        assert_eq!(counts[8], 2);
        assert_eq!(counts[12], 2);
        assert!(pred[12].iter().all(|m| (m.mode_weight - 0.5).abs() < 1e-15));
    }

    #[test]
    fn dead_end_reports_disconnected_graph() {
        let g = RoadGraph::new(vec![[0.0, 0.0], [1.0, 0.0]], vec![Edge { from: 0, to: 1, path: vec![], v_ped: 1.4, width: 2.0 }]).unwrap();
        let err = predict(&PedestrianBelief::measured(0, 0.0, 0.0, 1.4), &g, &PredictionParams::default(), 30).unwrap_err();
        assert_eq!(err, PedestrianError::GraphDisconnected { edge: 0 });
    }

    #[test]
    fn chain_point_turns_the_corner() {
        let g = t_graph();
        let q = g.chain_point(&[0, 1], 3.0, 0.5);
        assert!((q[0] - 0.5).abs() < 1e-12 && (q[1] - 2.0).abs() < 1e-12);
        let fp = g.footprint(&[0, 1], &BoxBounds { lon_lo: 0.5, lon_hi: 1.5, lat_lo: -0.1, lat_hi: 0.1 });
        assert_eq!(fp.len(), 2);
    }

    #[test]
    fn no_occluders_means_no_virtual_pedestrians() {
        let g = t_graph();
        let path = crate::reference::PathSpec::straight(50.0, 8.0).build(2.9).unwrap();
        let v = spawn_virtual_pedestrians(&OcclusionModel::default(), [0.0, 0.0], &g, &path, &PredictionParams::default());
        assert!(v.is_empty());
    }

    #[test]
    fn wall_hides_part_of_an_approaching_edge() {
        // Edge walks north toward a path along the x-axis; a wall blocks the view of its southern part.
        let g = RoadGraph::new(vec![[10.0, -10.0], [10.0, -1.0]], vec![Edge { from: 0, to: 1, path: vec![], v_ped: 1.4, width: 2.0 }]).unwrap();
        let occ = OcclusionModel { occluders: vec![vec![[0.0, -2.0], [9.0, -2.0]]], ..Default::default() };
        let path = crate::reference::PathSpec::straight(50.0, 8.0).build(2.9).unwrap();
        let v = spawn_virtual_pedestrians(&occ, [0.0, 0.0], &g, &path, &PredictionParams::default());
        assert_eq!(v.len(), 1);
        // Boundary where the sight line just grazes the wall end (9, -2): y = -2 * 10 / 9.
        let y = g.chain_point(&v[0].chain, v[0].w_lon, 0.0)[1];
        assert!((y + 20.0 / 9.0).abs() < 1e-6, "{y}");
        assert_eq!(v[0].bounds.lon_lo, 0.0);
    }
}
