//! Arc-length collision intervals from predicted pedestrian boxes, the
//! yield/pass constraint residual, and configuration enumeration.

use serde::{Deserialize, Serialize};

use crate::pedestrians::{PedestrianBelief, Point, RoadGraph};
use crate::reference::ReferencePath;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorridorParams {
    /// Δ = ē_y + Δ_safe [m].
    pub delta_total: f64,
    pub delta_safe: f64,
}

impl CorridorParams {
    pub fn new(e_y_max: f64, delta_safe: f64) -> Self {
        CorridorParams { delta_total: e_y_max + delta_safe, delta_safe }
    }
}

impl Default for CorridorParams {
    fn default() -> Self {
        CorridorParams::new(0.4, 1.0)
    }
}

/// Ego extent along the path relative to the state's arc length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoExtent {
    pub front: f64,
    pub rear: f64,
}

impl Default for EgoExtent {
    fn default() -> Self {
        EgoExtent { front: 3.95, rear: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionInterval {
    pub obstacle_id: usize,
    pub step: usize,
    pub sigma_lo: f64,
    pub sigma_hi: f64,
    pub empty: bool,
}

impl CollisionInterval {
    pub fn empty(obstacle_id: usize, step: usize) -> Self {
        CollisionInterval { obstacle_id, step, sigma_lo: f64::INFINITY, sigma_hi: f64::NEG_INFINITY, empty: true }
    }

    fn hull(&mut self, lo: f64, hi: f64) {
        self.sigma_lo = self.sigma_lo.min(lo);
        self.sigma_hi = self.sigma_hi.max(hi);
        self.empty = false;
    }

    pub fn contains(&self, other: &CollisionInterval, tol: f64) -> bool {
        other.empty || (!self.empty && self.sigma_lo <= other.sigma_lo + tol && self.sigma_hi >= other.sigma_hi - tol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Yield,
    Pass,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct YieldConfiguration {
    pub id: usize,
    /// One decision per obstacle (table row).
    pub decisions: Vec<Decision>,
}

/// Intervals indexed by obstacle and prediction step.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IntervalTable {
    pub rows: Vec<Vec<CollisionInterval>>,
}

impl IntervalTable {
    pub fn n_obstacles(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, obstacle: usize, step: usize) -> &CollisionInterval {
        &self.rows[obstacle][step]
    }

    pub fn is_empty(&self) -> bool {
        self.rows.iter().all(|r| r.iter().all(|c| c.empty))
    }

    /// Arc-length hull `[min σL, max σU]` of an obstacle over all steps.
    pub fn span(&self, obstacle: usize) -> Option<(f64, f64)> {
        let mut out: Option<(f64, f64)> = None;
        for c in self.rows[obstacle].iter().filter(|c| !c.empty) {
            out = Some(match out {
                None => (c.sigma_lo, c.sigma_hi),
                Some((a, b)) => (a.min(c.sigma_lo), b.max(c.sigma_hi)),
            });
        }
        out
    }

    pub fn entry_step(&self, obstacle: usize) -> Option<usize> {
        self.rows[obstacle].iter().position(|c| !c.empty)
    }
}

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Parameter range of segment `a + t (b - a)`, t ∈ [0, 1], inside a convex
/// polygon (either orientation). Degenerate polygons yield `None`.
fn clip_convex(a: Point, b: Point, poly: &[Point]) -> Option<(f64, f64)> {
    let n = poly.len();
    let mut area = 0.0;
    for i in 0..n {
        let (p, q) = (poly[i], poly[(i + 1) % n]);
        area += p[0] * q[1] - q[0] * p[1];
    }
    let scale = poly.iter().map(|p| dot(sub(*p, poly[0]), sub(*p, poly[0]))).fold(0.0, f64::max);
    if area.abs() <= 1e-12 * scale.max(1e-300) {
        return None;
    }
    let orient = if area >= 0.0 { 1.0 } else { -1.0 };
    let d = sub(b, a);
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for i in 0..n {
        let (p, q) = (poly[i], poly[(i + 1) % n]);
        let e = sub(q, p);
        // Outward normal.
        let nrm = [orient * e[1], -orient * e[0]];
        if nrm == [0.0, 0.0] {
            continue;
        }
        let num = dot(nrm, sub(a, p));
        let den = dot(nrm, d);
        if den.abs() < 1e-300 {
            if num > 0.0 {
                return None;
            }
        } else {
            let t = -num / den;
            if den > 0.0 {
                t1 = t1.min(t);
            } else {
                t0 = t0.max(t);
            }
        }
        if t0 > t1 {
            return None;
        }
    }
    Some((t0, t1))
}

fn clip_disk(a: Point, b: Point, c: Point, r: f64) -> Option<(f64, f64)> {
    let d = sub(b, a);
    let f = sub(a, c);
    let qa = dot(d, d);
    let qb = 2.0 * dot(f, d);
    let qc = dot(f, f) - r * r;
    if qa == 0.0 {
        return (qc <= 0.0).then_some((0.0, 1.0));
    }
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let t0 = ((-qb - sq) / (2.0 * qa)).max(0.0);
    let t1 = ((-qb + sq) / (2.0 * qa)).min(1.0);
    (t0 <= t1).then_some((t0, t1))
}

/// Parameter range of a segment within distance `r` of a convex polygon
/// (the polygon may be degenerate: a segment or a point).
fn clip_rounded(a: Point, b: Point, poly: &[Point; 4], r: f64) -> Option<(f64, f64)> {
    let mut out: Option<(f64, f64)> = None;
    let mut take = |iv: Option<(f64, f64)>| {
        if let Some((lo, hi)) = iv {
            out = Some(match out {
                None => (lo, hi),
                Some((x, y)) => (x.min(lo), y.max(hi)),
            });
        }
    };
    take(clip_convex(a, b, poly));
    for i in 0..4 {
        let (p, q) = (poly[i], poly[(i + 1) % 4]);
        take(clip_disk(a, b, p, r));
        let e = sub(q, p);
        let len = dot(e, e).sqrt();
        if len > 0.0 {
            let nrm = [-e[1] / len * r, e[0] / len * r];
            let strip = [
                [p[0] + nrm[0], p[1] + nrm[1]],
                [q[0] + nrm[0], q[1] + nrm[1]],
                [q[0] - nrm[0], q[1] - nrm[1]],
                [p[0] - nrm[0], p[1] - nrm[1]],
            ];
            take(clip_convex(a, b, &strip));
        }
    }
    out
}

fn center_radius(poly: &[Point; 4]) -> (Point, f64) {
    let c = [(poly[0][0] + poly[1][0] + poly[2][0] + poly[3][0]) / 4.0, (poly[0][1] + poly[1][1] + poly[2][1] + poly[3][1]) / 4.0];
    let r = poly.iter().map(|p| dot(sub(*p, c), sub(*p, c)).sqrt()).fold(0.0, f64::max);
    (c, r)
}

fn segment_point_distance(a: Point, b: Point, p: Point) -> f64 {
    let d = sub(b, a);
    let l2 = dot(d, d);
    let t = if l2 > 0.0 { (dot(sub(p, a), d) / l2).clamp(0.0, 1.0) } else { 0.0 };
    let q = [a[0] + t * d[0], a[1] + t * d[1]];
    dot(sub(p, q), sub(p, q)).sqrt()
}

/// `{s : dist(r(s), ⋃ polys) ≤ delta}` on the piecewise-linear path,
/// returned as its `[min, max]` hull.
pub fn tube_interval_polygons(path: &ReferencePath, polys: &[[Point; 4]], delta: f64) -> Option<(f64, f64)> {
    let samples = path.samples();
    let mut out: Option<(f64, f64)> = None;
    for poly in polys {
        let (c, rad) = center_radius(poly);
        for w in samples.windows(2) {
            let (a, b) = ([w[0].x, w[0].y], [w[1].x, w[1].y]);
            if segment_point_distance(a, b, c) > rad + delta {
                continue;
            }
            if let Some((t0, t1)) = clip_rounded(a, b, poly, delta) {
                let ds = w[1].s - w[0].s;
                let (lo, hi) = (w[0].s + t0 * ds, w[0].s + t1 * ds);
                out = Some(match out {
                    None => (lo, hi),
                    Some((x, y)) => (x.min(lo), y.max(hi)),
                });
            }
        }
    }
    out
}

/// Collision interval of one belief (single mode).
pub fn tube_interval(
    path: &ReferencePath,
    graph: &RoadGraph,
    belief: &PedestrianBelief,
    c: &CorridorParams,
    obstacle_id: usize,
    step: usize,
) -> CollisionInterval {
    let mut iv = CollisionInterval::empty(obstacle_id, step);
    if let Some((lo, hi)) = tube_interval_polygons(path, &belief.footprint(graph), c.delta_total) {
        iv.hull(lo, hi);
    }
    iv
}

/// Table of intervals: `predictions[i][n]` holds the modes of obstacle `i`
/// at step `n`; multimodal steps use the hull over modes.
pub fn build_collision_intervals(
    predictions: &[Vec<Vec<PedestrianBelief>>],
    path: &ReferencePath,
    graph: &RoadGraph,
    c: &CorridorParams,
) -> IntervalTable {
    let rows = predictions
        .iter()
        .enumerate()
        .map(|(i, steps)| {
            steps
                .iter()
                .enumerate()
                .map(|(n, modes)| {
                    let mut iv = CollisionInterval::empty(i, n);
                    for m in modes {
                        let t = tube_interval(path, graph, m, c, i, n);
                        if !t.empty {
                            iv.hull(t.sigma_lo, t.sigma_hi);
                        }
                    }
                    iv
                })
                .collect()
        })
        .collect();
    IntervalTable { rows }
}

/// Residual of the collision constraint for position `s` (≤ 0 is safe).
pub fn g_eval(s: f64, interval: &CollisionInterval, decision: Decision) -> f64 {
    if interval.empty {
        return 0.0;
    }
    match decision {
        Decision::Yield => s - interval.sigma_lo,
        Decision::Pass => interval.sigma_hi - s,
    }
}

/// Residual for the ego footprint: the front must stay behind σL when
/// yielding and the rear ahead of σU when passing.
pub fn g_eval_ego(s: f64, extent: &EgoExtent, interval: &CollisionInterval, decision: Decision) -> f64 {
    match decision {
        Decision::Yield => g_eval(s + extent.front, interval, decision),
        Decision::Pass => g_eval(s - extent.rear, interval, decision),
    }
}

/// Ego information used to discard configurations that cannot hold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgoSnapshot {
    pub s: f64,
    pub v: f64,
    pub a_max: f64,
    pub ts: f64,
    pub extent: EgoExtent,
}

/// Yield/pass configurations. Obstacles are clustered by overlapping
/// arc-length spans; for the closest cluster ahead, monotone prefixes by
/// entry time are emitted (yield to the first `j`, pass the rest). Other
/// obstacles ahead yield, obstacles fully behind pass. A pass is dropped
/// when full acceleration cannot bring the rear past σU by the entry step.
/// The all-yield configuration is always present.
pub fn enumerate_configurations(table: &IntervalTable, ego: &EgoSnapshot) -> Vec<YieldConfiguration> {
    let n_obs = table.n_obstacles();
    let rear = ego.s - ego.extent.rear;
    let spans: Vec<Option<(f64, f64)>> = (0..n_obs).map(|i| table.span(i)).collect();
    let mut base = vec![Decision::Yield; n_obs];
    let mut ahead = Vec::new();
    for i in 0..n_obs {
        match spans[i] {
            Some((_, hi)) if hi <= rear => base[i] = Decision::Pass,
            Some(_) => ahead.push(i),
            None => {}
        }
    }
    if ahead.is_empty() {
        return vec![YieldConfiguration { id: 0, decisions: base }];
    }
    // Union-find over overlapping spans.
    let mut parent: Vec<usize> = (0..n_obs).collect();
    fn find(p: &mut Vec<usize>, i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        let mut j = i;
        while p[j] != r {
            let nx = p[j];
            p[j] = r;
            j = nx;
        }
        r
    }
    for (x, &i) in ahead.iter().enumerate() {
        for &j in &ahead[x + 1..] {
            let (a, b) = (spans[i].unwrap(), spans[j].unwrap());
            if a.0 <= b.1 && b.0 <= a.1 {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                parent[ri] = rj;
            }
        }
    }
    let closest_root = {
        let first = *ahead
            .iter()
            .min_by(|&&i, &&j| spans[i].unwrap().0.partial_cmp(&spans[j].unwrap().0).unwrap().then(i.cmp(&j)))
            .unwrap();
        find(&mut parent, first)
    };
    let mut cluster: Vec<usize> = ahead.iter().copied().filter(|&i| find(&mut parent, i) == closest_root).collect();
    cluster.sort_by_key(|&i| (table.entry_step(i).unwrap_or(usize::MAX), i));

    let passable = |i: usize| {
        let n = table.entry_step(i).unwrap_or(0);
        let t = n as f64 * ego.ts;
        let reach = rear + ego.v * t + 0.5 * ego.a_max * t * t;
        reach >= table.get(i, n).sigma_hi
    };
    let mut out: Vec<YieldConfiguration> = Vec::new();
    for j in 0..=cluster.len() {
        let passed = &cluster[j..];
        if !passed.iter().all(|&i| passable(i)) {
            continue;
        }
        let mut d = base.clone();
        for &i in passed {
            d[i] = Decision::Pass;
        }
        out.push(YieldConfiguration { id: out.len(), decisions: d });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pedestrians::Edge;
    use crate::reference::PathSpec;

    fn iv(o: usize, n: usize, lo: f64, hi: f64) -> CollisionInterval {
        CollisionInterval { obstacle_id: o, step: n, sigma_lo: lo, sigma_hi: hi, empty: false }
    }

    #[test]
    fn point_near_straight_path() {
        let path = PathSpec::straight(30.0, 8.0).build(2.9).unwrap();
        let g = RoadGraph::new(vec![[0.0, 0.3], [20.0, 0.3]], vec![Edge { from: 0, to: 1, path: vec![], v_ped: 1.4, width: 2.0 }]).unwrap();
        let b = PedestrianBelief::measured(0, 10.0, 0.0, 1.4);
        let c = CorridorParams { delta_total: 0.5, delta_safe: 0.1 };
        let t = tube_interval(&path, &g, &b, &c, 0, 0);
        assert!(!t.empty);
        assert!((t.sigma_lo - 9.6).abs() < 1e-9 && (t.sigma_hi - 10.4).abs() < 1e-9, "{t:?}");
    }

    #[test]
    fn distant_box_is_empty() {
        let path = PathSpec::straight(30.0, 8.0).build(2.9).unwrap();
        let g = RoadGraph::new(vec![[0.0, 10.0], [20.0, 10.0]], vec![Edge { from: 0, to: 1, path: vec![], v_ped: 1.4, width: 2.0 }]).unwrap();
        let mut b = PedestrianBelief::measured(0, 10.0, 0.0, 1.4);
        b.bounds.lat_lo = -0.5;
        b.bounds.lat_hi = 0.5;
        let c = CorridorParams { delta_total: 1.0, delta_safe: 0.6 };
        assert!(tube_interval(&path, &g, &b, &c, 0, 0).empty);
    }

    #[test]
    fn g_eval_branches() {
        assert_eq!(g_eval(10.0, &CollisionInterval::empty(0, 0), Decision::Yield), 0.0);
        assert!((g_eval(10.0, &iv(0, 0, 12.3, 14.0), Decision::Yield) + 2.3).abs() < 1e-12);
        assert!((g_eval(10.0, &iv(0, 0, 11.0, 12.3), Decision::Pass) - 2.3).abs() < 1e-12);
    }

    fn table(rows: Vec<Vec<CollisionInterval>>) -> IntervalTable {
        IntervalTable { rows }
    }

    fn ego(s: f64, v: f64) -> EgoSnapshot {
        EgoSnapshot { s, v, a_max: 2.0, ts: 0.05, extent: EgoExtent::default() }
    }

    #[test]
    fn single_pedestrian_gives_yield_and_pass() {
        let mut row: Vec<CollisionInterval> = (0..101).map(|n| CollisionInterval::empty(0, n)).collect();
        for n in 40..60 {
            row[n] = iv(0, n, 15.0, 18.0);
        }
        let cfgs = enumerate_configurations(&table(vec![row]), &ego(0.0, 8.0));
        let d: Vec<Vec<Decision>> = cfgs.iter().map(|c| c.decisions.clone()).collect();
        assert_eq!(d, vec![vec![Decision::Pass], vec![Decision::Yield]]);
    }

    #[test]
    fn unreachable_pass_is_pruned() {
        let mut row: Vec<CollisionInterval> = (0..101).map(|n| CollisionInterval::empty(0, n)).collect();
        for n in 5..60 {
            row[n] = iv(0, n, 10.0, 13.0);
        }
        let cfgs = enumerate_configurations(&table(vec![row]), &ego(0.0, 8.0));
        assert_eq!(cfgs.len(), 1);
        assert_eq!(cfgs[0].decisions, vec![Decision::Yield]);
    }

    #[test]
    fn obstacle_behind_is_passed() {
        let row: Vec<CollisionInterval> = (0..101).map(|n| iv(0, n, 2.0, 4.0)).collect();
        let cfgs = enumerate_configurations(&table(vec![row]), &ego(10.0, 8.0));
        assert_eq!(cfgs.len(), 1);
        assert_eq!(cfgs[0].decisions, vec![Decision::Pass]);
    }
}
