//! Deterministic closed-loop harness: ground-truth walkers, line-of-sight
//! sensing, reachable-set prediction, configuration solves, ego plant and
//! trace emission.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{
    build_collision_intervals, enumerate_configurations, CorridorParams, EgoExtent, EgoSnapshot, IntervalTable,
    YieldConfiguration,
};
use crate::models::{known_constraints, rk4_step, ControlInput, ErrorState, GlobalState, ModelError, VehicleParams};
use crate::ocp::{OcpConfig, OcpContext, OcpError, RtiController, TerminalData};
use crate::pedestrians::{
    compatible, predict, spawn_virtual_pedestrians, step_belief, OcclusionModel, PedestrianBelief, PedestrianError,
    Point, PredictionParams, RoadGraph,
};
use crate::reference::{PathSpec, ReferenceError, ReferencePath};
use crate::terminal::{synthesize, TerminalConfig, TerminalError, TerminalIngredients};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error(transparent)]
    Ocp(#[from] OcpError),
    #[error(transparent)]
    Pedestrian(#[from] PedestrianError),
    #[error(transparent)]
    Reference(#[from] ReferenceError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Terminal(#[from] TerminalError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// A ground-truth walker placed on the road graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PedestrianSpec {
    #[serde(default)]
    pub spawn_time: f64,
    pub edge: usize,
    /// Distance walked along `edge` at spawn.
    pub lon: f64,
    #[serde(default)]
    pub lat: f64,
    /// Nominal walking speed; the edge speed when absent.
    #[serde(default)]
    pub speed: Option<f64>,
    /// Disturbance seed; derived from the run seed when absent.
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitialState {
    pub s: f64,
    pub e_y: f64,
    pub e_psi: f64,
    /// Initial speed; the reference speed when absent.
    pub v: Option<f64>,
}

impl Default for InitialState {
    fn default() -> Self {
        InitialState { s: 0.0, e_y: 0.0, e_psi: 0.0, v: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerSpec {
    pub ocp: OcpConfig,
    pub virtual_pedestrians: bool,
    pub steering_limit: bool,
    pub prediction: PredictionParams,
    pub corridor: CorridorParams,
    pub extent: EgoExtent,
}

impl Default for ControllerSpec {
    fn default() -> Self {
        ControllerSpec {
            ocp: OcpConfig::default(),
            virtual_pedestrians: true,
            steering_limit: false,
            prediction: PredictionParams::default(),
            corridor: CorridorParams::default(),
            extent: EgoExtent::default(),
        }
    }
}

fn empty_graph() -> RoadGraph {
    RoadGraph { nodes: Vec::new(), edges: Vec::new() }
}

fn default_radius() -> f64 {
    0.3
}

fn default_half_width() -> f64 {
    1.0
}

/// On-disk scenario description (JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub vehicle: VehicleParams,
    pub reference: PathSpec,
    #[serde(default = "empty_graph")]
    pub graph: RoadGraph,
    #[serde(default)]
    pub sensor: OcclusionModel,
    #[serde(default)]
    pub pedestrians: Vec<PedestrianSpec>,
    #[serde(default)]
    pub controller: ControllerSpec,
    #[serde(default)]
    pub initial: InitialState,
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    /// Arc length of the crossing, used for the time-to-clear metric.
    #[serde(default)]
    pub crosswalk_s: Option<f64>,
    #[serde(default = "default_radius")]
    pub pedestrian_radius: f64,
    #[serde(default = "default_half_width")]
    pub ego_half_width: f64,
}

/// Validated scenario with the built reference path.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub path: ReferencePath,
    pub graph: RoadGraph,
}

impl Scenario {
    pub fn from_file(mut file: ScenarioFile) -> Result<Self, SimError> {
        let bad = |m: String| Err(SimError::InvalidScenario(m));
        if !(file.duration > 0.0) {
            return bad("duration must be positive".into());
        }
        let c = &mut file.controller;
        c.ocp.validate()?;
        c.prediction.horizon = c.ocp.horizon_m;
        c.prediction.validate()?;
        if (c.prediction.ts - c.ocp.ts).abs() > 1e-12 {
            return bad("prediction and controller sampling times differ".into());
        }
        file.vehicle.validate()?;
        let mut graph = file.graph.clone();
        if !graph.edges.is_empty() {
            graph.validate()?;
        }
        for (i, p) in file.pedestrians.iter().enumerate() {
            if p.edge >= graph.edges.len() {
                return bad(format!("pedestrian {i} references missing edge {}", p.edge));
            }
            if p.lon < 0.0 || p.lon > graph.edge_length(p.edge) || p.spawn_time < 0.0 {
                return bad(format!("pedestrian {i} lies outside its edge or spawns before t = 0"));
            }
        }
        let path = file.reference.build(file.vehicle.wheelbase)?;
        Ok(Scenario { file, path, graph })
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = fs::read_to_string(path)?;
        Scenario::from_file(serde_json::from_str(&text)?)
    }

    pub fn ts(&self) -> f64 {
        self.file.controller.ocp.ts
    }

    /// Vehicle parameters seen by the controller.
    pub fn controller_vehicle(&self) -> VehicleParams {
        VehicleParams { steering_limit: self.file.controller.steering_limit, ..self.file.vehicle }
    }

    pub fn initial_state(&self) -> ErrorState {
        let i = &self.file.initial;
        let q = self.path.query_clamped(i.s);
        ErrorState {
            s: i.s,
            e_y: i.e_y,
            e_psi: i.e_psi,
            delta: q.delta_ref,
            alpha: 0.0,
            v: i.v.unwrap_or(q.v_ref),
            a: 0.0,
        }
    }
}

/// One trace line; the CSV header is the field list in order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub s: f64,
    pub e_y: f64,
    pub e_psi: f64,
    pub delta: f64,
    pub alpha: f64,
    pub v: f64,
    pub a: f64,
    pub a_req: f64,
    pub delta_sp: f64,
    pub selected_config: usize,
    pub cost: f64,
    pub slack_norm: f64,
    pub min_dist: f64,
    pub collision: bool,
    pub solve_ms: f64,
}

/// Per-step solver diagnostics (one JSON object per line).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub t: f64,
    pub pose: GlobalState,
    pub n_obstacles: usize,
    pub n_virtual: usize,
    pub configurations: Vec<YieldConfiguration>,
    /// Penalized cost per configuration (`None` when its QP failed).
    pub config_costs: Vec<Option<f64>>,
    pub degraded: bool,
    pub fallback: bool,
    pub kkt_residual: f64,
    pub qp_iterations: usize,
    pub h_violation: f64,
    pub error: Option<String>,
}

/// Predicted lower collision bounds `min_i σ^L_{i,n|k}` for `n = 0..=M`
/// at step `k` (`+∞` where nothing intersects the corridor).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GSnapshot {
    pub k: usize,
    pub t: f64,
    pub sigma_lo: Vec<f64>,
}

/// A pair `(n, k)` at which the yield bound tightened.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GViolation {
    /// Step of the newer prediction.
    pub k: usize,
    /// Absolute step index of the compared prediction entry.
    pub step: usize,
    pub previous: f64,
    pub current: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub seed: u64,
    pub steps: usize,
    pub collision: bool,
    pub min_dist: f64,
    pub first_collision_time: Option<f64>,
    pub speed_at_first_collision: Option<f64>,
    pub time_to_clear: Option<f64>,
    pub detection_time: Option<f64>,
    pub braking_onset_time: Option<f64>,
    pub first_g_violation_time: Option<f64>,
    pub g_monotonicity_violations: usize,
    pub max_slack: f64,
    pub active_slack_steps: usize,
    pub degraded_steps: usize,
    pub fallback_steps: usize,
    pub max_h_violation: f64,
    pub containment_checks: usize,
    pub containment_violations: usize,
    pub max_solve_ms: f64,
    pub median_solve_ms: f64,
    pub final_speed: f64,
    pub final_s: f64,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub trace: Vec<TraceRow>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub g_history: Vec<GSnapshot>,
    pub summary: Summary,
    /// Ground-truth walker positions per step (`None` before spawn / after exit).
    pub walkers: Vec<Vec<Option<Point>>>,
}

/// Signed distance from a point to the ego rectangle (negative inside)
/// minus `radius`, and the collision flag.
pub fn collision_check(pose: &GlobalState, extent: &EgoExtent, half_width: f64, point: Point, radius: f64) -> (f64, bool) {
    let (sn, cs) = pose.psi.sin_cos();
    let dx = point[0] - pose.x;
    let dy = point[1] - pose.y;
    let lx = cs * dx + sn * dy;
    let ly = -sn * dx + cs * dy;
    let cx = 0.5 * (extent.front - extent.rear);
    let hx = 0.5 * (extent.front + extent.rear);
    let qx = (lx - cx).abs() - hx;
    let qy = ly.abs() - half_width;
    let outside = qx.max(0.0).hypot(qy.max(0.0));
    let inside = qx.max(qy).min(0.0);
    let d = outside + inside - radius;
    (d, d <= 0.0)
}

/// Pairs where `σ^L_{n|k+1} < σ^L_{n|k} − tol` at shared absolute steps.
pub fn g_monotonicity_violations(history: &[GSnapshot], tol: f64) -> Vec<GViolation> {
    let mut out = Vec::new();
    for w in history.windows(2) {
        let (prev, cur) = (&w[0], &w[1]);
        let shift = cur.k - prev.k;
        for (j, &c) in cur.sigma_lo.iter().enumerate() {
            let Some(&p) = prev.sigma_lo.get(j + shift) else { break };
            if c < p - tol {
                out.push(GViolation { k: cur.k, step: cur.k + j, previous: p, current: c });
            }
        }
    }
    out
}

/// Lower-bound series for one obstacle row (or all rows when `None`).
pub fn g_history_row(table: &IntervalTable, obstacle: Option<usize>) -> Vec<f64> {
    let steps = table.rows.first().map_or(0, |r| r.len());
    (0..steps)
        .map(|n| {
            table
                .rows
                .iter()
                .enumerate()
                .filter(|(i, _)| obstacle.map_or(true, |o| o == *i))
                .map(|(_, r)| &r[n])
                .filter(|c| !c.empty)
                .map(|c| c.sigma_lo)
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

#[derive(Debug, Clone)]
struct Walker {
    /// Edges walked so far, current last.
    history: Vec<usize>,
    lon: f64,
    lat: f64,
    speed: f64,
    spawn_time: f64,
    alive: bool,
    rng: ChaCha8Rng,
}

impl Walker {
    fn edge(&self) -> usize {
        *self.history.last().unwrap()
    }

    fn active(&self, t: f64) -> bool {
        self.alive && t + 1e-9 >= self.spawn_time
    }

    fn step(&mut self, g: &RoadGraph, p: &PredictionParams) {
        let xl: f64 = self.rng.gen_range(-p.xi_bar..=p.xi_bar);
        let xa: f64 = self.rng.gen_range(-p.xi_bar..=p.xi_bar);
        self.lon += p.ts * (self.speed + xl);
        self.lat = (1.0 - p.ts * p.k_gain) * self.lat + p.ts * xa;
        loop {
            let len = g.edge_length(self.edge());
            if self.lon <= len {
                break;
            }
            let succ = g.successors(self.edge());
            if succ.is_empty() {
                self.alive = false;
                break;
            }
            let next = succ[self.rng.gen_range(0..succ.len())];
            self.lon -= len;
            self.history.push(next);
        }
    }
}

/// Truth sample: history length, distance on the current edge, lateral offset.
#[derive(Debug, Clone, Copy)]
struct TruthSample {
    hist_len: usize,
    lon: f64,
    lat: f64,
}

/// Predictions issued while a walker was visible.
struct IssuedPrediction {
    k: usize,
    walker: usize,
    /// Index into the walker history of the measured edge.
    start: usize,
    steps: Vec<Vec<PedestrianBelief>>,
}

/// Options overriding scenario fields for one run.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub ingredients: Option<TerminalIngredients>,
}

/// Terminal ingredients synthesized for the scenario's vehicle.
pub fn ingredients_for(sc: &Scenario) -> Result<TerminalIngredients, SimError> {
    let cfg = TerminalConfig { vehicle: sc.file.vehicle, ts: sc.ts(), ..Default::default() };
    Ok(synthesize(&cfg)?)
}

/// Runs the closed loop for the scenario duration.
pub fn run_scenario(sc: &Scenario, opts: &RunOptions) -> Result<SimOutput, SimError> {
    let f = &sc.file;
    let seed = opts.seed.unwrap_or(f.seed);
    let ts = sc.ts();
    let ctl_spec = &f.controller;
    let pp = ctl_spec.prediction;
    let m = ctl_spec.ocp.horizon_m;
    let ing = match &opts.ingredients {
        Some(i) => i.clone(),
        None => ingredients_for(sc)?,
    };
    let terminal = TerminalData::from_ingredients(&ing)?;
    let vehicle = sc.controller_vehicle();
    let ctx = OcpContext { path: &sc.path, vehicle: &vehicle, terminal: &terminal, extent: ctl_spec.extent };
    let mut controller = RtiController::new(ctl_spec.ocp)?;
    let g = &sc.graph;

    let mut walkers: Vec<Walker> = f
        .pedestrians
        .iter()
        .enumerate()
        .map(|(i, p)| Walker {
            history: vec![p.edge],
            lon: p.lon,
            lat: p.lat,
            speed: p.speed.unwrap_or(g.edges[p.edge].v_ped),
            spawn_time: p.spawn_time,
            alive: true,
            rng: ChaCha8Rng::seed_from_u64(p.seed.unwrap_or(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64))),
        })
        .collect();
    let mut tracks: Vec<Option<Vec<PedestrianBelief>>> = vec![None; walkers.len()];
    let mut truth: Vec<Vec<Option<TruthSample>>> = vec![Vec::new(); walkers.len()];
    let mut issued: Vec<IssuedPrediction> = Vec::new();

    let steps = (f.duration / ts).round() as usize;
    let mut x = sc.initial_state();
    let mut trace = Vec::with_capacity(steps);
    let mut diagnostics = Vec::with_capacity(steps);
    let mut g_history = Vec::with_capacity(steps);
    let mut walker_points = vec![Vec::with_capacity(steps); walkers.len()];
    let mut summary = Summary { scenario: f.name.clone(), seed, min_dist: f64::INFINITY, ..Default::default() };

    for k in 0..steps {
        let t = k as f64 * ts;
        let pose = sc.path.frenet_to_global(&x);
        let origin = f.sensor.sensor_origin(pose.x, pose.y, pose.psi);

        // Sensing and tracking.
        let mut obstacles: Vec<Vec<PedestrianBelief>> = Vec::new();
        for (i, w) in walkers.iter().enumerate() {
            let active = w.active(t);
            truth[i].push(active.then_some(TruthSample { hist_len: w.history.len(), lon: w.lon, lat: w.lat }));
            let pos = active.then(|| g.chain_point(&[w.edge()], w.lon, w.lat));
            walker_points[i].push(pos);
            let seen = pos.is_some_and(|p| f.sensor.visible(origin, p));
            if seen {
                if summary.detection_time.is_none() {
                    summary.detection_time = Some(t);
                }
                tracks[i] = Some(vec![PedestrianBelief::measured(w.edge(), w.lon, w.lat, g.edges[w.edge()].v_ped)]);
            } else if !active {
                tracks[i] = None;
            }
            if let Some(modes) = &tracks[i] {
                obstacles.push(modes.clone());
            }
        }
        let n_tracked = obstacles.len();
        if ctl_spec.virtual_pedestrians && !g.edges.is_empty() {
            for v in spawn_virtual_pedestrians(&f.sensor, origin, g, &sc.path, &pp) {
                obstacles.push(vec![v]);
            }
        }

        // Prediction and collision intervals.
        let mut predictions = Vec::with_capacity(obstacles.len());
        for modes in &obstacles {
            let mut merged: Vec<Vec<PedestrianBelief>> = vec![Vec::new(); m + 1];
            for b in modes {
                for (n, ms) in predict(b, g, &pp, m)?.into_iter().enumerate() {
                    merged[n].extend(ms);
                }
            }
            predictions.push(merged);
        }
        {
            let mut oi = 0;
            for (i, w) in walkers.iter().enumerate() {
                if tracks[i].is_none() {
                    continue;
                }
                let visible = walker_points[i][k].is_some_and(|p| f.sensor.visible(origin, p));
                if visible {
                    issued.push(IssuedPrediction { k, walker: i, start: w.history.len() - 1, steps: predictions[oi].clone() });
                }
                oi += 1;
            }
        }
        let table = build_collision_intervals(&predictions, &sc.path, g, &ctl_spec.corridor);
        g_history.push(GSnapshot { k, t, sigma_lo: if table.is_empty() { vec![f64::INFINITY; m + 1] } else { g_history_row(&table, None) } });
        let ego = EgoSnapshot { s: x.s, v: x.v, a_max: vehicle.bounds.a_max, ts, extent: ctl_spec.extent };
        let configs = enumerate_configurations(&table, &ego);

        // Control.
        let (u, row_cfg, cost, slack, solve_ms, diag) = match controller.step(&x, &configs, &table, &ctx) {
            Ok(sel) => {
                let b = &sel.best;
                let slack = b.max_slack();
                if sel.degraded {
                    summary.degraded_steps += 1;
                }
                let d = StepDiagnostics {
                    t,
                    pose,
                    n_obstacles: obstacles.len(),
                    n_virtual: obstacles.len() - n_tracked,
                    configurations: configs.clone(),
                    config_costs: sel.costs.clone(),
                    degraded: sel.degraded,
                    fallback: false,
                    kkt_residual: b.kkt_residual,
                    qp_iterations: b.qp_iterations,
                    h_violation: 0.0,
                    error: None,
                };
                (b.inputs[0], b.config_id, b.cost, slack, sel.wall_time * 1e3, d)
            }
            Err(e @ (OcpError::AllFailed(_) | OcpError::Diverged(_) | OcpError::Qp(_))) => {
                controller.reset();
                summary.fallback_steps += 1;
                let u = ControlInput { a_req: vehicle.bounds.a_min, delta_sp: x.delta };
                let d = StepDiagnostics {
                    t,
                    pose,
                    n_obstacles: obstacles.len(),
                    n_virtual: obstacles.len() - n_tracked,
                    configurations: configs.clone(),
                    config_costs: vec![None; configs.len()],
                    degraded: true,
                    fallback: true,
                    kkt_residual: f64::NAN,
                    qp_iterations: 0,
                    h_violation: 0.0,
                    error: Some(e.to_string()),
                };
                (u, usize::MAX, f64::NAN, f64::NAN, 0.0, d)
            }
            Err(e) => return Err(e.into()),
        };
        let u = ControlInput {
            a_req: u.a_req.clamp(vehicle.bounds.a_min, vehicle.bounds.a_max),
            delta_sp: u.delta_sp.clamp(-vehicle.bounds.delta_max, vehicle.bounds.delta_max),
        };
        let h_violation = known_constraints(&x, &u, &vehicle).into_iter().fold(0.0, f64::max);
        summary.max_h_violation = summary.max_h_violation.max(h_violation);
        if slack.is_finite() {
            summary.max_slack = summary.max_slack.max(slack);
            if slack > crate::ocp::SLACK_TOL {
                summary.active_slack_steps += 1;
            }
        }
        if summary.braking_onset_time.is_none() && u.a_req <= vehicle.bounds.a_min + 1e-3 {
            summary.braking_onset_time = Some(t);
        }

        // Collision check on the current configuration.
        let mut min_dist = f64::INFINITY;
        let mut hit = false;
        for p in walker_points.iter().filter_map(|w| w[k]) {
            let (d, c) = collision_check(&pose, &ctl_spec.extent, f.ego_half_width, p, f.pedestrian_radius);
            min_dist = min_dist.min(d);
            hit |= c;
        }
        summary.min_dist = summary.min_dist.min(min_dist);
        if hit && !summary.collision {
            summary.collision = true;
            summary.first_collision_time = Some(t);
            summary.speed_at_first_collision = Some(x.v);
        }
        if let (Some(cw), None) = (f.crosswalk_s, summary.time_to_clear) {
            if x.s >= cw {
                summary.time_to_clear = Some(t);
            }
        }

        trace.push(TraceRow {
            t,
            s: x.s,
            e_y: x.e_y,
            e_psi: x.e_psi,
            delta: x.delta,
            alpha: x.alpha,
            v: x.v,
            a: x.a,
            a_req: u.a_req,
            delta_sp: u.delta_sp,
            selected_config: row_cfg,
            cost,
            slack_norm: slack,
            min_dist,
            collision: hit,
            solve_ms,
        });
        diagnostics.push(StepDiagnostics { h_violation, ..diag });

        // Advance plant, walkers and hidden tracks.
        x = rk4_step(&x, &u, ts, ctl_spec.ocp.rk4_substeps, &sc.path, &f.vehicle)?;
        for (i, w) in walkers.iter_mut().enumerate() {
            if w.active(t) {
                w.step(g, &pp);
            }
            if let Some(modes) = tracks[i].take() {
                let mut next = Vec::new();
                let mut ok = true;
                for b in &modes {
                    match step_belief(b, g, &pp) {
                        Ok(ms) => next.extend(ms),
                        Err(_) => ok = false,
                    }
                }
                tracks[i] = ok.then_some(next);
            }
        }
    }

    // Containment of the truth in predictions issued while visible.
    for ip in &issued {
        let w = &walkers[ip.walker];
        for (n, modes) in ip.steps.iter().enumerate() {
            let Some(Some(ts_)) = truth[ip.walker].get(ip.k + n) else { continue };
            let walked = &w.history[ip.start..ts_.hist_len];
            let lon: f64 = walked[..walked.len() - 1].iter().map(|&e| g.edge_length(e)).sum::<f64>() + ts_.lon;
            summary.containment_checks += 1;
            let inside = modes
                .iter()
                .any(|b| compatible(&b.chain, walked) && b.bounds.contains(lon, ts_.lat, 1e-9));
            if !inside {
                summary.containment_violations += 1;
            }
        }
    }

    let violations = g_monotonicity_violations(&g_history, 1e-6);
    summary.g_monotonicity_violations = violations.len();
    summary.first_g_violation_time = violations.first().map(|v| v.k as f64 * ts);
    summary.steps = trace.len();
    let mut times: Vec<f64> = trace.iter().map(|r| r.solve_ms).filter(|v| *v > 0.0).collect();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    summary.max_solve_ms = times.last().copied().unwrap_or(0.0);
    summary.median_solve_ms = if times.is_empty() { 0.0 } else { times[times.len() / 2] };
    summary.final_speed = x.v;
    summary.final_s = x.s;
    Ok(SimOutput { trace, diagnostics, g_history, summary, walkers: walker_points })
}

/// Writes trace, summary, diagnostics and plot-data files into `dir`.
pub fn write_outputs(dir: &Path, sc: &Scenario, out: &SimOutput) -> Result<(), SimError> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("trace.csv"))?;
    for r in &out.trace {
        w.serialize(r)?;
    }
    w.flush()?;
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&out.summary)?)?;
    let mut diag = fs::File::create(dir.join("diagnostics.jsonl"))?;
    for d in &out.diagnostics {
        writeln!(diag, "{}", serde_json::to_string(d)?)?;
    }

    let mut v = csv::Writer::from_path(dir.join("plot_velocity.csv"))?;
    v.write_record(["t", "v", "v_ref", "a", "a_req", "delta", "e_y"])?;
    for r in &out.trace {
        let q = sc.path.query_clamped(r.s);
        v.write_record([r.t, r.v, q.v_ref, r.a, r.a_req, r.delta, r.e_y].map(|x| x.to_string()))?;
    }
    v.flush()?;

    let mut gw = csv::Writer::from_path(dir.join("plot_g.csv"))?;
    gw.write_record(["t_k", "t_n", "sigma_lo"])?;
    let ts = sc.ts();
    for snap in &out.g_history {
        for (n, s) in snap.sigma_lo.iter().enumerate() {
            if s.is_finite() {
                gw.write_record([snap.t, (snap.k + n) as f64 * ts, *s].map(|x| x.to_string()))?;
            }
        }
    }
    gw.flush()?;

    let mut hw = csv::Writer::from_path(dir.join("plot_runtime.csv"))?;
    hw.write_record(["bin_lo_ms", "bin_hi_ms", "count"])?;
    let width = 5.0;
    let max = out.trace.iter().map(|r| r.solve_ms).fold(0.0, f64::max);
    let bins = ((max / width).floor() as usize) + 1;
    let mut counts = vec![0usize; bins];
    for r in &out.trace {
        if r.solve_ms > 0.0 {
            counts[((r.solve_ms / width).floor() as usize).min(bins - 1)] += 1;
        }
    }
    for (i, c) in counts.iter().enumerate() {
        hw.write_record([(i as f64 * width).to_string(), ((i + 1) as f64 * width).to_string(), c.to_string()])?;
    }
    hw.flush()?;

    let mut pw = csv::Writer::from_path(dir.join("plot_pedestrians.csv"))?;
    pw.write_record(["t", "walker", "x", "y"])?;
    for (i, pts) in out.walkers.iter().enumerate() {
        for (k, p) in pts.iter().enumerate() {
            if let Some(p) = p {
                pw.write_record([(k as f64 * ts).to_string(), i.to_string(), p[0].to_string(), p[1].to_string()])?;
            }
        }
    }
    pw.flush()?;
    Ok(())
}
