//! Closed-loop harness: collision distance oracle, determinism, and nominal
//! behaviour on simple scenes.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use safe_mpc::constraints::EgoExtent;
use safe_mpc::models::{GlobalState, VehicleParams};
use safe_mpc::reference::check_reference_feasibility;
use safe_mpc::sim::{collision_check, run_scenario, RunOptions, Scenario, ScenarioFile, SimOutput, TraceRow};

fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.json"))
}

fn shipped(name: &str) -> ScenarioFile {
    serde_json::from_str(&std::fs::read_to_string(scenario_path(name)).unwrap()).unwrap()
}

/// Distance from `p` to the rectangle boundary by dense sampling, negated
/// when `p` is inside.
fn sampled_distance(pose: &GlobalState, ext: &EgoExtent, half_width: f64, p: [f64; 2]) -> f64 {
    let (sn, cs) = pose.psi.sin_cos();
    let to_world = |lx: f64, ly: f64| [pose.x + cs * lx - sn * ly, pose.y + sn * lx + cs * ly];
    let corners = [(-ext.rear, -half_width), (ext.front, -half_width), (ext.front, half_width), (-ext.rear, half_width)];
    let mut best = f64::INFINITY;
    for i in 0..4 {
        let (a, b) = (corners[i], corners[(i + 1) % 4]);
        let len = (b.0 - a.0).hypot(b.1 - a.1);
        let n = (len / 2e-4).ceil() as usize;
        for k in 0..=n {
            let t = k as f64 / n as f64;
            let q = to_world(a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1));
            best = best.min((q[0] - p[0]).hypot(q[1] - p[1]));
        }
    }
    let dx = p[0] - pose.x;
    let dy = p[1] - pose.y;
    let lx = cs * dx + sn * dy;
    let ly = -sn * dx + cs * dy;
    let inside = lx > -ext.rear && lx < ext.front && ly.abs() < half_width;
    if inside {
        -best
    } else {
        best
    }
}

#[test]
fn collision_distance_matches_boundary_sampling() {
    let ext = EgoExtent::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let pose = GlobalState {
            x: rng.gen_range(-20.0..20.0),
            y: rng.gen_range(-20.0..20.0),
            psi: rng.gen_range(-3.2..3.2),
            ..Default::default()
        };
        let p = [pose.x + rng.gen_range(-6.0..6.0), pose.y + rng.gen_range(-6.0..6.0)];
        let radius = 0.3;
        let (d, hit) = collision_check(&pose, &ext, 1.0, p, radius);
        let expect = sampled_distance(&pose, &ext, 1.0, p) - radius;
        assert!((d - expect).abs() <= 1e-3, "{d} vs {expect}");
        assert_eq!(hit, d <= 0.0);
    }
}

#[test]
fn pedestrian_at_center_and_far_away() {
    let ext = EgoExtent::default();
    let pose = GlobalState::default();
    let center = [0.5 * (ext.front - ext.rear), 0.0];
    let (d, hit) = collision_check(&pose, &ext, 1.0, center, 0.3);
    assert!(hit && d < 0.0);
    let (d, hit) = collision_check(&pose, &ext, 1.0, [ext.front + 10.0, 0.0], 0.3);
    assert!(!hit);
    assert!((d - 9.7).abs() < 1e-12);
}

fn without_timing(trace: &[TraceRow]) -> Vec<TraceRow> {
    trace.iter().map(|r| TraceRow { solve_ms: 0.0, ..*r }).collect()
}

fn short_run(name: &str, duration: f64, seed: u64) -> SimOutput {
    let mut f = shipped(name);
    f.duration = duration;
    run_scenario(&Scenario::from_file(f).unwrap(), &RunOptions { seed: Some(seed), ..Default::default() }).unwrap()
}

#[test]
fn identical_seed_gives_identical_trace() {
    let a = short_run("safe_crossing", 2.5, 3);
    let b = short_run("safe_crossing", 2.5, 3);
    let (ta, tb) = (without_timing(&a.trace), without_timing(&b.trace));
    for (ra, rb) in ta.iter().zip(&tb) {
        for (x, y) in [(ra.s, rb.s), (ra.v, rb.v), (ra.a_req, rb.a_req), (ra.delta_sp, rb.delta_sp), (ra.cost, rb.cost)] {
            assert_eq!(x.to_bits(), y.to_bits(), "t = {}", ra.t);
        }
    }
    assert_eq!(ta, tb);
    assert_eq!(a.walkers, b.walkers);
    assert_eq!(a.g_history, b.g_history);
}

#[test]
fn trace_time_advances_by_the_sample_time() {
    let out = short_run("no_pedestrian", 1.0, 0);
    for w in out.trace.windows(2) {
        assert!((w[1].t - w[0].t - 0.05).abs() < 1e-9);
    }
}

/// A visible walker that follows the motion model exactly brings no new
/// information, so each absolute step keeps its bound across re-predictions.
#[test]
fn undisturbed_visible_pedestrian_gives_constant_g_series() {
    let mut f = shipped("no_pedestrian");
    f.duration = 2.0;
    f.controller.prediction.xi_bar = 0.0;
    f.graph = serde_json::from_value(serde_json::json!({
        "nodes": [[40.0, -8.0], [40.0, 8.0]],
        "edges": [{"from": 0, "to": 1}]
    }))
    .unwrap();
    f.pedestrians = serde_json::from_value(serde_json::json!([{"edge": 0, "lon": 4.0, "lat": 0.0}])).unwrap();
    let out = run_scenario(&Scenario::from_file(f).unwrap(), &RunOptions::default()).unwrap();
    assert!(out.g_history[0].sigma_lo.iter().any(|g| g.is_finite()));
    for w in out.g_history.windows(2) {
        let shift = w[1].k - w[0].k;
        for (j, cur) in w[1].sigma_lo.iter().enumerate() {
            let Some(prev) = w[0].sigma_lo.get(j + shift) else { break };
            assert!(cur == prev || (cur - prev).abs() <= 1e-9, "k = {}, step {}: {cur} vs {prev}", w[1].k, w[1].k + j);
        }
    }
    assert_eq!(out.summary.g_monotonicity_violations, 0);
    assert_eq!(out.summary.containment_violations, 0);
}

#[test]
fn obstacle_free_speed_converges_to_reference() {
    let mut f = shipped("no_pedestrian");
    f.initial.v = Some(6.0);
    let v_ref = f.reference.speed[0][1];
    let out = run_scenario(&Scenario::from_file(f).unwrap(), &RunOptions::default()).unwrap();
    assert!(!out.summary.collision);
    let last = out.trace.last().unwrap();
    assert!((last.v - v_ref).abs() <= 0.01 * v_ref, "v = {} at t = {}", last.v, last.t);
}

#[test]
fn shipped_obstacle_free_run_keeps_its_speed() {
    let f = shipped("no_pedestrian");
    let v_ref = f.reference.speed[0][1];
    let out = run_scenario(&Scenario::from_file(f).unwrap(), &RunOptions::default()).unwrap();
    assert!(!out.summary.collision);
    assert_eq!(out.summary.fallback_steps, 0);
    for r in out.trace.iter().filter(|r| r.t >= 2.0) {
        assert!(r.v >= 0.95 * v_ref, "v = {} at t = {}", r.v, r.t);
    }
}

#[test]
fn intersection_reference_is_trackable_at_city_speed() {
    let sc = Scenario::from_file(shipped("intersection_replica")).unwrap();
    let rep = check_reference_feasibility(&sc.path, &VehicleParams::default(), 0.05);
    assert!(rep.passed, "{rep:?}");
    assert!(sc.path.samples().iter().any(|q| (q.v_ref - 30.0 / 3.6).abs() < 0.01));
}
