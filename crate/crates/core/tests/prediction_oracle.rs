//! Pedestrian reachable sets and collision intervals against sampling and
//! grid oracles.

mod common;

use common::{curved_path, edge};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use safe_mpc::constraints::{
    build_collision_intervals, enumerate_configurations, g_eval, tube_interval_polygons,
    CollisionInterval, CorridorParams, Decision, EgoExtent, EgoSnapshot, IntervalTable,
};
use safe_mpc::pedestrians::{
    predict, propagate_box, BoxBounds, PedestrianBelief, PredictionParams, RoadGraph,
};

fn long_edge() -> RoadGraph {
    RoadGraph::new(vec![[0.0, 0.0], [500.0, 0.0]], vec![edge(0, 1)]).unwrap()
}

fn t_graph() -> RoadGraph {
    RoadGraph::new(
        vec![[0.0, -6.0], [0.0, 2.0], [40.0, 2.0], [-40.0, 2.0]],
        vec![edge(0, 1), edge(1, 2), edge(1, 3)],
    )
    .unwrap()
}

/// Exact closed-loop step of a walker with disturbance `xi`.
fn walk(lon: f64, lat: f64, xi: [f64; 2], v: f64, p: &PredictionParams) -> (f64, f64) {
    (lon + p.ts * (v + xi[0]), (1.0 - p.ts * p.k_gain) * lat + p.ts * xi[1])
}

#[test]
fn box_step_outer_approximates_every_image() {
    let p = PredictionParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..50 {
        let lon = rng.gen_range(0.0..10.0);
        let lat = rng.gen_range(-0.5..0.5);
        let b = PedestrianBelief {
            chain: vec![0],
            w_lon: lon,
            w_lat: lat,
            bounds: BoxBounds { lon_lo: lon - 0.3, lon_hi: lon + 0.2, lat_lo: lat - 0.1, lat_hi: lat + 0.25 },
            mode_weight: 1.0,
            v_ped: 1.4,
        };
        let next = propagate_box(&b, &p);
        let x = p.xi_bar;
        let mut points: Vec<(f64, f64, [f64; 2])> = Vec::new();
        for &l in &[b.bounds.lon_lo, b.bounds.lon_hi] {
            for &t in &[b.bounds.lat_lo, b.bounds.lat_hi] {
                for xi in [[-x, -x], [-x, x], [x, -x], [x, x]] {
                    points.push((l, t, xi));
                }
            }
        }
        for _ in 0..1000 {
            points.push((
                rng.gen_range(b.bounds.lon_lo..=b.bounds.lon_hi),
                rng.gen_range(b.bounds.lat_lo..=b.bounds.lat_hi),
                [rng.gen_range(-x..=x), rng.gen_range(-x..=x)],
            ));
        }
        for (l, t, xi) in points {
            let (nl, nt) = walk(l, t, xi, b.v_ped, &p);
            assert!(next.bounds.contains(nl, nt, 1e-12));
        }
    }
}

#[test]
fn monte_carlo_walkers_stay_in_predicted_boxes() {
    let g = long_edge();
    let p = PredictionParams::default();
    let b0 = PedestrianBelief::measured(0, 2.0, 0.2, 1.4);
    let pred = predict(&b0, &g, &p, 100).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..10_000 {
        let (mut lon, mut lat) = (b0.w_lon, b0.w_lat);
        for modes in pred.iter().skip(1) {
            let xi = [rng.gen_range(-p.xi_bar..=p.xi_bar), rng.gen_range(-p.xi_bar..=p.xi_bar)];
            (lon, lat) = walk(lon, lat, xi, 1.4, &p);
            assert!(modes[0].bounds.contains(lon, lat, 1e-9));
        }
    }
}

#[test]
fn lateral_half_width_stays_bounded() {
    let g = long_edge();
    let p = PredictionParams::default();
    let pred = predict(&PedestrianBelief::measured(0, 0.0, 0.0, 1.4), &g, &p, 100).unwrap();
    let limit = p.ts * p.xi_bar / (p.ts * p.k_gain);
    for modes in &pred {
        let b = &modes[0].bounds;
        assert!(0.5 * (b.lat_hi - b.lat_lo) <= limit + 1e-12);
    }
}

fn chain_offset(g: &RoadGraph, truth_chain: &[usize], first: usize) -> Option<(usize, f64)> {
    let j = truth_chain.iter().position(|&e| e == first)?;
    Some((j, truth_chain[..j].iter().map(|&e| g.edge_length(e)).sum()))
}

#[test]
fn re_prediction_is_nested_in_earlier_prediction() {
    let g = t_graph();
    let p = PredictionParams { horizon: 60, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..20 {
        // Ground truth walks the chain 0 -> 1 or 0 -> 2.
        let truth_chain = vec![0, 1 + rng.gen_range(0..2)];
        let (mut lon, mut lat) = (rng.gen_range(0.0..3.0), rng.gen_range(-0.3..0.3));
        for _k in 0..40 {
            let (idx, off) = g.locate(&truth_chain, lon);
            let b_k = PedestrianBelief::measured(truth_chain[idx], lon - off, lat, 1.4);
            let pred_k = predict(&b_k, &g, &p, p.horizon).unwrap();
            let xi = [rng.gen_range(-p.xi_bar..=p.xi_bar), rng.gen_range(-p.xi_bar..=p.xi_bar)];
            (lon, lat) = walk(lon, lat, xi, 1.4, &p);
            let (idx1, off1) = g.locate(&truth_chain, lon);
            let b_k1 = PedestrianBelief::measured(truth_chain[idx1], lon - off1, lat, 1.4);
            let pred_k1 = predict(&b_k1, &g, &p, p.horizon).unwrap();
            let (_, shift) = chain_offset(&g, &b_k.chain.iter().chain(truth_chain[idx + 1..].iter()).copied().collect::<Vec<_>>(), b_k1.chain[0]).unwrap();
            for n in 0..p.horizon {
                for m1 in &pred_k1[n] {
                    let covered = pred_k[n + 1].iter().any(|m0| {
                        let full: Vec<usize> = m0.chain.clone();
                        let Some((j, _)) = chain_offset(&g, &full, m1.chain[0]) else { return false };
                        let tail = &full[j..];
                        let prefix_ok = tail.iter().zip(&m1.chain).all(|(a, b)| a == b);
                        let shifted = BoxBounds {
                            lon_lo: m1.bounds.lon_lo + shift,
                            lon_hi: m1.bounds.lon_hi + shift,
                            ..m1.bounds
                        };
                        prefix_ok && m0.bounds.contains_box(&shifted, 1e-9)
                    });
                    assert!(covered, "step {n} not nested");
                }
            }
        }
    }
}

#[test]
fn tube_intervals_match_dense_grid() {
    let report = common::tube_suite(40, 0.02).unwrap_or_else(|e| panic!("{e}"));
    println!("{report}");
}

#[test]
fn no_pedestrians_give_an_empty_table() {
    let path = curved_path();
    let t = build_collision_intervals(&[], &path, &t_graph(), &CorridorParams::default());
    assert_eq!(t.n_obstacles(), 0);
    assert!(t.is_empty());
}

fn row(o: usize, steps: std::ops::Range<usize>, lo: f64, hi: f64) -> Vec<CollisionInterval> {
    (0..101)
        .map(|n| {
            if steps.contains(&n) {
                CollisionInterval { obstacle_id: o, step: n, sigma_lo: lo, sigma_hi: hi, empty: false }
            } else {
                CollisionInterval::empty(o, n)
            }
        })
        .collect()
}

#[test]
fn three_pedestrian_layout_gives_two_configurations() {
    // i occupies the corridor only now; j enters later at the same crossing;
    // l crosses further ahead.
    let table = IntervalTable { rows: vec![row(0, 0..1, 20.0, 23.0), row(1, 30..60, 21.0, 24.0), row(2, 20..70, 60.0, 63.0)] };
    let ego = EgoSnapshot { s: 10.0, v: 10.0, a_max: 2.0, ts: 0.05, extent: EgoExtent::default() };
    let cfgs = enumerate_configurations(&table, &ego);
    let got: Vec<Vec<Decision>> = cfgs.into_iter().map(|c| c.decisions).collect();
    use Decision::*;
    assert_eq!(got, vec![vec![Yield, Pass, Yield], vec![Yield, Yield, Yield]]);
}

proptest! {
    #[test]
    fn tube_interval_grows_with_delta(off in -2.0f64..2.0, d1 in 0.1f64..1.5, extra in 0.0f64..1.0) {
        let path = curved_path();
        let q = path.query(20.0).unwrap();
        let c = [q.x - off * q.heading.sin(), q.y + off * q.heading.cos()];
        let quad = [c, [c[0] + 0.3, c[1]], [c[0] + 0.3, c[1] + 0.2], [c[0], c[1] + 0.2]];
        let small = tube_interval_polygons(&path, &[quad], d1);
        let big = tube_interval_polygons(&path, &[quad], d1 + extra);
        if let Some((lo, hi)) = small {
            let (blo, bhi) = big.unwrap();
            prop_assert!(blo <= lo + 1e-12 && bhi >= hi - 1e-12);
        }
    }

    #[test]
    fn g_eval_is_one_lipschitz(s1 in -50.0f64..50.0, s2 in -50.0f64..50.0, lo in -10.0f64..10.0, w in 0.0f64..5.0, y in any::<bool>()) {
        let iv = CollisionInterval { obstacle_id: 0, step: 0, sigma_lo: lo, sigma_hi: lo + w, empty: false };
        let d = if y { Decision::Yield } else { Decision::Pass };
        prop_assert!((g_eval(s1, &iv, d) - g_eval(s2, &iv, d)).abs() <= (s1 - s2).abs() + 1e-12);
    }
}
