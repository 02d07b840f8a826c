//! Predicts a walker approaching a junction, maps the predicted boxes to
//! arc-length collision intervals on a straight path and enumerates the
//! yield/pass configurations.

use safe_mpc::constraints::{build_collision_intervals, enumerate_configurations, CorridorParams, EgoExtent, EgoSnapshot};
use safe_mpc::pedestrians::{predict, Edge, PedestrianBelief, PredictionParams, RoadGraph};
use safe_mpc::reference::PathSpec;

fn edge(from: usize, to: usize) -> Edge {
    Edge { from, to, path: Vec::new(), v_ped: 1.4, width: 2.0 }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Sidewalk towards a corner at (30, -6); one branch crosses the road, one continues.
    let graph = RoadGraph::new(
        vec![[20.0, -6.0], [30.0, -6.0], [30.0, 8.0], [45.0, -6.0]],
        vec![edge(0, 1), edge(1, 2), edge(1, 3)],
    )?;
    let params = PredictionParams { horizon: 100, ..Default::default() };
    let walker = PedestrianBelief::measured(0, 8.0, 0.0, 1.4);
    let steps = predict(&walker, &graph, &params, params.horizon)?;
    for n in (0..=params.horizon).step_by(10) {
        print!("step {n:>3}: {} mode(s)", steps[n].len());
        for m in &steps[n] {
            let [x, y] = m.position(&graph);
            print!("  edge {} at ({x:.2}, {y:.2}) weight {:.2}", m.edge_id(&graph), m.mode_weight);
        }
        println!();
    }

    let path = PathSpec::straight(120.0, 30.0 / 3.6).build(2.9)?;
    let table = build_collision_intervals(&[steps], &path, &graph, &CorridorParams::default());
    match table.span(0) {
        Some((lo, hi)) => println!("interval span [{lo:.2}, {hi:.2}] m, entry step {:?}", table.entry_step(0)),
        None => println!("walker never enters the corridor"),
    }
    let ego = EgoSnapshot { s: 0.0, v: 30.0 / 3.6, a_max: 2.0, ts: params.ts, extent: EgoExtent::default() };
    for c in enumerate_configurations(&table, &ego) {
        println!("configuration {}: {:?}", c.id, c.decisions);
    }
    Ok(())
}
