//! Runs a scenario file in closed loop and prints the summary.
//!
//! `cargo run --example closed_loop -- scenarios/safe_crossing.json [seed]`

use std::path::PathBuf;

use safe_mpc::sim::{run_scenario, RunOptions, Scenario};

fn main() {
    let mut args = std::env::args().skip(1);
    let file = args.next().map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/safe_crossing.json")
    });
    let seed = args.next().and_then(|s| s.parse().ok());
    let sc = match Scenario::load(&file) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("cannot load {}: {e}", file.display());
            std::process::exit(2);
        }
    };
    let out = match run_scenario(&sc, &RunOptions { seed, ..Default::default() }) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("simulation failed: {e}");
            std::process::exit(3);
        }
    };
    for r in out.trace.iter().step_by(10) {
        println!(
            "t {:5.2}  s {:6.2}  v {:5.2}  a {:6.2}  a_req {:6.2}  e_y {:6.3}  cfg {:>3}  slack {:8.2e}  dist {:6.2}  {:5.1} ms",
            r.t,
            r.s,
            r.v,
            r.a,
            r.a_req,
            r.e_y,
            if r.selected_config == usize::MAX { "-".to_string() } else { r.selected_config.to_string() },
            r.slack_norm,
            r.min_dist,
            r.solve_ms
        );
    }
    for d in out.diagnostics.iter().filter(|d| d.error.is_some()) {
        println!("t {:5.2}  fallback: {}", d.t, d.error.as_deref().unwrap_or(""));
    }
    println!("{}", serde_json::to_string_pretty(&out.summary).unwrap());
}
