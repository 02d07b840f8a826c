//! Synthesizes the terminal ingredients for the default vehicle and prints the
//! gains, costs, set sizes and certificates.

use std::time::Instant;

use safe_mpc::terminal::{monte_carlo_invariance, synthesize, TerminalConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let t0 = Instant::now();
    let ing = synthesize(&TerminalConfig::default())?;
    println!("synthesis time: {:.2} s", t0.elapsed().as_secs_f64());
    println!("K_lon = {:?}", ing.k_lon);
    println!("P_lon = {:?}", ing.p_lon);
    println!("X_lon rows = {}", ing.x_lon.offsets.len());
    for (n, o) in ing.x_lon.normals.iter().zip(&ing.x_lon.offsets) {
        println!("  {:>9.5} {:>9.5} <= {:.5}", n[0], n[1], o);
    }
    println!("K_lat = {:?}", ing.k_lat);
    println!("P_lat (trace {:.2}):", ing.p_lat.iter().enumerate().map(|(i, r)| r[i]).sum::<f64>());
    for r in &ing.p_lat {
        println!("  {:>10.3?}", r);
    }
    println!("X_lat rows = {}", ing.x_lat.offsets.len());
    println!("beta_bar = {:.6}, eps_delta = {:?}", ing.embedding.beta_bar, ing.embedding.eps_delta);
    println!("vertices = {:?}", ing.embedding.vertices);
    for c in &ing.certificates {
        println!("  [{}] {:<32} margin {:+.3e}", if c.passed { "ok" } else { "FAIL" }, c.name, c.margin);
    }
    let t1 = Instant::now();
    let (lon, lat) = monte_carlo_invariance(&ing, 10_000, 100, 7)?;
    println!("Monte-Carlo escapes: lon {lon}, lat {lat} ({:.2} s)", t1.elapsed().as_secs_f64());
    Ok(())
}
