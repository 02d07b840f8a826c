//! Solves the tracking OCP on a straight road with an obstacle interval
//! ahead and prints the planned stop in front of it.

use safe_mpc::constraints::{CollisionInterval, Decision, EgoExtent, IntervalTable, YieldConfiguration};
use safe_mpc::models::{ErrorState, VehicleParams};
use safe_mpc::ocp::{g_rows, solve_sqp, Iterate, OcpConfig, OcpContext, TerminalData};
use safe_mpc::reference::PathSpec;
use safe_mpc::terminal::{synthesize, TerminalConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let terminal = TerminalData::from_ingredients(&synthesize(&TerminalConfig::default())?)?;
    let path = PathSpec::straight(300.0, 30.0 / 3.6).build(2.9)?;
    let vehicle = VehicleParams::default();
    let extent = EgoExtent::default();
    let ctx = OcpContext { path: &path, vehicle: &vehicle, terminal: &terminal, extent };
    let cfg = OcpConfig::default();

    let q = path.query_clamped(0.0);
    let x0 = ErrorState { s: 0.0, e_y: 0.2, delta: q.delta_ref, v: q.v_ref, a: q.a_ref, ..Default::default() };
    let sigma_lo = 28.0;
    let row = (0..=cfg.horizon_m)
        .map(|n| CollisionInterval { obstacle_id: 0, step: n, sigma_lo, sigma_hi: sigma_lo + 3.0, empty: false })
        .collect();
    let table = IntervalTable { rows: vec![row] };
    let yield_all = YieldConfiguration { id: 0, decisions: vec![Decision::Yield] };
    let rows = g_rows(&table, &yield_all, cfg.horizon_m);

    let it = Iterate::cold_start(&x0, &path, &cfg);
    let sol = solve_sqp(&x0, &it, &cfg, &ctx, &rows, 0, 20, 1e-9, false)?;
    println!("cost {:.3}, max slack {:.1e}, kkt {:.1e}", sol.cost, sol.max_slack(), sol.kkt_residual);
    for (n, (x, u)) in sol.states.iter().zip(&sol.inputs).enumerate().step_by(10) {
        println!(
            "n {n:>3}  s {:6.2}  front {:6.2}  v {:5.2}  e_y {:6.3}  a_req {:6.2}",
            x.s,
            x.s + extent.front,
            x.v,
            x.e_y,
            u.a_req
        );
    }
    let last = sol.states.last().unwrap();
    println!("terminal: front at {:.2} m (interval starts at {sigma_lo}), v = {:.2e}", last.s + extent.front, last.v);
    Ok(())
}
