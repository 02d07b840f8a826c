//! Builds a curved reference from straights, clothoids and an arc, samples
//! it, and checks that the vehicle can follow it with feed-forward inputs.

use safe_mpc::models::VehicleParams;
use safe_mpc::reference::{check_reference_feasibility, PathSpec, Segment};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = PathSpec {
        start: [0.0, 0.0, 0.0],
        segments: vec![
            Segment::Straight { length: 20.0 },
            Segment::Clothoid { kappa_start: 0.0, kappa_end: 0.05, length: 10.0 },
            Segment::Arc { curvature: 0.05, length: 15.0 },
            Segment::Clothoid { kappa_start: 0.05, kappa_end: 0.0, length: 10.0 },
            Segment::Straight { length: 30.0 },
        ],
        speed: vec![[0.0, 8.0], [25.0, 6.0], [60.0, 6.0], [80.0, 8.0]],
        spacing: 0.1,
    };
    let vehicle = VehicleParams::default();
    let path = spec.build(vehicle.wheelbase)?;
    let (s0, s1) = path.s_range();
    println!("arc length [{s0:.1}, {s1:.1}] m, {} samples", path.samples().len());
    let mut s = s0;
    while s <= s1 {
        let q = path.query(s)?;
        println!(
            "s {s:5.1}  ({:7.2}, {:7.2})  heading {:6.3}  kappa {:6.3}  delta_ref {:6.3}  v_ref {:4.2}",
            q.x, q.y, q.heading, q.kappa, q.delta_ref, q.v_ref
        );
        s += 10.0;
    }
    let report = check_reference_feasibility(&path, &vehicle, 0.05);
    println!(
        "feed-forward drift {:.3} m / {:.4} rad, residual {:.3}, violated {:?}, passed {}",
        report.max_position_drift, report.max_heading_drift, report.max_residual, report.violated, report.passed
    );
    Ok(())
}
