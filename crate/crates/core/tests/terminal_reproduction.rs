//! Terminal gains, costs, embedding constants and invariance certificates
//! against reference values and sampling.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use safe_mpc::models::VehicleParams;
use safe_mpc::terminal::{
    beta_bound, decrease_slack, from_rows, lateral_embedding, monte_carlo_invariance, secant_slope_range, synthesize,
    verify_ingredients, LateralBounds, TerminalConfig, TerminalIngredients,
};

const K_LON: [f64; 2] = [0.0693, 0.4151];
const P_LON: [[f64; 2]; 2] = [[210.78, 80.19], [80.19, 38.29]];
const P_LAT: [[f64; 4]; 4] = [
    [325.51, 593.13, 97.32, 1.46],
    [593.13, 6091.11, 1979.43, 29.75],
    [97.32, 1979.43, 1159.47, 17.15],
    [1.46, 29.75, 17.15, 1.28],
];

fn ingredients() -> &'static TerminalIngredients {
    static I: OnceLock<TerminalIngredients> = OnceLock::new();
    I.get_or_init(|| synthesize(&TerminalConfig::default()).unwrap())
}

#[test]
fn longitudinal_gain_matches_reference_value() {
    let ing = ingredients();
    for (k, e) in ing.k_lon.iter().zip(K_LON) {
        assert!((k - e).abs() <= 1e-3, "{:?}", ing.k_lon);
    }
}

#[test]
fn longitudinal_cost_matches_reference_value() {
    let p = &ingredients().p_lon;
    for r in 0..2 {
        for c in 0..2 {
            let rel = (p[r][c] - P_LON[r][c]).abs() / P_LON[r][c].abs();
            assert!(rel <= 0.02, "P_lon[{r}][{c}] = {} vs {}", p[r][c], P_LON[r][c]);
        }
    }
}

#[test]
fn rounded_reference_costs_satisfy_decrease_at_every_vertex() {
    let ing = ingredients();
    let (a, b) = ing.longitudinal_system();
    let a_cl = &a - &b * ing.k_lon_matrix();
    let p_lon = DMatrix::from_fn(2, 2, |r, c| P_LON[r][c]);
    let slack = decrease_slack(&p_lon, &a_cl, &from_rows(&ing.f_lon));
    assert!(slack >= -1e-2, "lon slack {slack}");
    let p_lat = DMatrix::from_fn(4, 4, |r, c| P_LAT[r][c]);
    for (i, a) in ing.lateral_closed_loops().iter().enumerate() {
        let slack = decrease_slack(&p_lat, a, &from_rows(&ing.f_lat));
        assert!(slack >= -1e-2, "lat vertex {i} slack {slack}");
    }
}

#[test]
fn embedding_constants_with_long_wheelbase() {
    let vehicle = VehicleParams { wheelbase: 2.98, ..Default::default() };
    let b = LateralBounds::default();
    let beta = beta_bound(b.delta_ref_max, b.e_y_max, vehicle.wheelbase);
    assert!((beta - 0.2109).abs() <= 5e-4, "beta {beta}");
    let eps = secant_slope_range(b.delta_max, beta, b.grid_step);
    assert!((eps[1] - 1.17).abs() <= 0.01, "eps {eps:?}");
    let emb = lateral_embedding(&vehicle, &b);
    assert_eq!(emb.vertices.len(), 6);
}

#[test]
fn synthesized_certificates_all_pass() {
    let ing = ingredients();
    for c in &ing.certificates {
        assert!(c.passed, "{} margin {}", c.name, c.margin);
    }
    assert_eq!(ing.x_lat.offsets.len(), 16);
}

#[test]
fn halved_longitudinal_cost_breaks_its_certificate() {
    let mut ing = ingredients().clone();
    for row in &mut ing.p_lon {
        for v in row {
            *v *= 0.5;
        }
    }
    let certs = verify_ingredients(&ing, 1e-7).unwrap();
    let lon = certs.iter().find(|c| c.name == "lon cost decrease").unwrap();
    assert!(!lon.passed, "margin {}", lon.margin);
}

#[test]
fn sets_survive_monte_carlo_propagation() {
    let (lon, lat) = monte_carlo_invariance(ingredients(), 10_000, 100, 7).unwrap();
    assert_eq!((lon, lat), (0, 0));
}
