//! Interior-point QP against an exhaustive active-set enumeration oracle.

mod common;

#[test]
fn interior_point_matches_active_set_enumeration() {
    let report = common::qp_suite(500, 1e-6).unwrap_or_else(|e| panic!("{e}"));
    println!("{report}");
}
