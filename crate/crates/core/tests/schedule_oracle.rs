//! Schedules checked against frozen outputs of tools/schedule_oracle.py.

use bids_core::geometry::{
    compute_split_factors, grid_with_exponent, rate_exponent, GridUnits, ProjectedInterval, Schedule, ScheduleParams,
};
use bids_core::policy::threshold_u;
use serde::Deserialize;

#[derive(Deserialize)]
struct Case {
    #[serde(rename = "T")]
    t: u64,
    #[serde(rename = "M")]
    m: usize,
    alpha: f64,
    a_scale: f64,
    c_b: f64,
    exponent: u32,
    lower: f64,
    upper: f64,
    gamma: f64,
    split_factors: Vec<u64>,
    widths: Vec<f64>,
    grid: Vec<u64>,
}

#[derive(Deserialize)]
struct Fixture {
    cases: Vec<Case>,
    np_cases: Vec<Case>,
    named: serde_json::Value,
}

fn fixture() -> Fixture {
    serde_json::from_str(include_str!("fixtures/schedule_oracle.json")).unwrap()
}

fn check(c: &Case) {
    let params = ScheduleParams {
        horizon: c.t,
        batches: c.m,
        alpha: c.alpha,
        a_scale: c.a_scale,
        c_b: c.c_b,
        exponent: c.exponent,
        grid_units: GridUnits::Projected,
    };
    let s = Schedule::new(&params, ProjectedInterval::new(c.lower, c.upper).unwrap()).unwrap();
    let tag = format!("T={} M={} alpha={} exp={}", c.t, c.m, c.alpha, c.exponent);
    assert_eq!(s.split_factors, c.split_factors, "{tag}");
    assert_eq!(s.grid, c.grid, "{tag}");
    assert!((s.gamma - c.gamma).abs() < 1e-15, "{tag}");
    for (a, b) in s.widths.iter().zip(&c.widths) {
        assert!((a - b).abs() <= 1e-12 * b.abs(), "{tag}: width {a} vs {b}");
    }
}

#[test]
fn index_schedules_match_oracle() {
    let f = fixture();
    assert_eq!(f.cases.len(), 100);
    f.cases.iter().for_each(check);
}

#[test]
fn hypercube_schedules_match_oracle() {
    fixture().np_cases.iter().for_each(check);
}

#[test]
fn named_values() {
    let n = fixture().named;
    let factors = |k: &str| -> Vec<u64> { serde_json::from_value(n[k]["split_factors"].clone()).unwrap() };
    assert_eq!(
        compute_split_factors(1_000_000, 5, 1.0, 1.0).unwrap(),
        factors("t1e6_m5")
    );
    assert_eq!(
        compute_split_factors(1_000_000, 2, 1.0, 1.0).unwrap(),
        factors("t1e6_m2")
    );
    assert_eq!(compute_split_factors(2, 2, 1.0, 1.0).unwrap(), factors("t2_m2"));
    assert!((rate_exponent(1.0, 5, 3) - n["t1e6_m5"]["rate"].as_f64().unwrap()).abs() < 1e-15);

    let g = grid_with_exponent(10_000, &[0.25, 0.25], 1.0, 3).unwrap();
    assert_eq!(g.deltas[0], n["delta_t1e4_w025"].as_u64().unwrap());
    let g = grid_with_exponent(100, &[1.0, 1.0], 1.0, 3).unwrap();
    assert_eq!(g.deltas[0], n["delta_t100_w1"].as_u64().unwrap());

    let u = threshold_u(32, 1000, 0.5);
    let want = n["threshold_m32_t1000_w05"].as_f64().unwrap();
    assert!((u - want).abs() <= 1e-14 * want);
}
