//! Full acceptance suite: one pass/fail line per criterion.
//!
//! Runs without the libtest harness so the lines always reach stdout.
//! Every tolerance is pinned in `silt_core::verify`; the pinned values are
//! checked first.

use silt_core::config::VerifyScale;
use silt_core::verify::{self, run_suite};

const SEED: u64 = 20260601;

fn tolerances_are_pinned() {
    assert_eq!(verify::CLOCK_TOL, 1e-9);
    assert_eq!(verify::GREEN_EQUIV_TOL, 1e-10);
    assert_eq!(verify::ROW_SUM_TOL, 1e-10);
    assert_eq!(verify::C_FIT_SPREAD_MAX, 2.0);
    assert_eq!(verify::FREE_CROSS_TOL, 1e-4);
    assert_eq!(verify::ON_DIAGONAL_BAND, 2.0);
    assert_eq!(verify::C_STAR_CHANGE, 0.10);
    assert_eq!(verify::EISENBAUM_Z, 4.0);
    assert_eq!(verify::CONSTANT_SIGMAS, 3.0);
    assert_eq!(verify::SANDWICH_SLACK, 1e-12);
    assert_eq!(verify::SOLVER_AGREEMENT, 1e-6);
    assert_eq!(verify::DUALITY_DELTA, 0.05);
    assert_eq!(verify::NORM_SLACK, 1e-3);
    assert_eq!(verify::SCALING_TOL, 0.05);
    assert_eq!(verify::CONSISTENCY_SIGMAS, 3.0);
    assert_eq!(verify::RATE_SLACK, 0.5);
    assert_eq!(verify::OVERLAP_RANGE, (3e-4, 3e-3));
    println!("tolerances pinned ... ok");
}

fn acceptance_suite() {
    let dir = tempfile::tempdir().unwrap();
    let mut print = |c: &verify::Criterion| println!("{}", c.line());
    let report = run_suite(SEED, VerifyScale::Full, dir.path(), true, &mut print).unwrap();
    assert_eq!(report.criteria.len(), 15);
    let ids: Vec<u32> = report.criteria.iter().map(|c| c.id).collect();
    assert_eq!(ids, (1..=15).collect::<Vec<_>>());
    let failed: Vec<String> = report
        .criteria
        .iter()
        .filter(|c| !c.pass)
        .map(|c| c.line())
        .collect();
    println!("{}", report.render().lines().last().unwrap());
    assert!(failed.is_empty(), "failed criteria:\n{}", failed.join("\n"));
}

fn main() {
    tolerances_are_pinned();
    acceptance_suite();
}
