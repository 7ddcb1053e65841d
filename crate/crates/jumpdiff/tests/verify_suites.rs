//! The unit and invariants verification suites must pass on a fresh checkout.

use jumpdiff::verification::{render_report, run_suite, Suite};

#[test]
fn unit_suite_passes() {
    let reports = run_suite(Suite::Unit).unwrap();
    assert!(reports.iter().all(|r| r.passed), "{}", render_report(&reports));
}

#[test]
fn invariants_suite_passes() {
    let reports = run_suite(Suite::Invariants).unwrap();
    assert!(reports.iter().all(|r| r.passed), "{}", render_report(&reports));
}
