//! Acceptance gate: runs the ten acceptance criteria end to end and prints
//! one pass/fail line per criterion (use `-- --nocapture` to stream them).
//!
//! Set `ACCEPTANCE_ONLY=3,5` to run a subset during development.

use jumpdiff::verification::{acceptance_criterion, acceptance_report};

#[test]
fn acceptance_criteria() {
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let reports = match only {
        Some(ns) => ns.into_iter().map(acceptance_criterion).collect(),
        None => acceptance_report(),
    };
    for report in &reports {
        println!("{}", report.line());
    }
    let failures: Vec<&str> =
        reports.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    assert!(failures.is_empty(), "failed criteria: {failures:?}");
}
