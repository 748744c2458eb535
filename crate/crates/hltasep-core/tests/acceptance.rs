//! The acceptance suite: runs every verification criterion at its stated
//! tolerance and prints one pass/fail line per criterion (visible with
//! `cargo test --test acceptance -- --nocapture`, and always from the CLI's
//! `verify-all` subcommand).

use hltasep_core::acceptance::{verify_all, DEFAULT_SEED};

#[test]
fn acceptance_criteria() {
    let results = verify_all(DEFAULT_SEED);
    let mut all_passed = true;
    for r in &results {
        println!("{}", r.report_line());
        all_passed &= r.passed;
    }
    assert!(
        all_passed,
        "acceptance criteria failed:\n{}",
        results
            .iter()
            .filter(|r| !r.passed)
            .map(|r| r.report_line())
            .collect::<Vec<_>>()
            .join("\n")
    );
}
