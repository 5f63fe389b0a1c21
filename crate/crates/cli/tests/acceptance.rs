//! Acceptance suite: every criterion runs at its pinned tolerance and prints
//! one pass/fail line (visible under `--nocapture`; a failing criterion
//! fails its test).
//!
//! Run with:
//!
//! ```text
//! cargo test -p rbsde-cli --test acceptance -- --nocapture
//! ```

use rbsde_cli::suites;

fn check(outcome: suites::CriterionOutcome) {
    println!("{}", outcome.line());
    assert!(outcome.passed, "{}", outcome.line());
}

#[test]
fn criterion_01_martingale_exactness() {
    check(suites::criterion_martingale());
}

#[test]
fn criterion_02_linear_driver_closed_form() {
    check(suites::criterion_linear());
}

#[test]
fn criterion_03_snell_oracle_equality() {
    check(suites::criterion_snell());
}

#[test]
fn criterion_04_dynkin_oracle_equality() {
    check(suites::criterion_dynkin());
}

#[test]
fn criterion_05_penalization_convergence() {
    check(suites::criterion_penalization());
}

#[test]
fn criterion_06_triple_variant_agreement() {
    check(suites::criterion_triple());
}

#[test]
fn criterion_07_comparison_battery() {
    check(suites::criterion_comparison());
}

#[test]
fn criterion_08_convolution_regularizer_oracle() {
    check(suites::criterion_convolution());
}

#[test]
fn criterion_09_mokobodzki_necessity_closure() {
    check(suites::criterion_mokobodzki());
}

#[test]
fn criterion_10_monte_carlo_cross_validation() {
    check(suites::criterion_montecarlo());
}

#[test]
fn criterion_11_determinism_and_exit_codes() {
    check(suites::criterion_determinism());
}
