//! The acceptance suite: one test per check, each printing a single
//! pass/fail line with the measured values and the required bounds.

use spma_lab::verify::run_check;

fn check(id: u8) {
    let outcome = run_check(id);
    println!("{outcome}");
    assert!(outcome.passed, "{outcome}");
}

#[test]
fn check_01_bandit_linear_rate() {
    check(1);
}

#[test]
fn check_02_bandit_superlinear_closed_form() {
    check(2);
}

#[test]
fn check_03_per_iteration_contraction() {
    check(3);
}

#[test]
fn check_04_linear_convergence_to_tolerance() {
    check(4);
}

#[test]
fn check_05_one_hot_fa_matches_tabular() {
    check(5);
}

#[test]
fn check_06_gradient_oracles() {
    check(6);
}

#[test]
fn check_07_surrogate_convexity() {
    check(7);
}

#[test]
fn check_08_sampler_frequencies() {
    check(8);
}

#[test]
fn check_09_linear_fa_auc_ordering() {
    check(9);
}

#[test]
fn check_10_noisy_advantage_robustness() {
    check(10);
}

#[test]
fn check_11_value_difference_identity() {
    check(11);
}
