//! Acceptance criteria. Each test runs one verification suite, prints a
//! single pass/fail line and asserts every check in it.

use exgrad::harness::{suite_for_criterion, Check};

fn criterion(n: u8) {
    let suite = suite_for_criterion(n).expect("suite registered");
    let checks = suite.run();
    let passed = !checks.is_empty() && checks.iter().all(|c| c.passed);
    let detail: Vec<String> = checks
        .iter()
        .map(|c: &Check| format!("{}={} ({})", c.name, if c.passed { "ok" } else { "FAIL" }, c.detail))
        .collect();
    println!(
        "criterion {n:>2} [{}]: {} | {}",
        suite.name,
        if passed { "PASS" } else { "FAIL" },
        detail.join("; ")
    );
    assert!(passed, "criterion {n} failed: {}", detail.join("; "));
}

#[test]
fn criterion_01_eg_strong_contraction() {
    criterion(1);
}

#[test]
fn criterion_02_eg_monotone_rate() {
    criterion(2);
}

#[test]
fn criterion_03_speg_interpolated() {
    criterion(3);
}

#[test]
fn criterion_04_speg_switching() {
    criterion(4);
}

#[test]
fn criterion_05_er_constants() {
    criterion(5);
}

#[test]
fn criterion_06_speg_weak_minty() {
    criterion(6);
}

#[test]
fn criterion_07_line_search_budget() {
    criterion(7);
}

#[test]
fn criterion_08_polyak_contraction() {
    criterion(8);
}

#[test]
fn criterion_09_dec_polyak_schedule() {
    criterion(9);
}

#[test]
fn criterion_10_nu_roots() {
    criterion(10);
}

#[test]
fn criterion_11_l0l1_contraction() {
    criterion(11);
}

#[test]
fn criterion_12_l0l1_convergence() {
    criterion(12);
}

#[test]
fn criterion_13_jacobian_fit() {
    criterion(13);
}

#[test]
fn criterion_14_proxskip_lyapunov() {
    criterion(14);
}

#[test]
fn criterion_15_proxskip_svrg() {
    criterion(15);
}

#[test]
fn criterion_16_comm_frequency() {
    criterion(16);
}
