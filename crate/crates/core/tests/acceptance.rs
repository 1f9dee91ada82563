//! The acceptance gate: runs the full suite once and asserts every
//! criterion individually, so a red criterion is visible by name.
//!
//! Set LOCALSGD_LAB_ACCEPTANCE=quick to run the reduced profile during
//! development (10x fewer samples, 1.5x wider tolerance bands).

use localsgd_lab::acceptance::{run_suite, Profile, SuiteOptions, SuiteReport};
use std::sync::OnceLock;

static REPORT: OnceLock<SuiteReport> = OnceLock::new();

fn report() -> &'static SuiteReport {
    REPORT.get_or_init(|| {
        let profile = match std::env::var("LOCALSGD_LAB_ACCEPTANCE").as_deref() {
            Ok("quick") => Profile::Quick,
            _ => Profile::Full,
        };
        let workers = std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1);
        let opts = SuiteOptions {
            profile,
            seed: 42,
            workers,
        };
        let rep = run_suite(&opts).expect("suite infrastructure must not error");
        for o in &rep.outcomes {
            eprintln!("{} ({:.2} s)", o.verdict_line(), o.seconds);
        }
        rep
    })
}

fn assert_criterion(id: u32) {
    let o = report()
        .outcomes
        .iter()
        .find(|o| o.id == id)
        .unwrap_or_else(|| panic!("criterion {id} missing from the suite"));
    assert!(o.pass, "criterion {:02} {}: {}", o.id, o.name, o.detail);
}

#[test]
fn criterion_01_density_drifts_toward_flat_side() {
    assert_criterion(1);
}

#[test]
fn criterion_02_bias_inside_second_order_envelope() {
    assert_criterion(2);
}

#[test]
fn criterion_03_bias_growth_exponents() {
    assert_criterion(3);
}

#[test]
fn criterion_04_quadratic_closed_form_oracle() {
    assert_criterion(4);
}

#[test]
fn criterion_05_heterogeneous_recursion_exactness() {
    assert_criterion(5);
}

#[test]
fn criterion_06_heterogeneous_drift_ceiling() {
    assert_criterion(6);
}

#[test]
fn criterion_07_homogeneous_round_drift_ceiling() {
    assert_criterion(7);
}

#[test]
fn criterion_08_stochastic_dominance_by_comparators() {
    assert_criterion(8);
}

#[test]
fn criterion_09_sde_taylor_coefficient() {
    assert_criterion(9);
}

#[test]
fn criterion_10_prescribed_step_size_upper_bounds() {
    assert_criterion(10);
}

#[test]
fn criterion_11_pure_arithmetic_identities() {
    assert_criterion(11);
}

#[test]
fn criterion_12_worker_count_determinism() {
    assert_criterion(12);
}
