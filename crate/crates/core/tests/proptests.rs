//! Property tests of the pure machinery: streaming-moment merges, the
//! config format, power-law recovery, and bound structure.

use localsgd_lab::bounds::{
    lower_bound_hetero, lower_bound_homog, stepsize_and_rate_convex_3o,
    stepsize_and_rate_nonconvex_2o, stepsize_and_rate_nonconvex_3o, RateInputs,
};
use localsgd_lab::config::{ExperimentSpec, ParamValue};
use localsgd_lab::estimators::WelfordState;
use localsgd_lab::oracles::bias_envelope_2o;
use localsgd_lab::scaling::{fit_power_law, PowerPoint};
use proptest::prelude::*;

proptest! {
    #[test]
    fn welford_merge_matches_single_pass(
        data in prop::collection::vec(-1e3f64..1e3, 2..200),
        split in 1usize..199,
    ) {
        let split = split.min(data.len() - 1);
        let mut whole = WelfordState::new();
        for &v in &data {
            whole.push(v);
        }
        let mut left = WelfordState::new();
        let mut right = WelfordState::new();
        for &v in &data[..split] {
            left.push(v);
        }
        for &v in &data[split..] {
            right.push(v);
        }
        left.merge(&right);
        prop_assert_eq!(left.count(), whole.count());
        prop_assert!((left.mean() - whole.mean()).abs() <= 1e-9 * whole.mean().abs().max(1.0));
        prop_assert!(
            (left.sample_variance() - whole.sample_variance()).abs()
                <= 1e-8 * whole.sample_variance().max(1.0)
        );
    }

    #[test]
    fn exact_power_laws_recover_any_exponent(
        exponent in -3.0f64..3.0,
        scale in 0.01f64..100.0,
        len in 3usize..8,
    ) {
        let points: Vec<PowerPoint> = (0..len)
            .map(|i| {
                let s = 1.5f64.powi(i as i32);
                PowerPoint { s, y: scale * s.powf(exponent), w: 1.0 }
            })
            .collect();
        let fit = fit_power_law(&points).unwrap();
        prop_assert!((fit.exponent - exponent).abs() < 1e-9);
        prop_assert!(fit.r_squared > 1.0 - 1e-9);
    }

    #[test]
    fn config_round_trips(
        seed in proptest::option::of(0u64..u64::MAX / 2),
        ints in prop::collection::btree_map("[a-z_]{1,12}", -1_000_000i64..1_000_000, 0..6),
        floats in prop::collection::btree_map("[a-z_]{1,12}", -1e12f64..1e12, 0..6),
        strs in prop::collection::btree_map("[a-z_]{1,12}", "[ -~]{0,30}", 0..4),
        flags in prop::collection::btree_map("[a-z_]{1,12}", any::<bool>(), 0..3),
    ) {
        let mut spec = ExperimentSpec {
            command: "bias-scan".to_string(),
            seed,
            out: Some("results dir".to_string()),
            params: Default::default(),
        };
        for (k, v) in ints {
            spec.params.insert(k, ParamValue::Int(v));
        }
        for (k, v) in floats {
            spec.params.insert(k, ParamValue::Float(v));
        }
        for (k, v) in strs {
            spec.params.insert(k, ParamValue::Str(v));
        }
        for (k, v) in flags {
            spec.params.insert(k, ParamValue::Bool(v));
        }
        let back = ExperimentSpec::parse(&spec.serialize()).unwrap();
        prop_assert_eq!(spec, back);
    }

    #[test]
    fn envelope_lower_never_exceeds_upper_in_regime(
        eta_scaled in 0.001f64..0.5,
        h in 0.1f64..10.0,
        sigma in 0.0f64..5.0,
        k in 2u64..10_000,
    ) {
        let eta = eta_scaled / h; // eta <= 1/(2H)
        let e = bias_envelope_2o(eta, h, sigma, k);
        prop_assert!(e.lower.in_regime);
        prop_assert!(e.lower.value <= e.upper.value + 1e-15);
    }

    #[test]
    fn rate_terms_shrink_with_more_rounds(
        h in 0.1f64..5.0,
        sigma in 0.0f64..3.0,
        q in 0.0f64..2.0,
        g in 0.0f64..3.0,
        zeta in 0.0f64..2.0,
        m in 1u64..16,
        k in 2u64..64,
        r in 1u64..128,
    ) {
        let base = RateInputs {
            h, sigma, q, g,
            d: 1.0, b: 1.0,
            zeta_star: zeta, zeta,
            m, k, r,
        };
        let grown = RateInputs { r: r * 4, ..base };
        let totals = |i: &RateInputs| -> Vec<f64> {
            vec![
                lower_bound_homog(i).unwrap().total,
                lower_bound_hetero(i).unwrap().total,
                stepsize_and_rate_convex_3o(i).unwrap().1.total,
                stepsize_and_rate_nonconvex_3o(i).unwrap().1.total,
                stepsize_and_rate_nonconvex_2o(i).unwrap().1.total,
            ]
        };
        for (a, b) in totals(&base).iter().zip(totals(&grown)) {
            prop_assert!(b <= a + 1e-12, "{a} -> {b}");
        }
    }
}
