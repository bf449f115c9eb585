use hyptree_core::tree::{leaf_weight, regularized_gain, split_gain, Penalties};
use proptest::prelude::*;

// Textbook form, used as the oracle.
fn naive_gain(gl: f64, hl: f64, gr: f64, hr: f64) -> f64 {
    gl * gl / hl + gr * gr / hr - (gl + gr) * (gl + gr) / (hl + hr)
}

#[test]
fn worked_values() {
    assert_eq!(split_gain(1.0, 1.0, -1.0, 1.0).unwrap(), 2.0);
    assert_eq!(split_gain(2.0, 2.0, 3.0, 3.0).unwrap(), 0.0);
    assert!((split_gain(3.0, 1.0, 1.0, 2.0).unwrap() - (9.0 + 0.5 - 16.0 / 3.0)).abs() < 1e-12);

    let zero = Penalties::default();
    assert_eq!(regularized_gain(1.0, 1.0, -1.0, 1.0, &zero).unwrap(), 1.0);
    let gamma = Penalties { gamma: 5.0, ..zero };
    assert_eq!(regularized_gain(1.0, 1.0, -1.0, 1.0, &gamma).unwrap(), -4.0);
    let lambda = Penalties { lambda: 1.0, ..zero };
    assert_eq!(regularized_gain(2.0, 1.0, -2.0, 1.0, &lambda).unwrap(), 2.0);

    assert_eq!(leaf_weight(-4.0, 2.0, 0.0).unwrap(), 2.0);
    assert_eq!(leaf_weight(0.0, 5.0, 0.0).unwrap(), 0.0);
    assert_eq!(leaf_weight(-4.0, 2.0, 2.0).unwrap(), 1.0);
}

#[test]
fn rejects_non_positive_hessians() {
    assert!(split_gain(1.0, 0.0, 1.0, 1.0).is_err());
    assert!(split_gain(1.0, 1.0, 1.0, -1.0).is_err());
    assert!(leaf_weight(1.0, 0.0, 0.0).is_err());
    assert!(regularized_gain(1.0, 1.0, 1.0, 1.0, &Penalties { lambda: -1.0, ..Penalties::default() }).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn gain_is_never_negative(
        gl in -1e3f64..1e3, hl in 1e-6f64..1e3, gr in -1e3f64..1e3, hr in 1e-6f64..1e3,
    ) {
        let gain = split_gain(gl, hl, gr, hr).unwrap();
        prop_assert!(gain >= 0.0);
        let oracle = naive_gain(gl, hl, gr, hr);
        let scale = (gl * gl / hl + gr * gr / hr).max(1.0);
        prop_assert!((gain - oracle).abs() <= 1e-9 * scale, "gain {} oracle {}", gain, oracle);
    }

    #[test]
    fn proportional_children_give_zero_gain(ratio in -50f64..50.0, hl in 1e-3f64..1e3, hr in 1e-3f64..1e3) {
        let gain = split_gain(ratio * hl, hl, ratio * hr, hr).unwrap();
        prop_assert!(gain.abs() < 1e-9);
    }

    #[test]
    fn gain_is_symmetric_and_scale_covariant(
        gl in -10f64..10.0, hl in 0.1f64..10.0, gr in -10f64..10.0, hr in 0.1f64..10.0, s in 0.1f64..10.0,
    ) {
        let gain = split_gain(gl, hl, gr, hr).unwrap();
        let swapped = split_gain(gr, hr, gl, hl).unwrap();
        prop_assert!((gain - swapped).abs() <= 1e-12 * gain.max(1.0));
        // scaling g by s scales the gain by s²
        let scaled = split_gain(s * gl, hl, s * gr, hr).unwrap();
        prop_assert!((scaled - s * s * gain).abs() <= 1e-9 * (s * s * gain).max(1.0));
    }

    #[test]
    fn unpenalized_score_is_half_the_gain(
        gl in -10f64..10.0, hl in 0.1f64..10.0, gr in -10f64..10.0, hr in 0.1f64..10.0,
    ) {
        let half = regularized_gain(gl, hl, gr, hr, &Penalties::default()).unwrap();
        let gain = split_gain(gl, hl, gr, hr).unwrap();
        prop_assert!((half - 0.5 * gain).abs() <= 1e-9 * gain.max(1.0));
    }

    #[test]
    fn gamma_shifts_the_score_down(
        gl in -10f64..10.0, hl in 0.1f64..10.0, gr in -10f64..10.0, hr in 0.1f64..10.0,
        lambda in 0f64..10.0, gamma in 0f64..10.0,
    ) {
        let base = regularized_gain(gl, hl, gr, hr, &Penalties { lambda, ..Penalties::default() }).unwrap();
        let shifted = regularized_gain(gl, hl, gr, hr, &Penalties { lambda, gamma, alpha_l1: 0.0 }).unwrap();
        prop_assert!((base - gamma - shifted).abs() < 1e-9);
    }
}
