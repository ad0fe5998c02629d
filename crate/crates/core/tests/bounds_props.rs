use ntk_eigen_core::bounds::*;
use ntk_eigen_core::specfun::{harmonic_dim, Activation};
use ntk_eigen_core::stats::fit_constant;
use proptest::prelude::*;

const SQRT_2: f64 = std::f64::consts::SQRT_2;

proptest! {
    #[test]
    fn prefactors_at_most_one(d in 3usize..200, delta in 1e-4f64..SQRT_2) {
        prop_assume!(delta < SQRT_2);
        let s = shallow_lambda_lower(d, delta).unwrap();
        let p = deep_lambda_lower(d, delta).unwrap();
        prop_assert!(s > 0.0 && s <= delta * delta);
        prop_assert!(p > 0.0 && p <= delta.powi(4) * (1.0 + 1e-15));
        prop_assert!((p - s * delta * delta).abs() <= 1e-14 * s);
    }

    #[test]
    fn truncation_plan_is_consistent(d in 3usize..12, delta in 0.05f64..1.41, beta in 0u8..=1, c in 0.1f64..10.0) {
        let plan = select_truncation(d, delta, beta, c).unwrap();
        prop_assert!(plan.truncation >= 1);
        if plan.case_id == 1 {
            prop_assert_eq!(plan.truncation, 1);
        } else {
            prop_assert!(plan.harmonic_count >= cap_threshold(d, delta, c));
        }
        // case 2 cannot fire for δ < √2
        prop_assert!(plan.case_id != 2);
        if plan.truncation <= 200 {
            let telescoped: u64 = (0..=plan.truncation).map(|r| harmonic_dim(2 * r + beta as u64, d as u64).unwrap()).sum();
            prop_assert_eq!(telescoped as f64, plan.harmonic_count);
        }
    }

    #[test]
    fn rate_product_is_inverse_cube(d in 1usize..1000, r in 1u64..1000) {
        let a = implicit_transform_rate(d, r, Activation::ReluDerivative).unwrap();
        let b = implicit_transform_rate(d, r, Activation::ScaledRelu).unwrap();
        let want = (r as f64).powi(-3);
        prop_assert!((a * b - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn shallow_width_is_linear_in_opnorm(opnorm_sq in 0.5f64..50.0, delta in 0.1f64..1.4) {
        let a = width_requirement_shallow(10, 3, delta, opnorm_sq, 0.1, 1.0).unwrap();
        let b = width_requirement_shallow(10, 3, delta, 2.0 * opnorm_sq, 0.1, 1.0).unwrap();
        prop_assert!(b.value + 1 >= 2 * a.value && b.value <= 2 * a.value);
    }

    #[test]
    fn deep_first_width_non_increasing_in_delta(d0 in 3usize..10, lo in 0.05f64..1.3, step in 0.0f64..0.1) {
        let hi = (lo + step).min(SQRT_2);
        let c = BoundConstants::default();
        let a = width_requirement_deep(16, d0, lo, 4, 0.1, &c).unwrap();
        let b = width_requirement_deep(16, d0, hi, 4, 0.1, &c).unwrap();
        prop_assert!(b.first.value <= a.first.value);
    }
}

#[test]
fn uniform_lower_below_upper_on_grid() {
    for d in 3..=10 {
        for n in [2usize, 3, 5, 10, 30, 100, 300, 1000, 3000, 10_000] {
            for eps in [0.01, 0.1, 0.3] {
                let u = uniform_bounds(d, n, eps).unwrap();
                assert!(u.lambda <= u.upper, "d={d} n={n} ε={eps}");
            }
        }
    }
}

#[test]
fn exact_hemisphere_product_dominates_simplified_rate() {
    let mut pairs = Vec::new();
    for d in 3..=8 {
        for delta in [0.1, 0.2, 0.3, 0.5, 0.7, 0.9, 1.1, 1.3] {
            let plan = select_truncation(d, delta, 1, 1.0).unwrap();
            let exact = hemisphere_lower_exact(&plan, d, Activation::ReluDerivative).unwrap();
            let simplified = shallow_lambda_lower(d, delta).unwrap();
            pairs.push((simplified, exact));
        }
    }
    let fit = fit_constant(&pairs).unwrap();
    let c_min = pairs.iter().map(|(s, e)| e / s).fold(f64::INFINITY, f64::min);
    println!("exact/simplified: log-fit c = {:.3e}, spread {:.3}, min {:.3e}", fit.constant, fit.residual_spread, c_min);
    // The smallest ratio sits at the case 3 / case 1 boundary for large δ;
    // for small δ the ratio grows.
    assert!(c_min > 1e-4, "min ratio {c_min}");
}
