//! Randomized cross-module invariants. Each property is cheap enough to
//! run at a few dozen cases on one core.

use std::sync::Arc;

use nalgebra::DVector;
use proptest::prelude::*;

use steinscore::density::{Density, Gaussian, Unnormalized};
use steinscore::divergences::divergence_integrand;
use steinscore::kernel::{hyvarinen_profile, logcosh_profile, radial_kernel};
use steinscore::numerics::{expect_mc, expect_quadrature, MonteCarloConfig, QuadratureConfig};
use steinscore::scores::{
    general_score, hyvarinen_score, log_score, radial_score, ScoringRule,
};
use steinscore::sure::sure_log_form;

fn gaussian_1d(mean: f64, var: f64) -> Gaussian {
    Gaussian::isotropic(DVector::from_element(1, mean), var).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn radial_and_direct_scores_coincide(
        mean in -3.0..3.0f64,
        var in 0.3..4.0f64,
        point in -5.0..5.0f64,
    ) {
        let g = gaussian_1d(mean, var);
        let x = DVector::from_element(1, point);
        let direct = hyvarinen_score(&g, &x).unwrap();
        let radial = radial_score(hyvarinen_profile(), &g, &x).unwrap();
        let kernel = radial_kernel(hyvarinen_profile(), 1);
        let general = general_score(&kernel, &g, &x).unwrap();
        prop_assert!((radial - direct).abs() <= 1e-10 * (1.0 + direct.abs()));
        prop_assert!((general - direct).abs() <= 1e-9 * (1.0 + direct.abs()));
    }

    #[test]
    fn blend_interpolates_between_kernel_and_log_scores(
        alpha in 0.0..=1.0f64,
        mean in -2.0..2.0f64,
        point in -4.0..4.0f64,
    ) {
        let g = gaussian_1d(mean, 1.0);
        let x = DVector::from_element(1, point);
        let base = ScoringRule::Radial(logcosh_profile());
        let blended = ScoringRule::blend(alpha, base.clone()).unwrap()
            .evaluate(&g, &x).unwrap();
        let kernel_part = base.evaluate(&g, &x).unwrap();
        let log_part = log_score(&g, &x).unwrap();
        let expected = (1.0 - alpha) * kernel_part + alpha * log_part;
        prop_assert!((blended - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
    }

    #[test]
    fn divergence_integrand_is_nonnegative_for_concave_kernels(
        mean_p in -3.0..3.0f64,
        var_p in 0.3..4.0f64,
        mean_q in -3.0..3.0f64,
        var_q in 0.3..4.0f64,
        point in -5.0..5.0f64,
    ) {
        let p = gaussian_1d(mean_p, var_p);
        let q = gaussian_1d(mean_q, var_q);
        let x = DVector::from_element(1, point);
        for profile in [hyvarinen_profile(), logcosh_profile()] {
            let kernel = radial_kernel(profile, 1);
            let value = divergence_integrand(&kernel, &p, &q, &x).unwrap();
            prop_assert!(value >= -1e-10, "integrand {value} at {point}");
        }
    }

    #[test]
    fn quadratic_kernel_integrand_is_the_squared_score_gap(
        mean_p in -3.0..3.0f64,
        var_p in 0.3..4.0f64,
        point in -5.0..5.0f64,
    ) {
        let p = gaussian_1d(mean_p, var_p);
        let q = gaussian_1d(0.0, 1.0);
        let x = DVector::from_element(1, point);
        let kernel = radial_kernel(hyvarinen_profile(), 1);
        let value = divergence_integrand(&kernel, &p, &q, &x).unwrap();
        let gap = (p.grad_log_density(&x) - q.grad_log_density(&x)).norm_squared();
        prop_assert!((value - gap).abs() <= 1e-12 * (1.0 + gap));
    }

    #[test]
    fn kernel_scores_ignore_normalization_bitwise(
        factor in 0.05..20.0f64,
        mean in -2.0..2.0f64,
        point in -4.0..4.0f64,
    ) {
        let g: Arc<dyn Density> = Arc::new(gaussian_1d(mean, 1.2));
        let wrapped = Unnormalized::new(g.clone(), factor).unwrap();
        let x = DVector::from_element(1, point);
        let plain = hyvarinen_score(g.as_ref(), &x).unwrap();
        let scaled = hyvarinen_score(&wrapped, &x).unwrap();
        prop_assert_eq!(plain.to_bits(), scaled.to_bits());
        let plain = radial_score(logcosh_profile(), g.as_ref(), &x).unwrap();
        let scaled = radial_score(logcosh_profile(), &wrapped, &x).unwrap();
        prop_assert_eq!(plain.to_bits(), scaled.to_bits());
    }

    #[test]
    fn risk_estimate_identity_holds_bitwise(
        var in 0.5..4.0f64,
        point in -4.0..4.0f64,
    ) {
        let g = gaussian_1d(0.0, var);
        let x = DVector::from_element(1, point);
        let log_form = sure_log_form(&g, &x).unwrap();
        let direct = hyvarinen_score(&g, &x).unwrap() + 1.0;
        prop_assert_eq!(log_form.to_bits(), direct.to_bits());
    }

    #[test]
    fn sampling_is_prefix_stable(
        seed in any::<u64>(),
        short in 1usize..40,
        extra in 1usize..40,
    ) {
        let g = Gaussian::standard(2);
        let few = g.sample(short, seed).unwrap();
        let many = g.sample(short + extra, seed).unwrap();
        for i in 0..short {
            prop_assert_eq!(&few[i], &many[i]);
        }
    }

    #[test]
    fn monte_carlo_mean_is_chunk_size_free(
        seed in any::<u64>(),
        chunk_a in 1usize..300,
        chunk_b in 1usize..300,
    ) {
        let g = Gaussian::standard(1);
        let run = |chunk: usize| {
            let config = MonteCarloConfig {
                samples: 256,
                seed,
                chunk_size: chunk,
            };
            expect_mc(|x| x.norm_squared(), &g, &config).unwrap()
        };
        let a = run(chunk_a);
        let b = run(chunk_b);
        prop_assert_eq!(a.value.to_bits(), b.value.to_bits());
        prop_assert_eq!(a.error_estimate.to_bits(), b.error_estimate.to_bits());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn quadrature_reproduces_normalization(
        mean in -2.0..2.0f64,
        var in 0.3..4.0f64,
    ) {
        let g = gaussian_1d(mean, var);
        let total = expect_quadrature(|_| 1.0, &g, &QuadratureConfig::default()).unwrap();
        prop_assert!((total.value - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn cross_validated_risk_ignores_sample_order(
        seed in any::<u64>(),
        rotation in 1usize..7,
    ) {
        let g = Gaussian::standard(1);
        let samples = g.sample(8, seed).unwrap();
        let mut rotated = samples.clone();
        rotated.rotate_left(rotation);
        let rule = ScoringRule::Hyvarinen;
        let direct =
            steinscore::crossval::cross_validated_risk(&rule, &samples, 0.7).unwrap();
        let reordered =
            steinscore::crossval::cross_validated_risk(&rule, &rotated, 0.7).unwrap();
        prop_assert_eq!(direct.to_bits(), reordered.to_bits());
    }
}
