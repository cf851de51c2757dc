//! Seeded noisy-case experiments beyond the per-module unit tests.

use lasso_compat::gram::{build_gram, factorize, DesignSpec, GramMatrix};
use lasso_compat::noisy::{coverage, coverage_with_trials, NoisyConfig};
use lasso_compat::solver::ProblemInstance;
use nalgebra::DVector;

#[test]
fn coverage_exceeds_nominal_on_two_var() {
    let spec = DesignSpec::TwoVar { rho: 0.5 };
    let gram = build_gram(&spec).unwrap();
    let n = 200;
    let factor = factorize(&gram, Some(n)).unwrap();
    let lambda = 0.8;
    let inst = ProblemInstance::new(gram, DVector::from_vec(vec![2.0, 1.8]), lambda).unwrap();
    let config = NoisyConfig {
        n,
        alpha: 0.05,
        alpha1: 0.05,
        eta: 0.5,
        lambda,
        trials: 300,
        seed: 9,
        sigma0: None,
    };
    let report = coverage(&inst, &factor, &config).unwrap();
    assert!(report.eta_condition_ok, "lambda0 = {}", report.lambda0);
    assert!(report.empirical_coverage >= report.nominal, "{report:?}");
    // Coverage soundness with three standard errors of statistical slack.
    let slack = 3.0 * ((config.alpha + config.alpha1) / config.trials as f64).sqrt();
    assert!(report.empirical_coverage >= report.nominal - slack);
}

#[test]
fn sigma0_variant_with_exact_gram_matches_plain_bound_shape() {
    let spec = DesignSpec::TwoVar { rho: 0.5 };
    let gram = build_gram(&spec).unwrap();
    let n = 150;
    let factor = factorize(&gram, Some(n)).unwrap();
    let lambda = 0.7;
    let inst =
        ProblemInstance::new(gram.clone(), DVector::from_vec(vec![2.0, 1.5]), lambda).unwrap();
    let mut config = NoisyConfig {
        n,
        alpha: 0.05,
        alpha1: 0.05,
        eta: 0.5,
        lambda,
        trials: 50,
        seed: 21,
        sigma0: Some(gram),
    };
    let (report, trials) = coverage_with_trials(&inst, &factor, &config).unwrap();
    assert_eq!(report.xi_condition_failures, 0);
    assert!(trials.iter().all(|t| t.xi == Some(0.0)));
    // Identical noise stream without sigma0: the lhs values coincide and the
    // verdicts stay covered.
    config.sigma0 = None;
    let (_, plain) = coverage_with_trials(&inst, &factor, &config).unwrap();
    for (a, b) in trials.iter().zip(&plain) {
        assert_eq!(a.lhs.to_bits(), b.lhs.to_bits());
    }
    assert_eq!(report.violations, 0);
}

#[test]
fn small_perturbation_sigma0_keeps_condition() {
    // Entrywise +-0.01 perturbation: xi = 0.01 |b* - b0|_1 stays below
    // lambda (1 - eta) in the strong-shrinkage regime.
    let rho = 0.5;
    let spec = DesignSpec::TwoVar { rho };
    let gram = build_gram(&spec).unwrap();
    let factor = factorize(&gram, Some(100)).unwrap();
    let lambda = 0.5;
    let beta0 = DVector::from_vec(vec![2.0, 1.9]);
    let inst = ProblemInstance::new(gram.clone(), beta0, lambda).unwrap();
    let mut perturbed = gram.entries().clone();
    perturbed[(0, 1)] -= 0.01;
    perturbed[(1, 0)] -= 0.01;
    let config = NoisyConfig {
        n: 100,
        alpha: 0.05,
        alpha1: 0.05,
        eta: 0.5,
        lambda,
        trials: 10,
        seed: 33,
        sigma0: Some(GramMatrix::new(perturbed).unwrap()),
    };
    let (report, trials) = coverage_with_trials(&inst, &factor, &config).unwrap();
    assert_eq!(report.xi_condition_failures, 0);
    // Case 1: b* - b0 = -(lambda/varphi2)(1,1), so |b*-b0|_1 = 2 lambda/varphi2.
    let expected_xi = 0.01 * 2.0 * lambda / (1.0 - rho);
    for t in &trials {
        assert!((t.xi.unwrap() - expected_xi).abs() < 1e-9);
    }
}

#[test]
fn estimation_to_bias_ratio_decreases_with_dimension() {
    // With lambda ~ sqrt(log p / n), growing p drives the estimation error
    // below the bias: the mean ratio over trials falls monotonically.
    let n = 400;
    let mut ratios = Vec::new();
    for blocks in [4usize, 16, 64] {
        let p = 2 * blocks;
        let lambda = 1.5 * ((p as f64).ln() / n as f64).sqrt();
        let spec = DesignSpec::PairBlocks {
            rhos: vec![0.5; blocks],
        };
        let gram = build_gram(&spec).unwrap();
        let factor = factorize(&gram, Some(n)).unwrap();
        let varphi2 = 0.5;
        let level = 3.0 * lambda / varphi2;
        let beta0 = DVector::from_fn(p, |j, _| if j % 2 == 0 { 2.0 * level } else { level });
        let inst = ProblemInstance::new(gram.clone(), beta0.clone(), lambda).unwrap();
        let bias = {
            let diff = DVector::from_fn(p, |_, _| lambda / varphi2);
            gram.quad_form(&diff).sqrt()
        };
        let config = NoisyConfig {
            n,
            alpha: 0.05,
            alpha1: 0.05,
            eta: 0.5,
            lambda,
            trials: 30,
            seed: 77,
            sigma0: None,
        };
        let (report, _) = coverage_with_trials(&inst, &factor, &config).unwrap();
        ratios.push(report.mean_lhs / bias);
    }
    assert!(
        ratios[0] > ratios[1] && ratios[1] > ratios[2],
        "ratios not decreasing: {ratios:?}"
    );
}
