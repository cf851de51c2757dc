//! Seeded Monte Carlo coverage checks for the noisy-case bounds.
//!
//! The model is `Y = X b0 + eps` with i.i.d. `N(0, 1/n)` noise entries. Each
//! trial solves the noisy Lasso and tests the high-probability bound on the
//! estimation error `|X(bhat - b*)|_2` against the bias `|X(b* - b0)|_2` of
//! the noiseless solution `b*`:
//!
//! ```text
//!     lhs = |X(bhat - b*)|_2
//!     rhs = sqrt(Lmax(Sigma) / (n lambda^2 (1-eta)^2)) |X(b* - b0)|_2
//!           + sqrt(2 log(1/alpha1) / n)
//! ```
//!
//! which holds with probability at least `1 - alpha - alpha1` provided
//! `eta lambda > lambda0 = sqrt(2 log(2p/alpha)/n)`. The approximate-Gram
//! variant replaces `Lmax(Sigma)` by `Lmax(Sigma0)` and is conditional on
//! `xi = |Sigma - Sigma0|_inf |b* - b0|_1 < lambda (1 - eta)`.
//!
//! Every trial draws its noise from its own counter-keyed substream of a
//! ChaCha generator, so reports are bit-identical for a fixed seed no matter
//! how trials are scheduled.

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha12Rng};
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::gram::{DesignFactor, GramMatrix};
use crate::solver::{solve_noiseless, solve_noisy, ProblemInstance, SolverError};

#[derive(Debug, Error)]
pub enum NoisyError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("config invalid: {0}")]
    BadConfig(String),
    #[error("column {0} of the design has norm {1} > 1")]
    ColumnNormExceeded(usize, f64),
    #[error("the approximate-Gram variant requires sigma0")]
    MissingSigma0,
    #[error("sigma0 is {got}x{got} but the design has p = {expected}")]
    Sigma0Dimension { got: usize, expected: usize },
}

/// Configuration of one coverage experiment.
#[derive(Debug, Clone)]
pub struct NoisyConfig {
    /// Sample size; the noise has variance `1/n` per entry.
    pub n: usize,
    pub alpha: f64,
    pub alpha1: f64,
    pub eta: f64,
    pub lambda: f64,
    pub trials: usize,
    pub seed: u64,
    /// Approximation of the Gram matrix for the conditional variant.
    pub sigma0: Option<GramMatrix>,
}

impl NoisyConfig {
    pub fn validate(&self) -> Result<(), NoisyError> {
        let bad = |msg: String| Err(NoisyError::BadConfig(msg));
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha = {} must lie in (0,1)", self.alpha));
        }
        if !(self.alpha1 > 0.0 && self.alpha1 < 1.0) {
            return bad(format!("alpha1 = {} must lie in (0,1)", self.alpha1));
        }
        if !(self.eta >= 0.0 && self.eta < 1.0) {
            return bad(format!("eta = {} must lie in [0,1)", self.eta));
        }
        if self.lambda.is_nan() || self.lambda <= 0.0 {
            return bad(format!("lambda = {} must be positive", self.lambda));
        }
        if self.trials == 0 {
            return bad("trials must be >= 1".into());
        }
        Ok(())
    }
}

/// `lambda0 = sqrt(2 log(2p/alpha) / n)`, the noise level the tuning
/// parameter must dominate through `eta lambda > lambda0`.
pub fn lambda0(p: usize, n: usize, alpha: f64) -> f64 {
    (2.0 * (2.0 * p as f64 / alpha).ln() / n as f64).sqrt()
}

/// One trial's outcome.
#[derive(Debug, Clone)]
pub struct TrialResult {
    pub trial: usize,
    /// `|X(bhat - b*)|_2`.
    pub lhs: f64,
    /// The theorem's right-hand side for this experiment.
    pub rhs: f64,
    pub violation: bool,
    /// `xi` for the approximate-Gram variant.
    pub xi: Option<f64>,
    /// False when `xi >= lambda (1 - eta)`: the bound gives no verdict and
    /// the trial is excluded from coverage counts.
    pub condition_ok: bool,
}

/// Aggregated coverage over the seeded trial stream.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub trials: usize,
    pub violations: usize,
    pub empirical_coverage: f64,
    /// `1 - alpha - alpha1`.
    pub nominal: f64,
    pub mean_lhs: f64,
    pub mean_rhs: f64,
    pub xi_condition_failures: usize,
    pub lambda0: f64,
    /// Whether `eta lambda > lambda0` holds; recorded rather than fatal so
    /// under-tuned experiments still run and report.
    pub eta_condition_ok: bool,
}

/// Precomputed noiseless quantities shared by all trials.
struct NoiselessContext {
    x_beta_star: DVector<f64>,
    /// `|X(b* - b0)|_2`.
    bias_l2: f64,
    /// `|b* - b0|_1`.
    bias_l1: f64,
    x_beta0: DVector<f64>,
    lambda_max_hat: f64,
    sigma0_terms: Option<Sigma0Terms>,
}

struct Sigma0Terms {
    lambda_max: f64,
    /// `|Sigma - Sigma0|_inf`.
    max_entry_diff: f64,
}

fn build_context(
    inst: &ProblemInstance,
    factor: &DesignFactor,
    config: &NoisyConfig,
) -> Result<NoiselessContext, NoisyError> {
    config.validate()?;
    for j in 0..factor.p() {
        let norm = factor.columns().column(j).norm();
        if norm > 1.0 + 1e-9 {
            return Err(NoisyError::ColumnNormExceeded(j, norm));
        }
    }
    let sigma0_terms = match &config.sigma0 {
        None => None,
        Some(s0) => {
            if s0.p() != inst.gram().p() {
                return Err(NoisyError::Sigma0Dimension {
                    got: s0.p(),
                    expected: inst.gram().p(),
                });
            }
            let diff = (s0.entries() - inst.gram().entries())
                .iter()
                .fold(0.0f64, |m, &v| m.max(v.abs()));
            let lmax = s0.eigenvalues()[0];
            Some(Sigma0Terms {
                lambda_max: lmax,
                max_entry_diff: diff,
            })
        }
    };
    // The noiseless solution is a fixed target: solved once, tightly.
    let star = solve_noiseless(inst, 1e-12, 1_000_000)?;
    let diff = &star.beta_star - inst.beta0();
    Ok(NoiselessContext {
        x_beta_star: factor.mul_vec(&star.beta_star),
        bias_l2: inst.gram().quad_form(&diff).max(0.0).sqrt(),
        bias_l1: diff.abs().sum(),
        x_beta0: factor.mul_vec(inst.beta0()),
        lambda_max_hat: inst.gram().eigenvalues()[0],
        sigma0_terms,
    })
}

fn tail_term(n: usize, alpha1: f64) -> f64 {
    (2.0 * (1.0 / alpha1).ln() / n as f64).sqrt()
}

fn draw_noise(config: &NoisyConfig, trial: usize) -> DVector<f64> {
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    rng.set_stream(trial as u64);
    let scale = (1.0 / config.n as f64).sqrt();
    DVector::from_fn(config.n, |_, _| {
        let z: f64 = rng.sample(StandardNormal);
        z * scale
    })
}

fn run_trial_inner(
    ctx: &NoiselessContext,
    factor: &DesignFactor,
    config: &NoisyConfig,
    trial: usize,
    sigma0_variant: bool,
) -> Result<TrialResult, NoisyError> {
    let noise = draw_noise(config, trial);
    run_trial_with_noise(ctx, factor, config, trial, &noise, sigma0_variant)
}

fn run_trial_with_noise(
    ctx: &NoiselessContext,
    factor: &DesignFactor,
    config: &NoisyConfig,
    trial: usize,
    noise: &DVector<f64>,
    sigma0_variant: bool,
) -> Result<TrialResult, NoisyError> {
    let y = &ctx.x_beta0 + noise;
    let hat = solve_noisy(factor, &y, config.lambda, 1e-10, 1_000_000)?;
    let lhs = (factor.mul_vec(&hat.beta_star) - &ctx.x_beta_star).norm();

    if cfg!(debug_assertions) {
        // Triangle inequality between the three design-scale distances.
        let full = (factor.mul_vec(&hat.beta_star) - &ctx.x_beta0).norm();
        debug_assert!(full >= ctx.bias_l2 - lhs - 1e-10);
    }

    let n = config.n;
    let slack = 1.0 - config.eta;
    let (rhs, xi, condition_ok) = if sigma0_variant {
        let terms = ctx.sigma0_terms.as_ref().ok_or(NoisyError::MissingSigma0)?;
        let xi = terms.max_entry_diff * ctx.bias_l1;
        let ok = xi < config.lambda * slack;
        let rhs = if ok {
            terms.lambda_max.sqrt() * (ctx.bias_l2.powi(2) + xi * ctx.bias_l1).sqrt()
                / (config.lambda * slack - xi)
                + tail_term(n, config.alpha1)
        } else {
            f64::NAN
        };
        (rhs, Some(xi), ok)
    } else {
        let rhs = (ctx.lambda_max_hat / (n as f64 * config.lambda * config.lambda * slack * slack))
            .sqrt()
            * ctx.bias_l2
            + tail_term(n, config.alpha1);
        (rhs, None, true)
    };
    Ok(TrialResult {
        trial,
        lhs,
        rhs,
        violation: condition_ok && lhs > rhs,
        xi,
        condition_ok,
    })
}

/// Runs a single trial of the fixed-Gram bound.
pub fn run_trial(
    inst: &ProblemInstance,
    factor: &DesignFactor,
    config: &NoisyConfig,
    trial: usize,
) -> Result<TrialResult, NoisyError> {
    let ctx = build_context(inst, factor, config)?;
    run_trial_inner(&ctx, factor, config, trial, false)
}

/// Runs a single trial of the approximate-Gram variant; requires
/// `config.sigma0`.
pub fn run_trial_sigma0(
    inst: &ProblemInstance,
    factor: &DesignFactor,
    config: &NoisyConfig,
    trial: usize,
) -> Result<TrialResult, NoisyError> {
    if config.sigma0.is_none() {
        return Err(NoisyError::MissingSigma0);
    }
    let ctx = build_context(inst, factor, config)?;
    run_trial_inner(&ctx, factor, config, trial, true)
}

/// Runs all configured trials and aggregates. Uses the approximate-Gram
/// variant when `config.sigma0` is present, the fixed-Gram bound otherwise.
/// Deterministic for a fixed `(seed, config, instance)`.
pub fn coverage(
    inst: &ProblemInstance,
    factor: &DesignFactor,
    config: &NoisyConfig,
) -> Result<CoverageReport, NoisyError> {
    coverage_with_trials(inst, factor, config).map(|(r, _)| r)
}

/// Like [`coverage`], additionally returning every per-trial result in trial
/// order.
pub fn coverage_with_trials(
    inst: &ProblemInstance,
    factor: &DesignFactor,
    config: &NoisyConfig,
) -> Result<(CoverageReport, Vec<TrialResult>), NoisyError> {
    let ctx = build_context(inst, factor, config)?;
    let sigma0_variant = config.sigma0.is_some();
    let mut trials: Vec<TrialResult> = (0..config.trials)
        .into_par_iter()
        .map(|t| run_trial_inner(&ctx, factor, config, t, sigma0_variant))
        .collect::<Result<_, _>>()?;
    trials.sort_by_key(|t| t.trial);

    let violations = trials.iter().filter(|t| t.violation).count();
    let xi_failures = trials.iter().filter(|t| !t.condition_ok).count();
    let valid: Vec<&TrialResult> = trials.iter().filter(|t| t.condition_ok).collect();
    let mean = |f: fn(&TrialResult) -> f64| {
        if valid.is_empty() {
            f64::NAN
        } else {
            valid.iter().map(|t| f(t)).sum::<f64>() / valid.len() as f64
        }
    };
    let p = inst.gram().p();
    let l0 = lambda0(p, config.n, config.alpha);
    let report = CoverageReport {
        trials: config.trials,
        violations,
        empirical_coverage: 1.0 - violations as f64 / config.trials as f64,
        nominal: 1.0 - config.alpha - config.alpha1,
        mean_lhs: mean(|t| t.lhs),
        mean_rhs: mean(|t| t.rhs),
        xi_condition_failures: xi_failures,
        lambda0: l0,
        eta_condition_ok: config.eta * config.lambda > l0,
    };
    Ok((report, trials))
}
