//! Closed-form minimizers and error values for every design family.
//!
//! Each family's Lasso solution is written down from its KKT system
//! `Sigma (b* - b0) + lambda z* = 0` and is exact: the returned `beta_star`
//! has a vanishing KKT residual against the constructed Gram matrix whenever
//! the family's coefficient-size condition holds. Outside that condition the
//! result is flagged inapplicable with the violated condition named.
//!
//! Two families have non-unique minimizers (`GoodLasso3` and
//! `ChildParentGamma`): for those the returned vector is one canonical
//! member and [`OracleSolution::solution_family`] describes the whole
//! solution segment.

use nalgebra::DVector;
use thiserror::Error;

use crate::compat::project_l1_ball;
use crate::gram::{build_gram, AdmissibilityError, DesignSpec};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("no closed form is available for the Custom family")]
    UnsupportedFamily,
    #[error(transparent)]
    Admissibility(#[from] AdmissibilityError),
    #[error("beta0 has {got} entries but the family has p = {expected}")]
    Dimension { got: usize, expected: usize },
    #[error("lambda = {0} must be nonnegative")]
    NegativeLambda(f64),
}

/// Derived constants of a design family.
#[derive(Debug, Clone)]
pub struct FamilyConstants {
    pub s0: usize,
    /// Compatibility constant at the conventional active set; may be 0.
    pub phi2_s0: f64,
    /// Effective sparsity `s0 / phi2(S0)`; infinite when `phi2_s0 = 0`.
    pub gamma2_s0: f64,
    /// `varphi_k^2 = 1 - rho_k` per active pair.
    pub varphi2: Vec<f64>,
    /// Squared norms of the orthogonal remainders, one per child (or one
    /// shared value for the single-child block designs).
    pub tau2: Vec<f64>,
    /// `psi2 = 1 - theta` for the child-parent designs.
    pub psi2: Option<f64>,
    /// Gram entries between an active column and the inactive pair in the
    /// gamma design.
    pub varrho3: Option<f64>,
    pub varrho4: Option<f64>,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// `phi2` of the even-index set {2, 4, ..., 2N} in the paired-block
    /// design: `N / sum_k (1 - rho_k^2)^{-1}`.
    pub phi2_even_set: Option<f64>,
}

/// Description of a one-parameter segment of minimizers:
/// `beta(t) = beta_star + t * direction` for `t` in `[0, t_max]`, all with
/// identical objective value.
#[derive(Debug, Clone)]
pub struct SolutionFamily {
    pub direction: DVector<f64>,
    pub t_max: f64,
}

/// A closed-form solution, or a named reason it does not apply.
#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub beta_star: DVector<f64>,
    pub case_id: String,
    /// `(b* - b0)' Sigma (b* - b0)`.
    pub prediction_error: f64,
    /// Prediction error plus `2 lambda |b*_{-S0}|_1`.
    pub penalized_error: f64,
    pub applicable: bool,
    pub applicability_reason: String,
    pub constants: FamilyConstants,
    pub solution_family: Option<SolutionFamily>,
}

fn not_applicable(p: usize, reason: String, constants: FamilyConstants) -> OracleSolution {
    OracleSolution {
        beta_star: DVector::zeros(p),
        case_id: "NotApplicable".to_string(),
        prediction_error: f64::NAN,
        penalized_error: f64::NAN,
        applicable: false,
        applicability_reason: reason,
        constants,
        solution_family: None,
    }
}

/// Squared l1-ball distance `min { |v - b|_2^2 : |b|_1 <= 1 }`.
fn l1_ball_distance_sq(v: &[f64]) -> f64 {
    let mut proj = v.to_vec();
    project_l1_ball(&mut proj, 1.0);
    v.iter().zip(&proj).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// The derived constants of a family, including its compatibility constant
/// and effective sparsity at the conventional active set.
pub fn closed_form_family_constants(spec: &DesignSpec) -> Result<FamilyConstants, OracleError> {
    if matches!(spec, DesignSpec::Custom { .. }) {
        return Err(OracleError::UnsupportedFamily);
    }
    let gram = build_gram(spec)?;
    let eigs = gram.eigenvalues();
    let (lambda_max, lambda_min) = (eigs[0], *eigs.last().unwrap());

    let mut c = FamilyConstants {
        s0: spec.conventional_active_set().map_or(0, |s| s.len()),
        phi2_s0: f64::NAN,
        gamma2_s0: f64::NAN,
        varphi2: Vec::new(),
        tau2: Vec::new(),
        psi2: None,
        varrho3: None,
        varrho4: None,
        lambda_min,
        lambda_max,
        phi2_even_set: None,
    };

    match spec {
        DesignSpec::TwoVar { rho } | DesignSpec::PairBlocksPlusOrthogonal { rho, .. } => {
            let varphi2 = 1.0 - rho;
            c.varphi2 = vec![varphi2];
            c.phi2_s0 = varphi2;
            c.gamma2_s0 = 2.0 / varphi2;
        }
        DesignSpec::PairBlocks { rhos } => {
            let n = rhos.len() as f64;
            c.varphi2 = rhos.iter().map(|r| 1.0 - r).collect();
            let inv_sum: f64 = c.varphi2.iter().map(|f| 1.0 / f).sum();
            c.phi2_s0 = n / inv_sum;
            c.gamma2_s0 = 2.0 * inv_sum;
            let even_inv: f64 = rhos.iter().map(|r| 1.0 / (1.0 - r * r)).sum();
            c.phi2_even_set = Some(n / even_inv);
        }
        DesignSpec::ParentChildSingle { rho, c: cc } => {
            let varphi2 = 1.0 - rho;
            let tau2 = 1.0 - cc * cc * varphi2 / 2.0;
            c.varphi2 = vec![varphi2];
            c.tau2 = vec![tau2];
            c.phi2_s0 = varphi2 * tau2;
            c.gamma2_s0 = 2.0 / varphi2 + cc * cc / tau2;
        }
        DesignSpec::ParentChildMany { rho, cs } => {
            let varphi2 = 1.0 - rho;
            c.varphi2 = vec![varphi2];
            c.tau2 = cs.iter().map(|ck| 1.0 - ck * ck * varphi2 / 2.0).collect();
            let gamma2 = 2.0 / varphi2
                + cs.iter()
                    .zip(&c.tau2)
                    .map(|(ck, tk)| ck * ck / tk)
                    .sum::<f64>();
            c.gamma2_s0 = gamma2;
            c.phi2_s0 = 2.0 / gamma2;
        }
        DesignSpec::ParentChildBlock2N { rhos, c: cc } => {
            let s0 = 2.0 * rhos.len() as f64;
            c.varphi2 = rhos.iter().map(|r| 1.0 - r).collect();
            let tau2 = 1.0 - cc * cc * c.varphi2.iter().map(|f| 2.0 * f / (s0 * s0)).sum::<f64>();
            c.tau2 = vec![tau2];
            let inv_sum: f64 = c.varphi2.iter().map(|f| 1.0 / f).sum();
            c.gamma2_s0 = 2.0 * inv_sum + cc * cc / tau2;
            c.phi2_s0 = s0 / c.gamma2_s0;
        }
        DesignSpec::GoodComp { rho, c: cc, tau2 } => {
            let varphi2 = 1.0 - rho;
            c.varphi2 = vec![varphi2];
            c.tau2 = vec![*tau2];
            c.phi2_s0 = varphi2 * tau2 / (cc * cc * varphi2 / 2.0 + tau2);
            c.gamma2_s0 = 2.0 / varphi2 + cc * cc / tau2;
        }
        DesignSpec::GoodLasso2 { rho, .. } | DesignSpec::GoodLasso3 { rho } => {
            c.varphi2 = vec![1.0 - rho];
            c.phi2_s0 = 0.0;
            c.gamma2_s0 = f64::INFINITY;
        }
        DesignSpec::BlockGoodComp2N { blocks } => {
            c.varphi2 = blocks.iter().map(|b| 1.0 - b.rho).collect();
            c.tau2 = blocks.iter().map(|b| b.tau2).collect();
            let gamma2: f64 = blocks
                .iter()
                .map(|b| 2.0 / (1.0 - b.rho) + b.c * b.c / b.tau2)
                .sum();
            c.gamma2_s0 = gamma2;
            c.phi2_s0 = 2.0 * blocks.len() as f64 / gamma2;
        }
        DesignSpec::ChildParentGamma { theta, gamma3 } => {
            let psi2 = 1.0 - theta;
            let gamma4 = 1.0 - gamma3;
            c.psi2 = Some(psi2);
            c.varrho3 = Some(gamma3 - gamma4 * theta);
            c.varrho4 = Some(gamma4 - gamma3 * theta);
            c.varphi2 = vec![2.0 * (1.0 - 4.0 * gamma3 * gamma4) + 4.0 * gamma3 * gamma4 * psi2];
            c.phi2_s0 = 0.0;
            c.gamma2_s0 = f64::INFINITY;
        }
        DesignSpec::ChildParentSym { theta, c: cc } => {
            let psi2 = 1.0 - theta;
            c.psi2 = Some(psi2);
            c.varphi2 = vec![cc * cc * psi2];
            c.phi2_s0 = (cc - 1.0) * (cc - 1.0) * psi2;
            c.gamma2_s0 = 2.0 / c.phi2_s0;
        }
        DesignSpec::ChildParentOrthoInactive { c: cc, gammas } => {
            let l2sq: f64 = gammas.iter().map(|g| g * g).sum();
            c.varphi2 = vec![2.0 * cc * cc * l2sq];
            let scaled: Vec<f64> = gammas.iter().map(|g| cc * g).collect();
            c.phi2_s0 = 2.0 * l1_ball_distance_sq(&scaled);
            c.gamma2_s0 = 2.0 / c.phi2_s0;
        }
        DesignSpec::Custom { .. } => unreachable!(),
    }
    Ok(c)
}

struct TwoVarCase {
    case: &'static str,
    beta: [f64; 2],
    prediction_error: f64,
}

/// The three-case exact solution for one active pair with correlation
/// `-rho`. Case predicates close on the left so shared boundaries resolve to
/// the lower-numbered case; both formulas agree there.
fn two_var_case(rho: f64, b1: f64, b2: f64, lambda: f64) -> TwoVarCase {
    let varphi2 = 1.0 - rho;
    let ratio = lambda / varphi2;
    if ratio <= b2 {
        TwoVarCase {
            case: "Case1",
            beta: [b1 - ratio, b2 - ratio],
            prediction_error: 2.0 * lambda * lambda / varphi2,
        }
    } else if ratio <= b2 + (b1 - b2) / varphi2 {
        TwoVarCase {
            case: "Case2",
            beta: [b1 - (1.0 - varphi2) * b2 - lambda, 0.0],
            prediction_error: varphi2 * (2.0 - varphi2) * b2 * b2 + lambda * lambda,
        }
    } else {
        TwoVarCase {
            case: "Case3",
            beta: [0.0, 0.0],
            prediction_error: b1 * b1 + b2 * b2 - 2.0 * rho * b1 * b2,
        }
    }
}

fn check_pair_ordering(b1: f64, b2: f64, label: &str) -> Result<(), String> {
    if b2.is_nan() || b2 <= 0.0 {
        return Err(format!("{label}: requires beta2 > 0, got {b2}"));
    }
    if b1 < b2 {
        return Err(format!("{label}: requires beta1 >= beta2, got {b1} < {b2}"));
    }
    Ok(())
}

fn check_support(beta0: &DVector<f64>, active: &[usize]) -> Result<(), String> {
    for j in 0..beta0.len() {
        if !active.contains(&j) && beta0[j] != 0.0 {
            return Err(format!(
                "beta0 must vanish off the conventional active set; coordinate {} is {}",
                j + 1,
                beta0[j]
            ));
        }
    }
    Ok(())
}

/// Evaluates the family's exact solution at `(beta0, lambda)`.
pub fn closed_form(
    spec: &DesignSpec,
    beta0: &DVector<f64>,
    lambda: f64,
) -> Result<OracleSolution, OracleError> {
    if matches!(spec, DesignSpec::Custom { .. }) {
        return Err(OracleError::UnsupportedFamily);
    }
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(OracleError::NegativeLambda(lambda));
    }
    let p = spec.p();
    if beta0.len() != p {
        return Err(OracleError::Dimension {
            got: beta0.len(),
            expected: p,
        });
    }
    let constants = closed_form_family_constants(spec)?;
    let active = spec.conventional_active_set().expect("non-custom family");

    macro_rules! require {
        ($check:expr) => {
            if let Err(reason) = $check {
                return Ok(not_applicable(p, reason, constants));
            }
        };
    }

    let sol = match spec {
        DesignSpec::TwoVar { rho } => {
            require!(check_pair_ordering(beta0[0], beta0[1], "TwoVar"));
            let case = two_var_case(*rho, beta0[0], beta0[1], lambda);
            OracleSolution {
                beta_star: DVector::from_row_slice(&case.beta),
                case_id: case.case.to_string(),
                prediction_error: case.prediction_error,
                penalized_error: case.prediction_error,
                applicable: true,
                applicability_reason: String::new(),
                constants,
                solution_family: None,
            }
        }
        DesignSpec::PairBlocks { rhos } => {
            let mut beta = DVector::zeros(p);
            let mut pred = 0.0;
            let mut cases = Vec::with_capacity(rhos.len());
            for (k, &rho) in rhos.iter().enumerate() {
                let (b1, b2) = (beta0[2 * k], beta0[2 * k + 1]);
                require!(check_pair_ordering(b1, b2, &format!("block {}", k + 1)));
                let case = two_var_case(rho, b1, b2, lambda);
                beta[2 * k] = case.beta[0];
                beta[2 * k + 1] = case.beta[1];
                pred += case.prediction_error;
                cases.push(case.case);
            }
            let case_id = if cases.iter().all(|&c| c == cases[0]) {
                cases[0].to_string()
            } else {
                format!("PerBlock({})", cases.join(","))
            };
            OracleSolution {
                beta_star: beta,
                case_id,
                prediction_error: pred,
                penalized_error: pred,
                applicable: true,
                applicability_reason: String::new(),
                constants,
                solution_family: None,
            }
        }
        DesignSpec::PairBlocksPlusOrthogonal { rho, .. } => {
            require!(check_support(beta0, &active));
            require!(check_pair_ordering(beta0[0], beta0[1], "active pair"));
            let case = two_var_case(*rho, beta0[0], beta0[1], lambda);
            let mut beta = DVector::zeros(p);
            beta[0] = case.beta[0];
            beta[1] = case.beta[1];
            OracleSolution {
                beta_star: beta,
                case_id: case.case.to_string(),
                prediction_error: case.prediction_error,
                penalized_error: case.prediction_error,
                applicable: true,
                applicability_reason: String::new(),
                constants,
                solution_family: None,
            }
        }
        DesignSpec::ParentChildSingle { rho, c } => {
            require!(check_support(beta0, &active));
            require!(check_pair_ordering(beta0[0], beta0[1], "active pair"));
            let varphi2 = 1.0 - rho;
            let tau2 = constants.tau2[0];
            let threshold = lambda / varphi2 + lambda * c * (c - 1.0) / (2.0 * tau2);
            require!(if beta0[1] >= threshold {
                Ok(())
            } else {
                Err(format!(
                    "requires beta2 >= lambda/varphi^2 + lambda C(C-1)/(2 tau^2) = {threshold}, got {}",
                    beta0[1]
                ))
            });
            let child = lambda * (c - 1.0) / tau2;
            let shift = c * child / 2.0 + lambda / varphi2;
            let beta = DVector::from_vec(vec![beta0[0] - shift, beta0[1] - shift, child]);
            let pred =
                2.0 * lambda * lambda / varphi2 + lambda * lambda * (c - 1.0) * (c - 1.0) / tau2;
            let penalized = lambda * lambda * constants.gamma2_s0 - lambda * lambda / tau2;
            OracleSolution {
                beta_star: beta,
                case_id: "Exact".to_string(),
                prediction_error: pred,
                penalized_error: penalized,
                applicable: true,
                applicability_reason: String::new(),
                constants,
                solution_family: None,
            }
        }
        DesignSpec::ParentChildMany { rho, cs } => {
            require!(check_support(beta0, &active));
            require!(check_pair_ordering(beta0[0], beta0[1], "active pair"));
            let varphi2 = 1.0 - rho;
            let children: Vec<f64> = cs
                .iter()
                .zip(&constants.tau2)
                .map(|(ck, tk)| lambda * (ck - 1.0) / tk)
                .collect();
            let shift = lambda / varphi2
                + cs.iter()
                    .zip(&children)
                    .map(|(ck, bk)| ck * bk / 2.0)
                    .sum::<f64>();
            require!(if beta0[1] >= shift {
                Ok(())
            } else {
                Err(format!(
                    "requires beta2 >= lambda/varphi^2 + lambda sum_k C_k(C_k-1)/(2 tau_k^2) = {shift}, got {}",
                    beta0[1]
                ))
            });
            let mut beta = DVector::zeros(p);
            beta[0] = beta0[0] - shift;
            beta[1] = beta0[1] - shift;
            for (k, &bk) in children.iter().enumerate() {
                beta[2 + k] = bk;
            }
            let pred = 2.0 * lambda * lambda / varphi2
                + lambda
                    * lambda
                    * cs.iter()
                        .zip(&constants.tau2)
                        .map(|(ck, tk)| (ck - 1.0) * (ck - 1.0) / tk)
                        .sum::<f64>();
            let penalized = lambda * lambda * constants.gamma2_s0
                - lambda * lambda * constants.tau2.iter().map(|t| 1.0 / t).sum::<f64>();
            OracleSolution {
                beta_star: beta,
                case_id: "Exact".to_string(),
                prediction_error: pred,
                penalized_error: penalized,
                applicable: true,
                applicability_reason: String::new(),
                constants,
                solution_family: None,
            }
        }
        DesignSpec::ParentChildBlock2N { rhos, c } => {
            require!(check_support(beta0, &active));
            let s0 = 2.0 * rhos.len() as f64;
            let tau2 = constants.tau2[0];
            let child = lambda * (c - 1.0) / tau2;
            let mut beta = DVector::zeros(p);
            let mut pred = lambda * lambda * (c - 1.0) * (c - 1.0) / tau2;
            for (k, &rho) in rhos.iter().enumerate() {
                let varphi2 = 1.0 - rho;
                let (b1, b2) = (beta0[2 * k], beta0[2 * k + 1]);
                require!(check_pair_ordering(b1, b2, &format!("block {}", k + 1)));
                let shift = c * child / s0 + lambda / varphi2;
                require!(if b2 >= shift {
                    Ok(())
                } else {
                    Err(format!(
                        "block {}: requires beta_{} >= lambda/varphi_k^2 + lambda C(C-1)/(s0 tau^2) = {shift}, got {b2}",
                        k + 1,
                        2 * k + 2
                    ))
                });
                beta[2 * k] = b1 - shift;
                beta[2 * k + 1] = b2 - shift;
                pred += 2.0 * lambda * lambda / varphi2;
            }
            beta[p - 1] = child;
            let penalized = lambda * lambda * constants.gamma2_s0 - lambda * lambda / tau2;
            OracleSolution {
                beta_star: beta,
                case_id: "Exact".to_string(),
                prediction_error: pred,
                penalized_error: penalized,
                applicable: true,
                applicability_reason: String::new(),
                constants,
                solution_family: None,
            }
        }
        DesignSpec::GoodComp { rho, c, tau2 } => {
            require!(check_support(beta0, &active));
            require!(check_pair_ordering(beta0[0], beta0[1], "active pair"));
            let varphi2 = 1.0 - rho;
            let child = lambda * (c - 1.0) / (2.0 * tau2);
            let shift = c * child + lambda / varphi2;
            require!(if beta0[1] >= shift {
                Ok(())
            } else {
                Err(format!(
                    "requires beta2 >= lambda/varphi^2 + lambda C(C-1)/(2 tau^2) = {shift}, got {}",
                    beta0[1]
                ))
            });
            let beta = DVector::from_vec(vec![beta0[0] - shift, beta0[1] - shift, child, child]);
            let pred =
                2.0 * lambda * lambda / varphi2 + lambda * lambda * (c - 1.0) * (c - 1.0) / tau2;
            let penalized = lambda * lambda * constants.gamma2_s0 - lambda * lambda / tau2;
            OracleSolution {
                beta_star: beta,
                case_id: "Exact".to_string(),
                prediction_error: pred,
                penalized_error: penalized,
                applicable: true,
                applicability_reason: String::new(),
                constants,
                solution_family: None,
            }
        }
        DesignSpec::GoodLasso2 { rho, c } => {
            require!(check_support(beta0, &active));
            require!(check_pair_ordering(beta0[0], beta0[1], "active pair"));
            // The minimizer sends beta2 to zero while the children absorb the
            // parent combination; the certificate is z = (1, 2/C - 1, 1, 1).
            let omega = 2.0 / c - 1.0;
            let denom = 1.0 - rho * rho;
            let d1 = lambda * (1.0 + rho * omega) / denom;
            let d2 = lambda * (rho + omega) / denom;
            require!(if beta0[1] >= d2 {
                Ok(())
            } else {
                Err(format!(
                    "requires beta2 >= lambda (rho + 2/C - 1) / (1 - rho^2) = {d2}, got {}",
                    beta0[1]
                ))
            });
            require!(if beta0[0] - beta0[1] >= d1 - d2 {
                Ok(())
            } else {
                Err(format!(
                    "requires beta1 - beta2 >= 2 lambda (1 - 1/C) / (1 + rho) = {}, got {}",
                    d1 - d2,
                    beta0[0] - beta0[1]
                ))
            });
            let child = (beta0[1] - d2) / c;
            let beta = DVector::from_vec(vec![beta0[0] - beta0[1] - (d1 - d2), 0.0, child, child]);
            let pred = lambda * (d1 + omega * d2);
            let penalized = pred + 4.0 * lambda * child;
            OracleSolution {
                beta_star: beta,
                case_id: "Exact".to_string(),
                prediction_error: pred,
                penalized_error: penalized,
                applicable: true,
                applicability_reason: String::new(),
                constants,
                solution_family: None,
            }
        }
        DesignSpec::GoodLasso3 { rho } => {
            require!(check_support(beta0, &active));
            require!(check_pair_ordering(beta0[0], beta0[1], "active pair"));
            let varphi2 = 1.0 - rho;
            let ratio = lambda / varphi2;
            require!(if beta0[1] >= ratio {
                Ok(())
            } else {
                Err(format!(
                    "requires beta2 >= lambda/varphi^2 = {ratio}, got {}",
                    beta0[1]
                ))
            });
            // Canonical representative with beta3 = beta4 = 0; the full
            // solution segment slides mass onto the children.
            let beta = DVector::from_vec(vec![beta0[0] - ratio, beta0[1] - ratio, 0.0, 0.0]);
            let pred = 2.0 * lambda * lambda / varphi2;
            OracleSolution {
                beta_star: beta,
                case_id: "FamilyRepresentative".to_string(),
                prediction_error: pred,
                penalized_error: pred,
                applicable: true,
                applicability_reason: String::new(),
                constants,
                solution_family: Some(SolutionFamily {
                    direction: DVector::from_vec(vec![-1.0, -1.0, 1.0, 1.0]),
                    t_max: beta0[1] - ratio,
                }),
            }
        }
        DesignSpec::BlockGoodComp2N { blocks } => {
            require!(check_support(beta0, &active));
            let n = blocks.len();
            let mut beta = DVector::zeros(p);
            let mut pred = 0.0;
            for (k, blk) in blocks.iter().enumerate() {
                let varphi2 = 1.0 - blk.rho;
                let (b1, b2) = (beta0[2 * k], beta0[2 * k + 1]);
                require!(check_pair_ordering(b1, b2, &format!("block {}", k + 1)));
                let child = lambda * (blk.c - 1.0) / (2.0 * blk.tau2);
                let shift = blk.c * child + lambda / varphi2;
                require!(if b2 >= shift {
                    Ok(())
                } else {
                    Err(format!(
                        "block {}: requires beta_{} >= lambda/varphi_k^2 + lambda C_k(C_k-1)/(2 tau_k^2) = {shift}, got {b2}",
                        k + 1,
                        2 * k + 2
                    ))
                });
                beta[2 * k] = b1 - shift;
                beta[2 * k + 1] = b2 - shift;
                beta[2 * n + 2 * k] = child;
                beta[2 * n + 2 * k + 1] = child;
                pred += 2.0 * lambda * lambda / varphi2
                    + lambda * lambda * (blk.c - 1.0) * (blk.c - 1.0) / blk.tau2;
            }
            let penalized = lambda * lambda * constants.gamma2_s0
                - lambda * lambda * constants.tau2.iter().map(|t| 1.0 / t).sum::<f64>();
            OracleSolution {
                beta_star: beta,
                case_id: "Exact".to_string(),
                prediction_error: pred,
                penalized_error: penalized,
                applicable: true,
                applicability_reason: String::new(),
                constants,
                solution_family: None,
            }
        }
        DesignSpec::ChildParentGamma { theta, gamma3 } => {
            require!(check_support(beta0, &active));
            require!(check_pair_ordering(beta0[0], beta0[1], "active pair"));
            let psi2 = 1.0 - theta;
            let gamma4 = 1.0 - gamma3;
            let b2 = beta0[1];
            require!(if 2.0 * gamma4 * b2 >= lambda / psi2 {
                Ok(())
            } else {
                Err(format!(
                    "requires 2 gamma4 beta2 >= lambda/psi^2: {} < {}",
                    2.0 * gamma4 * b2,
                    lambda / psi2
                ))
            });
            let b3 = 2.0 * gamma3 * b2 - lambda / psi2;
            let b4 = 2.0 * gamma4 * b2 - lambda / psi2;
            let beta = DVector::from_vec(vec![beta0[0] - b2, 0.0, b3, b4]);
            let pred = 2.0 * lambda * lambda / psi2;
            let penalized = 4.0 * lambda * b2 - 2.0 * lambda * lambda / psi2;
            OracleSolution {
                beta_star: beta,
                case_id: "FamilyRepresentative".to_string(),
                prediction_error: pred,
                penalized_error: penalized,
                applicable: true,
                applicability_reason: String::new(),
                constants,
                solution_family: Some(SolutionFamily {
                    direction: DVector::from_vec(vec![1.0, 1.0, -2.0 * gamma3, -2.0 * gamma4]),
                    t_max: b4 / (2.0 * gamma4),
                }),
            }
        }
        DesignSpec::ChildParentSym { .. } | DesignSpec::ChildParentOrthoInactive { .. } => {
            require!(check_support(beta0, &active));
            require!(check_pair_ordering(beta0[0], beta0[1], "active pair"));
            let varphi2 = constants.varphi2[0];
            let ratio = lambda / varphi2;
            require!(if beta0[1] >= ratio {
                Ok(())
            } else {
                Err(format!(
                    "requires beta2 >= lambda/varphi^2 = {ratio}, got {}",
                    beta0[1]
                ))
            });
            // The irrepresentable condition holds: no false positives.
            let mut beta = DVector::zeros(p);
            beta[0] = beta0[0] - ratio;
            beta[1] = beta0[1] - ratio;
            let pred = 2.0 * lambda * lambda / varphi2;
            OracleSolution {
                beta_star: beta,
                case_id: "Exact".to_string(),
                prediction_error: pred,
                penalized_error: pred,
                applicable: true,
                applicability_reason: String::new(),
                constants,
                solution_family: None,
            }
        }
        DesignSpec::Custom { .. } => unreachable!(),
    };
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gram::build_gram;
    use crate::solver::kkt_residual;
    use approx::assert_abs_diff_eq;

    fn check(spec: &DesignSpec, beta0: Vec<f64>, lambda: f64) -> OracleSolution {
        let beta0 = DVector::from_vec(beta0);
        let sol = closed_form(spec, &beta0, lambda).unwrap();
        assert!(sol.applicable, "{}", sol.applicability_reason);
        let gram = build_gram(spec).unwrap();
        let r = kkt_residual(&gram, &beta0, lambda, &sol.beta_star);
        assert!(r < 1e-10, "KKT residual {r} for {spec:?}");
        sol
    }

    #[test]
    fn two_var_cases() {
        let spec = DesignSpec::TwoVar { rho: 0.5 };
        let s = check(&spec, vec![1.0, 1.0], 0.1);
        assert_eq!(s.case_id, "Case1");
        assert_abs_diff_eq!(s.prediction_error, 0.04, epsilon = 1e-14);

        let s = check(&spec, vec![1.0, 0.1], 0.1);
        assert_eq!(s.case_id, "Case2");
        assert_abs_diff_eq!(s.prediction_error, 0.0175, epsilon = 1e-14);
        assert_abs_diff_eq!(s.beta_star[0], 0.85, epsilon = 1e-14);

        let s = check(&spec, vec![0.1, 0.1], 0.2);
        assert_eq!(s.case_id, "Case3");
        assert_abs_diff_eq!(s.prediction_error, 0.01, epsilon = 1e-14);
    }

    #[test]
    fn two_var_case_boundaries_agree() {
        let rho = 0.5;
        let varphi2 = 1.0 - rho;
        let (b1, b2) = (0.7, 0.4);
        // Case 1 / Case 2 share lambda = varphi2 * b2.
        let lam = varphi2 * b2;
        let s = check(&DesignSpec::TwoVar { rho }, vec![b1, b2], lam);
        assert_eq!(s.case_id, "Case1");
        assert_abs_diff_eq!(s.prediction_error, 2.0 * lam * b2, epsilon = 1e-12);
        let case2 = varphi2 * (2.0 - varphi2) * b2 * b2 + lam * lam;
        assert_abs_diff_eq!(s.prediction_error, case2, epsilon = 1e-12);
        // Case 2 / Case 3 share lambda = varphi2 * b2 + (b1 - b2).
        let lam = varphi2 * b2 + (b1 - b2);
        let s = check(&DesignSpec::TwoVar { rho }, vec![b1, b2], lam);
        assert_eq!(s.case_id, "Case2");
        let case3 = b1 * b1 + b2 * b2 - 2.0 * rho * b1 * b2;
        assert_abs_diff_eq!(s.prediction_error, case3, epsilon = 1e-12);
        assert_abs_diff_eq!(
            s.prediction_error,
            2.0 * lam * b1 - (b1 * b1 - b2 * b2),
            epsilon = 1e-12
        );
    }

    #[test]
    fn parent_child_constants_and_gap() {
        let spec = DesignSpec::ParentChildSingle { rho: 0.6, c: 2.0 };
        let c = closed_form_family_constants(&spec).unwrap();
        assert_abs_diff_eq!(c.tau2[0], 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(c.phi2_s0, 0.08, epsilon = 1e-15);
        assert_abs_diff_eq!(c.gamma2_s0, 25.0, epsilon = 1e-12);
        // Consistency: s0 / phi2(S0) = gamma2.
        assert_abs_diff_eq!(2.0 / c.phi2_s0, c.gamma2_s0, epsilon = 1e-12);
    }

    #[test]
    fn parent_child_corollary_fixture() {
        // varphi^2 = 0.25, C = 2: penalized error 0.08 + 0.06 = 0.14.
        let spec = DesignSpec::ParentChildSingle { rho: 0.75, c: 2.0 };
        let s = check(&spec, vec![1.0, 0.8, 0.0], 0.1);
        assert_abs_diff_eq!(s.penalized_error, 0.14, epsilon = 1e-14);
        assert_abs_diff_eq!(
            0.1f64.powi(2) * s.constants.gamma2_s0,
            0.16,
            epsilon = 1e-14
        );
    }

    #[test]
    fn good_comp_constants() {
        let spec = DesignSpec::GoodComp {
            rho: 0.6,
            c: 2.0,
            tau2: 0.1,
        };
        let c = closed_form_family_constants(&spec).unwrap();
        assert_abs_diff_eq!(c.phi2_s0, 0.4 * 0.1 / 0.9, epsilon = 1e-15);
        assert_abs_diff_eq!(c.gamma2_s0, 45.0, epsilon = 1e-12);
        let s = check(&spec, vec![1.4, 1.3, 0.0, 0.0], 0.1);
        assert_abs_diff_eq!(s.penalized_error, 0.35, epsilon = 1e-12);
    }

    #[test]
    fn good_lasso2_certified_solution() {
        // The children absorb the parent combination; at C = 2, rho = 0.6 the
        // exact prediction error is lambda^2 / (1 - rho^2).
        let spec = DesignSpec::GoodLasso2 { rho: 0.6, c: 2.0 };
        let s = check(&spec, vec![1.0, 0.5, 0.0, 0.0], 0.1);
        assert_abs_diff_eq!(s.prediction_error, 0.01 / 0.64, epsilon = 1e-14);
        assert_abs_diff_eq!(s.penalized_error, 0.096875, epsilon = 1e-14);
        assert_abs_diff_eq!(s.beta_star[0], 0.4375, epsilon = 1e-14);
        assert_abs_diff_eq!(s.beta_star[2], 0.203125, epsilon = 1e-14);
    }

    #[test]
    fn good_lasso2_penalized_identity_at_c2() {
        // At C = 2 the penalized error is 2 lambda beta2 plus the correlation
        // correction lambda^2 (1 - 2 rho) / (1 - rho^2). Admissibility forces
        // rho > 1/2 here, so the correction is strictly negative and vanishes
        // only in the rho -> 1/2 limit.
        for rho in [0.55, 0.6, 0.7, 0.8] {
            let spec = DesignSpec::GoodLasso2 { rho, c: 2.0 };
            let lam = 0.05;
            let s = check(&spec, vec![1.0, 0.6, 0.0, 0.0], lam);
            let expected = 2.0 * lam * 0.6 + lam * lam * (1.0 - 2.0 * rho) / (1.0 - rho * rho);
            assert_abs_diff_eq!(s.penalized_error, expected, epsilon = 1e-13);
            assert!(s.penalized_error < 2.0 * lam * 0.6);
        }
    }

    #[test]
    fn good_lasso3_family() {
        let spec = DesignSpec::GoodLasso3 { rho: 0.5 };
        let s = check(&spec, vec![1.0, 1.0, 0.0, 0.0], 0.1);
        assert_abs_diff_eq!(s.prediction_error, 0.04, epsilon = 1e-14);
        let fam = s.solution_family.as_ref().unwrap();
        assert_abs_diff_eq!(fam.t_max, 0.8, epsilon = 1e-14);
        // Every family member is a KKT point with the same objective.
        let gram = build_gram(&spec).unwrap();
        let beta0 = DVector::from_vec(vec![1.0, 1.0, 0.0, 0.0]);
        for t in [0.0, 0.3, 0.8] {
            let b = &s.beta_star + &fam.direction * t;
            assert!(kkt_residual(&gram, &beta0, 0.1, &b) < 1e-12);
        }
    }

    #[test]
    fn child_parent_sym_constants() {
        // psi^2 = 0.2, C = 2: varphi^2 = 0.8, phi2(S0) = 0.2.
        let spec = DesignSpec::ChildParentSym { theta: 0.8, c: 2.0 };
        let c = closed_form_family_constants(&spec).unwrap();
        assert_abs_diff_eq!(c.varphi2[0], 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(c.phi2_s0, 0.2, epsilon = 1e-15);
        let s = check(&spec, vec![0.5, 0.3, 0.0, 0.0], 0.05);
        // No false positives.
        assert_eq!(s.beta_star[2], 0.0);
        assert_eq!(s.beta_star[3], 0.0);
        assert_abs_diff_eq!(
            s.prediction_error,
            2.0 * 0.05f64.powi(2) / 0.8,
            epsilon = 1e-14
        );
    }

    #[test]
    fn child_parent_ortho_corollary() {
        // gamma = (1/m0, ..., 1/m0): phi2(S0) = 2 (C-1)^2 / m0 and the
        // prediction error is lambda^2 m0 / C^2.
        let m0 = 4usize;
        let c = 1.3f64;
        let spec = DesignSpec::ChildParentOrthoInactive {
            c,
            gammas: vec![0.25; m0],
        };
        let k = closed_form_family_constants(&spec).unwrap();
        assert_abs_diff_eq!(k.phi2_s0, 2.0 * 0.09 / 4.0, epsilon = 1e-12);
        let lam = 0.05;
        let s = check(&spec, vec![0.6, 0.4, 0.0, 0.0, 0.0, 0.0], lam);
        assert_abs_diff_eq!(
            s.prediction_error,
            lam * lam * m0 as f64 / (c * c),
            epsilon = 1e-13
        );
        assert_eq!(s.beta_star.iter().skip(2).filter(|v| **v != 0.0).count(), 0);
    }

    #[test]
    fn child_parent_gamma_family() {
        let spec = DesignSpec::ChildParentGamma {
            theta: 0.5,
            gamma3: 0.7,
        };
        let s = check(&spec, vec![0.5, 0.2, 0.0, 0.0], 0.05);
        assert_abs_diff_eq!(s.prediction_error, 0.01, epsilon = 1e-14);
        assert_abs_diff_eq!(s.penalized_error, 0.03, epsilon = 1e-14);
        let gram = build_gram(&spec).unwrap();
        let beta0 = DVector::from_vec(vec![0.5, 0.2, 0.0, 0.0]);
        let fam = s.solution_family.as_ref().unwrap();
        for t in [0.0, fam.t_max / 2.0, fam.t_max] {
            let b = &s.beta_star + &fam.direction * t;
            assert!(kkt_residual(&gram, &beta0, 0.05, &b) < 1e-12);
        }
    }

    #[test]
    fn pair_blocks_even_set_constant() {
        let spec = DesignSpec::PairBlocks {
            rhos: vec![0.5, 0.75],
        };
        let c = closed_form_family_constants(&spec).unwrap();
        assert_abs_diff_eq!(c.phi2_s0, 1.0 / 3.0, epsilon = 1e-14);
        let even = c.phi2_even_set.unwrap();
        assert_abs_diff_eq!(even, 2.0 / (1.0 / 0.75 + 1.0 / 0.4375), epsilon = 1e-14);
        assert_abs_diff_eq!(c.lambda_min, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn inapplicable_names_the_condition() {
        let spec = DesignSpec::ParentChildSingle { rho: 0.6, c: 2.0 };
        let sol = closed_form(&spec, &DVector::from_vec(vec![1.0, 0.2, 0.0]), 0.1).unwrap();
        assert!(!sol.applicable);
        assert!(
            sol.applicability_reason.contains("beta2 >="),
            "{}",
            sol.applicability_reason
        );

        let sol = closed_form(&spec, &DVector::from_vec(vec![0.2, 1.0, 0.0]), 0.1).unwrap();
        assert!(!sol.applicable);
        assert!(sol.applicability_reason.contains("beta1 >= beta2"));

        let sol = closed_form(&spec, &DVector::from_vec(vec![1.0, 0.9, 0.5]), 0.1).unwrap();
        assert!(!sol.applicable);
        assert!(sol.applicability_reason.contains("active set"));
    }

    #[test]
    fn custom_family_unsupported() {
        let spec = DesignSpec::Custom {
            gram: vec![vec![1.0]],
        };
        assert!(matches!(
            closed_form(&spec, &DVector::from_vec(vec![1.0]), 0.1),
            Err(OracleError::UnsupportedFamily)
        ));
    }
}
