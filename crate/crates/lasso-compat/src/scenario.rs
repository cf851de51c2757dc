//! The scenario catalog: named fixtures pairing a design, coefficients, and
//! a tuning parameter with their expected closed-form quantities.
//!
//! The catalog is data, not code: a JSON file is bundled with the crate and
//! an alternative file can be loaded at runtime. At load time every exact
//! scenario is replayed through the closed-form module and rejected on any
//! disagreement, so a stale catalog cannot pass silently.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::gap_report;
use crate::compat::{compatibility, restricted_eigenvalue};
use crate::gram::{build_gram, factorize, DesignSpec};
use crate::noisy::{coverage, NoisyConfig};
use crate::oracle::closed_form;
use crate::solver::{kkt_residual, solve_noiseless, ProblemInstance};

/// Bundled catalog, embedded at build time.
pub const BUNDLED_CATALOG: &str = include_str!("scenarios.json");

/// Sup-norm tolerance for solver-vs-closed-form coefficient comparisons.
pub const BETA_TOL: f64 = 1e-7;
/// Tolerance for objective comparisons on non-unique designs.
pub const OBJECTIVE_TOL: f64 = 1e-10;
/// Maximum KKT residual accepted for a closed-form solution.
pub const ORACLE_KKT_TOL: f64 = 1e-10;
/// Load-time tolerance between catalog values and the closed-form module.
const SELF_VALIDATION_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("catalog parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("catalog self-validation failed for '{id}': {detail}")]
    SelfValidation { id: String, detail: String },
    #[error("unknown scenario id '{0}'")]
    UnknownScenario(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    /// Unique minimizer: solver and closed form must agree coefficientwise.
    Exact,
    /// Non-unique minimizer: objectives must agree; coefficients may not.
    ExactNonunique,
    /// Compatibility-constant identities only.
    Compat,
    /// Seeded Monte Carlo coverage run.
    Coverage,
}

/// Expected closed-form quantities. All fields optional; absent fields are
/// not checked.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Expected {
    pub case: Option<String>,
    pub beta_star: Option<Vec<f64>>,
    pub prediction_error: Option<f64>,
    pub penalized_error: Option<f64>,
    pub phi2_s0: Option<f64>,
    pub gamma2_s0: Option<f64>,
    pub lambda_min: Option<f64>,
    pub phi2_even_set: Option<f64>,
    pub restricted_eig_s0: Option<f64>,
    /// `lambda^2 s0 / phi2(S0)`.
    pub bound_compat: Option<f64>,
    /// `bound_compat / exact penalized error`.
    pub gap_ratio: Option<f64>,
    /// `bound_compat - exact penalized error`.
    pub gap_identity: Option<f64>,
    pub u2: Option<f64>,
    /// Exact error expressed as `2 lambda |b0|_1` off the even-index set.
    pub even_set_identity: Option<f64>,
    pub family_t_max: Option<f64>,
    pub penalized_family_max: Option<f64>,
    pub min_coverage: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageParams {
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub eta: f64,
    pub alpha: f64,
    pub alpha1: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub kind: ScenarioKind,
    pub spec: DesignSpec,
    pub beta0: Vec<f64>,
    pub lambda: f64,
    pub expected: Expected,
    pub note: String,
    #[serde(default)]
    pub coverage: Option<CoverageParams>,
}

#[derive(Debug, Deserialize)]
struct CatalogFile {
    scenarios: Vec<Scenario>,
}

/// One checked quantity of a scenario run.
#[derive(Debug, Clone, Serialize)]
pub struct CheckRow {
    pub quantity: String,
    pub expected: f64,
    pub actual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Result of running one scenario.
#[derive(Debug, Clone, Serialize)]
pub struct ScenarioOutcome {
    pub id: String,
    pub rows: Vec<CheckRow>,
    pub pass: bool,
}

/// Parses and self-validates the bundled catalog.
pub fn load_catalog() -> Result<Vec<Scenario>, CatalogError> {
    load_catalog_from(BUNDLED_CATALOG)
}

/// Parses and self-validates a catalog from JSON text.
pub fn load_catalog_from(text: &str) -> Result<Vec<Scenario>, CatalogError> {
    let file: CatalogFile = serde_json::from_str(text)?;
    for s in &file.scenarios {
        self_validate(s)?;
    }
    Ok(file.scenarios)
}

fn self_validate(s: &Scenario) -> Result<(), CatalogError> {
    let fail = |detail: String| CatalogError::SelfValidation {
        id: s.id.clone(),
        detail,
    };
    if !matches!(s.kind, ScenarioKind::Exact | ScenarioKind::ExactNonunique) {
        // Compat and coverage scenarios have nothing to replay at load time
        // beyond spec admissibility.
        build_gram(&s.spec).map_err(|e| fail(e.to_string()))?;
        return Ok(());
    }
    let beta0 = DVector::from_vec(s.beta0.clone());
    let oracle = closed_form(&s.spec, &beta0, s.lambda).map_err(|e| fail(e.to_string()))?;
    if !oracle.applicable {
        return Err(fail(format!(
            "closed form inapplicable: {}",
            oracle.applicability_reason
        )));
    }
    let check = |name: &str, expected: Option<f64>, actual: f64| {
        if let Some(e) = expected {
            if (e - actual).abs() > SELF_VALIDATION_TOL * e.abs().max(1.0) {
                return Err(fail(format!("{name}: catalog {e} vs closed form {actual}")));
            }
        }
        Ok(())
    };
    check(
        "prediction_error",
        s.expected.prediction_error,
        oracle.prediction_error,
    )?;
    check(
        "penalized_error",
        s.expected.penalized_error,
        oracle.penalized_error,
    )?;
    check("phi2_s0", s.expected.phi2_s0, oracle.constants.phi2_s0)?;
    if let Some(g) = s.expected.gamma2_s0 {
        check("gamma2_s0", Some(g), oracle.constants.gamma2_s0)?;
    }
    if let Some(t) = s.expected.family_t_max {
        let fam = oracle
            .solution_family
            .as_ref()
            .ok_or_else(|| fail("expected a solution family".into()))?;
        check("family_t_max", Some(t), fam.t_max)?;
    }
    if let Some(case) = &s.expected.case {
        if *case != oracle.case_id {
            return Err(fail(format!(
                "case: catalog {case} vs closed form {}",
                oracle.case_id
            )));
        }
    }
    if let Some(bs) = &s.expected.beta_star {
        let diff = bs
            .iter()
            .zip(oracle.beta_star.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        if diff > SELF_VALIDATION_TOL {
            return Err(fail(format!("beta_star differs by {diff}")));
        }
    }
    Ok(())
}

fn row(quantity: &str, expected: f64, actual: f64, tolerance: f64) -> CheckRow {
    CheckRow {
        quantity: quantity.to_string(),
        expected,
        actual,
        tolerance,
        pass: (expected - actual).abs() <= tolerance,
    }
}

/// Executes one scenario: numeric solver against the closed form, the
/// compatibility constant against its formula, and any bound identities the
/// scenario pins.
pub fn run_scenario(s: &Scenario) -> ScenarioOutcome {
    let mut rows = Vec::new();
    match s.kind {
        ScenarioKind::Exact | ScenarioKind::ExactNonunique => run_exact(s, &mut rows),
        ScenarioKind::Compat => run_compat(s, &mut rows),
        ScenarioKind::Coverage => run_coverage(s, &mut rows),
    }
    let pass = rows.iter().all(|r| r.pass);
    ScenarioOutcome {
        id: s.id.clone(),
        rows,
        pass,
    }
}

fn run_exact(s: &Scenario, rows: &mut Vec<CheckRow>) {
    let gram = build_gram(&s.spec).expect("catalog spec is admissible");
    let beta0 = DVector::from_vec(s.beta0.clone());
    let oracle = closed_form(&s.spec, &beta0, s.lambda).expect("catalog family has a closed form");
    let inst = ProblemInstance::new(gram.clone(), beta0.clone(), s.lambda).unwrap();

    // The closed form must itself be a certified stationary point.
    let oracle_kkt = kkt_residual(&gram, &beta0, s.lambda, &oracle.beta_star);
    rows.push(row(
        "closed-form KKT residual",
        0.0,
        oracle_kkt,
        ORACLE_KKT_TOL,
    ));

    let sol = match solve_noiseless(&inst, 1e-10, 1_000_000) {
        Ok(sol) => sol,
        Err(e) => {
            rows.push(CheckRow {
                quantity: format!("solver failed: {e}"),
                expected: 0.0,
                actual: f64::NAN,
                tolerance: 0.0,
                pass: false,
            });
            return;
        }
    };
    match s.kind {
        ScenarioKind::Exact => {
            let diff = (&sol.beta_star - &oracle.beta_star).abs().max();
            rows.push(row("solver vs closed-form beta (sup)", 0.0, diff, BETA_TOL));
            rows.push(row(
                "solver vs closed-form penalized error",
                oracle.penalized_error,
                sol.penalized_value.unwrap(),
                1e-8,
            ));
        }
        ScenarioKind::ExactNonunique => {
            let oracle_objective = inst.objective(&oracle.beta_star);
            rows.push(row(
                "solver vs closed-form objective",
                oracle_objective,
                sol.objective,
                OBJECTIVE_TOL,
            ));
        }
        _ => unreachable!(),
    }
    rows.push(row(
        "solver vs closed-form prediction error",
        oracle.prediction_error,
        sol.prediction_error.unwrap(),
        1e-8,
    ));

    // Compatibility constant against the family formula.
    let s0 = inst.active_set();
    let compat = compatibility(&gram, &s0, 1.0).expect("conventional set is small");
    rows.push(row(
        "orthant compatibility vs formula",
        oracle.constants.phi2_s0,
        compat.value,
        1e-8,
    ));

    let needs_bounds = s.expected.bound_compat.is_some()
        || s.expected.gap_ratio.is_some()
        || s.expected.gap_identity.is_some()
        || s.expected.u2.is_some();
    if needs_bounds {
        let report = gap_report(&inst, Some(&s.spec)).expect("bounds evaluate");
        if let Some(b) = s.expected.bound_compat {
            rows.push(row(
                "basic compatibility bound",
                b,
                report.basic_bound_compat,
                1e-8,
            ));
        }
        if let Some(g) = s.expected.gap_ratio {
            let actual = report.basic_bound_compat / report.exact_penalized_error;
            rows.push(row("bound/exact gap ratio", g, actual, 1e-9));
        }
        if let Some(g) = s.expected.gap_identity {
            let actual = report.basic_bound_compat - report.exact_penalized_error;
            rows.push(row("bound minus exact penalized", g, actual, 1e-8));
        }
        if let Some(u2) = s.expected.u2 {
            rows.push(row("subset bound u2", u2, report.u2, 1e-9));
        }
    }
    if let Some(v) = s.expected.even_set_identity {
        rows.push(row(
            "exact error vs even-set display",
            v,
            sol.prediction_error.unwrap(),
            1e-10,
        ));
    }
    if let Some(pm) = s.expected.penalized_family_max {
        let fam = oracle.solution_family.as_ref().expect("non-unique family");
        let far = &oracle.beta_star + &fam.direction * fam.t_max;
        rows.push(row(
            "penalized error at the family end",
            pm,
            inst.penalized_value(&far),
            1e-10,
        ));
    }
}

fn run_compat(s: &Scenario, rows: &mut Vec<CheckRow>) {
    let gram = build_gram(&s.spec).expect("catalog spec is admissible");
    let p = gram.p();
    let all: Vec<usize> = (0..p).collect();
    if let Some(v) = s.expected.phi2_s0 {
        let c = compatibility(&gram, &all, 1.0).unwrap();
        rows.push(row("phi2 at the full set", v, c.value, 1e-8));
    }
    if let Some(v) = s.expected.phi2_even_set {
        let evens: Vec<usize> = (0..p).filter(|j| j % 2 == 1).collect();
        let c = compatibility(&gram, &evens, 1.0).unwrap();
        rows.push(row("phi2 at the even-index set", v, c.value, 1e-8));
    }
    if let Some(v) = s.expected.lambda_min {
        let (lmin, _) = crate::compat::extreme_eigenvalues(&gram);
        rows.push(row("smallest eigenvalue", v, lmin, 1e-10));
    }
    if let Some(v) = s.expected.restricted_eig_s0 {
        let r = restricted_eigenvalue(&gram, &all).unwrap();
        rows.push(row(
            "restricted eigenvalue at the full set",
            v,
            r.value,
            1e-10,
        ));
    }
}

fn run_coverage(s: &Scenario, rows: &mut Vec<CheckRow>) {
    let params = s
        .coverage
        .as_ref()
        .expect("coverage scenario carries parameters");
    let gram = build_gram(&s.spec).expect("catalog spec is admissible");
    let factor = factorize(&gram, Some(params.n)).expect("n >= rank");
    let inst = ProblemInstance::new(gram, DVector::from_vec(s.beta0.clone()), s.lambda).unwrap();
    let config = NoisyConfig {
        n: params.n,
        alpha: params.alpha,
        alpha1: params.alpha1,
        eta: params.eta,
        lambda: s.lambda,
        trials: params.trials,
        seed: params.seed,
        sigma0: None,
    };
    let report = coverage(&inst, &factor, &config).expect("coverage runs");
    let min = s.expected.min_coverage.unwrap_or(report.nominal);
    rows.push(CheckRow {
        quantity: "empirical coverage at least nominal".to_string(),
        expected: min,
        actual: report.empirical_coverage,
        tolerance: 0.0,
        pass: report.empirical_coverage >= min,
    });
}

/// Looks up one scenario by id.
pub fn find<'a>(catalog: &'a [Scenario], id: &str) -> Result<&'a Scenario, CatalogError> {
    catalog
        .iter()
        .find(|s| s.id == id)
        .ok_or_else(|| CatalogError::UnknownScenario(id.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_catalog_loads_and_self_validates() {
        let catalog = load_catalog().unwrap();
        assert!(catalog.len() >= 20, "only {} scenarios", catalog.len());
        let exact = catalog
            .iter()
            .filter(|s| matches!(s.kind, ScenarioKind::Exact | ScenarioKind::ExactNonunique))
            .count();
        assert!(exact >= 20, "only {exact} exact scenarios");
    }

    #[test]
    fn every_family_is_covered() {
        let catalog = load_catalog().unwrap();
        for family in [
            "TwoVar",
            "PairBlocks",
            "PairBlocksPlusOrthogonal",
            "ParentChildSingle",
            "ParentChildMany",
            "ParentChildBlock2N",
            "GoodComp",
            "GoodLasso2",
            "GoodLasso3",
            "BlockGoodComp2N",
            "ChildParentGamma",
            "ChildParentSym",
            "ChildParentOrthoInactive",
        ] {
            assert!(
                catalog.iter().any(|s| s.spec.family_name() == family),
                "no scenario for {family}"
            );
        }
    }

    #[test]
    fn corrupted_catalog_is_rejected() {
        let text = BUNDLED_CATALOG.replace("\"phi2_s0\": 0.5", "\"phi2_s0\": 0.51");
        assert_ne!(text, BUNDLED_CATALOG);
        assert!(matches!(
            load_catalog_from(&text),
            Err(CatalogError::SelfValidation { .. })
        ));
    }

    #[test]
    fn unknown_id_errors() {
        let catalog = load_catalog().unwrap();
        assert!(matches!(
            find(&catalog, "nope"),
            Err(CatalogError::UnknownScenario(_))
        ));
    }
}
