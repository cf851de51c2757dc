//! Command-line driver: build designs, solve Lasso instances, compute
//! compatibility constants and error bounds, replay the scenario catalog,
//! and run seeded coverage experiments.

mod design;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde::Serialize;

use design::{parse_set, DesignArgs, DESIGN_HELP};
use lasso_compat::bounds::gap_report;
use lasso_compat::compat::{compatibility, restricted_eigenvalue};
use lasso_compat::gram::{factorize, GramMatrix};
use lasso_compat::noisy::{coverage_with_trials, NoisyConfig};
use lasso_compat::scenario::{
    find, load_catalog, load_catalog_from, run_scenario, Scenario, ScenarioKind, ScenarioOutcome,
};
use lasso_compat::solver::{solve_noiseless, uniqueness_probe, ProblemInstance, UniquenessVerdict};
use report::{csv, num, write_file};

#[derive(Parser)]
#[command(
    name = "lassocompat",
    about = "Exact Lasso solutions, compatibility constants, and error bounds on structured designs",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the noiseless Lasso on a design.
    Solve(SolveCmd),
    /// Compute a compatibility constant phi2(L, S).
    Compat(CompatCmd),
    /// Evaluate the prediction-error bounds and their gaps.
    Bounds(BoundsCmd),
    /// Replay scenarios from the catalog and check every pinned value.
    Reproduce(ReproduceCmd),
    /// Run a seeded Monte Carlo coverage experiment for the noisy bounds.
    Coverage(CoverageCmd),
    /// List the built-in design families and their flags.
    ListDesigns,
}

#[derive(Args)]
struct SolveCmd {
    #[command(flatten)]
    design: DesignArgs,
    /// Comma-separated true coefficients.
    #[arg(long, value_delimiter = ',', required = true)]
    beta0: Vec<f64>,
    #[arg(long)]
    lambda: f64,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 1_000_000)]
    max_iter: usize,
    /// Directory for solution.csv and summary.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompatCmd {
    #[command(flatten)]
    design: DesignArgs,
    /// 1-based column indices of S, comma separated.
    #[arg(long)]
    set: String,
    /// Stretching factor L >= 1.
    #[arg(long, default_value_t = 1.0)]
    stretch: f64,
    /// Also compute the (best-effort) restricted eigenvalue of the set.
    #[arg(long)]
    restricted_eig: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BoundsCmd {
    #[command(flatten)]
    design: DesignArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    beta0: Vec<f64>,
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReproduceCmd {
    /// Scenario id, or "all".
    scenario: String,
    /// Alternative catalog JSON file (defaults to the bundled catalog).
    #[arg(long)]
    catalog: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CoverageCmd {
    #[command(flatten)]
    design: DesignArgs,
    /// Sample size (noise variance is 1/n per entry).
    #[arg(long)]
    n: usize,
    /// True coefficients; zero vector when omitted.
    #[arg(long, value_delimiter = ',')]
    beta0: Option<Vec<f64>>,
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    eta: f64,
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    alpha1: f64,
    #[arg(long)]
    trials: usize,
    #[arg(long)]
    seed: u64,
    /// CSV file with the approximating Gram matrix for the conditional bound.
    #[arg(long)]
    sigma0_file: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("LASSOCOMPAT_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(cmd) => cmd_solve(cmd),
        Command::Compat(cmd) => cmd_compat(cmd),
        Command::Bounds(cmd) => cmd_bounds(cmd),
        Command::Reproduce(cmd) => cmd_reproduce(cmd),
        Command::Coverage(cmd) => cmd_coverage(cmd),
        Command::ListDesigns => {
            for (name, flags) in DESIGN_HELP {
                println!("{name:<18} {flags}");
            }
            Ok(ExitCode::SUCCESS)
        }
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn instance_from(
    design: &DesignArgs,
    beta0: &[f64],
    lambda: f64,
) -> Result<(ProblemInstance, Option<lasso_compat::gram::DesignSpec>)> {
    let (gram, spec) = design.resolve()?;
    let inst = ProblemInstance::new(gram, DVector::from_vec(beta0.to_vec()), lambda)?;
    Ok((inst, spec))
}

#[derive(Serialize)]
struct SolveSummary {
    design: Option<String>,
    p: usize,
    lambda: f64,
    converged: bool,
    iterations: usize,
    kkt_residual: f64,
    prediction_error: f64,
    penalized_value: f64,
    objective: f64,
    unique: Option<bool>,
    beta_star: Vec<f64>,
}

fn cmd_solve(cmd: SolveCmd) -> Result<ExitCode> {
    let (inst, spec) = instance_from(&cmd.design, &cmd.beta0, cmd.lambda)?;
    let sol = solve_noiseless(&inst, cmd.tol, cmd.max_iter)?;

    let unique = if inst.gram().p() <= 32 {
        match uniqueness_probe(&inst, cmd.tol.max(1e-11))? {
            UniquenessVerdict::Unique { .. } => Some(true),
            UniquenessVerdict::NonUnique { sup_distance, .. } => {
                eprintln!(
                    "warning: non-unique minimizer (witnesses differ by {} in sup-norm)",
                    num(sup_distance)
                );
                Some(false)
            }
        }
    } else {
        None
    };

    println!("beta* = [{}]", join_nums(sol.beta_star.iter()));
    println!("kkt_residual = {}", num(sol.kkt_residual));
    println!("prediction_error = {}", num(sol.prediction_error.unwrap()));
    println!("penalized_value = {}", num(sol.penalized_value.unwrap()));

    if let Some(dir) = &cmd.out {
        let rows: Vec<Vec<String>> = (0..inst.gram().p())
            .map(|j| {
                vec![
                    (j + 1).to_string(),
                    num(inst.beta0()[j]),
                    num(sol.beta_star[j]),
                    num(sol.subgradient[j]),
                ]
            })
            .collect();
        write_file(
            dir,
            "solution.csv",
            &csv(&["index", "beta0", "beta_star", "subgradient"], &rows),
        )?;
        let summary = SolveSummary {
            design: spec.as_ref().map(|s| s.family_name().to_string()),
            p: inst.gram().p(),
            lambda: cmd.lambda,
            converged: true,
            iterations: sol.iterations,
            kkt_residual: sol.kkt_residual,
            prediction_error: sol.prediction_error.unwrap(),
            penalized_value: sol.penalized_value.unwrap(),
            objective: sol.objective,
            unique,
            beta_star: sol.beta_star.iter().cloned().collect(),
        };
        write_file(
            dir,
            "summary.json",
            &serde_json::to_string_pretty(&summary)?,
        )?;
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct CompatSummary {
    set: Vec<usize>,
    stretch: f64,
    value: f64,
    value_is_zero: bool,
    effective_sparsity: f64,
    lambda_min: f64,
    lambda_max: f64,
    minimizer: Vec<f64>,
    restricted_eigenvalue: Option<f64>,
    restricted_eigenvalue_certified: Option<bool>,
}

fn cmd_compat(cmd: CompatCmd) -> Result<ExitCode> {
    let (gram, _) = cmd.design.resolve()?;
    let set = parse_set(&cmd.set, gram.p())?;
    let report = compatibility(&gram, &set, cmd.stretch)?;
    println!(
        "phi2(L={}, S={:?}) = {}",
        cmd.stretch,
        display_set(&report.set),
        num(report.value)
    );
    println!("effective_sparsity = {}", num(report.effective_sparsity));
    println!(
        "lambda_min = {}, lambda_max = {}",
        num(report.lambda_min),
        num(report.lambda_max)
    );

    let re = if cmd.restricted_eig {
        let r = restricted_eigenvalue(&gram, &set)?;
        println!(
            "restricted_eigenvalue = {}{}",
            num(r.value),
            if r.certified {
                " (exact)"
            } else {
                " (upper bound)"
            }
        );
        Some(r)
    } else {
        None
    };

    if let Some(dir) = &cmd.out {
        let summary = CompatSummary {
            set: report.set.iter().map(|j| j + 1).collect(),
            stretch: report.stretch,
            value: report.value,
            value_is_zero: report.value_is_zero,
            effective_sparsity: report.effective_sparsity,
            lambda_min: report.lambda_min,
            lambda_max: report.lambda_max,
            minimizer: report.minimizer.iter().cloned().collect(),
            restricted_eigenvalue: re.as_ref().map(|r| r.value),
            restricted_eigenvalue_certified: re.as_ref().map(|r| r.certified),
        };
        write_file(dir, "compat.json", &serde_json::to_string_pretty(&summary)?)?;
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct BoundsSummary {
    u1: f64,
    u2: f64,
    u3: f64,
    u3_relaxed: bool,
    u2_argmin_set: Vec<usize>,
    u3_argmin_set: Vec<usize>,
    exact_prediction_error: f64,
    exact_penalized_error: f64,
    basic_bound_l1: f64,
    basic_bound_compat: f64,
    phi2_s0: f64,
    gap_u1: Option<f64>,
    gap_u2: Option<f64>,
    gap_u3: Option<f64>,
}

fn cmd_bounds(cmd: BoundsCmd) -> Result<ExitCode> {
    let (inst, spec) = instance_from(&cmd.design, &cmd.beta0, cmd.lambda)?;
    let r = gap_report(&inst, spec.as_ref())?;
    println!("exact_prediction_error = {}", num(r.exact_prediction_error));
    println!("exact_penalized_error  = {}", num(r.exact_penalized_error));
    println!("u1 = {}", num(r.u1));
    println!(
        "u2 = {} at S = {:?}",
        num(r.u2),
        display_set(&r.u2_argmin_set)
    );
    println!(
        "u3 = {} at S = {:?} (relaxed)",
        num(r.u3),
        display_set(&r.u3_argmin_set)
    );
    match r.gaps.u1 {
        Some(g) => println!("gap u1/exact = {}", num(g)),
        None => println!("gap u1/exact undefined (exact error is zero)"),
    }

    if let Some(dir) = &cmd.out {
        let rows = vec![
            vec!["u1".into(), num(r.u1)],
            vec!["u2".into(), num(r.u2)],
            vec!["u3".into(), num(r.u3)],
            vec![
                "exact_prediction_error".into(),
                num(r.exact_prediction_error),
            ],
            vec!["exact_penalized_error".into(), num(r.exact_penalized_error)],
            vec!["basic_bound_l1".into(), num(r.basic_bound_l1)],
            vec!["basic_bound_compat".into(), num(r.basic_bound_compat)],
            vec!["phi2_s0".into(), num(r.phi2_s0)],
        ];
        write_file(dir, "bounds.csv", &csv(&["quantity", "value"], &rows))?;
        let summary = BoundsSummary {
            u1: r.u1,
            u2: r.u2,
            u3: r.u3,
            u3_relaxed: r.u3_relaxed,
            u2_argmin_set: r.u2_argmin_set.iter().map(|j| j + 1).collect(),
            u3_argmin_set: r.u3_argmin_set.iter().map(|j| j + 1).collect(),
            exact_prediction_error: r.exact_prediction_error,
            exact_penalized_error: r.exact_penalized_error,
            basic_bound_l1: r.basic_bound_l1,
            basic_bound_compat: r.basic_bound_compat,
            phi2_s0: r.phi2_s0,
            gap_u1: r.gaps.u1,
            gap_u2: r.gaps.u2,
            gap_u3: r.gaps.u3,
        };
        write_file(dir, "bounds.json", &serde_json::to_string_pretty(&summary)?)?;
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct ScenarioSummary {
    scenario_id: String,
    inputs: ScenarioInputs,
    outputs: Vec<ScenarioCheck>,
    pass: bool,
}

#[derive(Serialize)]
struct ScenarioInputs {
    family: String,
    beta0: Vec<f64>,
    lambda: f64,
}

#[derive(Serialize)]
struct ScenarioCheck {
    quantity: String,
    expected: f64,
    actual: f64,
    tolerance: f64,
    pass: bool,
}

fn cmd_reproduce(cmd: ReproduceCmd) -> Result<ExitCode> {
    let catalog = match &cmd.catalog {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            load_catalog_from(&text)?
        }
        None => load_catalog()?,
    };
    let selected: Vec<&Scenario> = if cmd.scenario == "all" {
        catalog.iter().collect()
    } else {
        vec![find(&catalog, &cmd.scenario)?]
    };

    let outcomes: Vec<ScenarioOutcome> = selected.iter().map(|s| run_scenario(s)).collect();

    println!(
        "{:<26} {:<17} {:>14} {:>14} {:>12} {:>6}",
        "scenario", "kind", "exact", "closed-form", "gap-ratio", "status"
    );
    let mut failures = Vec::new();
    for (s, outcome) in selected.iter().zip(&outcomes) {
        let exact = pick(outcome, "solver vs closed-form prediction error").map(|r| r.actual);
        let oracle = pick(outcome, "solver vs closed-form prediction error").map(|r| r.expected);
        let ratio = pick(outcome, "bound/exact gap ratio").map(|r| r.actual);
        println!(
            "{:<26} {:<17} {:>14} {:>14} {:>12} {:>6}",
            s.id,
            kind_name(s.kind),
            exact.map(short).unwrap_or_else(|| "-".into()),
            oracle.map(short).unwrap_or_else(|| "-".into()),
            ratio.map(short).unwrap_or_else(|| "-".into()),
            if outcome.pass { "PASS" } else { "FAIL" }
        );
        if !outcome.pass {
            failures.push(s.id.clone());
            for row in outcome.rows.iter().filter(|r| !r.pass) {
                eprintln!(
                    "  {}: {} expected {} got {} (tol {})",
                    s.id,
                    row.quantity,
                    num(row.expected),
                    num(row.actual),
                    num(row.tolerance)
                );
            }
        }
    }
    let passed = outcomes.iter().filter(|o| o.pass).count();
    println!("{passed}/{} scenarios pass", outcomes.len());

    if let Some(dir) = &cmd.out {
        let mut rows = Vec::new();
        for (s, outcome) in selected.iter().zip(&outcomes) {
            for r in &outcome.rows {
                rows.push(vec![
                    s.id.clone(),
                    r.quantity.clone(),
                    num(r.expected),
                    num(r.actual),
                    num(r.tolerance),
                    r.pass.to_string(),
                ]);
            }
        }
        write_file(
            dir,
            "results.csv",
            &csv(
                &[
                    "scenario_id",
                    "quantity",
                    "expected",
                    "actual",
                    "tolerance",
                    "pass",
                ],
                &rows,
            ),
        )?;
        let summaries: Vec<ScenarioSummary> = selected
            .iter()
            .zip(&outcomes)
            .map(|(s, o)| ScenarioSummary {
                scenario_id: s.id.clone(),
                inputs: ScenarioInputs {
                    family: s.spec.family_name().to_string(),
                    beta0: s.beta0.clone(),
                    lambda: s.lambda,
                },
                outputs: o
                    .rows
                    .iter()
                    .map(|r| ScenarioCheck {
                        quantity: r.quantity.clone(),
                        expected: r.expected,
                        actual: r.actual,
                        tolerance: r.tolerance,
                        pass: r.pass,
                    })
                    .collect(),
                pass: o.pass,
            })
            .collect();
        write_file(
            dir,
            "summary.json",
            &serde_json::to_string_pretty(&summaries)?,
        )?;
    }

    if failures.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("failing scenarios: {}", failures.join(", "));
        Ok(ExitCode::from(3))
    }
}

fn pick<'a>(
    outcome: &'a ScenarioOutcome,
    quantity: &str,
) -> Option<&'a lasso_compat::scenario::CheckRow> {
    outcome.rows.iter().find(|r| r.quantity == quantity)
}

fn kind_name(kind: ScenarioKind) -> &'static str {
    match kind {
        ScenarioKind::Exact => "exact",
        ScenarioKind::ExactNonunique => "exact-nonunique",
        ScenarioKind::Compat => "compat",
        ScenarioKind::Coverage => "coverage",
    }
}

fn short(v: f64) -> String {
    format!("{v:.6e}")
}

#[derive(Serialize)]
struct CoverageSummary {
    n: usize,
    p: usize,
    lambda: f64,
    eta: f64,
    alpha: f64,
    alpha1: f64,
    trials: usize,
    seed: u64,
    lambda0: f64,
    eta_condition_ok: bool,
    violations: usize,
    empirical_coverage: f64,
    nominal: f64,
    mean_lhs: f64,
    mean_rhs: f64,
    xi_condition_failures: usize,
}

fn cmd_coverage(cmd: CoverageCmd) -> Result<ExitCode> {
    let (gram, _) = cmd.design.resolve()?;
    let p = gram.p();
    let beta0 = cmd.beta0.clone().unwrap_or_else(|| vec![0.0; p]);
    if beta0.len() != p {
        return Err(anyhow!("beta0 has {} entries but p = {p}", beta0.len()));
    }
    let factor = factorize(&gram, Some(cmd.n))?;
    let sigma0 = match &cmd.sigma0_file {
        None => None,
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            Some(GramMatrix::from_csv(&text)?)
        }
    };
    let inst = ProblemInstance::new(gram, DVector::from_vec(beta0), cmd.lambda)?;
    let config = NoisyConfig {
        n: cmd.n,
        alpha: cmd.alpha,
        alpha1: cmd.alpha1,
        eta: cmd.eta,
        lambda: cmd.lambda,
        trials: cmd.trials,
        seed: cmd.seed,
        sigma0,
    };
    let (report, trials) = coverage_with_trials(&inst, &factor, &config)?;
    if !report.eta_condition_ok {
        eprintln!(
            "warning: eta * lambda = {} does not exceed lambda0 = {}; the bound's guarantee does not apply",
            num(cmd.eta * cmd.lambda),
            num(report.lambda0)
        );
    }
    println!("empirical_coverage = {}", num(report.empirical_coverage));
    println!("nominal = {}", num(report.nominal));
    println!("violations = {} / {}", report.violations, report.trials);
    println!(
        "mean_lhs = {}, mean_rhs = {}",
        num(report.mean_lhs),
        num(report.mean_rhs)
    );
    if config.sigma0.is_some() {
        println!("xi_condition_failures = {}", report.xi_condition_failures);
    }

    if let Some(dir) = &cmd.out {
        let rows: Vec<Vec<String>> = trials
            .iter()
            .map(|t| {
                vec![
                    t.trial.to_string(),
                    num(t.lhs),
                    num(t.rhs),
                    t.violation.to_string(),
                    t.xi.map(num).unwrap_or_default(),
                    t.condition_ok.to_string(),
                ]
            })
            .collect();
        write_file(
            dir,
            "trials.csv",
            &csv(
                &["trial", "lhs", "rhs", "violation", "xi", "condition_ok"],
                &rows,
            ),
        )?;
        let summary = CoverageSummary {
            n: cmd.n,
            p,
            lambda: cmd.lambda,
            eta: cmd.eta,
            alpha: cmd.alpha,
            alpha1: cmd.alpha1,
            trials: cmd.trials,
            seed: cmd.seed,
            lambda0: report.lambda0,
            eta_condition_ok: report.eta_condition_ok,
            violations: report.violations,
            empirical_coverage: report.empirical_coverage,
            nominal: report.nominal,
            mean_lhs: report.mean_lhs,
            mean_rhs: report.mean_rhs,
            xi_condition_failures: report.xi_condition_failures,
        };
        write_file(
            dir,
            "summary.json",
            &serde_json::to_string_pretty(&summary)?,
        )?;
    }
    Ok(ExitCode::SUCCESS)
}

fn display_set(set: &[usize]) -> Vec<usize> {
    set.iter().map(|j| j + 1).collect()
}

fn join_nums<'a>(vals: impl Iterator<Item = &'a f64>) -> String {
    vals.map(|v| num(*v)).collect::<Vec<_>>().join(", ")
}
