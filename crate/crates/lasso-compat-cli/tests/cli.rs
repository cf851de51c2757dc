//! End-to-end checks of the command-line surface: flags, file formats, and
//! exit codes.

use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lassocompat"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).to_string()
}

fn first_value(text: &str, key: &str) -> f64 {
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix(key) {
            let rest = rest.trim_start_matches([' ', '=']);
            let tok = rest.split_whitespace().next().unwrap();
            return tok.parse().unwrap();
        }
    }
    panic!("no line starts with '{key}' in:\n{text}");
}

#[test]
fn solve_two_var_case1() {
    let out = run(&[
        "solve", "--design", "twovar", "--rho", "0.5", "--beta0", "1,1", "--lambda", "0.1",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(
        (first_value(&text, "prediction_error") - 0.04).abs() < 1e-8,
        "{text}"
    );
    let beta1: f64 = text
        .lines()
        .next()
        .unwrap()
        .trim_start_matches("beta* = [")
        .split(',')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!((beta1 - 0.8).abs() < 1e-8, "{text}");
}

#[test]
fn solve_zero_beta_from_gram_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.csv");
    std::fs::write(&path, "1.0,0.0\n0.0,1.0\n").unwrap();
    let out = run(&[
        "solve",
        "--gram-file",
        path.to_str().unwrap(),
        "--beta0",
        "0,0",
        "--lambda",
        "0.1",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!((first_value(&text, "prediction_error")).abs() < 1e-12);
}

#[test]
fn solve_warns_on_non_unique_minimizer() {
    let out = run(&[
        "solve",
        "--design",
        "goodlasso3",
        "--rho",
        "0.5",
        "--beta0",
        "1,1,0,0",
        "--lambda",
        "0.1",
    ]);
    assert!(out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("non-unique"), "stderr: {err}");
}

#[test]
fn solve_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "solve",
        "--design",
        "twovar",
        "--rho",
        "0.5",
        "--beta0",
        "1,1",
        "--lambda",
        "0.1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("solution.csv")).unwrap();
    assert!(csv.starts_with("index,beta0,beta_star,subgradient\n"));
    assert_eq!(csv.lines().count(), 3);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["design"], "TwoVar");
    assert_eq!(summary["unique"], true);
}

#[test]
fn inadmissible_design_exits_2() {
    let out = run(&[
        "solve",
        "--design",
        "parentchild",
        "--rho",
        "0.1",
        "--c",
        "2",
        "--beta0",
        "1,1,0",
        "--lambda",
        "0.1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("varphi^2"), "stderr: {err}");
}

#[test]
fn compat_parent_child() {
    let out = run(&[
        "compat",
        "--design",
        "parentchild",
        "--rho",
        "0.6",
        "--c",
        "2",
        "--set",
        "1,2",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(
        (first_value(&text, "phi2(L=1, S=[1, 2])") - 0.08).abs() < 1e-8,
        "{text}"
    );
}

#[test]
fn compat_identity_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("identity4.csv");
    let mut rows = String::new();
    for i in 0..4 {
        let row: Vec<&str> = (0..4).map(|j| if i == j { "1" } else { "0" }).collect();
        rows.push_str(&row.join(","));
        rows.push('\n');
    }
    std::fs::write(&path, rows).unwrap();
    let out = run(&[
        "compat",
        "--gram-file",
        path.to_str().unwrap(),
        "--set",
        "1,2",
    ]);
    assert!(out.status.success());
    assert!((first_value(&stdout(&out), "phi2(L=1, S=[1, 2])") - 1.0).abs() < 1e-8);
}

#[test]
fn bounds_reports_gap() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "bounds",
        "--design",
        "parentchild",
        "--rho",
        "0.75",
        "--c",
        "2",
        "--beta0",
        "1,0.8,0",
        "--lambda",
        "0.1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(
        (first_value(&text, "exact_penalized_error") - 0.14).abs() < 1e-9,
        "{text}"
    );
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("bounds.json")).unwrap())
            .unwrap();
    let bound = summary["basic_bound_compat"].as_f64().unwrap();
    assert!((bound - 0.16).abs() < 1e-9);
    let csv = std::fs::read_to_string(dir.path().join("bounds.csv")).unwrap();
    assert!(csv.starts_with("quantity,value\n"));
}

#[test]
fn reproduce_single_scenario() {
    let out = run(&["reproduce", "p2-exact-case2"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("p2-exact-case2"));
    assert!(text.contains("1/1 scenarios pass"), "{text}");
}

#[test]
fn reproduce_unknown_scenario_exits_2() {
    let out = run(&["reproduce", "never-heard-of-it"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn reproduce_reads_external_catalog_and_flags_failures() {
    // A catalog whose pinned value contradicts the closed form must be
    // rejected at load time.
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("catalog.json");
    let bad = r#"{"scenarios": [{
        "id": "bogus",
        "kind": "exact",
        "spec": {"family": "TwoVar", "params": {"rho": 0.5}},
        "beta0": [1.0, 1.0],
        "lambda": 0.1,
        "expected": {"prediction_error": 0.05},
        "note": ""
    }]}"#;
    std::fs::write(&path, bad).unwrap();
    let out = run(&["reproduce", "all", "--catalog", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("self-validation"));
}

#[test]
fn coverage_identity_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "coverage",
        "--design",
        "identity",
        "--p",
        "4",
        "--n",
        "100",
        "--beta0",
        "1,0.5,0,0",
        "--lambda",
        "0.6",
        "--eta",
        "0.5",
        "--alpha",
        "0.05",
        "--alpha1",
        "0.05",
        "--trials",
        "50",
        "--seed",
        "42",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = stdout(&out);
    assert!(first_value(&text, "empirical_coverage") >= 0.9);
    // eta * lambda falls short of lambda0 here; the warning must say so.
    assert!(String::from_utf8_lossy(&out.stderr).contains("lambda0"));
    let trials = std::fs::read_to_string(dir.path().join("trials.csv")).unwrap();
    assert!(trials.starts_with("trial,lhs,rhs,violation,xi,condition_ok\n"));
    assert_eq!(trials.lines().count(), 51);

    // Byte-identical on a repeated run with the same seed.
    let dir2 = tempfile::tempdir().unwrap();
    let out2 = run(&[
        "coverage",
        "--design",
        "identity",
        "--p",
        "4",
        "--n",
        "100",
        "--beta0",
        "1,0.5,0,0",
        "--lambda",
        "0.6",
        "--eta",
        "0.5",
        "--alpha",
        "0.05",
        "--alpha1",
        "0.05",
        "--trials",
        "50",
        "--seed",
        "42",
        "--out",
        dir2.path().to_str().unwrap(),
    ]);
    assert!(out2.status.success());
    let trials2 = std::fs::read_to_string(dir2.path().join("trials.csv")).unwrap();
    assert_eq!(trials, trials2);
}

#[test]
fn coverage_with_sigma0_file() {
    let dir = tempfile::tempdir().unwrap();
    let sigma0 = dir.path().join("sigma0.csv");
    std::fs::write(&sigma0, "1.0,-0.5\n-0.5,1.0\n").unwrap();
    let out = run(&[
        "coverage",
        "--design",
        "twovar",
        "--rho",
        "0.5",
        "--n",
        "60",
        "--beta0",
        "2,1.8",
        "--lambda",
        "0.8",
        "--eta",
        "0.5",
        "--alpha",
        "0.05",
        "--alpha1",
        "0.05",
        "--trials",
        "20",
        "--seed",
        "7",
        "--sigma0-file",
        sigma0.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(stdout(&out).contains("xi_condition_failures = 0"));
}

#[test]
fn spec_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("design.json");
    std::fs::write(
        &path,
        r#"{"family": "GoodComp", "params": {"rho": 0.6, "c": 2.0, "tau2": 0.1}}"#,
    )
    .unwrap();
    let out = run(&[
        "compat",
        "--spec-file",
        path.to_str().unwrap(),
        "--set",
        "1,2",
    ]);
    assert!(out.status.success());
    let v = first_value(&stdout(&out), "phi2(L=1, S=[1, 2])");
    assert!((v - 0.4 * 0.1 / 0.9).abs() < 1e-8);
}

#[test]
fn list_designs_names_every_family() {
    let out = run(&["list-designs"]);
    assert!(out.status.success());
    let text = stdout(&out);
    for name in [
        "twovar",
        "pairblocks",
        "goodcomp",
        "goodlasso3",
        "childparentortho",
        "identity",
    ] {
        assert!(text.contains(name), "missing {name}");
    }
}

#[test]
fn threads_env_var_is_respected() {
    let out = bin()
        .env("LASSOCOMPAT_THREADS", "1")
        .args(["reproduce", "p2-exact-case1"])
        .output()
        .expect("binary runs");
    assert!(out.status.success());
    assert!(stdout(&out).contains("1/1 scenarios pass"));
}

#[test]
fn csv_outputs_use_full_precision() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "solve",
        "--design",
        "twovar",
        "--rho",
        "0.6",
        "--beta0",
        "1,0.9",
        "--lambda",
        "0.05",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("solution.csv")).unwrap();
    // 17 significant digits in scientific notation: mantissa dot + 16 digits.
    let cell = csv.lines().nth(1).unwrap().split(',').nth(2).unwrap();
    let mantissa = cell.split('e').next().unwrap();
    let digits = mantissa.chars().filter(|c| c.is_ascii_digit()).count();
    assert_eq!(digits, 17, "cell {cell}");
    let parsed: f64 = cell.parse().unwrap();
    assert!((parsed - (1.0 - 0.05 / 0.4)).abs() < 1e-8);
}
