//! End-to-end tests for the command-line driver: artifact layout, exit
//! codes, determinism, and numeric agreement with the committed reference
//! tables.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::tempdir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_netbridge"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

/// Runs `solve` on fixture files and returns the process output.
fn solve_fixture(out: &Path, graph: &str, prior: &str, flag: &str, constraint: &Path) -> Output {
    bin()
        .arg("solve")
        .arg("--graph")
        .arg(fixture(graph))
        .arg("--prior")
        .arg(fixture(prior))
        .arg(flag)
        .arg(constraint)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn read_csv(path: &Path) -> Vec<Vec<f64>> {
    let text = fs::read_to_string(path).expect("csv exists");
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().expect("csv cell")).collect())
        .collect()
}

fn dot_label_sum(path: &Path) -> f64 {
    let text = fs::read_to_string(path).expect("dot exists");
    let mut sum = 0.0;
    for part in text.split("label=\"").skip(1) {
        let end = part.find('"').expect("closing quote");
        sum += part[..end].parse::<f64>().expect("label value");
    }
    sum
}

fn stdout_value(output: &Output, key: &str) -> f64 {
    let text = String::from_utf8_lossy(&output.stdout);
    let line = text
        .lines()
        .find(|l| l.starts_with(key))
        .unwrap_or_else(|| panic!("missing `{key}` in stdout: {text}"));
    line[key.len()..].trim().parse().expect("numeric field")
}

#[test]
fn solve_reproduces_the_committed_reference_table() {
    let dir = tempdir().unwrap();
    let out = solve_fixture(
        dir.path(),
        "figure3.json",
        "prior_boltzmann_T001.json",
        "--marginals",
        &fixture("marginals_partial.json"),
    );
    assert!(out.status.success(), "stderr: {:?}", out.stderr);

    let csv = fs::read_to_string(dir.path().join("marginals.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "1,2,3,4,5,6,7,8,9");
    let rows = read_csv(&dir.path().join("marginals.csv"));

    let golden = fs::read_to_string(fixture("golden/reference_t001.json")).unwrap();
    let golden: serde_json::Value = serde_json::from_str(&golden).unwrap();
    let table = golden["matrix"].as_array().unwrap();
    assert_eq!(rows.len(), table.len());
    for (t, row) in table.iter().enumerate() {
        for (j, cell) in row.as_array().unwrap().iter().enumerate() {
            let want = cell.as_f64().unwrap();
            let got = rows[t][j];
            assert!(
                (got - want).abs() < 1e-3,
                "marginals[{t}][{j}] = {got}, reference {want}"
            );
        }
    }
}

#[test]
fn csv_output_is_bit_deterministic() {
    let a = tempdir().unwrap();
    let b = tempdir().unwrap();
    for dir in [&a, &b] {
        let out = solve_fixture(
            dir.path(),
            "figure3.json",
            "prior_boltzmann_T001.json",
            "--marginals",
            &fixture("marginals_partial.json"),
        );
        assert!(out.status.success());
    }
    let bytes_a = fs::read(a.path().join("marginals.csv")).unwrap();
    let bytes_b = fs::read(b.path().join("marginals.csv")).unwrap();
    assert!(!bytes_a.is_empty());
    assert_eq!(bytes_a, bytes_b);
}

#[test]
fn dot_flows_sum_to_one_per_interval() {
    let dir = tempdir().unwrap();
    let out = solve_fixture(
        dir.path(),
        "figure5.json",
        "prior_rb.json",
        "--marginals",
        &fixture("marginals_partial.json"),
    );
    assert!(out.status.success(), "stderr: {:?}", out.stderr);
    for t in 0..4 {
        let sum = dot_label_sum(&dir.path().join(format!("flows_t{t}.dot")));
        assert!(
            (sum - 1.0).abs() < 1e-9,
            "interval {t} flow mass {sum} != 1"
        );
    }
    assert!(!dir.path().join("flows_t4.dot").exists());
}

#[test]
fn solution_json_is_normalized_and_complete() {
    let dir = tempdir().unwrap();
    let out = solve_fixture(
        dir.path(),
        "figure3.json",
        "prior_boltzmann_T100.json",
        "--marginals",
        &fixture("marginals_partial.json"),
    );
    assert!(out.status.success());
    let text = fs::read_to_string(dir.path().join("solution.json")).unwrap();
    let sol: serde_json::Value = serde_json::from_str(&text).unwrap();
    for key in [
        "nodes", "phi0", "phiN", "phihat0", "phihatN", "q0N", "q0_star", "qN_star", "iterations",
        "final_gap", "kl_value",
    ] {
        assert!(sol.get(key).is_some(), "missing key {key}");
    }
    let joint_mass: f64 = sol["q0N"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|r| r.as_array().unwrap())
        .map(|v| v.as_f64().unwrap())
        .sum();
    assert!((joint_mass - 1.0).abs() < 1e-9);
    for key in ["q0_star", "qN_star"] {
        let mass: f64 = sol[key]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_f64().unwrap())
            .sum();
        assert!((mass - 1.0).abs() < 1e-9, "{key} mass {mass}");
    }
}

#[test]
fn every_emitted_marginal_row_is_normalized() {
    let dir = tempdir().unwrap();
    let out = solve_fixture(
        dir.path(),
        "figure5.json",
        "prior_boltzmann_T1.json",
        "--moments",
        &fixture("moments_mean.json"),
    );
    assert!(out.status.success(), "stderr: {:?}", out.stderr);
    let rows = read_csv(&dir.path().join("marginals.csv"));
    assert_eq!(rows.len(), 5);
    for (t, row) in rows.iter().enumerate() {
        let mass: f64 = row.iter().sum();
        assert!((mass - 1.0).abs() < 1e-9, "row {t} mass {mass}");
    }
    // The moment targets are endpoint means over node values 1..=9.
    let mean = |row: &[f64]| -> f64 {
        row.iter()
            .enumerate()
            .map(|(j, &v)| (j + 1) as f64 * v)
            .sum()
    };
    assert!((mean(&rows[0]) - 1.5).abs() < 1e-6);
    assert!((mean(&rows[4]) - 7.0).abs() < 1e-6);
}

#[test]
fn format_flag_restricts_the_artifacts() {
    let dir = tempdir().unwrap();
    let out = bin()
        .arg("solve")
        .arg("--graph")
        .arg(fixture("figure3.json"))
        .arg("--prior")
        .arg(fixture("prior_boltzmann_T001.json"))
        .arg("--marginals")
        .arg(fixture("marginals_partial.json"))
        .arg("--out")
        .arg(dir.path())
        .arg("--format")
        .arg("csv")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("marginals.csv").exists());
    assert!(!dir.path().join("solution.json").exists());
    assert!(!dir.path().join("flows_t0.dot").exists());
}

#[test]
fn missing_input_file_exits_one() {
    let dir = tempdir().unwrap();
    let out = solve_fixture(
        dir.path(),
        "no_such_graph.json",
        "prior_boltzmann_T001.json",
        "--marginals",
        &fixture("marginals_partial.json"),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn malformed_json_exits_one() {
    let dir = tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{ this is not json").unwrap();
    let out = bin()
        .arg("solve")
        .arg("--graph")
        .arg(&bad)
        .arg("--prior")
        .arg(fixture("prior_boltzmann_T001.json"))
        .arg("--marginals")
        .arg(fixture("marginals_partial.json"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn constraint_flags_must_be_exactly_one() {
    let dir = tempdir().unwrap();
    let both = bin()
        .arg("solve")
        .arg("--graph")
        .arg(fixture("figure3.json"))
        .arg("--prior")
        .arg(fixture("prior_boltzmann_T001.json"))
        .arg("--marginals")
        .arg(fixture("marginals_partial.json"))
        .arg("--moments")
        .arg(fixture("moments_mean.json"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(both.status.code(), Some(1));

    let neither = bin()
        .arg("solve")
        .arg("--graph")
        .arg(fixture("figure3.json"))
        .arg("--prior")
        .arg(fixture("prior_boltzmann_T001.json"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(neither.status.code(), Some(1));
}

#[test]
fn iteration_starvation_exits_two() {
    let dir = tempdir().unwrap();
    let out = bin()
        .arg("solve")
        .arg("--graph")
        .arg(fixture("figure3.json"))
        .arg("--prior")
        .arg(fixture("prior_boltzmann_T001.json"))
        .arg("--marginals")
        .arg(fixture("marginals_partial.json"))
        .arg("--out")
        .arg(dir.path())
        .arg("--max-iter")
        .arg("1")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("gap"), "diagnostics missing: {stderr}");
}

#[test]
fn infeasible_moment_targets_exit_three() {
    let dir = tempdir().unwrap();
    let bad = dir.path().join("moments.json");
    fs::write(
        &bad,
        r#"{"order":1,"initial":{"mean":100.0},"final":{"mean":7.0}}"#,
    )
    .unwrap();
    let out = bin()
        .arg("solve")
        .arg("--graph")
        .arg(fixture("figure5.json"))
        .arg("--prior")
        .arg(fixture("prior_boltzmann_T1.json"))
        .arg("--moments")
        .arg(&bad)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn verify_accepts_a_small_instance() {
    let dir = tempdir().unwrap();
    let prior = dir.path().join("prior.json");
    let marg = dir.path().join("marginals.json");
    fs::write(
        &prior,
        r#"{"type":"custom","p0":[0.5,0.3,0.2],
            "steps":[[[0.6,0.3,0.1],[0.2,0.5,0.3],[0.3,0.3,0.4]]]}"#,
    )
    .unwrap();
    fs::write(
        &marg,
        r#"{"initial":{"nodes":[1,2],"values":[0.3,0.4]},
            "final":{"nodes":[3],"values":[0.25]}}"#,
    )
    .unwrap();
    let out = bin()
        .arg("verify")
        .arg("--prior")
        .arg(&prior)
        .arg("--marginals")
        .arg(&marg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {:?}", out.stderr);
    assert!(stdout_value(&out, "max joint deviation:") < 1e-6);
    let solver_kl = stdout_value(&out, "solver relative entropy:");
    let oracle_kl = stdout_value(&out, "oracle relative entropy:");
    assert!((solver_kl - oracle_kl).abs() < 1e-7);
}

#[test]
fn verify_delta_conditioning_is_exact() {
    let dir = tempdir().unwrap();
    let prior = dir.path().join("prior.json");
    let marg = dir.path().join("marginals.json");
    fs::write(
        &prior,
        r#"{"type":"custom","p0":[0.5,0.3,0.2],
            "steps":[[[0.6,0.3,0.1],[0.2,0.5,0.3],[0.3,0.3,0.4]],
                     [[0.4,0.4,0.2],[0.3,0.3,0.4],[0.2,0.6,0.2]]]}"#,
    )
    .unwrap();
    fs::write(
        &marg,
        r#"{"initial":{"nodes":[1,2,3],"values":[0.0,1.0,0.0]},
            "final":{"nodes":[1,2,3],"values":[0.0,0.0,1.0]}}"#,
    )
    .unwrap();
    let out = bin()
        .arg("verify")
        .arg("--prior")
        .arg(&prior)
        .arg("--marginals")
        .arg(&marg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {:?}", out.stderr);
    assert!(stdout_value(&out, "max joint deviation:") < 1e-10);
}

#[test]
fn prior_info_reports_spectral_data_and_marginals() {
    let out = bin()
        .arg("prior-info")
        .arg("--graph")
        .arg(fixture("figure3.json"))
        .arg("--prior")
        .arg(fixture("prior_boltzmann_T001.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("adjacency spectral radius:"));
    assert!(text.contains("topological entropy:"));
    for t in 0..=4 {
        let prefix = format!("marginal t={t}:");
        let line = text
            .lines()
            .find(|l| l.starts_with(&prefix))
            .unwrap_or_else(|| panic!("missing marginal t={t}"));
        let mass: f64 = line[prefix.len()..]
            .split_whitespace()
            .map(|c| c.parse::<f64>().unwrap())
            .sum();
        assert!((mass - 1.0).abs() < 1e-9, "t={t} mass {mass}");
    }
    assert!(!text.contains("marginal t=5:"));
}
