//! End-to-end tests of the `ngcma` binary: exit codes, emitted file shapes,
//! determinism, and the numerical landmarks of the plot-data tables.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ngcma"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary launches")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

/// Non-comment lines of an emitted table: the column header, then records.
fn table_lines(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

const SPHERE: &str = r#"
[problem]
objective = "sphere"
dimension = 2

[strategy]
kind = "rank-mu"
lambda = 12

[init]
mean = [3.0, 3.0]

[run]
seed = 7
budget = 150
target = -1e-10
"#;

#[test]
fn unknown_objective_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SPHERE.replace("\"sphere\"", "\"banana\"");
    write_config(dir.path(), "run.toml", &cfg);
    let out = run_in(dir.path(), &["optimize", "--config", "run.toml"]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr_of(&out));
    let err = stderr_of(&out);
    assert!(err.contains("config error"), "stderr: {err}");
    assert!(err.contains("sphere"), "should list the catalog: {err}");
}

#[test]
fn missing_config_flag_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["optimize"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("--config"));
}

#[test]
fn unknown_suite_prints_usage_and_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["validate", "frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_of(&out);
    assert!(err.contains("usage: validate"), "stderr: {err}");
    assert!(err.contains("theorem2"), "should list the suites: {err}");
}

#[test]
fn unwritable_output_path_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "run.toml", SPHERE);
    let out = run_in(
        dir.path(),
        &[
            "optimize",
            "--config",
            "run.toml",
            "--out",
            "no-such-dir/trace.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("io error"), "{}", stderr_of(&out));
}

#[test]
fn zero_budget_writes_a_header_only_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SPHERE
        .replace("budget = 150", "budget = 0")
        .replace("target = -1e-10\n", "");
    write_config(dir.path(), "run.toml", &cfg);
    let out = run_in(dir.path(), &["optimize", "--config", "run.toml"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    assert!(stdout_of(&out).contains("termination=budget-exhausted"));

    let text = read(dir.path(), "trace.csv");
    assert_eq!(
        table_lines(&text),
        vec!["iteration,evaluations,best_f,mean_0,mean_1,sigma,eig_min,eig_max,j_estimate"],
        "expected only the pinned header"
    );
}

#[test]
fn trace_embeds_the_resolved_config_with_the_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "run.toml", SPHERE);
    let out = run_in(
        dir.path(),
        &["optimize", "--config", "run.toml", "--seed", "99"],
    );
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));

    let text = read(dir.path(), "trace.csv");
    let comments: Vec<&str> = text.lines().filter(|l| l.starts_with('#')).collect();
    assert!(!comments.is_empty(), "trace must embed its config");
    assert!(
        comments.iter().any(|l| l.contains("seed = 99")),
        "the override must land in the embedded config: {comments:?}"
    );
    assert!(
        comments.iter().any(|l| l.contains("objective = \"sphere\"")),
        "{comments:?}"
    );
    // Re-running the embedded config reproduces the trace byte for byte.
    let embedded: String = comments
        .iter()
        .skip(1) // the "# resolved configuration:" banner
        .map(|l| l.trim_start_matches("# ").to_owned() + "\n")
        .collect();
    write_config(dir.path(), "embedded.toml", &embedded);
    let rerun = run_in(
        dir.path(),
        &[
            "optimize",
            "--config",
            "embedded.toml",
            "--out",
            "replay.csv",
        ],
    );
    assert_eq!(rerun.status.code(), Some(0), "stderr: {}", stderr_of(&rerun));
    let replay = read(dir.path(), "replay.csv");
    assert_eq!(text, replay, "embedded config must reproduce the run");
}

#[test]
fn identical_invocations_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "run.toml", SPHERE);
    let a = run_in(
        dir.path(),
        &["optimize", "--config", "run.toml", "--out", "a.csv"],
    );
    let b = run_in(
        dir.path(),
        &["optimize", "--config", "run.toml", "--out", "b.csv"],
    );
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(b.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(
        std::fs::read(dir.path().join("a.csv")).unwrap(),
        std::fs::read(dir.path().join("b.csv")).unwrap()
    );
}

#[test]
fn sphere_run_reaches_its_target() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "run.toml", SPHERE);
    let out = run_in(dir.path(), &["optimize", "--config", "run.toml"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let summary = stdout_of(&out);
    assert!(
        summary.contains("termination=target-reached"),
        "summary: {summary}"
    );

    let text = read(dir.path(), "trace.csv");
    let lines = table_lines(&text);
    assert!(
        lines.len() - 1 <= 150,
        "should finish within budget, took {} iterations",
        lines.len() - 1
    );
    let best: f64 = lines
        .last()
        .unwrap()
        .split(',')
        .nth(2)
        .unwrap()
        .parse()
        .unwrap();
    assert!(best >= -1e-10, "final best_f {best}");
}

#[test]
fn validate_writes_a_report_and_summarizes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["validate", "em", "--seed", "3", "--out", "em.csv"],
    );
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let summary = stdout_of(&out);
    assert!(summary.starts_with("suite=em cases="), "{summary}");
    assert!(summary.trim_end().ends_with("failures=0"), "{summary}");

    let text = read(dir.path(), "em.csv");
    let lines = table_lines(&text);
    assert_eq!(lines[0], "case,quantity,expected,actual,tolerance,pass");
    assert!(lines.len() > 1, "report should carry cases");
    assert!(lines[1..].iter().all(|l| l.ends_with(",1")), "{text}");
}

#[test]
fn validate_theorem1_passes_two_hundred_cases() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["validate", "theorem1", "--out", "t1.csv"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    assert!(
        stdout_of(&out).contains("cases=200 failures=0"),
        "{}",
        stdout_of(&out)
    );
}

const QGRID: &str = r#"
[problem]
objective = "gauss-kernel"
dimension = 1

[strategy]
kind = "ngl:full-vech"
lambda = 12

[run]
seed = 5
budget = 1
"#;

/// Groups surface rows by their first coordinate (bit-exact), preserving the
/// scan along the other coordinate.
fn rows_by_first<K>(
    rows: &[(f64, f64, f64, u8)],
    key: K,
) -> Vec<(f64, Vec<(f64, f64)>)>
where
    K: Fn(&(f64, f64, f64, u8)) -> (f64, (f64, f64)),
{
    let mut grouped: std::collections::BTreeMap<u64, (f64, Vec<(f64, f64)>)> = Default::default();
    for r in rows {
        let (k, v) = key(r);
        let entry = grouped.entry(k.to_bits()).or_insert_with(|| (k, Vec::new()));
        entry.1.push(v);
    }
    let groups: Vec<_> = grouped.into_values().collect();
    assert_eq!(groups.len(), 24, "expected one group per grid line");
    groups
}

/// The scanned coordinate at which the proximity value peaks.
fn peak(row: &[(f64, f64)]) -> f64 {
    row.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap().0
}

#[test]
fn qgrid_maxima_sit_at_the_predicted_step_length() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "grid.toml", QGRID);
    let out = run_in(
        dir.path(),
        &["plotdata", "qgrid", "--config", "grid.toml", "--out", "q.csv"],
    );
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));

    let text = read(dir.path(), "q.csv");
    let lines = table_lines(&text);
    assert_eq!(lines[0], "eta_m,eta_c,q,admissible");
    let rows: Vec<(f64, f64, f64, u8)> = lines[1..]
        .iter()
        .map(|l| {
            let mut it = l.split(',');
            (
                it.next().unwrap().parse().unwrap(),
                it.next().unwrap().parse().unwrap(),
                it.next().unwrap().parse().unwrap(),
                it.next().unwrap().parse().unwrap(),
            )
        })
        .collect();
    assert_eq!(rows.len(), 24 * 24);
    assert!(rows.iter().all(|r| r.3 == 1), "grid should stay admissible");

    // For a unit Gaussian start on this fitness the predicted step length is
    // the reciprocal expected fitness: sqrt(2). The start is centered on the
    // fitness peak, so the mean direction of the gradient vanishes and the
    // surface only varies along the covariance axis: scanning it with the
    // mean step fixed must peak at sqrt(2), within one grid spacing.
    let eta_star = 2f64.sqrt();
    let top = 1.25 * eta_star;
    let step = top / 23.0;
    for (fixed_eta_m, row) in rows_by_first(&rows, |r| (r.0, (r.1, r.2))) {
        let best = peak(&row);
        assert!(
            (best - eta_star).abs() <= step * 1.000001,
            "peak at {best} for eta_m={fixed_eta_m}, predicted {eta_star}, spacing {step}"
        );
    }
    assert!(
        text.lines().any(|l| l.starts_with("# eta_star = 1.414")),
        "header should state the predicted step length"
    );
}

#[test]
fn off_center_qgrid_peaks_along_the_mean_axis() {
    let dir = tempfile::tempdir().unwrap();
    // Start the search distribution off the fitness peak so the mean
    // direction of the gradient is active: for any fixed covariance step,
    // the scan along the mean step must peak at the reciprocal expected
    // fitness, within one grid spacing.
    let cfg = format!("{QGRID}\n[init]\nmean = [0.8]\n");
    write_config(dir.path(), "grid.toml", &cfg);
    let out = run_in(
        dir.path(),
        &["plotdata", "qgrid", "--config", "grid.toml", "--out", "q.csv"],
    );
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));

    let text = read(dir.path(), "q.csv");
    let eta_star: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("# eta_star = "))
        .expect("eta_star comment")
        .parse()
        .unwrap();
    assert!(eta_star > 2f64.sqrt(), "off-center start shrinks J: {eta_star}");

    let rows: Vec<(f64, f64, f64, u8)> = table_lines(&text)[1..]
        .iter()
        .map(|l| {
            let mut it = l.split(',');
            (
                it.next().unwrap().parse().unwrap(),
                it.next().unwrap().parse().unwrap(),
                it.next().unwrap().parse().unwrap(),
                it.next().unwrap().parse().unwrap(),
            )
        })
        .collect();
    let step = 1.25 * eta_star / 23.0;
    for (fixed_eta_c, row) in rows_by_first(&rows, |r| (r.1, (r.0, r.2))) {
        let best = peak(&row);
        assert!(
            (best - eta_star).abs() <= step * 1.000001,
            "peak at {best} for eta_c={fixed_eta_c}, predicted {eta_star}, spacing {step}"
        );
    }
}

#[test]
fn empty_qgrid_request_is_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{QGRID}\n[theory]\neta_points = 0\n");
    write_config(dir.path(), "grid.toml", &cfg);
    let out = run_in(
        dir.path(),
        &["plotdata", "qgrid", "--config", "grid.toml", "--out", "q.csv"],
    );
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let text = read(dir.path(), "q.csv");
    assert_eq!(table_lines(&text), vec!["eta_m,eta_c,q,admissible"]);
}

#[test]
fn qgrid_refuses_sign_indefinite_objectives() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = QGRID.replace("\"gauss-kernel\"", "\"sphere\"");
    write_config(dir.path(), "grid.toml", &cfg);
    let out = run_in(dir.path(), &["plotdata", "qgrid", "--config", "grid.toml"]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr_of(&out));
    assert!(stderr_of(&out).contains("positive"), "{}", stderr_of(&out));
}

#[test]
fn runcurve_trend_is_monotone_after_smoothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SPHERE
        .replace("target = -1e-10\n", "")
        .replace("budget = 150", "budget = 60");
    write_config(dir.path(), "run.toml", &cfg);
    let out = run_in(
        dir.path(),
        &["plotdata", "runcurve", "--config", "run.toml", "--out", "curve.csv"],
    );
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));

    let text = read(dir.path(), "curve.csv");
    let lines = table_lines(&text);
    assert_eq!(lines[0], "iteration,j_estimate,best_f");
    let estimates: Vec<f64> = lines[1..]
        .iter()
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(estimates.len(), 60);

    let window = 10;
    let smoothed: Vec<f64> = estimates
        .windows(window)
        .map(|w| w.iter().sum::<f64>() / window as f64)
        .collect();
    for pair in smoothed.windows(2) {
        assert!(
            pair[1] >= pair[0] - 1e-9 * (1.0 + pair[0].abs()),
            "smoothed trend dips: {} -> {}",
            pair[0],
            pair[1]
        );
    }
    assert!(
        smoothed.last().unwrap() > smoothed.first().unwrap(),
        "trend should rise overall"
    );
}
