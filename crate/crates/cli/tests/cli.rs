use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::RwLock;

use serde_json::Value;

// The timing test takes this exclusively; everything else shares it.
static CPU: RwLock<()> = RwLock::new(());

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn locload_in(dir: &Path, args: &[&str], stdin: &str) -> Run {
    let _shared = CPU.read().unwrap_or_else(|e| e.into_inner());
    spawn(dir, args, stdin)
}

fn spawn(dir: &Path, args: &[&str], stdin: &str) -> Run {
    let mut child = Command::new(env!("CARGO_BIN_EXE_locload"))
        .current_dir(dir)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn locload(args: &[&str]) -> Run {
    locload_in(Path::new("."), args, "")
}

/// Data rows of a CSV with its provenance line and header removed, as maps.
fn csv_rows(text: &str) -> Vec<serde_json::Map<String, Value>> {
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config {"));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    lines
        .map(|l| {
            header
                .iter()
                .zip(l.split(','))
                .map(|(k, v)| {
                    let v = v.parse::<f64>().map(Value::from).unwrap_or_else(|_| v.into());
                    (k.to_string(), v)
                })
                .collect()
        })
        .collect()
}

fn num(row: &serde_json::Map<String, Value>, key: &str) -> f64 {
    row[key].as_f64().unwrap_or_else(|| panic!("{key} in {row:?}"))
}

#[test]
fn model_plateaus_at_storage_rate() {
    let run = locload(&["model", "--schemes", "regular", "--r", "12000", "--v", "1000", "--d", "120000"]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let rows = csv_rows(&run.stdout);
    assert_eq!(rows.len(), 256);
    for row in &rows {
        let p = num(row, "p");
        let want = if p <= 12.0 { 120_000.0 / (p * 1000.0) } else { 10.0 };
        assert!((num(row, "true_cost_s") - want).abs() <= 1e-12 * want, "{row:?}");
    }
}

#[test]
fn model_locality_never_above_distcache() {
    let run = locload(&["model", "--schemes", "distcache,locality", "--beta", "0.05"]);
    let rows = csv_rows(&run.stdout);
    for pair in rows.chunks(2) {
        let p = num(&pair[0], "p");
        if 0.05 <= (p - 1.0) / p {
            assert!(num(&pair[1], "io_s") <= num(&pair[0], "io_s"), "{pair:?}");
        }
    }
}

#[test]
fn model_output_is_reproducible() {
    let a = locload(&["model", "--ps", "1,2,64"]).stdout;
    assert_eq!(a, locload(&["model", "--ps", "1,2,64"]).stdout);
    assert!(a.starts_with("# config {\"command\":\"model\""));
}

#[test]
fn saved_config_reproduces_output() {
    let dir = tempfile::tempdir().unwrap();
    let first = locload_in(
        dir.path(),
        &["imbalance", "--ps", "4", "--local-batches", "16", "--steps", "40", "--seed", "9",
          "--save-config", "run.toml", "--out", "a.csv"],
        "",
    );
    assert_eq!(first.code, 0, "{}", first.stderr);
    let again = locload_in(dir.path(), &["imbalance", "--config", "run.toml", "--out", "b.csv"], "");
    assert_eq!(again.code, 0, "{}", again.stderr);
    let a = fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.csv")).unwrap());
    assert!(fs::read_to_string(dir.path().join("run.toml")).unwrap().contains("seed = 9"));

    // Flags win over the file.
    let over = locload_in(dir.path(), &["imbalance", "--config", "run.toml", "--steps", "3"], "");
    assert_eq!(csv_rows(&over.stdout).len(), 4);
}

#[test]
fn bad_parameters_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "no_such_key = 1\n").unwrap();
    assert_eq!(locload_in(dir.path(), &["model", "--config", "bad.toml"], "").code, 2);
    assert_eq!(locload(&["model", "--alpha", "1.5"]).code, 2);
    assert_eq!(locload(&["model", "--schemes", "teleport"]).code, 2);
    assert_eq!(locload(&["frobnicate"]).code, 2);
    assert_eq!(locload(&["imbalance", "--ps", "64", "--local-batches", "64", "--d", "100"]).code, 2);
}

#[test]
fn imbalance_single_step_summary_is_the_sample() {
    let run = locload(&["imbalance", "--ps", "8", "--local-batches", "32", "--steps", "1"]);
    let rows = csv_rows(&run.stdout);
    assert_eq!(rows.len(), 2);
    let beta = num(&rows[0], "beta");
    for key in ["median", "q1", "q3", "whisker_low", "whisker_high", "mean"] {
        assert_eq!(num(&rows[1], key), beta);
    }
}

#[test]
fn imbalance_seeds_change_rows_not_medians() {
    let args = |seed: &'static str| {
        ["imbalance", "--ps", "16", "--local-batches", "64", "--steps", "500", "--seed", seed]
    };
    let mut medians = Vec::new();
    let mut raw = Vec::new();
    for seed in ["1", "2", "3", "4", "5"] {
        let rows = csv_rows(&locload(&args(seed)).stdout);
        raw.push(num(&rows[0], "beta").to_bits() ^ num(&rows[1], "beta").to_bits());
        medians.push(num(rows.last().unwrap(), "median"));
    }
    raw.dedup();
    assert!(raw.len() > 1);
    for m in medians {
        assert!((m - 0.048).abs() <= 0.01, "median {m}");
    }
}

#[test]
fn imbalance_check_fails_with_status_3() {
    let run = locload(&["imbalance", "--ps", "2", "--local-batches", "32", "--steps", "200", "--check"]);
    assert_eq!(run.code, 3);
    assert!(run.stderr.contains("check failed"));
}

#[test]
fn balance_reads_counts() {
    let dir = Path::new(".");
    let run = locload_in(dir, &["balance"], "2 6 4\n");
    assert_eq!(run.code, 0);
    let v: Value = serde_json::from_str(run.stdout.trim()).unwrap();
    assert_eq!(v, serde_json::json!({"instance": 0, "sender": 1, "receiver": 0, "count": 2}));

    let run = locload_in(dir, &["balance"], "4 4 4\n");
    assert_eq!((run.code, run.stdout.as_str()), (0, ""));

    let run = locload_in(dir, &["balance"], "# comment\n10,0,2\n\n5 5\n");
    let lines: Vec<Value> = run.stdout.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert!(lines.iter().all(|l| l["instance"] == 0));

    assert_eq!(locload_in(dir, &["balance"], "3 x\n").code, 2);
}

#[test]
fn balance_self_check_on_random_instances() {
    let run = locload(&["balance", "--random", "1000", "--verify", "--seed", "4"]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert!(run.stderr.contains("0 problems"));
    assert!(!run.stdout.is_empty());
}

#[test]
fn bench_emits_one_report_per_cell() {
    let run = locload(&[
        "bench", "--n", "256", "--sample-bytes", "64", "--workers", "1,2", "--threads", "1,3",
        "--batch", "32", "--preprocess", "none",
    ]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let cells: Vec<Value> = run.stdout.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(cells.len(), 4);
    for c in &cells {
        assert_eq!(c["samples"], 256);
        assert_eq!(c["cache_misses"], 256);
        assert!(c["predicted_wall_s"].is_null());
    }
}

#[test]
fn bench_reports_cold_and_warm_cache() {
    let run = locload(&[
        "bench", "--n", "128", "--sample-bytes", "64", "--workers", "2", "--threads", "2",
        "--batch", "16", "--preprocess", "none", "--cache", "128",
    ]);
    let cells: Vec<Value> = run.stdout.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(cells.len(), 2);
    assert_eq!((&cells[0]["phase"], &cells[0]["cache_misses"]), (&"cold".into(), &128.into()));
    assert_eq!((&cells[1]["phase"], &cells[1]["cache_misses"]), (&"warm".into(), &0.into()));
}

#[test]
fn bench_uses_an_existing_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let gen = locload_in(
        dir.path(),
        &["gen-data", "--dir", "data", "--n", "100", "--sample-bytes", "1024"],
        "",
    );
    assert_eq!(gen.code, 0, "{}", gen.stderr);
    let info: Value = serde_json::from_str(gen.stdout.trim()).unwrap();
    assert_eq!(info["total_bytes"], 102_400);
    let files: Vec<_> = fs::read_dir(&data).unwrap().collect();
    assert_eq!(files.len(), 100);
    assert!(data.join("00000099.bin").exists());

    let run = locload_in(
        dir.path(),
        &["bench", "--data", "data", "--n", "100", "--sample-bytes", "1024", "--workers", "2",
          "--threads", "2", "--batch", "10", "--preprocess", "none"],
        "",
    );
    assert_eq!(run.code, 0, "{}", run.stderr);

    fs::remove_file(data.join("00000042.bin")).unwrap();
    let broken = locload_in(
        dir.path(),
        &["bench", "--data", "data", "--n", "100", "--sample-bytes", "1024", "--preprocess", "none"],
        "",
    );
    assert_eq!(broken.code, 1);
    assert!(broken.stderr.contains("#42"), "{}", broken.stderr);
}

#[test]
fn bench_injected_delay_matches_prediction() {
    let _exclusive = CPU.write().unwrap_or_else(|e| e.into_inner());
    let run = spawn(Path::new("."), &[
        "bench", "--n", "256", "--sample-bytes", "64", "--workers", "1,4", "--threads", "1,4",
        "--preprocess", "sleep:1000", "--check",
    ], "");
    assert_eq!(run.code, 0, "{}{}", run.stdout, run.stderr);
}

#[test]
fn equiv_default_is_identical() {
    let run = locload(&["equiv"]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let last: Value = serde_json::from_str(run.stdout.lines().last().unwrap()).unwrap();
    assert_eq!(last["verdict"], "identical");
    assert_eq!(last["cases"], 50);
    assert_eq!(last["max_abs_diff"], 0.0);
}

#[test]
fn equiv_non_canonical_reports_tolerance_verdict() {
    let run = locload(&["equiv", "--non-canonical", "--ps", "3,4", "--batch-sizes", "12", "--seeds", "2"]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let last: Value = serde_json::from_str(run.stdout.lines().last().unwrap()).unwrap();
    assert_eq!(last["aggregation"], "learner-order");
    assert_eq!(last["verdict"], "within-tolerance");
    let diff = last["max_abs_diff"].as_f64().unwrap();
    assert!(diff > 0.0 && diff < 1e-9, "{diff}");

    let strict = locload(&[
        "equiv", "--non-canonical", "--ps", "3,4", "--batch-sizes", "12", "--seeds", "2",
        "--tolerance", "0",
    ]);
    assert_eq!(strict.code, 3);
}

#[test]
fn equiv_single_learner() {
    let run = locload(&["equiv", "--ps", "1", "--non-canonical"]);
    assert_eq!(run.code, 0);
    assert!(run.stdout.contains("\"verdict\":\"identical\""));
}

#[test]
fn simulate_tabulates_costs() {
    let run = locload(&["simulate", "--ps", "2,16,64", "--epochs", "2", "--steps", "50"]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let rows = csv_rows(&run.stdout);
    assert_eq!(rows.len(), 9);
    for row in &rows {
        let total = num(row, "total_s");
        let want = num(row, "training_s").max(num(row, "loading_s"));
        assert!((total - want).abs() <= 1e-9 * want);
        if row["scheme"] == "locality" {
            assert!(num(row, "beta") > 0.0 && num(row, "beta") < 0.2);
        }
    }
}
