use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run_in(dir: &Path, args: &[&str], env_seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_missdiag"));
    cmd.args(args).current_dir(dir).env_remove("MISSDIAG_SEED");
    if let Some(s) = env_seed {
        cmd.env("MISSDIAG_SEED", s);
    }
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    std::fs::write(dir.join(name), body).unwrap();
    name.to_string()
}

/// Empirical missing rate per modality column of a mask file.
fn column_missing_rates(path: &Path) -> Vec<f64> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let m = lines.next().unwrap().split(',').count() - 1;
    let mut missing = vec![0usize; m];
    let mut n = 0usize;
    for line in lines {
        n += 1;
        for (j, cell) in line.split(',').skip(1).enumerate() {
            if cell == "0" {
                missing[j] += 1;
            }
        }
    }
    missing.iter().map(|&c| c as f64 / n as f64).collect()
}

#[test]
fn shared_rate_marginals_within_three_sigma() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"modalities":["a","v","l"],"shared_rate":0.5,"seed":3,"n":100000}"#,
    );
    let o = run_in(dir.path(), &["mask", "generate", "--config", &cfg, "--output", "m.csv"], None);
    assert!(o.status.success(), "{}", stderr(&o));
    let exact: f64 = 0.375 / 0.875;
    let sd = (exact * (1.0 - exact) / 1e5).sqrt();
    for r in column_missing_rates(&dir.path().join("m.csv")) {
        assert!((r - exact).abs() < 3.0 * sd, "{r} vs {exact}");
    }
}

#[test]
fn imr_rates_keep_their_order() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"modalities":["a","v","l"],"rates":[0.4,0.5,0.6],"seed":9,"n":100000}"#,
    );
    let o = run_in(dir.path(), &["mask", "generate", "--config", &cfg, "--output", "m.csv"], None);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = column_missing_rates(&dir.path().join("m.csv"));
    assert!(r[0] < r[1] && r[1] < r[2], "{r:?}");
}

#[test]
fn zero_samples_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"modalities":["a","b"],"shared_rate":0.3,"n":0}"#);
    let o = run_in(dir.path(), &["mask", "generate", "--config", &cfg], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`n`"), "{}", stderr(&o));
}

#[test]
fn unknown_field_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"modalities":["a","b"],"shared_rate":0.3,"sead":1}"#);
    let o = run_in(dir.path(), &["mask", "generate", "--config", &cfg], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("sead"), "{}", stderr(&o));
}

#[test]
fn seed_precedence_flag_env_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"modalities":["a","b","c"],"rates":[0.3,0.4,0.5],"seed":1,"n":200}"#,
    );
    let gen = |out: &str, extra: &[&str], env: Option<&str>| {
        let mut args = vec!["mask", "generate", "--config", &cfg, "--output", out];
        args.extend_from_slice(extra);
        let o = run_in(dir.path(), &args, env);
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read_to_string(dir.path().join(out)).unwrap()
    };
    let config_seed = gen("a.csv", &[], None);
    let seed_7 = gen("b.csv", &["--seed", "7"], None);
    assert_ne!(config_seed, seed_7);
    assert_eq!(gen("c.csv", &[], Some("7")), seed_7);
    assert_eq!(gen("d.csv", &["--seed", "1"], Some("7")), config_seed);
    assert_eq!(gen("e.csv", &["--set", "seed=7"], None), seed_7);
}

#[test]
fn bad_env_seed_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"modalities":["a","b"],"shared_rate":0.3}"#);
    let o = run_in(dir.path(), &["mask", "generate", "--config", &cfg], Some("many"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn mean_match_prints_shared_rate() {
    let o = run_in(Path::new("."), &["protocol", "mean-match", "--rates", "0.4,0.5,0.6"], None);
    assert!(o.status.success());
    assert!(stdout(&o).contains("shared_rate 0.5\n"), "{}", stdout(&o));
}

#[test]
fn divergence_of_identical_vectors_is_zero() {
    let o = run_in(
        Path::new("."),
        &["protocol", "divergence", "--from", "0.2,0.2", "--to", "0.2,0.2", "--kind", "js"],
        None,
    );
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "js 0");
}

#[test]
fn degenerate_mei_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixture("mei_degenerate.abltable.csv");
    let o = run_in(
        dir.path(),
        &["metrics", "mei", "--input", input.to_str().unwrap(), "--output", "mei.json"],
        None,
    );
    assert_eq!(o.status.code(), Some(4));
    assert!(dir.path().join("mei.json").exists());
}

#[test]
fn incomplete_table_exits_2() {
    let input = fixture("mei_incomplete.abltable.csv");
    let o = run_in(Path::new("."), &["metrics", "mei", "--input", input.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("101"));
}

#[test]
fn malformed_and_missing_inputs_exit_3() {
    let bad = fixture("malformed.gradtrace.csv");
    let o = run_in(Path::new("."), &["metrics", "mli", "--input", bad.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["metrics", "mli", "--input", "absent.csv"], None);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn usage_errors_exit_2() {
    let o = run_in(Path::new("."), &["mask", "generate", "--bogus"], None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn mli_hand_fixture() {
    let input = fixture("mli_hand.gradagg.csv");
    let o = run_in(Path::new("."), &["metrics", "mli", "--input", input.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", stderr(&o));
    let line = stdout(&o).lines().find(|l| l.starts_with("mli ")).unwrap().to_string();
    let v: f64 = line[4..].trim().parse().unwrap();
    assert!((v - 0.75f64.sqrt()).abs() < 1e-6, "{v}");
}

#[test]
fn paired_simulation_reports_delta_mli_and_creates_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture("golden/config.json");
    let o = run_in(
        dir.path(),
        &["simulate", "run", "--config", cfg.to_str().unwrap(), "--paired", "--output-dir", "new/nested"],
        None,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("new/nested");
    for f in ["imr.gradtrace.csv", "smr.gradtrace.csv", "imr.manifest.json", "report.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let paired = &report["payload"]["paired"];
    assert!(paired["delta_mli"].is_number(), "{paired}");
    let smr_rate = &paired["smr"]["protocol"]["mean_matched_shared_rate"];
    assert_eq!(smr_rate.as_f64(), Some(0.3));
}

#[test]
fn unwritable_output_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    // a regular file where a directory is needed fails even for root
    std::fs::write(dir.path().join("blocker"), "x").unwrap();
    let cfg = fixture("golden/config.json");
    let o = run_in(
        dir.path(),
        &["simulate", "run", "--config", cfg.to_str().unwrap(), "--output-dir", "blocker/out"],
        None,
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let o = run_in(
        dir.path(),
        &["mask", "generate", "--config", cfg.to_str().unwrap(), "--output", "blocker/m.csv"],
        None,
    );
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn merge_checks_payload_checksums() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture("golden/config.json");
    let o = run_in(dir.path(), &["simulate", "run", "--config", cfg.to_str().unwrap(), "--output-dir", "a"], None);
    assert!(o.status.success());
    let o = run_in(dir.path(), &["report", "merge", "a/report.json", "a/report.json", "--output", "m.json"], None);
    assert!(o.status.success(), "{}", stderr(&o));
    let merged: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("m.json")).unwrap()).unwrap();
    assert!(merged["payload_sha256"].is_string());

    let text = std::fs::read_to_string(dir.path().join("a/report.json")).unwrap();
    let tampered = text.replacen("\"label\": \"run\"", "\"label\": \"edited\"", 1);
    assert_ne!(text, tampered);
    std::fs::write(dir.path().join("t.json"), tampered).unwrap();
    let o = run_in(dir.path(), &["report", "merge", "t.json", "--output", "m2.json"], None);
    assert_eq!(o.status.code(), Some(2));
}
