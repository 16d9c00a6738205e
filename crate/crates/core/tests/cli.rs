use std::io::Write;
use std::process::{Command, Output};

use tempfile::NamedTempFile;

const H: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn txdecoh(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_txdecoh"))
        .args(args)
        .env_remove("TXDECOH_SEED")
        .output()
        .expect("binary runs")
}

fn config(text: &str) -> NamedTempFile {
    let mut f = NamedTempFile::new().unwrap();
    f.write_all(text.as_bytes()).unwrap();
    f
}

fn coupling(d: f64, e: f64) -> NamedTempFile {
    config(&format!("[coupling]\nd = [{d:?}, 0.0]\ne = [{e:?}, 0.0]\n"))
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn meta(text: &str, key: &str) -> String {
    let prefix = format!("# {key}: ");
    text.lines()
        .find_map(|l| l.strip_prefix(&prefix))
        .unwrap_or_else(|| panic!("missing {key} in output"))
        .to_string()
}

fn meta_f64(text: &str, key: &str) -> f64 {
    meta(text, key).parse().unwrap()
}

#[test]
fn identity_default_scenario() {
    let out = txdecoh(&["identity"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert_eq!(meta(&text, "seed"), "0");
    assert_eq!(meta(&text, "config_hash").len(), 64);
    assert!(meta_f64(&text, "max_deviation") < 1e-12);
    assert!(text.contains("scenario,max_deviation,valid_density\n"));
}

#[test]
fn identity_random_sweep() {
    let out = txdecoh(&["identity", "--random-sweep", "1000"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert_eq!(
        text.lines().filter(|l| l.starts_with("random-")).count(),
        1000
    );
    assert!(meta_f64(&text, "max_deviation") < 1e-12);
}

#[test]
fn constraint_violation_is_a_config_error() {
    let cfg = coupling(0.9f64.sqrt(), 0.0);
    let out = txdecoh(&["identity", "--config", cfg.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("|d|^2+|e|^2"), "{err}");
    assert!(out.stdout.is_empty());
}

#[test]
fn parse_errors_report_location() {
    let cfg = config("[dynamics]\ngamma = \"ten\"\n");
    let out = txdecoh(&["decay", "--config", cfg.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "{err}");
    assert!(err.contains("gamma"), "{err}");
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(txdecoh(&["bogus"]).status.code(), Some(2));
    assert_eq!(
        txdecoh(&["decay", "--format", "xml"]).status.code(),
        Some(2)
    );
    assert_eq!(
        txdecoh(&["identity", "--config", "/nonexistent/x.toml"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn decay_fits_expected_rate() {
    let out = txdecoh(&["decay"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!((meta_f64(&text, "fitted_lambda") - 2.0).abs() <= 0.05);
    assert!(meta_f64(&text, "z_within_3_fraction") >= 0.99);
    assert!(text.contains("t,analytic,ensemble,stderr,z\n"));
    let rows = text.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(rows, 51);
}

#[test]
fn decay_without_decoherence_has_zero_rate() {
    let cfg = coupling(H, H);
    let out = txdecoh(&["decay", "--config", cfg.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(meta_f64(&stdout(&out), "fitted_lambda").abs() <= 0.01);
}

#[test]
fn failed_check_exits_1() {
    let cfg = config("[dynamics]\nn_traj = 200\nlambda_tolerance = 1e-9\n");
    let out = txdecoh(&["decay", "--config", cfg.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(meta(&stdout(&out), "passed"), "false");
}

#[test]
fn screen_visibility_limits() {
    for (d, e, lo, hi) in [
        (H, H, 0.99, 1.0 + 1e-9),
        (1.0, 0.0, 0.0, 0.01),
        (0.8f64.sqrt(), 0.2f64.sqrt(), 0.79, 0.81),
    ] {
        let cfg = coupling(d, e);
        let out = txdecoh(&["screen", "--config", cfg.path().to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
        let text = stdout(&out);
        let v = meta_f64(&text, "visibility");
        assert!(v >= lo && v <= hi, "d={d}: visibility {v}");
        assert!((v - meta_f64(&text, "decoherence_magnitude")).abs() <= 0.01);
        let last = text.lines().last().unwrap();
        assert!(last.starts_with("# "), "summary lines trail the rows");
    }
}

#[test]
fn screen_counts_sum_to_hits() {
    let cfg = config("[sampling]\nn_hits = 5000\n");
    let out = txdecoh(&["screen", "--config", cfg.path().to_str().unwrap()]);
    let text = stdout(&out);
    let total: u64 = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with('x'))
        .map(|l| l.rsplit(',').next().unwrap().parse::<u64>().unwrap())
        .sum();
    assert_eq!(total, 5000);
}

#[test]
fn recohere_stages_and_error_row() {
    let out = txdecoh(&["recohere"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("\nentangled,0.820000000000,ok\n"), "{text}");
    assert!(text.contains("\nrecohered,1.00000000000,"));
    let last = text.lines().last().unwrap();
    assert!(
        last.starts_with("post_actualization,") && last.contains("error"),
        "{last}"
    );
}

#[test]
fn recohere_product_coupling_stays_pure() {
    let cfg = coupling(H, H);
    let out = txdecoh(&["recohere", "--config", cfg.path().to_str().unwrap()]);
    let text = stdout(&out);
    for stage in ["prepared", "entangled", "recohered"] {
        let line = text.lines().find(|l| l.starts_with(stage)).unwrap();
        let p: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!((p - 1.0).abs() < 1e-12, "{line}");
    }
}

#[test]
fn validate_suite_passes() {
    let out = txdecoh(&["validate", "--random-sweep", "200"]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert!(!stdout(&out).contains(",false\n"));
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let c = dir.path().join("c.csv");
    for (path, seed) in [(&a, "5"), (&b, "5"), (&c, "6")] {
        let out = txdecoh(&["screen", "--seed", seed, "--out", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
        assert!(out.stdout.is_empty());
    }
    let read = |p: &std::path::Path| std::fs::read(p).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn seed_precedence() {
    let cfg = config("[dynamics]\nseed = 11\n");
    let path = cfg.path().to_str().unwrap();
    let seed_of = |args: &[&str], env: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_txdecoh"));
        cmd.args(args).env_remove("TXDECOH_SEED");
        if let Some(v) = env {
            cmd.env("TXDECOH_SEED", v);
        }
        meta(&stdout(&cmd.output().unwrap()), "seed")
    };
    assert_eq!(seed_of(&["identity"], None), "0");
    assert_eq!(seed_of(&["identity", "--config", path], None), "11");
    assert_eq!(seed_of(&["identity", "--config", path], Some("12")), "12");
    assert_eq!(
        seed_of(&["identity", "--config", path, "--seed", "13"], Some("12")),
        "13"
    );
}

#[test]
fn config_hash_tracks_config() {
    let a = config("[dynamics]\ngamma = 10.0\n");
    let b = config("[dynamics]\ngamma = 12.0\n");
    let hash = |f: &NamedTempFile| {
        meta(
            &stdout(&txdecoh(&[
                "identity",
                "--config",
                f.path().to_str().unwrap(),
            ])),
            "config_hash",
        )
    };
    assert_eq!(
        hash(&a),
        meta(&stdout(&txdecoh(&["identity"])), "config_hash")
    );
    assert_ne!(hash(&a), hash(&b));
}

#[test]
fn structured_output() {
    let out = txdecoh(&["recohere", "--format", "structured"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["columns"][0], "stage");
    assert_eq!(v["metadata"]["seed"], "0");
    assert_eq!(v["rows"].as_array().unwrap().len(), 4);
}
