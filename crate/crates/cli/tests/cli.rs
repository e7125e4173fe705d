//! End-to-end tests of the binary: exit codes, report artifacts and
//! byte-level determinism, driven through real configuration files.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const REFERENCE_MODEL: &str = r#"
[model.stochvol]
alpha = 1.0
m = 0.0
rate = 0.0
gamma = 1.0
p0 = 1.0
y0 = 0.0
nu = { arctan_sigmoid = { base = 0.5, scale = 0.3 } }
sigma1 = { arctan_sigmoid = { base = 0.1, scale = 0.05 } }
sigma2 = { arctan_sigmoid = { base = 0.1, scale = 0.05 } }
"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, text).expect("write config");
    path
}

fn run(config: &Path, out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_marketspan"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("spawn marketspan")
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr_text(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn json_file(path: &Path) -> serde_json::Value {
    let text = fs::read_to_string(path).unwrap_or_else(|e| panic!("read {path:?}: {e}"));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("parse {path:?}: {e}"))
}

#[test]
fn validate_reference_model_passes() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        &format!("{REFERENCE_MODEL}\n[diagnostics]\nn_probes = 512\n"),
    );
    let out = run(&config, &dir.path().join("out"), &["validate"]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_text(&out));

    let report = json_file(&dir.path().join("out/validation.json"));
    let rows = report["validation"]["rows"].as_array().expect("rows");
    assert!(
        rows.iter()
            .any(|r| r["id"] == "A1_uniform_ellipticity" && r["pass"] == true),
        "missing passing ellipticity row in {rows:?}"
    );
    assert!(
        report["conditions"]["rows"].as_array().expect("condition rows").len() >= 18,
        "conditions block missing"
    );
    let probes = report["time_probes"].as_array().expect("probes");
    assert_eq!(probes.len(), 2, "expected probes for drift and diffusion entries");
    for block in probes {
        for p in block["probes"].as_array().unwrap() {
            let method = p["method"].as_str().unwrap();
            assert!(method.starts_with("HEURISTIC"), "method not flagged: {method}");
        }
    }
}

#[test]
fn negative_strike_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "[model.constant_vol]\nnu = 0.2\ns22 = 0.1\ngamma = -1.0\n",
    );
    let out = run(&config, &dir.path().join("out"), &["validate"]);
    assert_eq!(exit_code(&out), 2, "stderr: {}", stderr_text(&out));
    let err = stderr_text(&out);
    assert!(err.contains("gamma"), "message does not name the field: {err}");
}

#[test]
fn unknown_config_key_is_rejected_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "[model.constant_vol]\nnu = 0.2\ns22 = 0.1\ngamma = 1.0\nstrike_typo = 3.0\n",
    );
    let out = run(&config, &dir.path().join("out"), &["validate"]);
    assert_eq!(exit_code(&out), 2, "stderr: {}", stderr_text(&out));
    let err = stderr_text(&out);
    assert!(err.contains("strike_typo"), "message does not name the key: {err}");
    assert!(err.contains("line"), "message has no location: {err}");
}

#[test]
fn degenerate_volatility_fails_the_ellipticity_row() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "[model.constant_vol]\nnu = 0.0\ns22 = 0.1\ngamma = 1.0\n",
    );
    let out = run(&config, &dir.path().join("out"), &["validate"]);
    assert_eq!(exit_code(&out), 1, "stderr: {}", stderr_text(&out));

    let report = json_file(&dir.path().join("out/validation.json"));
    let rows = report["validation"]["rows"].as_array().expect("rows");
    assert_eq!(rows.len(), 1, "expected the single synthetic row, got {rows:?}");
    assert_eq!(rows[0]["id"], "A1_uniform_ellipticity");
    assert_eq!(rows[0]["pass"], false);
}

#[test]
fn complete_routes_the_three_model_families() {
    let dir = tempfile::tempdir().unwrap();
    let diag = "[diagnostics]\ncompleteness_probes = 256\n";

    let config = write_config(dir.path(), &format!("{REFERENCE_MODEL}\n{diag}"));
    let out = run(&config, &dir.path().join("sv"), &["complete"]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_text(&out));
    let verdict = json_file(&dir.path().join("sv/verdict.json"));
    assert_eq!(verdict["verdict"], "complete_via_pairing", "report: {verdict}");
    assert!(
        verdict["rank"]["fraction"].as_f64().unwrap() >= 0.99,
        "call market should be rank-degenerate: {verdict}"
    );

    let config = write_config(dir.path(), &format!("[model.independent_axes]\n{diag}"));
    let out = run(&config, &dir.path().join("ia"), &["complete"]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_text(&out));
    let verdict = json_file(&dir.path().join("ia/verdict.json"));
    assert_eq!(verdict["verdict"], "complete_via_rank", "report: {verdict}");

    let config = write_config(
        dir.path(),
        &format!("[model.constant_vol]\nnu = 0.2\ns22 = 0.1\ngamma = 1.0\n{diag}"),
    );
    let out = run(&config, &dir.path().join("cv"), &["complete"]);
    assert_eq!(exit_code(&out), 1, "stderr: {}", stderr_text(&out));
    let verdict = json_file(&dir.path().join("cv/verdict.json"));
    assert_eq!(verdict["verdict"], "inconclusive", "report: {verdict}");
}

#[test]
fn constant_vol_price_matches_the_lognormal_value() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "[model.constant_vol]\nnu = 0.2\ns22 = 0.1\ngamma = 1.0\n\n[grid]\nn1 = 129\nn2 = 65\nn_t = 64\n",
    );
    let out = run(&config, &dir.path().join("out"), &["price"]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_text(&out));

    let summary = json_file(&dir.path().join("out/price.json"));
    let price0 = summary["price0"].as_f64().expect("price0");
    let oracle = 0.079655674554058;
    let rel = (price0 - oracle).abs() / oracle;
    assert!(rel <= 5e-3, "price0={price0}, oracle={oracle}, rel={rel}");
}

#[test]
fn unit_claim_prices_to_one_everywhere() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "[model.constant_vol]\nnu = 0.2\ns22 = 0.1\ngamma = 1.0\n\n[grid]\nn1 = 33\nn2 = 17\nn_t = 16\n\n[price]\ntarget = \"one\"\n",
    );
    let out = run(&config, &dir.path().join("out"), &["price"]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_text(&out));

    let csv = fs::read_to_string(dir.path().join("out/price.csv")).expect("price.csv");
    for line in csv.lines().skip(1) {
        let v: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!((v - 1.0).abs() <= 1e-12, "unit claim priced to {v} on line {line}");
    }
}

#[test]
fn hedging_the_traded_claims_is_exact_or_static() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        &format!(
            "{REFERENCE_MODEL}\n[grid]\nn1 = 97\nn2 = 49\nn_t = 48\n\n[mc]\nn_paths = 400\nn_steps = 64\n\n[hedge]\nlevels = []\n"
        ),
    );
    let out = run(&config, &dir.path().join("call"), &["hedge", "--target", "call"]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_text(&out));
    let report = json_file(&dir.path().join("call/hedge.json"));
    let rmse = report["report"]["rmse"].as_f64().unwrap();
    let scale = report["report"]["error_scale"].as_f64().unwrap();
    assert!(
        rmse <= 1e-10 * scale,
        "replicating the derivative itself should telescope: rmse={rmse}, scale={scale}"
    );

    let out = run(&config, &dir.path().join("fwd"), &["hedge", "--target", "forward"]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_text(&out));
    let report = json_file(&dir.path().join("fwd/hedge.json"));
    let rmse = report["report"]["rmse"].as_f64().unwrap();
    let scale = report["report"]["error_scale"].as_f64().unwrap();
    assert!(
        rmse <= 5e-2 * scale,
        "forward claim should hedge near-statically: rmse={rmse}, scale={scale}"
    );
}

#[test]
fn unknown_hedge_target_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        &format!("{REFERENCE_MODEL}\n[grid]\nn1 = 33\nn2 = 17\nn_t = 16\n"),
    );
    let out = run(&config, &dir.path().join("out"), &["hedge", "--target", "swap"]);
    assert_eq!(exit_code(&out), 2, "stderr: {}", stderr_text(&out));
    let err = stderr_text(&out);
    assert!(err.contains("swap"), "message does not name the target: {err}");
}

#[test]
fn reruns_and_worker_counts_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        &format!(
            "{REFERENCE_MODEL}\n[grid]\nn1 = 49\nn2 = 25\nn_t = 24\n\n[mc]\nn_paths = 600\nn_steps = 32\n\n[hedge]\npaths = 200\nlevels = [8, 16]\n"
        ),
    );
    let runs = [
        (dir.path().join("a"), vec!["hedge"]),
        (dir.path().join("b"), vec!["hedge"]),
        (dir.path().join("c"), vec!["--workers", "3", "hedge"]),
    ];
    for (out_dir, args) in &runs {
        let out = run(&config, out_dir, args);
        assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_text(&out));
    }
    let baseline = fs::read(dir.path().join("a/hedge.json")).unwrap();
    for other in ["b", "c"] {
        let bytes = fs::read(dir.path().join(other).join("hedge.json")).unwrap();
        assert_eq!(
            baseline, bytes,
            "hedge.json differs between run a and run {other}"
        );
    }
}

#[test]
fn missing_config_flag_is_a_usage_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_marketspan"))
        .arg("validate")
        .output()
        .expect("spawn marketspan");
    assert_eq!(exit_code(&out), 2, "stderr: {}", stderr_text(&out));
}
