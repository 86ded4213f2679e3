//! End-to-end CLI behavior: exit codes, file formats, determinism.

use std::path::Path;

use rnf_cli::checkpoint::Checkpoint;
use rnf_cli::run;

fn run_cli(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let full: Vec<&str> = std::iter::once("rnf").chain(args.iter().copied()).collect();
    let code = run(full, &mut out);
    (code, String::from_utf8(out).expect("utf8 output"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.display().to_string()
}

const BANDIT_BIT_RNF: &str = r#"{
    "seed": 11,
    "env": {"name": "bimodal_bandit"},
    "policy": {"kind": "bit_rnf", "tau": 0.8},
    "train": {"steps": 0}
}"#;

#[test]
fn zero_step_training_writes_a_valid_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "cfg.json", BANDIT_BIT_RNF);
    let out_dir = dir.path().join("run");
    let (code, stdout) = run_cli(&["train", "--config", &config, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code, 0, "stdout: {stdout}");

    let metrics = std::fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    assert_eq!(metrics, "step,episode,return,loss_pi,loss_v,entropy_est,skipped_steps\n");

    let ckpt = Checkpoint::load(&out_dir.join("checkpoint_final.json")).unwrap();
    assert_eq!(ckpt.step, 0);
    assert!(ckpt.params.iter().any(|p| p.name == "policy/head.loc.w"));
}

#[test]
fn training_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"{
        "seed": 3,
        "env": {"name": "bimodal_bandit"},
        "policy": {"kind": "bit", "trunk_layers": 1, "trunk_width": 16},
        "train": {"steps": 192, "rollout": 32}
    }"#;
    let config = write_config(dir.path(), "cfg.json", body);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let (code_a, _) = run_cli(&["train", "--config", &config, "--out", out_a.to_str().unwrap()]);
    let (code_b, _) = run_cli(&["train", "--config", &config, "--out", out_b.to_str().unwrap()]);
    assert_eq!((code_a, code_b), (0, 0));
    let metrics_a = std::fs::read(out_a.join("metrics.csv")).unwrap();
    let metrics_b = std::fs::read(out_b.join("metrics.csv")).unwrap();
    assert_eq!(metrics_a, metrics_b);
    assert!(!metrics_a.is_empty());
    let ckpt_a = std::fs::read(out_a.join("checkpoint_final.json")).unwrap();
    let ckpt_b = std::fs::read(out_b.join("checkpoint_final.json")).unwrap();
    assert_eq!(ckpt_a, ckpt_b);
}

#[test]
fn checkpoint_roundtrip_is_byte_identical_and_reproduces_log_probs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "cfg.json", BANDIT_BIT_RNF);
    let out_dir = dir.path().join("run");
    run_cli(&["train", "--config", &config, "--out", out_dir.to_str().unwrap()]);

    let path = out_dir.join("checkpoint_final.json");
    let original = std::fs::read(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(loaded.to_bytes(), original, "save -> load -> save must not change bytes");

    // A freshly restored policy reproduces log densities bit for bit.
    let (_, conditioner, store) = rnf_cli::commands::load_policy(&loaded).unwrap();
    let dist = conditioner.forward::<f64, _>(&store, &[0.3, -0.4]).unwrap();
    let reference = dist.log_prob(&[0.7]).unwrap();
    let again = Checkpoint::load(&path).unwrap();
    let (_, conditioner2, store2) = rnf_cli::commands::load_policy(&again).unwrap();
    let dist2 = conditioner2.forward::<f64, _>(&store2, &[0.3, -0.4]).unwrap();
    assert_eq!(dist2.log_prob(&[0.7]).unwrap().to_bits(), reference.to_bits());
}

#[test]
fn eval_reports_finite_statistics_for_an_untrained_policy() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"{
        "seed": 5,
        "env": {"name": "point_reach", "horizon": 50},
        "policy": {"kind": "normal"},
        "train": {"steps": 0}
    }"#;
    let config = write_config(dir.path(), "cfg.json", body);
    let out_dir = dir.path().join("run");
    run_cli(&["train", "--config", &config, "--out", out_dir.to_str().unwrap()]);
    let ckpt = out_dir.join("checkpoint_final.json");

    for mode in ["mean", "sample"] {
        let (code, stdout) = run_cli(&[
            "eval",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--episodes",
            "20",
            "--mode",
            mode,
        ]);
        assert_eq!(code, 0);
        let report: serde_json::Value = serde_json::from_str(&stdout).unwrap();
        for key in ["mean", "std", "min", "max"] {
            assert!(report[key].as_f64().unwrap().is_finite(), "{mode} {key}");
        }
        assert_eq!(report["episodes"], 20);
    }
}

#[test]
fn eval_rejects_a_version_mismatched_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "cfg.json", BANDIT_BIT_RNF);
    let out_dir = dir.path().join("run");
    run_cli(&["train", "--config", &config, "--out", out_dir.to_str().unwrap()]);
    let path = out_dir.join("checkpoint_final.json");
    let text = std::fs::read_to_string(&path)
        .unwrap()
        .replacen("\"version\": 1", "\"version\": 99", 1);
    std::fs::write(&path, text).unwrap();
    let (code, _) = run_cli(&["eval", "--checkpoint", path.to_str().unwrap()]);
    assert_eq!(code, 3);
}

#[test]
fn invalid_configs_exit_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let unknown_key = write_config(
        dir.path(),
        "bad1.json",
        r#"{"seed": 1, "env": {"name": "bimodal_bandit"}, "policy": {"kind": "normal"}, "bogus": 1}"#,
    );
    let out = dir.path().join("x");
    let (code, _) = run_cli(&["train", "--config", &unknown_key, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 2);

    let missing_tau = write_config(
        dir.path(),
        "bad2.json",
        r#"{"seed": 1, "env": {"name": "bimodal_bandit"}, "policy": {"kind": "rnf"}}"#,
    );
    let (code, _) = run_cli(&["train", "--config", &missing_tau, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 2);

    let (code, _) = run_cli(&["no-such-command"]);
    assert_eq!(code, 2);
}

#[test]
fn verify_flow_suite_passes_and_is_deterministic() {
    let (code, stdout) = run_cli(&["verify", "--suite", "flow", "--seed", "9"]);
    assert_eq!(code, 0, "report: {stdout}");
    let reports: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert!(reports.as_array().unwrap().iter().all(|r| r["pass"].as_bool().unwrap()));

    let (_, again) = run_cli(&["verify", "--suite", "flow", "--seed", "9"]);
    assert_eq!(stdout, again, "same seed must give identical report bytes");
}

#[test]
fn verify_with_injected_fault_fails() {
    let (code, stdout) = run_cli(&[
        "verify",
        "--suite",
        "norm",
        "--seed",
        "9",
        "--inject-fault",
    ]);
    assert_eq!(code, 1);
    let reports: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert!(reports.as_array().unwrap().iter().any(|r| !r["pass"].as_bool().unwrap()));
}

#[test]
fn density_export_matches_the_distribution() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "cfg.json", BANDIT_BIT_RNF);
    let out_dir = dir.path().join("run");
    run_cli(&["train", "--config", &config, "--out", out_dir.to_str().unwrap()]);
    let ckpt_path = out_dir.join("checkpoint_final.json");

    let (code, stdout) = run_cli(&[
        "density",
        "--checkpoint",
        ckpt_path.to_str().unwrap(),
        "--state",
        "0.25,-0.5",
        "--lo",
        "-40",
        "--hi",
        "40",
        "--n",
        "4001",
    ]);
    assert_eq!(code, 0);

    let mut lines = stdout.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("# mean ="));
    assert_eq!(lines.next().unwrap(), "a,pdf,component_pdf_flow,component_pdf_alt");

    // Reconstruct the distribution and check the export against it.
    let ckpt = Checkpoint::load(&ckpt_path).unwrap();
    let (_, conditioner, store) = rnf_cli::commands::load_policy(&ckpt).unwrap();
    let dist = conditioner.forward::<f64, _>(&store, &[0.25, -0.5]).unwrap();
    let mean = dist.mean().unwrap();
    let header_mean: f64 = header.trim_start_matches("# mean =").trim().parse().unwrap();
    assert_eq!(header_mean, mean[0], "header mean must equal the analytic mean exactly");

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for line in lines {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cols.len(), 4);
        // pdf equals the sum of the weighted component columns (up to the
        // rounding difference between log-sum-exp and a direct sum).
        assert!((cols[1] - (cols[2] + cols[3])).abs() <= 1e-12 * cols[1].max(1e-300));
        let expect = dist.log_prob(&[cols[0]]).unwrap().exp();
        assert!((cols[1] - expect).abs() < 1e-12, "pdf mismatch at a={}", cols[0]);
        xs.push(cols[0]);
        ys.push(cols[1]);
    }
    // The zero-step policy has the identity flow, so the pdf column is the
    // bare student-t mixture; the wide grid captures its mass to 1e-2.
    let mass = rnf_core::quad::trapezoid(&xs, &ys);
    assert!((mass - 1.0).abs() < 1e-2, "grid mass {mass}");

    let (code, _) = run_cli(&[
        "density",
        "--checkpoint",
        ckpt_path.to_str().unwrap(),
        "--state",
        "0.25,-0.5",
        "--dim",
        "4",
        "--lo",
        "-1",
        "--hi",
        "1",
    ]);
    assert_eq!(code, 2, "out-of-range dimension is a usage error");
}

#[test]
fn bench_reports_latency_percentiles() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "cfg.json", BANDIT_BIT_RNF);
    let out_dir = dir.path().join("run");
    run_cli(&["train", "--config", &config, "--out", out_dir.to_str().unwrap()]);
    let ckpt = out_dir.join("checkpoint_final.json");

    let (code, stdout) = run_cli(&[
        "bench",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--calls",
        "50",
    ]);
    assert_eq!(code, 0);
    let report: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    // The 100-call minimum is enforced even when fewer are requested.
    assert_eq!(report["calls"], 100);
    for path in ["sample", "mean"] {
        for q in ["p50_ms", "p99_ms", "max_ms"] {
            let v = report[path][q].as_f64().unwrap();
            assert!(v.is_finite() && v >= 0.0);
        }
    }
}
