//! End-to-end tests of the `p2s` binary: exit codes, determinism, file
//! outputs, config precedence.

use std::path::Path;
use std::process::{Command, Output};

fn p2s() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_p2s"));
    cmd.env("P2S_LOG_LEVEL", "quiet");
    cmd
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn p2s");
    assert!(
        out.status.success(),
        "command failed: {:?}\nstdout: {}\nstderr: {}",
        cmd,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn gen_small_dataset(dir: &Path, per_class: usize, n_points: usize, seed: u64) {
    run_ok(p2s().args([
        "gen-data",
        "--out",
        dir.to_str().unwrap(),
        "--per-class",
        &per_class.to_string(),
        "--n-points",
        &n_points.to_string(),
        "--seed",
        &seed.to_string(),
    ]));
}

#[test]
fn gen_data_is_deterministic_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    gen_small_dataset(a.path(), 2, 64, 5);
    gen_small_dataset(b.path(), 2, 64, 5);
    let ma = std::fs::read(a.path().join("manifest.json")).unwrap();
    let mb = std::fs::read(b.path().join("manifest.json")).unwrap();
    assert_eq!(ma, mb);
    // Cloud files byte-identical too.
    let cloud = "clouds/sphere_0000.xyz";
    assert_eq!(
        std::fs::read(a.path().join(cloud)).unwrap(),
        std::fs::read(b.path().join(cloud)).unwrap()
    );
    // 5 classes x 2 instances by default.
    assert_eq!(std::fs::read_dir(a.path().join("clouds")).unwrap().count(), 10);
}

#[test]
fn gen_data_rejects_bad_class_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = p2s()
        .args(["gen-data", "--out", dir.path().to_str().unwrap(), "--classes", "7"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("error"), "stderr should be machine readable: {stderr}");
}

#[test]
fn train_victim_writes_model_and_log() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    gen_small_dataset(data.path(), 4, 64, 9);
    run_ok(p2s().args([
        "train-victim",
        "--manifest",
        data.path().join("manifest.json").to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
        "--epochs",
        "4",
        "--seed",
        "3",
    ]));
    let model_path = out.path().join("victim.p2sw");
    assert!(model_path.is_file());
    // The model loads and the accuracy log parses.
    p2s_core::victim::load_victim(&model_path).unwrap();
    let log: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("train_log.json")).unwrap())
            .unwrap();
    assert_eq!(log["epochs"].as_array().unwrap().len(), 4);
    assert!(log["final_train_accuracy"].as_f64().unwrap() > 0.0);
}

#[test]
fn train_victim_nonfinite_loss_exits_4() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    gen_small_dataset(data.path(), 2, 64, 9);
    let output = p2s()
        .args([
            "train-victim",
            "--manifest",
            data.path().join("manifest.json").to_str().unwrap(),
            "--out",
            out.path().to_str().unwrap(),
            "--epochs",
            "40",
            "--lr",
            "1e154",
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(4), "stderr: {}", String::from_utf8_lossy(&output.stderr));
}

struct AttackFixture {
    _data: tempfile::TempDir,
    _victim: tempfile::TempDir,
    manifest: std::path::PathBuf,
    model: std::path::PathBuf,
}

fn attack_fixture() -> AttackFixture {
    let data = tempfile::tempdir().unwrap();
    let victim = tempfile::tempdir().unwrap();
    gen_small_dataset(data.path(), 6, 128, 21);
    run_ok(p2s().args([
        "train-victim",
        "--manifest",
        data.path().join("manifest.json").to_str().unwrap(),
        "--out",
        victim.path().to_str().unwrap(),
        "--epochs",
        "10",
        "--seed",
        "3",
    ]));
    AttackFixture {
        manifest: data.path().join("manifest.json"),
        model: victim.path().join("victim.p2sw"),
        _data: data,
        _victim: victim,
    }
}

#[test]
fn attack_rerun_is_byte_identical_and_sign_flags_work() {
    let fx = attack_fixture();
    let run = |dir: &Path, sign: &str| {
        run_ok(p2s().args([
            "attack",
            "--manifest",
            fx.manifest.to_str().unwrap(),
            "--model",
            fx.model.to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
            "--p2s",
            sign,
            "--iters",
            "10",
            "--alpha",
            "0.02",
            "--seed",
            "77",
        ]));
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run(a.path(), "+");
    run(b.path(), "+");
    assert_eq!(
        std::fs::read(a.path().join("run_log.jsonl")).unwrap(),
        std::fs::read(b.path().join("run_log.jsonl")).unwrap()
    );
    assert_eq!(
        std::fs::read(a.path().join("attack_config.json")).unwrap(),
        std::fs::read(b.path().join("attack_config.json")).unwrap()
    );

    // The three sign flags map to the three ablation variants.
    let minus = tempfile::tempdir().unwrap();
    let off = tempfile::tempdir().unwrap();
    run(minus.path(), "-");
    run(off.path(), "off");
    let label = |p: &Path| -> String {
        let header: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(p.join("attack_config.json")).unwrap(),
        )
        .unwrap();
        header["attack"]["field_sign"].as_str().unwrap().to_string()
    };
    assert_eq!(label(a.path()), "plus");
    assert_eq!(label(minus.path()), "minus");
    assert_eq!(label(off.path()), "off");
    // Theta defaults to 0.5.
    let header: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(a.path().join("attack_config.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(header["attack"]["theta"].as_f64().unwrap(), 0.5);
    // Adversarial clouds on disk, one per test cloud.
    assert_eq!(std::fs::read_dir(a.path().join("adv")).unwrap().count(), 15);
}

#[test]
fn eval_produces_identical_csv_for_identical_input_and_matches_hand_aggregation() {
    let fx = attack_fixture();
    let run_dir = tempfile::tempdir().unwrap();
    run_ok(p2s().args([
        "attack",
        "--manifest",
        fx.manifest.to_str().unwrap(),
        "--model",
        fx.model.to_str().unwrap(),
        "--out",
        run_dir.path().to_str().unwrap(),
        "--iters",
        "30",
        "--alpha",
        "0.02",
        "--seed",
        "5",
    ]));
    let eval_a = tempfile::tempdir().unwrap();
    let eval_b = tempfile::tempdir().unwrap();
    for out in [&eval_a, &eval_b] {
        run_ok(p2s().args([
            "eval",
            "--run-log",
            run_dir.path().to_str().unwrap(),
            "--out",
            out.path().to_str().unwrap(),
        ]));
    }
    let csv_a = std::fs::read(eval_a.path().join("report.csv")).unwrap();
    let csv_b = std::fs::read(eval_b.path().join("report.csv")).unwrap();
    assert_eq!(csv_a, csv_b);

    // Hand-aggregate the run log and compare against the report JSON.
    let (_, records) = p2s_core::data_io::read_run_log(run_dir.path()).unwrap();
    let succ: Vec<_> = records
        .iter()
        .filter(|r| !r.clean_misclassified && r.success)
        .collect();
    let attacked = records.iter().filter(|r| !r.clean_misclassified).count();
    let doc = p2s_core::data_io::read_report(&eval_a.path().join("report.json")).unwrap();
    let row = &doc.rows[0].report;
    assert_eq!(row.attacked, attacked);
    assert_eq!(row.succeeded, succ.len());
    if !succ.is_empty() {
        let want_cd = succ.iter().map(|r| r.metrics.unwrap().cd).sum::<f64>() / succ.len() as f64;
        assert!((row.cd.unwrap() - want_cd).abs() < 1e-12);
    }
}

#[test]
fn eval_missing_run_log_is_a_clear_data_error() {
    let out = tempfile::tempdir().unwrap();
    let output = p2s()
        .args([
            "eval",
            "--run-log",
            "/nonexistent/run",
            "--out",
            out.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("error"));
}

#[test]
fn repro_emits_six_rows_and_ordering_summary() {
    let out = tempfile::tempdir().unwrap();
    let output = run_ok(p2s().args([
        "repro",
        "--out",
        out.path().to_str().unwrap(),
        "--per-class",
        "4",
        "--n-points",
        "128",
        "--epochs",
        "6",
        "--iters",
        "10",
        "--seed",
        "13",
    ]));
    let stdout = String::from_utf8_lossy(&output.stdout);
    for label in ["ifgm_off", "ifgm_plus", "ifgm_minus", "pgd_off", "pgd_plus", "pgd_minus"] {
        assert!(stdout.contains(label), "missing row {label} in:\n{stdout}");
    }
    assert!(stdout.contains("ordering ablation ifgm cd:"));
    assert!(stdout.contains("ordering guidance pgd hd:"));
    let doc = p2s_core::data_io::read_report(&out.path().join("report.json")).unwrap();
    assert_eq!(doc.rows.len(), 6);
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("run.json");
    std::fs::write(
        &config_path,
        r#"{"seed": 1, "gen_data": {"per_class": 3, "n_points": 64}}"#,
    )
    .unwrap();
    let out = tempfile::tempdir().unwrap();
    run_ok(p2s().args([
        "gen-data",
        "--config",
        config_path.to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
        "--per-class",
        "2",
    ]));
    // per_class 2 from the flag, n_points 64 from the file.
    let manifest =
        p2s_core::data_io::DatasetManifest::load(&out.path().join("manifest.json")).unwrap();
    assert_eq!(manifest.entries.len(), 10);
    assert_eq!(manifest.n_points, 64);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("run.json");
    std::fs::write(&config_path, r#"{"sed": 1}"#).unwrap();
    let out = tempfile::tempdir().unwrap();
    let output = p2s()
        .args([
            "gen-data",
            "--config",
            config_path.to_str().unwrap(),
            "--out",
            out.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_ne!(output.status.code(), Some(0));
}

#[test]
fn log_level_quiet_silences_info() {
    let dir = tempfile::tempdir().unwrap();
    let out = p2s()
        .args(["gen-data", "--out", dir.path().to_str().unwrap(), "--per-class", "1", "--n-points", "32"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(out.stderr.is_empty(), "quiet mode should print nothing");

    let dir2 = tempfile::tempdir().unwrap();
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_p2s"));
    cmd.env("P2S_LOG_LEVEL", "info");
    let out2 = cmd
        .args(["gen-data", "--out", dir2.path().to_str().unwrap(), "--per-class", "1", "--n-points", "32"])
        .output()
        .unwrap();
    assert!(String::from_utf8_lossy(&out2.stderr).contains("gen-data"));
}
