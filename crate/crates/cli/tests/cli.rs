use std::path::Path;
use std::process::{Command, Output};

fn cpmamba(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cpmamba"))
        .args(args)
        .current_dir(dir)
        .env("CPMAMBA_THREADS", "1")
        .output()
        .unwrap()
}

fn ok(args: &[&str], dir: &Path) -> Output {
    let out = cpmamba(args, dir);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn small_spec(dir: &Path) {
    let mut spec: serde_json::Value = serde_json::from_str(SPEC).unwrap();
    spec["train_samples"] = 8.into();
    std::fs::write(dir.join("spec.json"), spec.to_string()).unwrap();
}

const SPEC: &str = r#"{
  "channel": {
    "carrier_hz": 2.4e9, "total_subcarriers": 16, "subcarrier_spacing_hz": 180000.0,
    "paths": 4, "speed_kmh": 60.0, "sample_interval_s": 0.0005,
    "geometry": {"n_h": 2, "n_v": 2, "spacing_x_m": 0.0625, "spacing_z_m": 0.0625},
    "rms_delay_spread_s": 3e-7, "max_delay_s": 1e-6
  },
  "history": 16, "horizon": 4, "train_samples": 8, "val_samples": 4,
  "test_samples_per_speed": 2, "speed_min_kmh": 10.0, "speed_max_kmh": 100.0, "test_speeds": 10
}"#;

#[test]
fn every_command_documents_its_flags() {
    let dir = tempfile::tempdir().unwrap();
    for (cmd, flags) in [
        (
            "gen-data",
            &["--preset", "--config", "--seed", "--split", "--out"][..],
        ),
        (
            "train",
            &[
                "--data",
                "--preset",
                "--config",
                "--seed",
                "--mode",
                "--ablation",
                "--epochs",
                "--out",
            ],
        ),
        (
            "eval",
            &[
                "--model", "--data", "--axis", "--grid", "--mode", "--seed", "--snr-db", "--out",
            ],
        ),
        (
            "bench",
            &[
                "--config",
                "--grid",
                "--seq-lens",
                "--d-model",
                "--repeats",
                "--seed",
                "--out",
            ],
        ),
    ] {
        let help = String::from_utf8(ok(&[cmd, "--help"], dir.path()).stdout).unwrap();
        for f in flags {
            assert!(help.contains(f), "{cmd} --help lacks {f}");
        }
    }
    let help = String::from_utf8(ok(&["train", "--help"], dir.path()).stdout).unwrap();
    assert!(help.contains("no_se") && help.contains("attention") && help.contains("fdd"));
}

#[test]
fn gen_data_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    small_spec(dir.path());
    for out in ["a", "b"] {
        ok(
            &[
                "gen-data",
                "--config",
                "spec.json",
                "--seed",
                "5",
                "--out",
                out,
            ],
            dir.path(),
        );
    }
    for split in ["train", "val", "test"] {
        let a = std::fs::read(dir.path().join(format!("a/{split}.csid"))).unwrap();
        let b = std::fs::read(dir.path().join(format!("b/{split}.csid"))).unwrap();
        assert_eq!(a, b, "{split}");
    }
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("a/gen-data.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["config"]["train_samples"], 8);
    assert_eq!(manifest["outputs"].as_object().unwrap().len(), 3);
}

#[test]
fn missing_config_field_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec: serde_json::Value = serde_json::from_str(SPEC).unwrap();
    spec.as_object_mut().unwrap().remove("horizon");
    std::fs::write(dir.path().join("bad.json"), spec.to_string()).unwrap();
    let out = cpmamba(
        &["gen-data", "--config", "bad.json", "--out", "x"],
        dir.path(),
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("horizon"));
    assert!(!dir.path().join("x/train.csid").exists());
}

#[test]
fn failed_training_leaves_no_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec: serde_json::Value = serde_json::from_str(SPEC).unwrap();
    spec["channel"]["total_subcarriers"] = 8.into();
    std::fs::write(dir.path().join("spec.json"), spec.to_string()).unwrap();
    ok(
        &["gen-data", "--config", "spec.json", "--out", "data"],
        dir.path(),
    );
    let out = cpmamba(
        &["train", "--data", "data", "--epochs", "1", "--out", "model"],
        dir.path(),
    );
    assert!(!out.status.success());
    let left: Vec<_> = std::fs::read_dir(dir.path().join("model"))
        .map(|d| d.count())
        .into_iter()
        .collect();
    assert!(left.iter().all(|&n| n == 0));
}

#[test]
fn train_and_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    small_spec(dir.path());
    ok(
        &["gen-data", "--config", "spec.json", "--out", "data"],
        dir.path(),
    );
    for out in ["m1", "m2"] {
        ok(
            &[
                "train",
                "--data",
                "data",
                "--epochs",
                "2",
                "--ablation",
                "no_se",
                "--seed",
                "3",
                "--out",
                out,
            ],
            dir.path(),
        );
    }
    for f in ["model.ckpt", "history.csv"] {
        let a = std::fs::read(dir.path().join("m1").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("m2").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
    let history = std::fs::read_to_string(dir.path().join("m1/history.csv")).unwrap();
    assert_eq!(
        history.lines().next().unwrap(),
        "epoch,lr,train_nmse,val_nmse"
    );
    assert_eq!(history.lines().count(), 3);

    ok(
        &[
            "eval",
            "--model",
            "m1/model.ckpt",
            "--data",
            "data/test.csid",
            "--axis",
            "snr",
            "--grid",
            "0:25:5",
            "--speed-kmh",
            "50",
            "--out",
            "ev",
        ],
        dir.path(),
    );
    for method in ["cpmamba_no_se", "np", "linear"] {
        let text =
            std::fs::read_to_string(dir.path().join(format!("ev/metrics_{method}.csv"))).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "condition_axis,condition_value,mode,nmse,rmse,mae,n"
        );
        assert_eq!(lines.count(), 6, "{method}");
    }

    ok(
        &[
            "eval",
            "--model",
            "m1/model.ckpt",
            "--data",
            "data/test.csid",
            "--out",
            "sp",
        ],
        dir.path(),
    );
    let text = std::fs::read_to_string(dir.path().join("sp/metrics_np.csv")).unwrap();
    assert_eq!(text.lines().count(), 11);

    let bad = cpmamba(
        &[
            "eval",
            "--model",
            "m1/model.ckpt",
            "--data",
            "data/test.csid",
            "--grid",
            "0:x:1",
            "--out",
            "bad",
        ],
        dir.path(),
    );
    assert!(!bad.status.success());
}

#[test]
fn fdd_mode_trains() {
    let dir = tempfile::tempdir().unwrap();
    small_spec(dir.path());
    ok(
        &["gen-data", "--config", "spec.json", "--out", "data"],
        dir.path(),
    );
    ok(
        &[
            "train", "--data", "data", "--epochs", "1", "--mode", "fdd", "--out", "m",
        ],
        dir.path(),
    );
    let manifest = std::fs::read_to_string(dir.path().join("m/train.manifest.json")).unwrap();
    assert!(manifest.contains("\"mode\": \"fdd\""));
}

#[test]
fn bench_writes_one_row_per_backbone_and_length() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &[
            "bench",
            "--seq-lens",
            "8,16,32",
            "--d-model",
            "16",
            "--repeats",
            "1",
            "--out",
            "b",
        ],
        dir.path(),
    );
    let text = std::fs::read_to_string(dir.path().join("b/bench.csv")).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "backbone,seq_len,seconds,per_token_s,growth"
    );
    assert_eq!(text.lines().count(), 7);
    let one = cpmamba(&["bench", "--seq-lens", "8", "--out", "c"], dir.path());
    assert!(!one.status.success());
}
