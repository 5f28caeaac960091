mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::manifest_path;

fn smotified(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smotified"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, body: serde_json::Value) -> String {
    let p = dir.join("config.json");
    fs::write(&p, body.to_string()).unwrap();
    p.to_str().unwrap().to_owned()
}

fn quick_config(extra: serde_json::Value) -> serde_json::Value {
    let mut cfg = serde_json::json!({
        "manifest": manifest_path(),
        "repetitions": 2,
        "gan": {"max_epochs": 2, "generator_hidden": [16, 16], "discriminator_hidden": [16]},
        "classifier": {"max_epochs": 40, "warmup_epochs": 5}
    });
    for (k, v) in extra.as_object().unwrap() {
        cfg[k] = v.clone();
    }
    cfg
}

#[test]
fn empty_arm_list_fails_before_writing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), quick_config(serde_json::json!({"arms": []})));
    let o = smotified(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("arm list is empty"));
    assert!(!out.exists());
}

#[test]
fn bad_names_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), quick_config(serde_json::json!({})));
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    let o = smotified(&["run", "--config", &cfg, "--arms", "smote,adasyn", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    let o = smotified(&["run", "--config", &cfg, "--datasets", "iris", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    let o = smotified(&["report", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
}

/// Mean, best and population SD recomputed from the raw run files.
fn recompute(out: &Path, dataset: &str, arm: &str) -> (f64, f64, f64) {
    let mut vals = Vec::new();
    for e in fs::read_dir(out.join("runs").join(dataset)).unwrap() {
        let rec: serde_json::Value = serde_json::from_str(&fs::read_to_string(e.unwrap().path()).unwrap()).unwrap();
        for a in rec["arms"].as_array().unwrap() {
            if a["arm"] == arm {
                vals.push(a["metrics"]["f1"].as_f64().unwrap());
            }
        }
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    (mean, vals.iter().cloned().fold(f64::MIN, f64::max), sd)
}

#[test]
fn run_then_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), quick_config(serde_json::json!({})));
    let o = smotified(&[
        "run",
        "--config",
        &cfg,
        "--datasets",
        "ecoli,wine",
        "--arms",
        "none,smote,gan,smotified_gan",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let index: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("index.json")).unwrap()).unwrap();
    let listed: Vec<&str> = index["datasets"].as_array().unwrap().iter().map(|d| d["dataset"].as_str().unwrap()).collect();
    assert_eq!(listed, ["ecoli", "wine"]);
    for ds in ["ecoli", "wine"] {
        assert!(out.join(ds).join("summary.txt").exists());
        assert!(out.join(ds).join("pr").join("smote_run001.csv").exists());
        assert!(out.join(ds).join("traces").join("gan_run000.csv").exists());
        assert!(!out.join(ds).join("traces").join("smote_run000.csv").exists());
    }
    let text = fs::read_to_string(out.join("ecoli/summary.txt")).unwrap();
    for name in ["Non-oversampled", "SMOTE", "GAN", "SMOTified-GAN"] {
        let line = text.lines().find(|l| l.starts_with(&format!("{name} "))).unwrap();
        let cell = line[name.len()..].trim_start();
        let (mean, rest) = cell.split_once(" (").unwrap();
        assert_eq!(mean.len(), 6, "{cell}");
        assert!(rest.starts_with(|c: char| c.is_ascii_digit()));
    }

    let csv = fs::read_to_string(out.join("ecoli/summary.csv")).unwrap();
    for arm in ["none", "smote", "gan", "smotified_gan"] {
        let row = csv.lines().find(|l| l.starts_with(&format!("{arm},f1,"))).unwrap();
        let f: Vec<f64> = row.split(',').skip(2).take(3).map(|v| v.parse().unwrap()).collect();
        let (mean, best, sd) = recompute(&out, "ecoli", arm);
        assert!((f[0] - mean).abs() < 1e-12 && f[1] == best && (f[2] - sd).abs() < 1e-12, "{arm}");
    }

    let before: Vec<Vec<u8>> = ["ecoli/summary.txt", "ecoli/summary.csv", "wine/summary.csv", "index.json"]
        .iter()
        .map(|f| fs::read(out.join(f)).unwrap())
        .collect();
    for f in ["ecoli/summary.txt", "ecoli/summary.csv", "wine/summary.csv", "index.json"] {
        fs::remove_file(out.join(f)).unwrap();
    }
    let o = smotified(&["report", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let after: Vec<Vec<u8>> = ["ecoli/summary.txt", "ecoli/summary.csv", "wine/summary.csv", "index.json"]
        .iter()
        .map(|f| fs::read(out.join(f)).unwrap())
        .collect();
    assert_eq!(before, after);
}

#[test]
fn failed_arm_is_excluded_and_sets_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    // a collapse floor above any BCE value makes every GAN run abort
    let cfg = write_config(
        dir.path(),
        quick_config(serde_json::json!({
            "arms": ["none", "gan"],
            "repetitions": 1,
            "gan": {"max_epochs": 5, "generator_hidden": [8], "discriminator_hidden": [8],
                    "collapse_floor": 100.0, "collapse_epochs": 2}
        })),
    );
    let o = smotified(&["run", "--config", &cfg, "--datasets", "ecoli", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let run: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("runs/ecoli/run_000.json")).unwrap()).unwrap();
    let gan = run["arms"].as_array().unwrap().iter().find(|a| a["arm"] == "gan").unwrap();
    assert!(gan["metrics"].is_null());
    assert!(gan["error"].as_str().unwrap().contains("generator") || gan["error"].as_str().unwrap().contains("discriminator"));
    let csv = fs::read_to_string(out.join("ecoli/summary.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("none,f1,")));
    assert!(!csv.lines().any(|l| l.starts_with("gan,")));
    let index: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("index.json")).unwrap()).unwrap();
    assert_eq!(index["failed_runs"], 1);
}

#[test]
fn oversample_writes_synthetic_rows() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("synthetic.csv");
    let pairs = dir.path().join("pairs.csv");
    let o = smotified(&[
        "oversample",
        "--manifest",
        manifest_path().to_str().unwrap(),
        "--dataset",
        "ecoli",
        "--gan-epochs",
        "2",
        "--out",
        csv.to_str().unwrap(),
        "--side-by-side",
        pairs.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 1 + 236);
    assert_eq!(fs::read_to_string(&pairs).unwrap().lines().count(), 1 + 236);
    assert!(String::from_utf8_lossy(&o.stdout).contains("16 minority + 236 synthetic = 252 majority"));
}
