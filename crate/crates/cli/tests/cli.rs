use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn suitein(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_suitein"))
        .args(args)
        .env_remove("SUITEIN_SEED")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = suitein(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(path: &Path, v: &Value) -> PathBuf {
    fs::write(path, serde_json::to_string(v).unwrap()).unwrap();
    path.to_path_buf()
}

/// Three short sequences split 1/1/1.
fn small_dataset(dir: &Path) -> PathBuf {
    let seq = |seed: u64| json!({ "duration_s": 20.0, "seed": seed });
    let cfg = write(
        &dir.join("dataset_cfg.json"),
        &json!({
            "sequences": [seq(1), seq(2), seq(3)],
            "split": { "train": 1, "val": 1, "test": 1 }
        }),
    );
    let data = dir.join("data");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&data)]);
    data
}

fn tiny_train_config(dir: &Path) -> PathBuf {
    write(
        &dir.join("train_cfg.json"),
        &json!({
            "epochs": 1,
            "batch_size": 8,
            "window": { "window_len": 16, "stride": 16 },
            "model": { "shallow_width": 4, "conv_channels": [4, 8], "feature_dim": 8, "regressor_hidden": 8 }
        }),
    )
}

/// Every file under `dir` except run records, keyed by relative path.
fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "run.json" {
                out.insert(
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}

fn checkpoint_params(path: &Path) -> Value {
    let v: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    v["params"].clone()
}

#[test]
fn default_simulate_gives_twelve_sequences() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("data");
    ok(&["simulate", "--out", s(&out)]);
    let split: Value =
        serde_json::from_str(&fs::read_to_string(out.join("split.json")).unwrap()).unwrap();
    let counts: Vec<usize> = ["train", "val", "test"]
        .iter()
        .map(|k| split[k].as_array().unwrap().len())
        .collect();
    assert_eq!(counts, vec![8, 2, 2]);
    for k in ["train", "val", "test"] {
        for id in split[k].as_array().unwrap() {
            assert!(out
                .join(id.as_str().unwrap())
                .join("manifest.json")
                .is_file());
        }
    }
    let run: Value =
        serde_json::from_str(&fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(run["command"], "simulate");
    assert!(run["created_unix_s"].as_u64().unwrap() > 0);
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let seq = write(&dir.path().join("seq.json"), &json!({ "duration_s": 15.0 }));
    let (a, b, c) = (
        dir.path().join("a"),
        dir.path().join("b"),
        dir.path().join("c"),
    );
    ok(&[
        "simulate",
        "--config",
        s(&seq),
        "--seed",
        "7",
        "--out",
        s(&a),
    ]);
    ok(&[
        "simulate",
        "--config",
        s(&seq),
        "--seed",
        "7",
        "--out",
        s(&b),
    ]);
    let out = Command::new(env!("CARGO_BIN_EXE_suitein"))
        .args(["simulate", "--config", s(&seq), "--out", s(&c)])
        .env("SUITEIN_SEED", "8")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(!tree(&a).is_empty());
    assert_eq!(tree(&a), tree(&b));
    assert_ne!(tree(&a), tree(&c));
}

#[test]
fn malformed_json_exits_2_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\n  \"duration_s\": 10.0,\n  \"seed\": \n}").unwrap();
    let out = suitein(&[
        "simulate",
        "--config",
        s(&bad),
        "--out",
        s(&dir.path().join("x")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 4"), "{err}");
}

#[test]
fn invalid_values_exit_2_and_missing_files_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let neg = write(&dir.path().join("neg.json"), &json!({ "duration_s": -1.0 }));
    let out = suitein(&[
        "simulate",
        "--config",
        s(&neg),
        "--out",
        s(&dir.path().join("x")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let missing = dir.path().join("nope.json");
    let out = suitein(&[
        "simulate",
        "--config",
        s(&missing),
        "--out",
        s(&dir.path().join("y")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let out = suitein(&[
        "eval",
        "--data",
        s(&dir.path().join("no_data")),
        "--oracle-velocities",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn diverging_training_exits_4_without_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path());
    let mut cfg: Value =
        serde_json::from_str(&fs::read_to_string(tiny_train_config(dir.path())).unwrap()).unwrap();
    cfg["learning_rate"] = json!(1e30);
    cfg["epochs"] = json!(3);
    let cfg = write(&dir.path().join("huge_lr.json"), &cfg);
    let model = dir.path().join("model.json");
    let out = suitein(&[
        "train",
        "--data",
        s(&data),
        "--config",
        s(&cfg),
        "--out",
        s(&model),
    ]);
    assert_eq!(
        out.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(!model.exists());
}

#[test]
fn ablation_flags_shape_the_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path());
    let cfg = tiny_train_config(dir.path());
    let run = |name: &str, extra: &[&str]| {
        let model = dir.path().join(name);
        let mut args = vec![
            "train",
            "--data",
            s(&data),
            "--config",
            s(&cfg),
            "--out",
            s(&model),
        ];
        args.extend_from_slice(extra);
        ok(&args);
        model
    };

    let full = run("full.json", &[]);
    let names = |p: &Path| -> Vec<String> {
        checkpoint_params(p)
            .as_object()
            .unwrap()
            .keys()
            .cloned()
            .collect()
    };
    assert!(names(&full).iter().any(|n| n.starts_with("private.")));
    assert!(dir.path().join("full.log.csv").is_file());
    assert!(dir.path().join("full.run.json").is_file());

    let no_con = run("no_con.json", &["--no-contrastive"]);
    assert!(!names(&no_con).iter().any(|n| n.starts_with("private.")));

    let watch = run("watch.json", &["--device-subset", "watch"]);
    let v: Value = serde_json::from_str(&fs::read_to_string(&watch).unwrap()).unwrap();
    assert_eq!(v["config"]["devices"], json!(["watch"]));
    assert!(names(&watch).iter().all(|n| !n.contains(".j2.")));

    let single = run("ear.json", &["--single-device", "earbuds"]);
    let v: Value = serde_json::from_str(&fs::read_to_string(&single).unwrap()).unwrap();
    assert_eq!(v["config"]["devices"], json!(["earbuds"]));

    // same seed, same weights
    let again = run("full_again.json", &[]);
    assert_eq!(fs::read(&full).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn eval_writes_one_row_per_sequence() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path());
    let cfg = tiny_train_config(dir.path());
    let model = dir.path().join("m.json");
    ok(&[
        "train",
        "--data",
        s(&data),
        "--config",
        s(&cfg),
        "--out",
        s(&model),
    ]);
    let out = dir.path().join("eval");
    ok(&[
        "eval",
        "--data",
        s(&data),
        "--model",
        s(&model),
        "--split",
        "test",
        "--jobs",
        "2",
        "--out",
        s(&out),
    ]);
    let agg = fs::read_to_string(out.join("test/aggregate.csv")).unwrap();
    assert_eq!(agg.lines().count(), 1 + 1);
    assert!(agg.starts_with("sequence_id,ate_m,rte_m"));
    assert!(out.join("test/run.json").is_file());

    // a model trained on devices the data lacks is a shape error
    let wrong = dir.path().join("other");
    let seq = write(
        &dir.path().join("phone_only.json"),
        &json!({ "duration_s": 20.0, "devices": [{ "id": "phone", "rate_hz": 100.0, "articulation": { "kind": "none", "amplitude": 0.0, "frequency_hz": 0.0 } }] }),
    );
    ok(&["simulate", "--config", s(&seq), "--out", s(&wrong)]);
    let fail = suitein(&[
        "eval",
        "--data",
        s(&wrong),
        "--model",
        s(&model),
        "--split",
        "train",
        "--out",
        s(&out),
    ]);
    assert_eq!(
        fail.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&fail.stderr)
    );
}

#[test]
fn oracle_eval_is_near_exact_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path());
    let out = dir.path().join("eval");
    ok(&[
        "eval",
        "--data",
        s(&data),
        "--oracle-velocities",
        "--split",
        "val",
        "--out",
        s(&out),
    ]);
    let mut rdr = fs::read_to_string(out.join("val/aggregate.csv")).unwrap();
    rdr = rdr.lines().nth(1).unwrap().to_string();
    let cols: Vec<&str> = rdr.split(',').collect();
    let id = cols[0];
    let ate: f64 = cols[1].parse().unwrap();
    assert!(ate < 1e-3, "{ate}");

    let fig = dir.path().join("fig.svg");
    let gt = data.join(id).join("gt.csv");
    let pred = out.join("val").join(format!("{id}.traj.csv"));
    ok(&["plot", "--pred", s(&pred), "--gt", s(&gt), "--out", s(&fig)]);
    let svg = fs::read_to_string(&fig).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);
    assert!(svg.contains("ATE 0.000 m"), "{svg}");
    assert!(dir.path().join("fig.run.json").is_file());
}
