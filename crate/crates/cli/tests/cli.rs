use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_reachkit");

fn small_config(extra: Value) -> Value {
    let mut base = json!({
        "seed": 3,
        "grid": {"nx": 21, "ny": 21, "ntheta": 11},
        "model": {"preset": "non_agile"},
        "mdp": {"dt": 0.5, "horizon": 20},
        "tasks": {"count": 6, "rollouts_per_task": 4},
        "icl": {"epochs": 2},
        "output": {"slices": [0.0]}
    });
    merge(&mut base, extra);
    base
}

fn merge(base: &mut Value, extra: Value) {
    match (base, extra) {
        (Value::Object(b), Value::Object(e)) => {
            for (k, v) in e {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, e) => *b = e,
    }
}

fn write_config(dir: &Path, config: &Value) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    path
}

fn run(config: &Path, out: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .env_remove("REACHKIT_THREADS")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn read_json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn artifacts(out: &Path, command: &str) -> Vec<String> {
    let manifest = read_json(out.join(format!("manifest_{command}.json")));
    assert_eq!(manifest["command"], command);
    manifest["artifacts"].as_array().unwrap().iter().map(|a| a.as_str().unwrap().to_string()).collect()
}

#[test]
fn pipeline_writes_every_artifact() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let config = write_config(dir.path(), &small_config(json!({})));

    for cmd in ["brt", "demos", "icl", "eval", "transfer"] {
        let o = run(&config, &out, &[cmd]);
        assert_eq!(code(&o), 0, "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        for a in artifacts(&out, cmd) {
            assert!(out.join(&a).is_file(), "{cmd} lists missing {a}");
        }
    }

    let brt = artifacts(&out, "brt");
    for a in ["value.vfld", "mask.vfld", "brt.json", "slice_0.0000.svg"] {
        assert!(brt.contains(&a.to_string()), "{brt:?}");
    }
    let sidecar = read_json(out.join("brt.json"));
    assert_eq!(sidecar["converged"], true);
    assert_eq!(sidecar["total_cells"], 21 * 21 * 11);

    let icl = artifacts(&out, "icl");
    let constraints: Vec<_> = icl.iter().filter(|a| a.starts_with("constraint_epoch_") && a.ends_with(".vfld")).collect();
    assert_eq!(constraints.len(), 2);
    assert_eq!(read_json(out.join("constraint_epoch_2.json"))["epoch"], 2);

    let metrics = read_json(out.join("metrics.json"));
    for labels in ["vs_brt", "vs_failure"] {
        for restriction in ["full_grid", "visited_support"] {
            let f1 = metrics[labels][restriction]["f1"].as_f64().unwrap();
            assert!((0.0..=1.0).contains(&f1));
        }
    }

    let transfer = read_json(out.join("transfer.json"));
    let names: Vec<&str> = transfer.as_array().unwrap().iter().map(|b| b["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["agile_to_less_agile", "non_agile_to_more_agile", "moderate_to_non_agile"]);
}

#[test]
fn demos_are_seeded_and_counted() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), &small_config(json!({"tasks": {"count": 20, "rollouts_per_task": 10}})));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&run(&config, &a, &["demos"])), 0);
    assert_eq!(code(&run(&config, &b, &["demos"])), 0);

    let text = std::fs::read_to_string(a.join("demos.jsonl")).unwrap();
    let starts = text.lines().filter(|l| serde_json::from_str::<Value>(l).unwrap()["step"] == 0).count();
    assert_eq!(starts, 200);
    for f in ["demos.jsonl", "tasks.json", "expert_density.vfld"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(read_json(a.join("tasks.json")).as_array().unwrap().len(), 20);

    let other = write_config(dir.path(), &small_config(json!({"tasks": {"rollouts_per_task": 0}})));
    let c = dir.path().join("c");
    assert_eq!(code(&run(&other, &c, &["demos"])), 0);
    assert_eq!(std::fs::read_to_string(c.join("demos.jsonl")).unwrap(), "");
}

#[test]
fn learns_from_external_demonstrations() {
    let dir = TempDir::new().unwrap();
    // sparse logs leave cells next to a start unexplained, which makes that start infeasible
    let config = write_config(dir.path(), &small_config(json!({"tasks": {"rollouts_per_task": 100}})));
    let (logged, fresh) = (dir.path().join("logged"), dir.path().join("fresh"));
    assert_eq!(code(&run(&config, &logged, &["demos"])), 0);
    let demos = logged.join("demos.jsonl");
    let o = run(&config, &fresh, &["icl", "--demos", demos.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(fresh.join("constraint_epoch_2.vfld").is_file());
}

#[test]
fn input_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    assert_eq!(code(&run(&dir.path().join("absent.json"), &out, &["brt"])), 2);

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"grid\": {\"nx\": 21,}}").unwrap();
    let o = run(&bad, &out, &["brt"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line"));

    let unknown = write_config(dir.path(), &json!({"solver": {"tolerence": 1e-3}}));
    assert_eq!(code(&run(&unknown, &out, &["brt"])), 2);

    let config = write_config(dir.path(), &small_config(json!({})));
    assert_eq!(code(&run(&config, &dir.path().join("empty"), &["icl"])), 2);
}

#[test]
fn unconverged_solve_exits_3_after_writing() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let config = write_config(dir.path(), &small_config(json!({"solver": {"max_iters": 1}})));
    assert_eq!(code(&run(&config, &out, &["brt"])), 3);
    assert_eq!(read_json(out.join("brt.json"))["converged"], false);
    assert!(out.join("value.vfld").is_file());
}

#[test]
fn starts_inside_the_tube_exit_4() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), &small_config(json!({"tasks": {"ring_radius": 1.1}})));
    let o = run(&config, &dir.path().join("out"), &["demos"]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn grid_mismatch_exits_5() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let config = write_config(dir.path(), &small_config(json!({})));
    for cmd in ["brt", "demos", "icl"] {
        assert_eq!(code(&run(&config, &out, &[cmd])), 0);
    }
    let other = write_config(dir.path(), &small_config(json!({"grid": {"nx": 23}})));
    assert_eq!(code(&run(&other, &out, &["eval"])), 5);
}

#[test]
fn thread_count_from_environment() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), &small_config(json!({})));
    let with_env = |value: &str, out: &str| {
        Command::new(BIN)
            .args(["brt", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(dir.path().join(out))
            .env("REACHKIT_THREADS", value)
            .output()
            .unwrap()
    };
    assert_eq!(code(&with_env("2", "two")), 0);
    assert_eq!(code(&with_env("0", "zero")), 2);
    assert_ne!(code(&with_env("many", "many")), 0);
    assert_eq!(
        std::fs::read(dir.path().join("two/value.vfld")).unwrap(),
        {
            let o = run(&config, &dir.path().join("default"), &["brt"]);
            assert_eq!(code(&o), 0);
            std::fs::read(dir.path().join("default/value.vfld")).unwrap()
        }
    );
}

#[test]
fn seed_sweep_summarizes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let config = write_config(dir.path(), &small_config(json!({"tasks": {"count": 4}, "icl": {"epochs": 1}})));
    let o = run(&config, &out, &["eval", "--seeds", "1,2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = read_json(out.join("metrics_seeds.json"));
    assert_eq!(summary["seeds"], json!([1, 2]));
    assert_eq!(summary["summary"]["vs_brt.full_grid.f1"]["n"], 2);
}
