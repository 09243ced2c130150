use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use broadwell::solver::f_of_r0;
use serde_json::{json, Value};
use tempfile::TempDir;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn shipped(name: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(configs().join(name)).unwrap()).unwrap()
}

fn write_config(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_broadwell")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// The small-bump config on a coarser lattice to keep the tests quick.
fn small(dir: &Path, n: usize) -> PathBuf {
    let mut v = shipped("small-bump.json");
    v["grid"] = json!({ "nt": n, "nx": n, "ny": n });
    write_config(dir, &format!("small-{n}.json"), &v)
}

#[test]
fn shipped_small_bump_passes_check() {
    let o = run(&["check", "--config", s(&configs().join("small-bump.json"))]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("verdict: PASS"));
}

#[test]
fn shipped_march_passes_check_and_equilibrium_fails() {
    assert_eq!(code(&run(&["check", "--config", s(&configs().join("small-bump-march.json"))])), 0);
    assert_eq!(code(&run(&["check", "--config", s(&configs().join("equilibrium.json"))])), 2);
}

#[test]
fn data_one_percent_above_f_fails_with_its_margin() {
    let tmp = TempDir::new().unwrap();
    let p = broadwell::Params::with_default_sigma(1.0, 0.5).unwrap();
    let r0 = 0.0023;
    let k = 1.01 * f_of_r0(&p, r0);
    let mut v = shipped("equilibrium.json");
    let c = json!({ "kind": "constant", "value": k });
    v["data"]["initial"] = json!([c, c, c, c]);
    v["data"]["inflow"] = json!([c, c, c, c]);
    v["mode"] = json!("slab");
    v["slab_end"] = json!(0.5);
    v["r0"] = json!(r0);
    v.as_object_mut().unwrap().remove("horizon");
    let cfg = write_config(tmp.path(), "over.json", &v);
    let o = run(&["--json", "check", "--config", s(&cfg)]);
    assert_eq!(code(&o), 2);
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    let cond = report["verdict"]["conditions"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == "q <= f(R0)")
        .unwrap()
        .clone();
    assert_eq!(cond["passed"], false);
    let margin = cond["margin"].as_f64().unwrap();
    assert!((margin - (1.0 / 1.01 - 1.0)).abs() < 1e-9, "margin {margin}");
}

#[test]
fn solve_refuses_failing_config_unless_unsafe() {
    let tmp = TempDir::new().unwrap();
    let mut v = shipped("equilibrium.json");
    v["grid"] = json!({ "nt": 5, "nx": 5, "ny": 5 });
    v["horizon"] = json!(2.0);
    let cfg = write_config(tmp.path(), "eq.json", &v);
    let out = tmp.path().join("eq");
    assert_eq!(code(&run(&["solve", "--config", s(&cfg), "--out", s(&out)])), 2);
    assert!(!out.exists());
    assert_eq!(code(&run(&["solve", "--config", s(&cfg), "--out", s(&out), "--unsafe"])), 0);
    let summary: Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["certified"], false);
    assert_eq!(summary["max_n_script"], 0.25);
    assert_eq!(code(&run(&["verify", "--config", s(&cfg), "--solution", s(&out)])), 0);
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn output_does_not_depend_on_worker_count() {
    let tmp = TempDir::new().unwrap();
    let mut v = shipped("small-bump-march.json");
    v["grid"] = json!({ "nt": 9, "nx": 9, "ny": 9 });
    v["slices"] = json!("all");
    v.as_object_mut().unwrap().remove("horizon_floors");
    v["horizon"] = json!(2.5);
    let cfg = write_config(tmp.path(), "march.json", &v);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_eq!(code(&run(&["--workers", "1", "solve", "--config", s(&cfg), "--out", s(&a)])), 0);
    assert_eq!(code(&run(&["--workers", "3", "solve", "--config", s(&cfg), "--out", s(&b)])), 0);
    let (ta, tb) = (tree(&a), tree(&b));
    assert!(ta.iter().any(|(p, _)| p.ends_with("march.jsonl")));
    assert_eq!(ta, tb);
    assert_eq!(fs::read_to_string(a.join("march.jsonl")).unwrap().lines().count(), 3);
    assert_eq!(code(&run(&["verify", "--config", s(&cfg), "--solution", s(&a)])), 0);
}

#[test]
fn verify_catches_a_corrupted_slice() {
    let tmp = TempDir::new().unwrap();
    // the shipped thresholds are set for the shipped 17-point lattice
    let cfg = configs().join("small-bump.json");
    let out = tmp.path().join("sol");
    assert_eq!(code(&run(&["solve", "--config", s(&cfg), "--out", s(&out)])), 0);
    assert_eq!(code(&run(&["verify", "--config", s(&cfg), "--solution", s(&out)])), 0);

    let slice = out.join("slab_0").join("slice_4.csv");
    let text = fs::read_to_string(&slice).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut row: Vec<String> = lines[41].split(',').map(str::to_string).collect();
    row[2] = format!("{:.16e}", row[2].parse::<f64>().unwrap() * 1.01);
    lines[41] = row.join(",");
    fs::write(&slice, lines.join("\n") + "\n").unwrap();
    let o = run(&["verify", "--config", s(&cfg), "--solution", s(&out)]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn verify_rejects_a_solution_on_another_lattice() {
    let tmp = TempDir::new().unwrap();
    let coarse = small(tmp.path(), 5);
    let fine = small(tmp.path(), 9);
    let out = tmp.path().join("sol");
    assert_eq!(code(&run(&["solve", "--config", s(&coarse), "--out", s(&out)])), 0);
    assert_eq!(code(&run(&["verify", "--config", s(&fine), "--solution", s(&out)])), 1);
}

#[test]
fn malformed_configs_are_invalid() {
    let tmp = TempDir::new().unwrap();
    let mut v = shipped("small-bump.json");
    v["colour"] = json!("blue");
    let unknown = write_config(tmp.path(), "unknown.json", &v);
    assert_eq!(code(&run(&["check", "--config", s(&unknown)])), 1);

    let mut v = shipped("small-bump.json");
    v["params"]["c"] = json!(-1.0);
    let negative = write_config(tmp.path(), "negative.json", &v);
    assert_eq!(code(&run(&["check", "--config", s(&negative)])), 1);

    assert_eq!(code(&run(&["check", "--config", s(&tmp.path().join("missing.json"))])), 1);
}
