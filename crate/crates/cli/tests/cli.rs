use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bvk() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_bvk"));
    c.env_remove("BVK_MEMORY_MB");
    c
}

fn spec(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/specs").join(name)
}

fn write(dir: &tempfile::TempDir, body: &str) -> PathBuf {
    let p = dir.path().join("problem.toml");
    std::fs::write(&p, body).unwrap();
    p
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

const GM: &str = r#"
pipeline = ["bv-charge", "cme"]
[base]
vars = ["x", "y"]
[functional]
f = "x^2*y"
[algebroid]
generators = ["e"]
anchor = { e = "x*d_x - 2*y*d_y" }
[bounds]
weight_max = 2
"#;

#[test]
fn check_accepts_shipped_specs() {
    for name in ["cubic.toml", "gm.toml", "so3.toml", "tate_x2y.toml"] {
        let out = bvk().arg("check").arg(spec(name)).output().unwrap();
        assert!(out.status.success(), "{name}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn check_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(&dir, "pipeline = [\"cohomology\"]\n[base]\nvars = [\"x\"]\n[functional]\nf = \"x^^2\"\n");
    let out = bvk().arg("check").arg(&p).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(":5:8:"), "{err}");
}

#[test]
fn cubic_report() {
    let out = bvk().arg("run").arg(spec("cubic.toml")).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    assert_eq!(r["schema"], "bvk-report/1");
    assert_eq!(r["stages"][0]["payload"]["generators"], 0);
    let degrees = r["stages"][1]["payload"]["degrees"].as_array().unwrap();
    let h0 = degrees.iter().find(|d| d["degree"] == 0).unwrap();
    assert_eq!(h0["dim"], 2);
}

#[test]
fn gm_charge() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(&dir, GM);
    let out = bvk().arg("run").arg(&p).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    assert_eq!(r["stages"][0]["payload"]["q"], "x^2*y + eta*(x*xi_x - 2*y*xi_y)");
    assert_eq!(r["stages"][1]["payload"]["residual"], "0");
}

#[test]
fn zero_weight_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(&dir, &GM.replace("weight_max = 2", "weight_max = 0"));
    let out = bvk().arg("run").arg(&p).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["stages"][0]["status"], "uncertified");
}

#[test]
fn out_file_and_stage() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(&dir, GM);
    let report = dir.path().join("report.json");
    let out = bvk().args(["run", "--stage", "bv-charge", "--out"]).arg(&report).arg(&p).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["stages"].as_array().unwrap().len(), 1);
    let out = bvk().args(["run", "--stage", "cohomology"]).arg(&p).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn byte_identical_modulo_timing() {
    let run = || {
        let out = bvk().arg("run").arg(spec("so3.toml")).output().unwrap();
        let mut r = json(&out);
        for s in r["stages"].as_array_mut().unwrap() {
            s["wall_time_ms"] = Value::from(0);
        }
        serde_json::to_string(&r).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn memory_budget_is_a_budget_failure() {
    let out = bvk().arg("run").arg(spec("cubic.toml")).env("BVK_MEMORY_MB", "0").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bvk().arg("run").arg(spec("cubic.toml")).env("BVK_MEMORY_MB", "lots").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn text_format() {
    let out = bvk().args(["run", "--format", "text"]).arg(spec("gm.toml")).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let t = String::from_utf8_lossy(&out.stdout);
    assert!(t.contains("anchor: {\"e\":\"x*d_x - 2*y*d_y\"}"), "{t}");
    assert!(t.ends_with("exit code: 0\n"));
}

#[test]
fn schema_is_json() {
    let out = bvk().arg("schema").output().unwrap();
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["$id"], "bvk-report/1");
}
