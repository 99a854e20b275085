use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn config(name: &str) -> PathBuf {
    root().join("configs").join(name)
}

fn run(args: &[&str], cfg: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qpdual"))
        .args(args)
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn edited(name: &str, dir: &Path, edit: impl FnOnce(&mut Value)) -> PathBuf {
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(config(name)).unwrap()).unwrap();
    edit(&mut v);
    let p = dir.join("edited.json");
    std::fs::write(&p, serde_json::to_string(&v).unwrap()).unwrap();
    p
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn csv_rows(p: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(p).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn validate_golden() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["validate"], &config("golden.json"), dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&dir.path().join("validate.json"));
    assert_eq!(v["diophantine"]["valid"], Value::Bool(true));
    assert!(v["diophantine"]["margin"].as_f64().unwrap() >= 0.1);
}

#[test]
fn gaps_zero_potential() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = edited("golden.json", dir.path(), |v| v["coefficients"] = Value::Array(vec![]));
    let o = run(&["gaps"], &cfg, dir.path());
    assert!(o.status.success());
    let (header, rows) = csv_rows(&dir.path().join("gaps.csv"));
    assert_eq!(header, ["m", "k_m", "E_minus", "E_plus", "width", "bound", "pass", "status"]);
    assert_eq!(rows.len(), 40);
    for r in rows {
        assert_eq!(r[4].parse::<f64>().unwrap(), 0.0);
        assert_eq!(r[6], "true");
    }
}

#[test]
fn forward_single_harmonic() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["verify-forward"], &config("single-harmonic.json"), dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rep = read_json(&dir.path().join("forward-report.json"));
    assert_eq!(rep["in_regime"], Value::Bool(true));
    let row = rep["rows"].as_array().unwrap().iter().find(|r| r["m"] == serde_json::json!([0, 1])).unwrap();
    let w = row["width"].as_f64().unwrap();
    let c = (-0.5f64).exp();
    assert!((w - 2e-3 * c).abs() <= 5e-6, "width {w}");
    assert!((row["bound"].as_f64().unwrap() - 2e-3 * (-0.25f64).exp()).abs() < 1e-15);
}

#[test]
fn csv_headers_documented() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("single-harmonic.json");
    assert!(run(&["band"], &cfg, dir.path()).status.success());
    assert!(run(&["traj-bound"], &cfg, dir.path()).status.success());
    for name in ["band.csv", "traj-bound.csv", "gamma-bound.csv"] {
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        let (header, rows) = csv_rows(&dir.path().join(name));
        assert!(!rows.is_empty());
        for col in header {
            assert!(text.contains(&format!("# {col}: ")), "{name}: {col} undocumented");
        }
    }
    let (_, rows) = csv_rows(&dir.path().join("band.csv"));
    assert_eq!(rows.len(), 81);
    // 17 significant digits
    assert_eq!(rows[0][1].split('e').next().unwrap().replace(['.', '-'], "").len(), 17);
}

#[test]
fn outputs_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = config("golden.json");
    for cmd in ["band", "verify-forward", "selftest"] {
        assert!(run(&[cmd], &cfg, a.path()).status.success());
        assert!(run(&[cmd, "--jobs", "1"], &cfg, b.path()).status.success());
    }
    for name in ["band.csv", "gaps.csv", "forward-report.json", "selftest.json"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
}

#[test]
fn seed_override_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["selftest", "--seed", "99"], &config("golden.json"), dir.path());
    assert!(o.status.success());
    assert_eq!(read_json(&dir.path().join("selftest.json"))["seed"], 99);
}

#[test]
fn inverse_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["verify-inverse"], &config("golden.json"), dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rep = read_json(&dir.path().join("inverse-report.json"));
    assert_eq!(rep["hypothesis"], Value::Bool(true));
    assert_eq!(rep["coefficient_checks"].as_array().unwrap().len(), 12);
    assert!(rep["caveat"].is_string());
}

#[test]
fn geometry_dump() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["geometry"], &config("single-harmonic.json"), dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let g = read_json(&dir.path().join("geometry.json"));
    assert!(g["site_classes"]["classes"]["1"].as_array().unwrap().contains(&serde_json::json!([0, 0])));
    assert_eq!(g["principal"]["reset"], serde_json::json!([[0, 1]]));
    assert!(g["lambda_pair"]["dropped_partners"].is_array());
    assert!(g["lambda_pair"]["set"]["sites"].as_array().unwrap().len() > 1);
}

fn error_json(o: &Output) -> Value {
    serde_json::from_str(String::from_utf8_lossy(&o.stderr).trim()).unwrap()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // decay hypothesis violated: c0(n0) = 1 > exp(-kappa0)
    let bad = edited("single-harmonic.json", dir.path(), |v| {
        v["coefficients"][0]["re"] = 1.0.into();
        v["coefficients"][1]["re"] = 1.0.into();
    });
    let o = run(&["gaps"], &bad, dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_json(&o)["error"], "invalid");

    let o = run(&["geometry", "--faithful"], &config("golden.json"), dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&o)["exit"], 2);

    let strict = edited("single-harmonic.json", dir.path(), |v| v["tolerances"] = serde_json::json!({"oracle": 1e-30}));
    let o = run(&["verify-forward"], &strict, dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(error_json(&o)["error"], "assertion");

    let o = run(&["validate"], &dir.path().join("missing.json"), dir.path());
    assert_eq!(o.status.code(), Some(1));
}
