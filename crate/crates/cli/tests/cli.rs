use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;

fn config(n2: f64, target_axis: [f64; 3], energies: [f64; 2]) -> Value {
    json!({
        "medium": { "n1": 1.0, "n2": n2, "z1": 1.0, "z2": 1.2, "alpha": 0.5 },
        "epsilon": 0.1,
        "source": {
            "cap": { "axis": [0, 0, 1], "angular_radius": 0.4 },
            "density": { "kind": "uniform", "value": 1.0 },
            "grid_size": 4000
        },
        "target": {
            "cap": { "axis": target_axis, "angular_radius": 0.3 },
            "explicit": [
                { "direction": [0.14943813, 0.0, 0.98877108], "energy": energies[0] },
                { "direction": [-0.14943813, 0.0, 0.98877108], "energy": energies[1] }
            ]
        },
        "solver": { "rel_tol": 0.01 }
    })
}

fn write(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_negaref")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn solved(dir: &TempDir, n2: f64) -> (PathBuf, PathBuf) {
    let cfg = write(dir.path(), "config.json", &config(n2, [0.0, 0.0, 1.0], [0.08, 0.06]));
    let out = dir.path().join("run");
    let o = run(&["solve", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    (cfg, out.join("solution.json"))
}

#[test]
fn solve_writes_all_artifacts() {
    let dir = TempDir::new().unwrap();
    let (_, sol) = solved(&dir, -2.0);
    let run = sol.parent().unwrap();
    for f in ["solution.json", "report.json", "surface.obj", "surface.csv"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let report: Value = serde_json::from_str(&std::fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["solve"]["converged"], true);
    let obj = std::fs::read_to_string(run.join("surface.obj")).unwrap();
    assert!(obj.lines().any(|l| l.starts_with("f ")));
}

#[test]
fn verify_accepts_solution_and_rejects_perturbed_one() {
    for n2 in [-2.0, -0.5] {
        let dir = TempDir::new().unwrap();
        let (cfg, sol) = solved(&dir, n2);
        let o = run(&["verify", "--config", s(&cfg), "--solution", s(&sol)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));

        let mut v: Value = serde_json::from_str(&std::fs::read_to_string(&sol).unwrap()).unwrap();
        let b1 = v["b"][1].as_f64().unwrap();
        v["b"][1] = json!(b1 * 1.05);
        let bad = write(dir.path(), "bad.json", &v);
        let o = run(&["verify", "--config", s(&cfg), "--solution", s(&bad)]);
        assert_eq!(code(&o), 1);
    }
}

#[test]
fn lossless_verify_counts_every_ray() {
    let dir = TempDir::new().unwrap();
    let (cfg, sol) = solved(&dir, -2.0);
    let totals = |extra: &[&str]| {
        let out = dir.path().join(format!("v{}", extra.len()));
        let mut args = vec!["verify", "--config", s(&cfg), "--solution", s(&sol), "--out", s(&out)];
        args.extend_from_slice(extra);
        run(&args);
        let v: Value = serde_json::from_str(&std::fs::read_to_string(out.join("verify.json")).unwrap()).unwrap();
        (v["audit"]["total_emitted"].as_f64().unwrap(), v["audit"]["total_transmitted"].as_f64().unwrap())
    };
    let (e0, t0) = totals(&[]);
    let (e1, t1) = totals(&["--lossless"]);
    assert_eq!(e0, e1);
    assert!(t0 < e0);
    assert!((t1 - e1).abs() <= 1e-12 * e1);
}

#[test]
fn solution_file_round_trips_exactly() {
    let dir = TempDir::new().unwrap();
    let (cfg, sol) = solved(&dir, -2.0);
    let out = dir.path().join("mesh");
    let o = run(&["export-mesh", "--config", s(&cfg), "--solution", s(&sol), "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    let a = std::fs::read(sol.parent().unwrap().join("surface.csv")).unwrap();
    let b = std::fs::read(out.join("surface.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn hypothesis_failures_have_distinct_exit_codes() {
    let dir = TempDir::new().unwrap();
    let antipodal = write(dir.path(), "a.json", &config(-2.0, [0.0, 0.0, -1.0], [0.08, 0.06]));
    assert_eq!(code(&run(&["solve", "--config", s(&antipodal), "--out", s(dir.path())])), 5);

    let greedy = write(dir.path(), "b.json", &config(-2.0, [0.0, 0.0, 1.0], [0.3, 0.3]));
    assert_eq!(code(&run(&["solve", "--config", s(&greedy), "--out", s(dir.path())])), 6);

    let mut v = config(-2.0, [0.0, 0.0, 1.0], [0.08, 0.06]);
    v["regime"] = json!("ellipsoid_min");
    let mismatch = write(dir.path(), "c.json", &v);
    assert_eq!(code(&run(&["solve", "--config", s(&mismatch), "--out", s(dir.path())])), 4);

    let missing = dir.path().join("nope.json");
    assert_eq!(code(&run(&["solve", "--config", s(&missing)])), 3);
    assert_eq!(code(&run(&["solve"])), 2);
}

#[test]
fn ma_residual_on_fields_and_solutions() {
    let dir = TempDir::new().unwrap();
    let (cfg, sol) = solved(&dir, -2.0);
    let out = dir.path().join("ma");
    for field in [
        json!({ "kind": "quadric", "direction": [0.0998, 0.0, 0.9950], "b": 1.0 }),
        json!({ "kind": "perturbed", "direction": [0.0998, 0.0, 0.9950], "b": 1.0,
                "amplitude": 0.01, "center": [0.05, 0.02], "width": 0.15 }),
    ] {
        let f = write(dir.path(), "field.json", &field);
        let o = run(&["ma-residual", "--config", s(&cfg), "--field", s(&f), "--out", s(&out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
        assert!(out.join("ma_report.json").exists());
    }
    assert_eq!(code(&run(&["ma-residual", "--config", s(&cfg), "--solution", s(&sol), "--out", s(&out)])), 4);
    let o = run(&["ma-residual", "--config", s(&cfg), "--solution", s(&sol), "--per-cell", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn discretize_target_preserves_total() {
    let dir = TempDir::new().unwrap();
    let mut v = config(-0.5, [0.0, 0.0, 1.0], [0.08, 0.06]);
    v["target"] = json!({
        "cap": { "axis": [0, 0, 1], "angular_radius": 0.3 },
        "continuous": { "density": { "kind": "uniform", "value": 1.0 }, "cell_count": 12,
                        "fine_grid_size": 5000, "total_energy": 0.15 }
    });
    let cfg = write(dir.path(), "cont.json", &v);
    let o = run(&["discretize-target", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let list: Vec<Value> = serde_json::from_str(&std::fs::read_to_string(dir.path().join("targets.json")).unwrap()).unwrap();
    assert_eq!(list.len(), 12);
    let total: f64 = list.iter().map(|p| p["energy"].as_f64().unwrap()).sum();
    assert!((total - 0.15).abs() < 1e-12);

    let o = run(&["solve", "--config", s(&cfg), "--out", s(&dir.path().join("run"))]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}
