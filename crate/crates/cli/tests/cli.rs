use std::fs;
use std::path::Path;
use std::process::Command;

use kp_cli::export::{json_to_string, parse_obj, parse_polylines};
use kp_cli::{parse_config_str, run, Mode};
use serde_json::Value;

fn kp(mode: &str, cfg: &str, dir: &Path) -> i32 {
    let path = dir.join("run.toml");
    fs::write(&path, cfg).unwrap();
    Command::new(env!("CARGO_BIN_EXE_kp"))
        .args([mode, "--config", path.to_str().unwrap(), "--out", dir.join("out").to_str().unwrap()])
        .status()
        .unwrap()
        .code()
        .unwrap()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("out/report.json")).unwrap()).unwrap()
}

const REST: &str = "[rod]\npreset = \"circle\"\nn = 60\n[section]\nregular = [12, 0.01]\n[material]\nkappa1_0 = 6.283185307179586\n";

#[test]
fn rest_circle_exits_zero_with_zero_energy() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(kp("rod-relax", REST, dir.path()), 0);
    let r = report(dir.path());
    assert_eq!(r["energy"]["e_total"].as_f64(), Some(0.0));
    assert_eq!(r["converged"], Value::Bool(true));
    for f in ["rod.obj", "midline.txt", "trace.csv", "report.json", "loops.txt", "timing.json"] {
        assert!(dir.path().join("out").join(f).exists(), "{f}");
    }
}

#[test]
fn input_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(kp("rod-relax", "[material]\nsigma = -1\n", dir.path()), 1);
    assert_eq!(kp("rod-relax", "mode = \"check\"\n", dir.path()), 1);
    assert_eq!(kp("no-such-mode", REST, dir.path()), 1);
}

#[test]
fn unfinished_solve_exits_two_with_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[rod]\npreset = \"perturbed-circle\"\nn = 40\n[section]\nregular = [12, 0.01]\n[solver]\nmax_outer = 1\n";
    assert_eq!(kp("rod-relax", cfg, dir.path()), 2);
    assert!(dir.path().join("out/trace.csv").exists());
    assert_eq!(report(dir.path())["converged"], Value::Bool(false));
}

#[test]
fn zero_tension_solve_has_no_film_energy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[rod]\npreset = \"perturbed-circle\"\nn = 40\n[section]\nregular = [12, 0.01]\n";
    assert_eq!(kp("kp-solve", cfg, dir.path()), 0);
    let r = report(dir.path());
    assert_eq!(r["energy"]["e_film"].as_f64(), Some(0.0));
    assert!(dir.path().join("out/film.obj").exists());
}

#[test]
fn overlapping_preset_is_flagged_by_check() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[rod]\npreset = \"doubled-circle\"\nn = 200\n[section]\nregular = [12, 0.02]\n[check]\nvoxel_h = 0.005\n";
    assert_eq!(kp("check", cfg, dir.path()), 0);
    let r = report(dir.path());
    assert_eq!(r["checks"]["glob_inj"], Value::Bool(false));
    assert_eq!(r["glob_inj"]["ok"], Value::Bool(false));
    assert_eq!(r["checks"]["local_injectivity"], Value::Bool(true));
}

#[test]
fn outputs_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config_str(
        "[rod]\npreset = \"perturbed-circle\"\nn = 40\n[section]\nregular = [8, 0.01]\n[material]\nsigma = 1.0\n[solver]\nmax_outer = 3\n",
        dir.path(),
    )
    .unwrap();
    let out = dir.path().join("out");
    let outcome = run(&cfg, Mode::KpSolve, &out).unwrap();

    for name in ["rod.obj", "film.obj"] {
        let text = fs::read_to_string(out.join(name)).unwrap();
        let (v, t, tags) = parse_obj(&text).unwrap();
        let again = if name == "film.obj" {
            kp_cli::export::film_to_obj(&kp_core::FilmMesh::new(v, t, tags).unwrap())
        } else {
            kp_cli::export::mesh_to_obj(&v, &t)
        };
        assert_eq!(again, text, "{name}");
    }
    let mid = fs::read_to_string(out.join("midline.txt")).unwrap();
    let polys = parse_polylines(&mid).unwrap();
    assert_eq!(polys[0].1.len(), 41);
    assert_eq!(kp_cli::export::polylines_to_text(&[(None, &polys[0].1)]), mid);

    let csv = fs::read_to_string(out.join("trace.csv")).unwrap();
    let rows = csv.lines().count() - 1;
    assert_eq!(rows as u64, outcome.report["trace_rows"].as_u64().unwrap());
    assert_eq!(rows as u64, outcome.report["solver"]["accepted"].as_u64().unwrap() + 1);

    let text = fs::read_to_string(out.join("report.json")).unwrap();
    let back: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(json_to_string(&back), text);
}

#[test]
fn same_seed_gives_identical_files() {
    let cfg = "seed = 5\n[rod]\npreset = \"perturbed-circle\"\nn = 30\n[section]\nregular = [8, 0.01]\n[material]\nsigma = 1.0\n[solver]\nmax_outer = 4\n";
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    kp("kp-solve", cfg, a.path());
    kp("kp-solve", cfg, b.path());
    for f in ["trace.csv", "report.json", "film.obj", "midline.txt"] {
        let x = fs::read(a.path().join("out").join(f)).unwrap();
        let y = fs::read(b.path().join("out").join(f)).unwrap();
        assert!(x == y, "{f} differs");
    }
}
