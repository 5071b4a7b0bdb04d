use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &str = "\
schema_version = 1
name = small
physics.c3 = 2.39 GHz*um^3
trap.mobile_depth = 10 mK
trap.static_depth = 4 mK
trap.sigma = 2 um
geometry.a = 0, 19 um
geometry.b = 0, 0 um
horizon.duration = 0.2 us
horizon.dt = 0.001 us
horizon.samples = 20
state.initial = dd
noise.temperature = 0.1 mK
noise.lambda = 5e-2 /ms
noise.realizations = 4
noise.seed = 3
output.dir = out
";

fn aaphase(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aaphase"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("run.cfg");
    fs::write(&p, body).unwrap();
    p
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn uncoupled_static_pair_has_no_phase() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("2.39 GHz*um^3", "0 GHz*um^3"));
    let o = aaphase(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = json(&dir.path().join("out/report.json"));
    for key in ["gamma_geometric", "gamma_dynamical"] {
        let v = report[key].as_f64().unwrap();
        assert!(v.abs() < 1e-9, "{key} = {v}");
    }
    assert!((report["overlap_modulus"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn manifest_lists_every_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let o = aaphase(&["simulate", "--config", cfg.to_str().unwrap(), "--quiet"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("out");
    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["subcommand"], "simulate");
    let mut listed: Vec<String> = manifest["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f.as_str().unwrap().to_string())
        .collect();
    listed.sort();
    let mut present: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "manifest.json")
        .collect();
    present.sort();
    assert_eq!(listed, present);
    for name in [
        "trajectory.csv",
        "occupations.csv",
        "phases.csv",
        "control.csv",
        "config.cfg",
    ] {
        assert!(present.iter().any(|p| p == name), "missing {name}");
    }
}

#[test]
fn written_config_reloads_to_the_same_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    assert!(aaphase(&["simulate", "--config", cfg.to_str().unwrap()])
        .status
        .success());
    let out = dir.path().join("out");
    let hash = json(&out.join("manifest.json"))["config_hash"].clone();
    let again = dir.path().join("again");
    let o = aaphase(&[
        "simulate",
        "--config",
        out.join("config.cfg").to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(json(&again.join("manifest.json"))["config_hash"], hash);
}

#[test]
fn unknown_key_is_a_config_error_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{SMALL}trap.sigma_z = 1 um\n"));
    let o = aaphase(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("trap.sigma_z"), "{err}");
    assert!(err.contains(":18:"), "{err}");
}

#[test]
fn bad_unit_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("sigma = 2 um", "sigma = 2 us"));
    let o = aaphase(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_config_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = aaphase(&[
        "simulate",
        "--config",
        dir.path().join("nope.cfg").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let o = aaphase(&["fly", "--config", "x.cfg"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn collision_is_a_numeric_error() {
    let dir = tempfile::tempdir().unwrap();
    let body = SMALL
        .replace("geometry.a = 0, 19 um", "geometry.a = 0, 1.5 um")
        .replace("horizon.duration = 0.2 us", "horizon.duration = 1 us")
        .replace("horizon.samples = 20", "horizon.samples = 10");
    let cfg = write_config(dir.path(), &format!("{body}physics.guard = 1.4 um\n"));
    let o = aaphase(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("guard"), "{}", stderr(&o));
}

#[test]
fn optimize_resumes_from_its_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{SMALL}optimizer.method = lbfgs\noptimizer.max_iterations = 2\n");
    let cfg = write_config(dir.path(), &body);
    let first = dir.path().join("first");
    let o = aaphase(&[
        "optimize",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        first.to_str().unwrap(),
        "--quiet",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ck = first.join("checkpoint.json");
    let second = dir.path().join("second");
    let o = aaphase(&[
        "optimize",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
        "--resume",
        ck.to_str().unwrap(),
        "--quiet",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    let other = write_config(dir.path(), &body.replace("name = small", "name = other"));
    let o = aaphase(&[
        "optimize",
        "--config",
        other.to_str().unwrap(),
        "--resume",
        ck.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn noise_and_phase_report_read_a_simulated_result() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    assert!(aaphase(&["simulate", "--config", cfg.to_str().unwrap()])
        .status
        .success());
    let body = format!("{SMALL}input.result = out/result.json\n");
    let cfg = write_config(dir.path(), &body);
    let noise = dir.path().join("noise");
    let o = aaphase(&[
        "noise",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        noise.to_str().unwrap(),
        "--seed",
        "9",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = json(&noise.join("manifest.json"));
    assert_eq!(m["seed"], 9);
    assert!(noise.join("noise.json").exists());

    let rep = dir.path().join("rep");
    let o = aaphase(&[
        "phase-report",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        rep.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let a = json(&dir.path().join("out/report.json"));
    let b = json(&rep.join("report.json"));
    assert_eq!(a, b);
}
