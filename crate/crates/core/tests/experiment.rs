//! Shipped configs and experiment plumbing.

use std::path::{Path, PathBuf};

use aaphase::config::{ExperimentConfig, InitialChoice, InitialControl};
use aaphase::experiment::{build_problem, initial_control, plot_data, PlotKind, PlotSource};
use aaphase::units;

fn shipped(name: &str) -> ExperimentConfig {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name);
    ExperimentConfig::load(&p).unwrap()
}

#[test]
fn shipped_configs_carry_the_published_setup() {
    for (name, a_y) in [("p1.cfg", 19.0), ("p2.cfg", 26.3)] {
        let c = shipped(name);
        assert_eq!(c.geometry.b, [0.0, 0.0]);
        assert!((c.geometry.a[1] - a_y).abs() < 1e-12, "{name}");
        assert!((c.trap.mobile_depth - 10e-3).abs() < 1e-15);
        assert!((c.trap.static_depth - 4e-3).abs() < 1e-15);
        assert!((c.trap.sigma - 2.0).abs() < 1e-15);
        assert!((c.horizon.duration - 30.0).abs() < 1e-12);
        assert!(
            (units::c3_from_ghz_um3(c.physics.c3) - 2.0 * std::f64::consts::PI * 2390.0).abs()
                < 1e-6
        );
    }
    assert_eq!(shipped("p2.cfg").initial_state, InitialChoice::Basis(0));
    let p1 = shipped("p1.cfg");
    assert_eq!(p1.scan.reference, Some([7.0, 11.6]));
    assert!(matches!(p1.initial_control, InitialControl::Ellipse { radius, .. } if radius == 7.0));
}

#[test]
fn initial_controls_close_at_the_start_point() {
    for name in ["p1.cfg", "p2.cfg"] {
        let c = shipped(name);
        let u = initial_control(&c).unwrap();
        let n = u.intervals();
        assert_eq!(n, c.horizon.samples);
        for (x, y) in [(u.ux[0], u.uy[0]), (u.ux[n], u.uy[n])] {
            assert!(
                (x - c.geometry.a[0]).abs() < 1e-9 && (y - c.geometry.a[1]).abs() < 1e-9,
                "{name}: ({x}, {y})"
            );
        }
    }
}

#[test]
fn basis_start_has_unit_occupation_at_t0() {
    let text = "geometry.a = 0, 19 um\nhorizon.duration = 0.5 us\nhorizon.samples = 10\nstate.initial = pf2\n";
    let cfg = ExperimentConfig::parse(text, "inline").unwrap();
    let problem = build_problem(&cfg).unwrap();
    let control = initial_control(&cfg).unwrap();
    let rec = problem.integrate(&control).unwrap();
    let occ = &plot_data(PlotSource::Record(&rec), PlotKind::Occupations).unwrap()[0].1;
    let mut lines = occ.lines();
    assert_eq!(lines.next(), Some("t_us,p_dd,p_pf1,p_pf2,p_pf3"));
    let first: Vec<f64> = lines
        .next()
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(first, vec![0.0, 0.0, 0.0, 1.0, 0.0]);
    for line in occ.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        let total: f64 = v[1..].iter().sum();
        assert!((total - 1.0).abs() < 1e-9, "{line}");
    }
    let last = occ.lines().last().unwrap();
    assert!(last.starts_with(&format!("{:.16e}", 0.5)), "{last}");
}

#[test]
fn histograms_need_a_noise_ensemble() {
    let cfg = ExperimentConfig::parse("horizon.duration = 0.1 us\nhorizon.samples = 2\n", "inline")
        .unwrap();
    let rec = build_problem(&cfg)
        .unwrap()
        .integrate(&initial_control(&cfg).unwrap())
        .unwrap();
    let err = plot_data(PlotSource::Record(&rec), PlotKind::Histograms).unwrap_err();
    assert_eq!(err.exit_code(), 4);
}

#[test]
fn missing_referenced_file_is_reported_at_load() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.cfg");
    std::fs::write(&p, "input.result = nowhere/result.json\n").unwrap();
    let err = ExperimentConfig::load(Path::new(&p)).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("nowhere"));
}
