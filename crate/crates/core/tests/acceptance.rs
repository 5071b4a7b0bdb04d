//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Exits 0 regardless of outcome so that `cargo test` reports the suite;
//! set `AAPHASE_ACCEPTANCE_STRICT=1` to turn failures into a non-zero exit.
//! `AAPHASE_ACCEPTANCE_ONLY=1,4` restricts the run to the listed criteria.

mod common;

use std::path::{Path, PathBuf};
use std::time::Instant;

use aaphase::config::ExperimentConfig;
use aaphase::control::ControlSignal;
use aaphase::dynamics::{integrate, AtomPairState, IntegratorOptions};
use aaphase::experiment::{self, RunFlags, RunOutcome, Subcommand};
use aaphase::noise::{equipartition_benchmark, NoiseParams};
use aaphase::optimal::objective_and_gradient;
use aaphase::phase::{phase_report, separability};
use aaphase::scalar::{cmat_apply, cmat_dist, unitarity_defect, CMat4, Cplx, StateVector};
use aaphase::units;
use common::{fd_component, p1_system, random_short_problem, random_state, relative_error};
use nalgebra::{DMatrix, Matrix4, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&configs_dir().join(name)).expect("bundled config loads")
}

fn quiet() -> RunFlags {
    RunFlags::default()
}

fn adjoint_gradient() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let (problem, control) = random_short_problem(&mut rng);
        let (_, grad, _) = objective_and_gradient(&problem, &control).unwrap();
        let n = control.intervals();
        for ch in 0..2 {
            for _ in 0..8 {
                let k = rng.random_range(0..=n);
                let fd = fd_component(&problem, &control, ch, k, 1e-4);
                worst = worst.max(relative_error(grad[ch][k], fd));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-3 && secs <= 120.0,
        format!("worst relative error {worst:.2e} over 80 components, {secs:.1} s"),
    )
}

/// `exp(−iHT)` from the real symmetric eigendecomposition of `H`.
fn exp_oracle(h: &[[f64; 4]; 4], t: f64) -> CMat4<f64> {
    let m = Matrix4::from_fn(|i, j| h[i][j]);
    let eig = SymmetricEigen::new(m);
    let mut u = [[Cplx::new(0.0, 0.0); 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                let ph = Cplx::from_polar(1.0, -eig.eigenvalues[k] * t);
                u[i][j] += ph * eig.eigenvectors[(i, k)] * eig.eigenvectors[(j, k)];
            }
        }
    }
    u
}

fn quantum_propagation() -> Outcome {
    let system = p1_system([0.0, 0.0]);
    let r1 = [4.0, 6.5];
    let psi0 = random_state(&mut ChaCha8Rng::seed_from_u64(2));
    // RK4 error scales as dt⁴; 1 ns leaves ~1e-7 on U at this separation.
    let dt = 5e-4;
    let control = ControlSignal::constant(30.0, 300, r1);
    let rec = integrate(
        &system,
        &AtomPairState::at_rest(r1, [0.0, 0.0], psi0),
        &control,
        &IntegratorOptions::new(dt).with_propagator().pinned(),
    )
    .unwrap();
    let h = system.coupling.hamiltonian(&r1, &[0.0, 0.0]).unwrap();
    let u = rec.propagator.unwrap();
    let oracle_err = cmat_dist(&u, &exp_oracle(&h.0, 30.0));
    let unitarity = unitarity_defect(&u);
    let psi_err = cmat_apply(&u, &psi0)
        .iter()
        .zip(&rec.last().psi)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    outcome(
        oracle_err <= 1e-8 && unitarity <= 1e-8 && psi_err <= 1e-7,
        format!(
            "dt {dt} µs: ‖U − exp(−iHT)‖ {oracle_err:.2e}, ‖U†U − I‖ {unitarity:.2e}, ‖UΨ(0) − Ψ(T)‖ {psi_err:.2e}"
        ),
    )
}

/// Random normalized state and its largest Schmidt coefficient from an SVD
/// of the 2 × 4 coefficient grid.
fn schmidt_oracle(psi: &StateVector<f64>) -> f64 {
    let mut grid = DMatrix::<nalgebra::Complex<f64>>::zeros(2, 4);
    grid[(0, 0)] = psi[0];
    for k in 1..4 {
        grid[(1, k)] = psi[k];
    }
    grid.singular_values().max()
}

fn separability_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let psi = random_state(&mut rng);
        let f = separability(&psi).unwrap().f;
        worst = worst.max((f - schmidt_oracle(&psi)).abs());
    }
    let mut dd = [Cplx::new(0.0f64, 0.0); 4];
    dd[0] = Cplx::new(1.0, 0.0);
    let f_dd = separability(&dd).unwrap().f;
    outcome(
        worst <= 1e-10 && (f_dd - 1.0).abs() <= 1e-12,
        format!(
            "max |F − σ_max| {worst:.2e} over 1000 states, F(|dd⟩) − 1 = {:.1e}",
            f_dd - 1.0
        ),
    )
}

fn gauge_invariance() -> Outcome {
    let cfg = load("p1.cfg");
    let problem = experiment::build_problem(&cfg).unwrap();
    let control = experiment::initial_control(&cfg).unwrap();
    let problem = experiment::resolve_initial_state(&cfg, &problem, &control).unwrap();
    let base = phase_report(&problem.integrate(&control).unwrap()).unwrap();
    let mut worst: f64 = 0.0;
    for alpha in [0.1, 1.0, 3.0] {
        let rot = Cplx::from_polar(1.0, alpha);
        let p = problem.with_psi0(problem.psi0.map(|z| z * rot));
        let r = phase_report(&p.integrate(&control).unwrap()).unwrap();
        worst = worst.max((r.gamma_geometric - base.gamma_geometric).abs());
    }
    outcome(
        worst <= 1e-9,
        format!(
            "γ_g = {:.4}°, max change {worst:.2e}° over α ∈ {{0.1, 1, 3}}",
            base.gamma_geometric
        ),
    )
}

fn p1_reproduction(out: &Path) -> Outcome {
    let start = Instant::now();
    let cfg = load("p1.cfg");
    let flags = RunFlags {
        out: Some(out.to_path_buf()),
        ..quiet()
    };
    let RunOutcome::Optimize {
        result, history, ..
    } = experiment::run(Subcommand::Optimize, &cfg, &flags).unwrap()
    else {
        unreachable!()
    };
    let r = result.report;
    let secs = start.elapsed().as_secs_f64();
    let pass = r.loop_error_r[0] <= 0.05
        && r.loop_error_r[1] <= 0.05
        && r.overlap_modulus >= 0.99
        && r.separability_f >= 0.98
        && r.gamma_dynamical.abs() <= 15.0
        && r.gamma_geometric.abs() >= 30.0
        && secs <= 1800.0;
    outcome(
        pass,
        format!(
            "loop {:.2e}/{:.2e} µm, overlap {:.4}, F {:.4}, γ_d {:.2}° (soft 2°), γ_g {:.2}° (soft −56.7°), {} iterations, {secs:.0} s",
            r.loop_error_r[0],
            r.loop_error_r[1],
            r.overlap_modulus,
            r.separability_f,
            r.gamma_dynamical,
            r.gamma_geometric,
            history.len()
        ),
    )
}

fn circle_scan_sanity(out: &Path) -> Outcome {
    let cfg = load("p1.cfg");
    let flags = RunFlags {
        out: Some(out.to_path_buf()),
        ..quiet()
    };
    let RunOutcome::Scan(_, summary) = experiment::run(Subcommand::Scan, &cfg, &flags).unwrap()
    else {
        unreachable!()
    };
    let rank = summary.reference_rank.unwrap();
    outcome(
        rank < 0.1,
        format!(
            "(7, 11.6) µm ranks at {:.1}% of {} finite cells; best ({}, {}) µm",
            100.0 * rank,
            summary.finite_entries,
            summary.best.r,
            summary.best.d
        ),
    )
}

fn p2_reproduction(out: &Path) -> Outcome {
    let cfg = load("p2.cfg");
    let flags = RunFlags {
        out: Some(out.to_path_buf()),
        ..quiet()
    };
    let RunOutcome::Optimize { result, .. } =
        experiment::run(Subcommand::Optimize, &cfg, &flags).unwrap()
    else {
        unreachable!()
    };
    let occ = std::fs::read_to_string(out.join("occupations.csv")).unwrap();
    let mut side_peak: f64 = 0.0;
    for line in occ.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        side_peak = side_peak.max(v[3]).max(v[4]);
    }
    let r = result.report;
    outcome(
        side_peak < 0.05 && r.gamma_geometric.abs() >= 90.0,
        format!(
            "peak |pf₂⟩,|pf₃⟩ population {side_peak:.3e}, γ_g {:.2}° (soft −172.5°), γ_d {:.2}° (soft −247.8°)",
            r.gamma_geometric, r.gamma_dynamical
        ),
    )
}

fn noise_harness(p1_out: &Path, out: &Path) -> Outcome {
    let start = Instant::now();
    let mut cfg = load("p1.cfg");
    cfg.input = Some(p1_out.join("result.json"));
    let flags = RunFlags {
        out: Some(out.join("thermal")),
        ..quiet()
    };
    let RunOutcome::Noise(thermal) = experiment::run(Subcommand::Noise, &cfg, &flags).unwrap()
    else {
        unreachable!()
    };
    let std_of = |s: &aaphase::noise::NoiseStats, q: &str| s.quantity(q).unwrap().moments.std;

    cfg.noise.lambda = 0.0;
    let flags = RunFlags {
        out: Some(out.join("undamped")),
        ..quiet()
    };
    let RunOutcome::Noise(cold) = experiment::run(Subcommand::Noise, &cfg, &flags).unwrap() else {
        unreachable!()
    };
    let cold_max_std = cold
        .summary
        .iter()
        .map(|q| q.moments.std)
        .fold(0.0, f64::max);

    let bench = equipartition_benchmark(
        units::millikelvin_to_rad_per_us(10.0),
        2.0,
        &NoiseParams {
            bath_temperature: 1e-4,
            lambda: 1000.0,
            seed: 8,
            n_realizations: 100,
            escape_radius: None,
        },
        40.0,
        1e-3,
    )
    .unwrap();
    let secs = start.elapsed().as_secs_f64();
    let pass = thermal.rows.len() == 200
        && thermal.losses.is_empty()
        && cold_max_std == 0.0
        && (bench.ratio() - 1.0).abs() <= 0.1
        && secs <= 1200.0;
    outcome(
        pass,
        format!(
            "{} realizations, {} losses; σ(γ_g) {:.2}°, σ(γ_d) {:.2}°, σ(ε₁) {:.2e} µm (reported); λ = 0 max σ {cold_max_std:e}; equipartition ratio {:.3}; {secs:.0} s",
            thermal.rows.len(),
            thermal.losses.len(),
            std_of(&thermal, "gamma_g"),
            std_of(&thermal, "gamma_d"),
            std_of(&thermal, "eps1"),
            bench.ratio()
        ),
    )
}

/// Numeric payload files of a run directory (the manifest carries wall-clock
/// timestamps and is excluded).
fn payload(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "manifest.json")
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn determinism(p1_out: &Path, out: &Path) -> Outcome {
    let mut cfg = load("p1.cfg");
    cfg.input = Some(p1_out.join("result.json"));
    cfg.noise.realizations = 50;
    let mut identical = true;
    let mut checked = Vec::new();
    for cmd in [
        Subcommand::Noise,
        Subcommand::Simulate,
        Subcommand::PhaseReport,
    ] {
        let dirs = [
            out.join(format!("{}-a", cmd.name())),
            out.join(format!("{}-b", cmd.name())),
        ];
        for d in &dirs {
            let flags = RunFlags {
                seed: Some(42),
                out: Some(d.clone()),
                ..quiet()
            };
            experiment::run(cmd, &cfg, &flags).unwrap();
        }
        let (a, b) = (payload(&dirs[0]), payload(&dirs[1]));
        identical &= !a.is_empty() && a == b;
        checked.push(format!("{} ({} files)", cmd.name(), a.len()));
    }
    outcome(
        identical,
        format!("byte-identical reruns: {}", checked.join(", ")),
    )
}

fn main() {
    let only: Option<Vec<usize>> = std::env::var("AAPHASE_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |k: usize| only.as_ref().is_none_or(|v| v.contains(&k));
    let work = tempfile::tempdir().unwrap();
    let p1_out = work.path().join("p1");

    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let mut record = |k: usize, name: &str, o: Outcome| {
        println!(
            "[{}] #{k} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((k, o));
    };
    let criteria: [(usize, &str, &dyn Fn() -> Outcome); 4] = [
        (1, "adjoint-gradient oracle", &adjoint_gradient),
        (2, "quantum-propagation oracle", &quantum_propagation),
        (3, "separability oracle", &separability_oracle),
        (4, "geometric-phase gauge invariance", &gauge_invariance),
    ];
    for (k, name, f) in criteria {
        if wanted(k) {
            record(k, name, f());
        }
    }
    // Criteria 8 and 9 reuse the optimized P1 control.
    if wanted(5) || wanted(8) || wanted(9) {
        let o = p1_reproduction(&p1_out);
        if wanted(5) {
            record(5, "P1 reproduction", o);
        }
    }
    if wanted(6) {
        record(
            6,
            "circle-scan sanity",
            circle_scan_sanity(&work.path().join("scan")),
        );
    }
    if wanted(7) {
        record(
            7,
            "P2 qualitative reproduction",
            p2_reproduction(&work.path().join("p2")),
        );
    }
    if wanted(8) {
        record(
            8,
            "noise harness",
            noise_harness(&p1_out, &work.path().join("noise")),
        );
    }
    if wanted(9) {
        record(
            9,
            "determinism",
            determinism(&p1_out, &work.path().join("det")),
        );
    }

    let failed: Vec<usize> = results.iter().filter(|r| !r.1.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {} passed, {} failed{}",
        results.len() - failed.len(),
        failed.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!(" ({failed:?})")
        }
    );
    if std::env::var("AAPHASE_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") && !failed.is_empty() {
        std::process::exit(1);
    }
}
