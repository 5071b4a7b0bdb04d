//! Experiment orchestration: builds problems from a config, runs the
//! subcommands, and writes CSV/JSON artifacts plus a run manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::config::{ExperimentConfig, InitialChoice, InitialControl};
use crate::control::ControlSignal;
use crate::dynamics::{
    integrate, IntegratorOptions, PairSystem, TrajectoryRecord, TrapCenter, TweezerField,
};
use crate::error::Error;
use crate::hamiltonian::DipoleCoupling;
use crate::noise::{run_ensemble, NoiseParams, NoiseStats, RNG_ALGORITHM};
use crate::optimal::{
    best_cyclic_state, circle_objective, circle_scan, descend, descend_from, grid, CircleGeometry,
    ControlProblem, DescentCheckpoint, InitialState, IterationLog, ScanResult,
};
use crate::phase::{phase_report, to_degrees, PhaseReport};
use crate::scalar::{inner, wrap_degrees, Cplx, StateVector, Vec2};
use crate::units;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Largest number of rows in a per-time plot file.
const MAX_PLOT_ROWS: usize = 3001;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subcommand {
    Simulate,
    Optimize,
    Scan,
    Noise,
    PhaseReport,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Simulate => "simulate",
            Subcommand::Optimize => "optimize",
            Subcommand::Scan => "scan",
            Subcommand::Noise => "noise",
            Subcommand::PhaseReport => "phase-report",
        }
    }
}

/// Command-line overrides.
#[derive(Clone, Debug, Default)]
pub struct RunFlags {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub resume: Option<PathBuf>,
    /// Print one line per optimizer iteration to stderr.
    pub progress: bool,
}

/// Inventory of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub config_hash: String,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub seed: Option<u64>,
    pub rng: Option<String>,
    /// File names relative to the output directory, manifest excluded.
    pub files: Vec<String>,
}

/// Control, start state and report of a finished `simulate`/`optimize` run;
/// input to `noise` and `phase-report`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config_hash: String,
    pub r0: [Vec2<f64>; 2],
    pub psi0: StateVector<f64>,
    pub control: ControlSignal<f64>,
    pub report: PhaseReport,
}

/// Optimizer checkpoint with the data needed to resume it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptimizeCheckpoint {
    pub config_hash: String,
    pub psi0: StateVector<f64>,
    pub descent: DescentCheckpoint<f64>,
}

/// Summary of `scan`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScanSummary {
    pub best: crate::optimal::ScanEntry,
    pub finite_entries: usize,
    pub reference: Option<crate::optimal::ScanEntry>,
    /// Fraction of finite entries strictly better than the reference.
    pub reference_rank: Option<f64>,
}

/// What a subcommand produced, for callers that want the numbers without
/// re-reading files.
#[derive(Clone, Debug)]
pub enum RunOutcome {
    Simulate(RunResult),
    Optimize {
        result: RunResult,
        history: Vec<IterationLog>,
        converged: bool,
    },
    Scan(ScanResult, ScanSummary),
    Noise(NoiseStats),
    PhaseReport(PhaseReport),
}

pub fn build_system(cfg: &ExperimentConfig) -> Result<PairSystem<f64>, Error> {
    let coupling = DipoleCoupling::new(
        units::c3_from_ghz_um3(cfg.physics.c3),
        cfg.physics.quantization_axis,
        cfg.physics.guard,
    )?;
    let depth = |k: f64| units::kelvin_to_rad_per_us(k);
    Ok(PairSystem {
        coupling,
        fields: vec![
            TweezerField::new(
                depth(cfg.trap.mobile_depth),
                cfg.trap.sigma,
                TrapCenter::Mobile,
            )?,
            TweezerField::new(
                depth(cfg.trap.static_depth),
                cfg.trap.sigma,
                TrapCenter::Fixed(cfg.geometry.b),
            )?,
        ],
        mass: units::rb87_mass_internal(),
    })
}

fn basis_state(k: usize) -> StateVector<f64> {
    let mut psi = [Cplx::new(0.0, 0.0); 4];
    psi[k] = Cplx::new(1.0, 0.0);
    psi
}

/// Problem with `Ψ(0)` taken from the config; a cyclic choice starts as
/// `|dd⟩` until [`resolve_initial_state`] replaces it.
pub fn build_problem(cfg: &ExperimentConfig) -> Result<ControlProblem<f64>, Error> {
    let psi0 = match &cfg.initial_state {
        InitialChoice::Basis(k) => basis_state(*k),
        InitialChoice::Amplitudes(a) => std::array::from_fn(|k| Cplx::new(a[2 * k], a[2 * k + 1])),
        InitialChoice::Cyclic => basis_state(0),
    };
    Ok(ControlProblem {
        system: build_system(cfg)?,
        r0: [cfg.geometry.a, cfg.geometry.b],
        psi0,
        weights: cfg.objective.weights,
        dt: cfg.horizon.dt,
        phase_term: cfg.objective.phase_term,
        separability_term: cfg.objective.separability,
        pairing: cfg.objective.pairing,
    })
}

/// Circle placement whose start point is `A` and whose centre lies on the
/// line from `A` towards `B`.
pub fn start_circle(cfg: &ExperimentConfig, counter_clockwise: bool) -> (CircleGeometry<f64>, f64) {
    let [a, b] = [cfg.geometry.a, cfg.geometry.b];
    let sep = (a[0] - b[0]).hypot(a[1] - b[1]);
    let geometry = CircleGeometry {
        anchor: b,
        direction: [(a[0] - b[0]) / sep, (a[1] - b[1]) / sep],
        counter_clockwise,
    };
    (geometry, sep)
}

/// One uniform revolution of an ellipse whose far vertex is the start point.
/// Reduces to [`CircleGeometry::control`] when both semi-axes are equal.
pub fn ellipse_control(
    geometry: &CircleGeometry<f64>,
    d: f64,
    along: f64,
    across: f64,
    duration: f64,
    intervals: usize,
) -> ControlSignal<f64> {
    let (c, _) = geometry.place(along, d);
    let u = geometry.direction;
    let sign = if geometry.counter_clockwise {
        1.0
    } else {
        -1.0
    };
    let v = [-u[1] * sign, u[0] * sign];
    ControlSignal::from_fn(duration, intervals, |t| {
        let phi = std::f64::consts::TAU * t / duration;
        let (s, co) = phi.sin_cos();
        [
            c[0] + along * co * u[0] + across * s * v[0],
            c[1] + along * co * u[1] + across * s * v[1],
        ]
    })
}

pub fn initial_control(cfg: &ExperimentConfig) -> Result<ControlSignal<f64>, Error> {
    let (t, n) = (cfg.horizon.duration, cfg.horizon.samples);
    match &cfg.initial_control {
        InitialControl::Constant => Ok(ControlSignal::constant(t, n, cfg.geometry.a)),
        InitialControl::Ellipse {
            radius,
            transverse,
            counter_clockwise,
        } => {
            let (geometry, sep) = start_circle(cfg, *counter_clockwise);
            if *radius >= sep {
                return Err(Error::InvalidArgument(format!(
                    "control.radius = {radius} um does not fit between A and B ({sep} um)"
                )));
            }
            Ok(ellipse_control(
                &geometry,
                sep - radius,
                *radius,
                *transverse,
                t,
                n,
            ))
        }
        InitialControl::File(path) => {
            let c = read_control_csv(path)?;
            if c.intervals() != n || (c.duration - t).abs() > 1e-9 * t {
                return Err(Error::GridMismatch(format!(
                    "{} has {} intervals over {} us, config expects {n} over {t} us",
                    path.display(),
                    c.intervals(),
                    c.duration
                )));
            }
            Ok(c)
        }
    }
}

/// Replaces a cyclic choice by the best eigenvector of the control's cycle
/// propagator.
pub fn resolve_initial_state(
    cfg: &ExperimentConfig,
    problem: &ControlProblem<f64>,
    control: &ControlSignal<f64>,
) -> Result<ControlProblem<f64>, Error> {
    match cfg.initial_state {
        InitialChoice::Cyclic => {
            let (psi, _) = best_cyclic_state(problem, control)?;
            Ok(problem.with_psi0(psi))
        }
        _ => Ok(problem.clone()),
    }
}

/// Runs one subcommand and writes its artifacts and manifest.
pub fn run(cmd: Subcommand, cfg: &ExperimentConfig, flags: &RunFlags) -> Result<RunOutcome, Error> {
    let started = unix_now();
    let out_dir = flags.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let mut out = Outputs::new(out_dir);
    let hash = cfg.hash();
    let mut seed = None;
    let mut rng = None;
    let outcome = match cmd {
        Subcommand::Simulate => run_simulate(cfg, &hash, &mut out)?,
        Subcommand::Optimize => run_optimize(cfg, &hash, flags, &mut out)?,
        Subcommand::Scan => run_scan(cfg, &mut out)?,
        Subcommand::Noise => {
            let s = flags.seed.unwrap_or(cfg.noise.seed);
            seed = Some(s);
            rng = Some(RNG_ALGORITHM.to_string());
            run_noise(cfg, s, &mut out)?
        }
        Subcommand::PhaseReport => run_phase_report(cfg, &mut out)?,
    };
    out.text("config.cfg", &cfg.serialize())?;
    let manifest = RunManifest {
        tool: "aaphase".into(),
        version: TOOL_VERSION.into(),
        subcommand: cmd.name().into(),
        config_hash: hash,
        started_unix: started,
        finished_unix: unix_now(),
        seed,
        rng,
        files: out.files.clone(),
    };
    let path = out.dir.join("manifest.json");
    write_atomic(&path, &to_json(&manifest, &path)?)?;
    Ok(outcome)
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn run_simulate(
    cfg: &ExperimentConfig,
    hash: &str,
    out: &mut Outputs,
) -> Result<RunOutcome, Error> {
    let problem = build_problem(cfg)?;
    let control = initial_control(cfg)?;
    let problem = resolve_initial_state(cfg, &problem, &control)?;
    let record = problem.integrate(&control)?;
    let result = finish_record(hash, &problem, &control, &record, out)?;
    Ok(RunOutcome::Simulate(result))
}

fn finish_record(
    hash: &str,
    problem: &ControlProblem<f64>,
    control: &ControlSignal<f64>,
    record: &TrajectoryRecord<f64>,
    out: &mut Outputs,
) -> Result<RunResult, Error> {
    let report = phase_report(record)?;
    for kind in [
        PlotKind::Trajectory,
        PlotKind::Occupations,
        PlotKind::Phases,
    ] {
        for (name, body) in plot_data(PlotSource::Record(record), kind)? {
            out.text(&name, &body)?;
        }
    }
    out.text("control.csv", &control_csv(control))?;
    out.json("report.json", &report)?;
    let result = RunResult {
        config_hash: hash.into(),
        r0: problem.r0,
        psi0: problem.psi0,
        control: control.clone(),
        report,
    };
    out.json("result.json", &result)?;
    Ok(result)
}

fn run_optimize(
    cfg: &ExperimentConfig,
    hash: &str,
    flags: &RunFlags,
    out: &mut Outputs,
) -> Result<RunOutcome, Error> {
    let resume = flags.resume.as_deref();
    let base = build_problem(cfg)?;
    let (problem, start) = match resume {
        Some(path) => {
            let ck: OptimizeCheckpoint = read_json(path)?;
            if ck.config_hash != hash {
                return Err(Error::Artifact(format!(
                    "{} was written for config {}, not {hash}",
                    path.display(),
                    ck.config_hash
                )));
            }
            (base.with_psi0(ck.psi0), ck.descent)
        }
        None => {
            let control = initial_control(cfg)?;
            let problem = resolve_initial_state(cfg, &base, &control)?;
            let start = DescentCheckpoint {
                control,
                history: Vec::new(),
                step: cfg.optimizer.initial_step,
                converged: false,
            };
            (problem, start)
        }
    };
    let ck_path = out.dir.join("checkpoint.json");
    let psi0 = problem.psi0;
    let mut observer = |c: &DescentCheckpoint<f64>| {
        if flags.progress {
            if let Some(h) = c.history.last() {
                eprintln!(
                    "iter {:4}  objective {:.9e}  |grad| {:.3e}  step {:.3e} um",
                    h.iteration, h.breakdown.total, h.gradient_norm, h.step
                );
            }
        }
        let ck = OptimizeCheckpoint {
            config_hash: hash.into(),
            psi0,
            descent: c.clone(),
        };
        write_atomic(&ck_path, &to_json(&ck, &ck_path)?)
    };
    let result = if start.history.is_empty() && resume.is_none() {
        descend(&problem, &start.control, &cfg.optimizer, &mut observer)?
    } else {
        descend_from(&problem, start, &cfg.optimizer, &mut observer)?
    };
    out.json(
        "checkpoint.json",
        &OptimizeCheckpoint {
            config_hash: hash.into(),
            psi0,
            descent: DescentCheckpoint {
                control: result.control.clone(),
                history: result.history.clone(),
                step: 0.0,
                converged: result.converged,
            },
        },
    )?;
    out.text("iterations.csv", &iterations_csv(&result.history))?;
    let run = finish_record(hash, &problem, &result.control, &result.record, out)?;
    Ok(RunOutcome::Optimize {
        result: run,
        history: result.history,
        converged: result.converged,
    })
}

/// Problem used by the scan: config weights with the scan overrides.
pub fn scan_problem(cfg: &ExperimentConfig) -> Result<ControlProblem<f64>, Error> {
    let mut p = build_problem(cfg)?;
    if let Some(v) = cfg.scan.chi_r {
        p.weights.chi_r = v;
    }
    if let Some(v) = cfg.scan.chi_p {
        p.weights.chi_p = v;
    }
    Ok(p)
}

/// Runs the circle scan and ranks the reference cell, without writing files.
pub fn scan(cfg: &ExperimentConfig) -> Result<(ScanResult, ScanSummary), Error> {
    let problem = scan_problem(cfg)?;
    let geometry = CircleGeometry {
        anchor: cfg.geometry.b,
        direction: cfg.scan.direction,
        counter_clockwise: cfg.scan.counter_clockwise,
    };
    let initial = match cfg.initial_state {
        InitialChoice::Cyclic => InitialState::Cyclic,
        _ => InitialState::Fixed(problem.psi0),
    };
    let (t, n) = (cfg.horizon.duration, cfg.horizon.samples);
    let [r0, r1, rs] = cfg.scan.r;
    let [d0, d1, ds] = cfg.scan.d;
    let result = circle_scan(
        &problem,
        &geometry,
        initial,
        &grid(r0, r1, rs),
        &grid(d0, d1, ds),
        t,
        n,
    )?;
    let reference = match cfg.scan.reference {
        Some([r, d]) => {
            let existing = result
                .entries
                .iter()
                .find(|e| (e.r - r).abs() < 1e-9 && (e.d - d).abs() < 1e-9)
                .map(|e| e.objective);
            let objective = match existing {
                Some(v) => v,
                None => circle_objective(&problem, &geometry, initial, r, d, t, n)?,
            };
            Some(crate::optimal::ScanEntry { r, d, objective })
        }
        None => None,
    };
    let summary = ScanSummary {
        best: result.best,
        finite_entries: result
            .entries
            .iter()
            .filter(|e| e.objective.is_finite())
            .count(),
        reference_rank: reference.map(|e| result.rank_fraction(e.objective)),
        reference,
    };
    Ok((result, summary))
}

fn run_scan(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<RunOutcome, Error> {
    let (result, summary) = scan(cfg)?;
    let mut csv = String::from("r_um,d_um,objective\n");
    for e in &result.entries {
        let _ = writeln!(csv, "{},{},{}", num(e.r), num(e.d), num(e.objective));
    }
    out.text("scan.csv", &csv)?;
    out.json("scan_summary.json", &summary)?;
    Ok(RunOutcome::Scan(result, summary))
}

/// Previous run's result named by `input.result`.
pub fn load_input(cfg: &ExperimentConfig) -> Result<RunResult, Error> {
    let path = cfg.input.as_ref().ok_or_else(|| {
        Error::Artifact("this subcommand needs input.result pointing at a result.json".into())
    })?;
    let r: RunResult = read_json(path)?;
    if r.control.intervals() != cfg.horizon.samples {
        return Err(Error::Artifact(format!(
            "{} has {} control intervals, config expects {}",
            path.display(),
            r.control.intervals(),
            cfg.horizon.samples
        )));
    }
    Ok(r)
}

pub fn noise_params(cfg: &ExperimentConfig, seed: u64) -> NoiseParams {
    NoiseParams {
        bath_temperature: cfg.noise.temperature,
        lambda: cfg.noise.lambda,
        seed,
        n_realizations: cfg.noise.realizations,
        escape_radius: cfg.noise.escape_radius,
    }
}

fn run_noise(cfg: &ExperimentConfig, seed: u64, out: &mut Outputs) -> Result<RunOutcome, Error> {
    let input = load_input(cfg)?;
    let mut problem = build_problem(cfg)?;
    problem.r0 = input.r0;
    problem.psi0 = input.psi0;
    let stats = run_ensemble(
        &problem.system,
        &problem.initial_state(),
        &input.control,
        &noise_params(cfg, seed),
        cfg.horizon.dt,
    )?;
    out.json("noise.json", &stats)?;
    let mut csv = String::from("index,eps1_um,eps2_um,separability,gamma_g_deg,gamma_d_deg\n");
    for r in &stats.rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            r.index,
            num(r.eps1),
            num(r.eps2),
            num(r.separability),
            num(r.gamma_g),
            num(r.gamma_d)
        );
    }
    out.text("noise_realizations.csv", &csv)?;
    for (name, body) in plot_data(PlotSource::Noise(&stats), PlotKind::Histograms)? {
        out.text(&name, &body)?;
    }
    Ok(RunOutcome::Noise(stats))
}

fn run_phase_report(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<RunOutcome, Error> {
    let input = load_input(cfg)?;
    let mut problem = build_problem(cfg)?;
    problem.r0 = input.r0;
    problem.psi0 = input.psi0;
    let record = integrate(
        &problem.system,
        &problem.initial_state(),
        &input.control,
        &IntegratorOptions::new(cfg.horizon.dt),
    )?;
    let report = phase_report(&record)?;
    out.json("report.json", &report)?;
    Ok(RunOutcome::PhaseReport(report))
}

/// Plot-data families.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlotKind {
    Trajectory,
    Occupations,
    Phases,
    Histograms,
}

pub enum PlotSource<'a> {
    Record(&'a TrajectoryRecord<f64>),
    Noise(&'a NoiseStats),
}

/// Columnar plot files as `(file name, contents)`.
pub fn plot_data(source: PlotSource<'_>, kind: PlotKind) -> Result<Vec<(String, String)>, Error> {
    match (source, kind) {
        (PlotSource::Record(rec), PlotKind::Trajectory) => {
            Ok(vec![("trajectory.csv".into(), trajectory_csv(rec))])
        }
        (PlotSource::Record(rec), PlotKind::Occupations) => {
            Ok(vec![("occupations.csv".into(), occupations_csv(rec))])
        }
        (PlotSource::Record(rec), PlotKind::Phases) => {
            Ok(vec![("phases.csv".into(), phases_csv(rec))])
        }
        (PlotSource::Noise(stats), PlotKind::Histograms) => Ok(stats
            .summary
            .iter()
            .map(|q| {
                let mut s = format!("bin_low_{0},bin_high_{0},count\n", q.unit);
                for (k, c) in q.histogram.counts.iter().enumerate() {
                    let _ = writeln!(
                        s,
                        "{},{},{c}",
                        num(q.histogram.edges[k]),
                        num(q.histogram.edges[k + 1])
                    );
                }
                (format!("histogram_{}.csv", q.name), s)
            })
            .collect()),
        (PlotSource::Record(_), k) => Err(Error::Artifact(format!(
            "{k:?} plot data needs a noise ensemble, got a trajectory record"
        ))),
        (PlotSource::Noise(_), k) => Err(Error::Artifact(format!(
            "{k:?} plot data needs a trajectory record, got a noise ensemble"
        ))),
    }
}

/// Full round-trip precision: 17 significant digits.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn row_indices(n: usize) -> impl Iterator<Item = usize> {
    let stride = n.saturating_sub(1).div_ceil(MAX_PLOT_ROWS - 1).max(1);
    (0..n).step_by(stride).chain(
        // always include the final sample
        std::iter::once(n - 1).filter(move |&last| last % stride != 0),
    )
}

fn trajectory_csv(rec: &TrajectoryRecord<f64>) -> String {
    let mut s = String::from(
        "t_us,x1_um,y1_um,x2_um,y2_um,px1_hbar_per_um,py1_hbar_per_um,px2_hbar_per_um,py2_hbar_per_um,ux_um,uy_um,energy_rad_per_us\n",
    );
    for k in row_indices(rec.len()) {
        let st = &rec.states[k];
        let cols = [
            rec.times[k],
            st.r[0][0],
            st.r[0][1],
            st.r[1][0],
            st.r[1][1],
            st.p[0][0],
            st.p[0][1],
            st.p[1][0],
            st.p[1][1],
            rec.controls[k][0],
            rec.controls[k][1],
            rec.energy[k],
        ];
        push_row(&mut s, &cols);
    }
    s
}

fn occupations_csv(rec: &TrajectoryRecord<f64>) -> String {
    let mut s = String::from("t_us,p_dd,p_pf1,p_pf2,p_pf3\n");
    for k in row_indices(rec.len()) {
        let psi = &rec.states[k].psi;
        let cols = [
            rec.times[k],
            psi[0].norm_sqr(),
            psi[1].norm_sqr(),
            psi[2].norm_sqr(),
            psi[3].norm_sqr(),
        ];
        push_row(&mut s, &cols);
    }
    s
}

fn phases_csv(rec: &TrajectoryRecord<f64>) -> String {
    let mut s = String::from(
        "t_us,gamma_dynamical_deg,gamma_total_deg,gamma_geometric_deg,overlap_modulus\n",
    );
    let psi0 = rec.initial().psi;
    for k in row_indices(rec.len()) {
        let ov = inner(&psi0, &rec.states[k].psi);
        let gd = to_degrees(rec.dynamical_phase[k]);
        let gt = to_degrees(ov.arg());
        let cols = [rec.times[k], gd, gt, wrap_degrees(gt - gd), ov.norm()];
        push_row(&mut s, &cols);
    }
    s
}

fn push_row(s: &mut String, cols: &[f64]) {
    let row: Vec<String> = cols.iter().map(|v| num(*v)).collect();
    s.push_str(&row.join(","));
    s.push('\n');
}

fn iterations_csv(history: &[IterationLog]) -> String {
    let mut s = String::from(
        "iteration,term_i,term_ii,term_iii,term_iv,cost_k,total,gradient_norm,step_um,backtracks\n",
    );
    for h in history {
        let b = &h.breakdown;
        let vals: Vec<String> = [
            b.term_i,
            b.term_ii,
            b.term_iii,
            b.term_iv,
            b.cost_k,
            b.total,
            h.gradient_norm,
            h.step,
        ]
        .iter()
        .map(|v| num(*v))
        .collect();
        let _ = writeln!(s, "{},{},{}", h.iteration, vals.join(","), h.backtracks);
    }
    s
}

pub fn control_csv(c: &ControlSignal<f64>) -> String {
    let mut s = String::from("t_us,ux_um,uy_um\n");
    for (k, t) in c.times().iter().enumerate() {
        push_row(&mut s, &[*t, c.ux[k], c.uy[k]]);
    }
    s
}

/// Reads a control written by [`control_csv`].
pub fn read_control_csv(path: &Path) -> Result<ControlSignal<f64>, Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize, m: &str| Error::Artifact(format!("{}:{line}: {m}", path.display()));
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "t_us,ux_um,uy_um" => {}
        _ => return Err(bad(1, "expected header t_us,ux_um,uy_um")),
    }
    let (mut t, mut ux, mut uy) = (Vec::new(), Vec::new(), Vec::new());
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let v: Vec<f64> = line
            .split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad(i + 1, "non-numeric field"))?;
        if v.len() != 3 {
            return Err(bad(i + 1, "expected 3 columns"));
        }
        t.push(v[0]);
        ux.push(v[1]);
        uy.push(v[2]);
    }
    let duration = *t.last().ok_or_else(|| bad(2, "no samples"))?;
    ControlSignal::new(duration, ux, uy)
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn new(dir: PathBuf) -> Self {
        Self {
            dir,
            files: Vec::new(),
        }
    }

    fn text(&mut self, name: &str, body: &str) -> Result<(), Error> {
        write_atomic(&self.dir.join(name), body)?;
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(())
    }

    fn json<S: Serialize>(&mut self, name: &str, value: &S) -> Result<(), Error> {
        let path = self.dir.join(name);
        let body = to_json(value, &path)?;
        self.text(name, &body)
    }
}

fn to_json<S: Serialize>(value: &S, path: &Path) -> Result<String, Error> {
    serde_json::to_string_pretty(value)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
}

pub fn read_json<D: DeserializeOwned>(path: &Path) -> Result<D, Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Write to a sibling temp file, then rename.
fn write_atomic(path: &Path, body: &str) -> Result<(), Error> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, body).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_indices_cover_both_ends() {
        let v: Vec<usize> = row_indices(10).collect();
        assert_eq!(v, (0..10).collect::<Vec<_>>());
        let v: Vec<usize> = row_indices(30001).collect();
        assert_eq!(v.first(), Some(&0));
        assert_eq!(v.last(), Some(&30000));
        assert!(v.len() <= MAX_PLOT_ROWS + 1);
        let v: Vec<usize> = row_indices(3003).collect();
        assert_eq!(v.last(), Some(&3002));
    }

    #[test]
    fn ellipse_with_equal_axes_is_the_circle() {
        let g = CircleGeometry {
            anchor: [0.5, -1.0],
            direction: [0.6, 0.8],
            counter_clockwise: false,
        };
        let a = ellipse_control(&g, 11.0, 4.0, 4.0, 30.0, 60);
        let b = g.control(4.0, 11.0, 30.0, 60);
        for k in 0..=60 {
            assert!((a.ux[k] - b.ux[k]).abs() < 1e-12 && (a.uy[k] - b.uy[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn control_csv_round_trip() {
        let c = ControlSignal::from_fn(3.0, 30, |t: f64| [t.sin() / 3.0, 1.0 + t * 0.1]);
        let dir = std::env::temp_dir().join(format!("aaphase-ctl-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let p = dir.join("c.csv");
        fs::write(&p, control_csv(&c)).unwrap();
        let back = read_control_csv(&p).unwrap();
        assert_eq!(back.ux, c.ux);
        assert_eq!(back.uy, c.uy);
        assert!((back.duration - 3.0).abs() < 1e-15);
        fs::remove_dir_all(&dir).unwrap();
    }
}
