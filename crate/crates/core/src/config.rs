//! Experiment configuration: a `key = value unit` text format.
//!
//! ```text
//! # P1 protocol
//! trap.mobile_depth = 10 mK
//! geometry.a = 0, 19 um
//! ```
//!
//! Values are converted to canonical units on load (µm, µs, K, GHz·µm³,
//! 1/ms) and written back in those units, so `parse(serialize(c)) == c`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::Error;
use crate::optimal::{AdjointPairing, DescentMethod, DescentOptions, PhaseTerm, Weights};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Dim {
    Length,
    Time,
    Temperature,
    Coupling,
    Rate,
    Pure,
}

impl Dim {
    fn canonical(self) -> &'static str {
        match self {
            Dim::Length => "um",
            Dim::Time => "us",
            Dim::Temperature => "K",
            Dim::Coupling => "GHz*um^3",
            Dim::Rate => "/ms",
            Dim::Pure => "",
        }
    }

    fn scale(self, unit: &str) -> Option<f64> {
        let u = unit.replace('µ', "u").replace(' ', "*");
        Some(match (self, u.as_str()) {
            (Dim::Pure, "") => 1.0,
            (Dim::Length, "um") => 1.0,
            (Dim::Length, "nm") => 1e-3,
            (Dim::Length, "mm") => 1e3,
            (Dim::Time, "us") => 1.0,
            (Dim::Time, "ns") => 1e-3,
            (Dim::Time, "ms") => 1e3,
            (Dim::Temperature, "K") => 1.0,
            (Dim::Temperature, "mK") => 1e-3,
            (Dim::Temperature, "uK") => 1e-6,
            (Dim::Coupling, "GHz*um^3") => 1.0,
            (Dim::Coupling, "MHz*um^3") => 1e-3,
            (Dim::Rate, "/ms" | "1/ms") => 1.0,
            (Dim::Rate, "/us" | "1/us") => 1e3,
            (Dim::Rate, "/s" | "1/s") => 1e-3,
            _ => return None,
        })
    }
}

/// Which internal state the run starts from.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialChoice {
    /// One of the pair-basis states, by index.
    Basis(usize),
    /// Explicit amplitudes (normalized on load).
    Amplitudes([f64; 8]),
    /// Lowest-objective eigenvector of the initial control's cycle
    /// propagator.
    Cyclic,
}

/// How the initial control of `simulate`/`optimize` is built.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialControl {
    /// Tweezer parked at the start position.
    Constant,
    /// One uniform revolution through the start position, centred on the
    /// line towards the static atom: semi-axis `radius` along that line and
    /// `transverse` across it (a circle when they are equal).
    Ellipse {
        radius: f64,
        transverse: f64,
        counter_clockwise: bool,
    },
    /// Control samples read from a CSV written by an earlier run.
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhysicsConfig {
    /// GHz·µm³
    pub c3: f64,
    pub species: String,
    pub quantization_axis: [f64; 2],
    /// µm
    pub guard: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrapConfig {
    /// K
    pub mobile_depth: f64,
    /// K
    pub static_depth: f64,
    /// µm
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeometryConfig {
    /// Start of the travelling atom, µm.
    pub a: [f64; 2],
    /// Static atom, µm.
    pub b: [f64; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub struct HorizonConfig {
    /// µs
    pub duration: f64,
    /// µs
    pub dt: f64,
    /// Control intervals `N` (samples are `N + 1`).
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveConfig {
    pub weights: Weights<f64>,
    pub phase_term: PhaseTerm,
    pub separability: bool,
    pub pairing: AdjointPairing,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanConfig {
    /// µm, inclusive
    pub r: [f64; 3],
    /// µm, inclusive
    pub d: [f64; 3],
    /// Unit vector from the static atom towards the circle centres.
    pub direction: [f64; 2],
    pub counter_clockwise: bool,
    /// Extra `(r, d)` point ranked against the table, µm.
    pub reference: Option<[f64; 2]>,
    /// Weight overrides used only while scanning.
    pub chi_r: Option<f64>,
    pub chi_p: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseConfig {
    /// K
    pub temperature: f64,
    /// 1/ms
    pub lambda: f64,
    pub realizations: usize,
    pub seed: u64,
    /// µm
    pub escape_radius: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub name: String,
    pub physics: PhysicsConfig,
    pub trap: TrapConfig,
    pub geometry: GeometryConfig,
    pub horizon: HorizonConfig,
    pub initial_state: InitialChoice,
    pub initial_control: InitialControl,
    pub objective: ObjectiveConfig,
    pub optimizer: DescentOptions,
    pub scan: ScanConfig,
    pub noise: NoiseConfig,
    /// Result JSON of an earlier `optimize`/`simulate` run, used by `noise`
    /// and `phase-report`.
    pub input: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            name: "run".into(),
            physics: PhysicsConfig {
                c3: 2.39,
                species: "rb87".into(),
                quantization_axis: [0.0, 1.0],
                guard: 1.0,
            },
            trap: TrapConfig {
                mobile_depth: 10e-3,
                static_depth: 4e-3,
                sigma: 2.0,
            },
            geometry: GeometryConfig {
                a: [0.0, 19.0],
                b: [0.0, 0.0],
            },
            horizon: HorizonConfig {
                duration: 30.0,
                dt: 1e-3,
                samples: 300,
            },
            initial_state: InitialChoice::Basis(0),
            initial_control: InitialControl::Constant,
            objective: ObjectiveConfig {
                weights: Weights::default(),
                phase_term: PhaseTerm::Dynamical,
                separability: true,
                pairing: AdjointPairing::MomentumCostate,
            },
            optimizer: DescentOptions::default(),
            scan: ScanConfig {
                r: [4.0, 10.0, 0.5],
                d: [8.0, 16.0, 0.5],
                direction: [0.0, 1.0],
                counter_clockwise: true,
                reference: None,
                chi_r: None,
                chi_p: None,
            },
            noise: NoiseConfig {
                temperature: 1e-4,
                lambda: 5e-2,
                realizations: 200,
                seed: 1,
                escape_radius: None,
            },
            input: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

const BASIS_NAMES: [&str; 4] = ["dd", "pf1", "pf2", "pf3"];

struct Line<'a> {
    path: &'a str,
    no: usize,
    key: &'a str,
    value: &'a str,
}

impl Line<'_> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Config {
            path: self.path.into(),
            line: self.no,
            message: format!("{}: {}", self.key, message.into()),
        }
    }

    /// Splits `"1, 2 um"` into numbers and a unit suffix.
    fn numbers(&self, dim: Dim) -> Result<Vec<f64>, Error> {
        let mut parts: Vec<&str> = self.value.split(',').map(str::trim).collect();
        let last = parts.pop().unwrap_or("");
        let (num, unit) = match last.find(char::is_whitespace) {
            Some(i) => (last[..i].trim(), last[i..].trim()),
            None => (last, ""),
        };
        parts.push(num);
        let scale = dim.scale(unit).ok_or_else(|| {
            if dim == Dim::Pure {
                self.err(format!("unexpected unit '{unit}'"))
            } else {
                self.err(format!(
                    "unit '{unit}' does not match the expected dimension (e.g. {})",
                    dim.canonical()
                ))
            }
        })?;
        parts
            .iter()
            .map(|p| {
                p.parse::<f64>()
                    .map_err(|_| self.err(format!("'{p}' is not a number")))
                    .and_then(|v| {
                        if v.is_finite() {
                            Ok(v * scale)
                        } else {
                            Err(self.err("value must be finite"))
                        }
                    })
            })
            .collect()
    }

    fn scalar(&self, dim: Dim) -> Result<f64, Error> {
        match self.numbers(dim)?.as_slice() {
            [v] => Ok(*v),
            v => Err(self.err(format!("expected one value, got {}", v.len()))),
        }
    }

    fn vector<const N: usize>(&self, dim: Dim) -> Result<[f64; N], Error> {
        let v = self.numbers(dim)?;
        v.as_slice()
            .try_into()
            .map_err(|_| self.err(format!("expected {N} values, got {}", v.len())))
    }

    fn positive(&self, dim: Dim) -> Result<f64, Error> {
        let v = self.scalar(dim)?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(self.err("must be positive"))
        }
    }

    fn non_negative(&self, dim: Dim) -> Result<f64, Error> {
        let v = self.scalar(dim)?;
        if v >= 0.0 {
            Ok(v)
        } else {
            Err(self.err("must be >= 0"))
        }
    }

    fn integer(&self) -> Result<u64, Error> {
        self.value
            .parse::<u64>()
            .map_err(|_| self.err(format!("'{}' is not a non-negative integer", self.value)))
    }

    fn boolean(&self) -> Result<bool, Error> {
        match self.value {
            "true" => Ok(true),
            "false" => Ok(false),
            v => Err(self.err(format!("'{v}' is not true/false"))),
        }
    }

    fn choice<T: Copy>(&self, options: &[(&str, T)]) -> Result<T, Error> {
        options
            .iter()
            .find(|(n, _)| *n == self.value)
            .map(|(_, v)| *v)
            .ok_or_else(|| {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                self.err(format!(
                    "'{}' is not one of {}",
                    self.value,
                    names.join(", ")
                ))
            })
    }
}

const PHASE_TERMS: [(&str, PhaseTerm); 2] = [
    ("dynamical", PhaseTerm::Dynamical),
    ("geometric", PhaseTerm::Geometric),
];
const PAIRINGS: [(&str, AdjointPairing); 2] = [
    ("momentum_costate", AdjointPairing::MomentumCostate),
    ("position_costate", AdjointPairing::PositionCostate),
];
const METHODS: [(&str, DescentMethod); 3] = [
    ("gradient", DescentMethod::Gradient),
    ("nesterov", DescentMethod::Nesterov),
    ("lbfgs", DescentMethod::Lbfgs),
];

fn name_of<T: PartialEq + Copy>(options: &[(&'static str, T)], v: T) -> &'static str {
    options
        .iter()
        .find(|(_, x)| *x == v)
        .map(|(n, _)| *n)
        .expect("listed")
}

impl ExperimentConfig {
    /// Loads and validates a config file. Relative paths inside it resolve
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.check_files(&path.display().to_string())?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.input.as_mut() {
            fix(p);
        }
        if let InitialControl::File(p) = &mut self.initial_control {
            fix(p);
        }
        fix(&mut self.output_dir);
    }

    fn check_files(&self, origin: &str) -> Result<(), Error> {
        let mut files: Vec<&PathBuf> = self.input.iter().collect();
        if let InitialControl::File(p) = &self.initial_control {
            files.push(p);
        }
        for f in files {
            if !f.exists() {
                return Err(Error::Config {
                    path: origin.into(),
                    line: 0,
                    message: format!("referenced file {} does not exist", f.display()),
                });
            }
        }
        Ok(())
    }

    /// Parses config text; `origin` labels diagnostics.
    pub fn parse(text: &str, origin: &str) -> Result<Self, Error> {
        let mut c = Self::default();
        let mut seen = BTreeSet::new();
        let mut circle_radius: Option<f64> = None;
        let mut transverse: Option<f64> = None;
        let mut circle_ccw = true;
        let mut control_kind: Option<(String, usize)> = None;
        let mut control_file: Option<PathBuf> = None;
        let mut state_kind: Option<(String, usize)> = None;
        let mut amplitudes: Option<[f64; 8]> = None;
        for (i, raw) in text.lines().enumerate() {
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(Error::Config {
                    path: origin.into(),
                    line: i + 1,
                    message: format!("expected 'key = value', got '{content}'"),
                });
            };
            let l = Line {
                path: origin,
                no: i + 1,
                key: key.trim(),
                value: value.trim(),
            };
            if !seen.insert(l.key.to_string()) {
                return Err(l.err("duplicate key"));
            }
            let w = &mut c.objective.weights;
            match l.key {
                "schema_version" => {
                    let v = l.integer()?;
                    if v != u64::from(SCHEMA_VERSION) {
                        return Err(l.err(format!("unsupported schema version {v}")));
                    }
                }
                "name" => c.name = l.value.to_string(),
                "physics.c3" => c.physics.c3 = l.scalar(Dim::Coupling)?,
                "physics.species" => {
                    if l.value != "rb87" {
                        return Err(l.err(format!("unknown species '{}'", l.value)));
                    }
                    c.physics.species = l.value.into();
                }
                "physics.quantization_axis" => {
                    let v = l.vector::<2>(Dim::Pure)?;
                    if v[0].hypot(v[1]) == 0.0 {
                        return Err(l.err("axis must be non-zero"));
                    }
                    c.physics.quantization_axis = v;
                }
                "physics.guard" => c.physics.guard = l.non_negative(Dim::Length)?,
                "trap.mobile_depth" => c.trap.mobile_depth = l.positive(Dim::Temperature)?,
                "trap.static_depth" => c.trap.static_depth = l.positive(Dim::Temperature)?,
                "trap.sigma" => c.trap.sigma = l.positive(Dim::Length)?,
                "geometry.a" => c.geometry.a = l.vector(Dim::Length)?,
                "geometry.b" => c.geometry.b = l.vector(Dim::Length)?,
                "horizon.duration" => c.horizon.duration = l.positive(Dim::Time)?,
                "horizon.dt" => c.horizon.dt = l.positive(Dim::Time)?,
                "horizon.samples" => {
                    let n = l.integer()? as usize;
                    if n < 2 {
                        return Err(l.err("need at least 2 control intervals"));
                    }
                    c.horizon.samples = n;
                }
                "state.initial" => state_kind = Some((l.value.to_string(), l.no)),
                "state.amplitudes" => amplitudes = Some(l.vector(Dim::Pure)?),
                "control.initial" => control_kind = Some((l.value.to_string(), l.no)),
                "control.radius" => circle_radius = Some(l.positive(Dim::Length)?),
                "control.transverse_radius" => transverse = Some(l.positive(Dim::Length)?),
                "control.counter_clockwise" => circle_ccw = l.boolean()?,
                "control.file" => control_file = Some(PathBuf::from(l.value)),
                "weights.chi_r" => w.chi_r = l.non_negative(Dim::Pure)?,
                "weights.chi_p" => w.chi_p = l.non_negative(Dim::Pure)?,
                "weights.chi_psi" => w.chi_psi = l.non_negative(Dim::Pure)?,
                "weights.chi_dy" => w.chi_dy = l.non_negative(Dim::Pure)?,
                "weights.nu_x" => w.nu_x = l.positive(Dim::Pure)?,
                "weights.nu_y" => w.nu_y = l.positive(Dim::Pure)?,
                "objective.phase_term" => c.objective.phase_term = l.choice(&PHASE_TERMS)?,
                "objective.separability" => c.objective.separability = l.boolean()?,
                "objective.pairing" => c.objective.pairing = l.choice(&PAIRINGS)?,
                "optimizer.method" => c.optimizer.method = l.choice(&METHODS)?,
                "optimizer.max_iterations" => c.optimizer.max_iterations = l.integer()? as usize,
                "optimizer.gradient_tol" => c.optimizer.gradient_tol = l.non_negative(Dim::Pure)?,
                "optimizer.initial_step" => c.optimizer.initial_step = l.positive(Dim::Length)?,
                "optimizer.armijo_c" => c.optimizer.armijo_c = l.positive(Dim::Pure)?,
                "optimizer.backtrack" => {
                    let v = l.positive(Dim::Pure)?;
                    if v >= 1.0 {
                        return Err(l.err("must be below 1"));
                    }
                    c.optimizer.backtrack = v;
                }
                "optimizer.max_backtracks" => c.optimizer.max_backtracks = l.integer()? as usize,
                "optimizer.lbfgs_memory" => c.optimizer.lbfgs_memory = l.integer()?.max(1) as usize,
                "optimizer.pin_endpoints" => c.optimizer.pin_endpoints = l.boolean()?,
                "scan.r" => c.scan.r = range(&l)?,
                "scan.d" => c.scan.d = range(&l)?,
                "scan.direction" => {
                    let v = l.vector::<2>(Dim::Pure)?;
                    let n = v[0].hypot(v[1]);
                    if n == 0.0 {
                        return Err(l.err("direction must be non-zero"));
                    }
                    c.scan.direction = [v[0] / n, v[1] / n];
                }
                "scan.counter_clockwise" => c.scan.counter_clockwise = l.boolean()?,
                "scan.reference" => c.scan.reference = Some(l.vector(Dim::Length)?),
                "scan.chi_r" => c.scan.chi_r = Some(l.non_negative(Dim::Pure)?),
                "scan.chi_p" => c.scan.chi_p = Some(l.non_negative(Dim::Pure)?),
                "noise.temperature" => c.noise.temperature = l.non_negative(Dim::Temperature)?,
                "noise.lambda" => c.noise.lambda = l.non_negative(Dim::Rate)?,
                "noise.realizations" => {
                    let n = l.integer()? as usize;
                    if n == 0 {
                        return Err(l.err("need at least one realization"));
                    }
                    c.noise.realizations = n;
                }
                "noise.seed" => c.noise.seed = l.integer()?,
                "noise.escape_radius" => c.noise.escape_radius = Some(l.positive(Dim::Length)?),
                "input.result" => c.input = Some(PathBuf::from(l.value)),
                "output.dir" => c.output_dir = PathBuf::from(l.value),
                _ => return Err(l.err("unknown key")),
            }
        }
        let at = |line: usize, message: String| Error::Config {
            path: origin.into(),
            line,
            message,
        };
        c.initial_state = match state_kind {
            None => InitialChoice::Basis(0),
            Some((k, line)) => match k.as_str() {
                "cyclic" => InitialChoice::Cyclic,
                "amplitudes" => {
                    let a = amplitudes.ok_or_else(|| {
                        at(line, "state.initial: 'amplitudes' needs state.amplitudes".into())
                    })?;
                    let n = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if n == 0.0 {
                        return Err(at(line, "state.amplitudes: zero vector".into()));
                    }
                    InitialChoice::Amplitudes(a.map(|x| x / n))
                }
                name => match BASIS_NAMES.iter().position(|b| *b == name) {
                    Some(i) => InitialChoice::Basis(i),
                    None => {
                        return Err(at(
                            line,
                            format!("state.initial: unknown state '{name}' (dd, pf1, pf2, pf3, cyclic, amplitudes)"),
                        ))
                    }
                },
            },
        };
        c.initial_control = match control_kind {
            None => InitialControl::Constant,
            Some((k, line)) => match k.as_str() {
                "constant" => InitialControl::Constant,
                "ellipse" => {
                    let radius = circle_radius.ok_or_else(|| {
                        at(
                            line,
                            "control.initial: 'ellipse' needs control.radius".into(),
                        )
                    })?;
                    InitialControl::Ellipse {
                        radius,
                        transverse: transverse.unwrap_or(radius),
                        counter_clockwise: circle_ccw,
                    }
                }
                "file" => InitialControl::File(control_file.ok_or_else(|| {
                    at(line, "control.initial: 'file' needs control.file".into())
                })?),
                other => {
                    return Err(at(
                        line,
                        format!(
                            "control.initial: unknown kind '{other}' (constant, ellipse, file)"
                        ),
                    ))
                }
            },
        };
        c.validate(origin)?;
        Ok(c)
    }

    fn validate(&self, origin: &str) -> Result<(), Error> {
        let fail = |m: String| Error::Config {
            path: origin.into(),
            line: 0,
            message: m,
        };
        let spacing = self.horizon.duration / self.horizon.samples as f64;
        let ratio = spacing / self.horizon.dt;
        if (ratio - ratio.round()).abs() > 1e-6 * ratio.max(1.0) || ratio.round() < 1.0 {
            return Err(fail(format!(
                "horizon.dt = {} us does not divide the control spacing {spacing} us",
                self.horizon.dt
            )));
        }
        let sep = (self.geometry.a[0] - self.geometry.b[0])
            .hypot(self.geometry.a[1] - self.geometry.b[1]);
        if sep < self.physics.guard {
            return Err(fail(format!(
                "geometry.a and geometry.b are {sep} um apart, inside the {} um guard",
                self.physics.guard
            )));
        }
        for (name, r) in [("scan.r", self.scan.r), ("scan.d", self.scan.d)] {
            if !(r[2] > 0.0) || r[1] < r[0] {
                return Err(fail(format!("{name}: need start <= stop and step > 0")));
            }
        }
        Ok(())
    }

    /// Canonical text form; loading it yields an identical config.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        let num = |v: f64, dim: Dim| {
            if dim == Dim::Pure {
                format!("{v:?}")
            } else {
                format!("{v:?} {}", dim.canonical())
            }
        };
        let vec2 = |v: [f64; 2], dim: Dim| format!("{:?}, {}", v[0], num(v[1], dim));
        put("schema_version", self.schema_version.to_string());
        put("name", self.name.clone());
        put("physics.c3", num(self.physics.c3, Dim::Coupling));
        put("physics.species", self.physics.species.clone());
        put(
            "physics.quantization_axis",
            vec2(self.physics.quantization_axis, Dim::Pure),
        );
        put("physics.guard", num(self.physics.guard, Dim::Length));
        put(
            "trap.mobile_depth",
            num(self.trap.mobile_depth, Dim::Temperature),
        );
        put(
            "trap.static_depth",
            num(self.trap.static_depth, Dim::Temperature),
        );
        put("trap.sigma", num(self.trap.sigma, Dim::Length));
        put("geometry.a", vec2(self.geometry.a, Dim::Length));
        put("geometry.b", vec2(self.geometry.b, Dim::Length));
        put("horizon.duration", num(self.horizon.duration, Dim::Time));
        put("horizon.dt", num(self.horizon.dt, Dim::Time));
        put("horizon.samples", self.horizon.samples.to_string());
        match &self.initial_state {
            InitialChoice::Basis(i) => put("state.initial", BASIS_NAMES[*i].into()),
            InitialChoice::Cyclic => put("state.initial", "cyclic".into()),
            InitialChoice::Amplitudes(a) => {
                put("state.initial", "amplitudes".into());
                let v: Vec<String> = a.iter().map(|x| format!("{x:?}")).collect();
                put("state.amplitudes", v.join(", "));
            }
        }
        match &self.initial_control {
            InitialControl::Constant => put("control.initial", "constant".into()),
            InitialControl::Ellipse {
                radius,
                transverse,
                counter_clockwise,
            } => {
                put("control.initial", "ellipse".into());
                put("control.radius", num(*radius, Dim::Length));
                put("control.transverse_radius", num(*transverse, Dim::Length));
                put("control.counter_clockwise", counter_clockwise.to_string());
            }
            InitialControl::File(p) => {
                put("control.initial", "file".into());
                put("control.file", p.display().to_string());
            }
        }
        let w = &self.objective.weights;
        put("weights.chi_r", num(w.chi_r, Dim::Pure));
        put("weights.chi_p", num(w.chi_p, Dim::Pure));
        put("weights.chi_psi", num(w.chi_psi, Dim::Pure));
        put("weights.chi_dy", num(w.chi_dy, Dim::Pure));
        put("weights.nu_x", num(w.nu_x, Dim::Pure));
        put("weights.nu_y", num(w.nu_y, Dim::Pure));
        put(
            "objective.phase_term",
            name_of(&PHASE_TERMS, self.objective.phase_term).into(),
        );
        put(
            "objective.separability",
            self.objective.separability.to_string(),
        );
        put(
            "objective.pairing",
            name_of(&PAIRINGS, self.objective.pairing).into(),
        );
        let o = &self.optimizer;
        put("optimizer.method", name_of(&METHODS, o.method).into());
        put("optimizer.max_iterations", o.max_iterations.to_string());
        put("optimizer.gradient_tol", num(o.gradient_tol, Dim::Pure));
        put("optimizer.initial_step", num(o.initial_step, Dim::Length));
        put("optimizer.armijo_c", num(o.armijo_c, Dim::Pure));
        put("optimizer.backtrack", num(o.backtrack, Dim::Pure));
        put("optimizer.max_backtracks", o.max_backtracks.to_string());
        put("optimizer.lbfgs_memory", o.lbfgs_memory.to_string());
        put("optimizer.pin_endpoints", o.pin_endpoints.to_string());
        let r3 = |r: [f64; 3]| format!("{:?}, {:?}, {}", r[0], r[1], num(r[2], Dim::Length));
        put("scan.r", r3(self.scan.r));
        put("scan.d", r3(self.scan.d));
        put("scan.direction", vec2(self.scan.direction, Dim::Pure));
        put(
            "scan.counter_clockwise",
            self.scan.counter_clockwise.to_string(),
        );
        if let Some(r) = self.scan.reference {
            put("scan.reference", vec2(r, Dim::Length));
        }
        if let Some(v) = self.scan.chi_r {
            put("scan.chi_r", num(v, Dim::Pure));
        }
        if let Some(v) = self.scan.chi_p {
            put("scan.chi_p", num(v, Dim::Pure));
        }
        put(
            "noise.temperature",
            num(self.noise.temperature, Dim::Temperature),
        );
        put("noise.lambda", num(self.noise.lambda, Dim::Rate));
        put("noise.realizations", self.noise.realizations.to_string());
        put("noise.seed", self.noise.seed.to_string());
        if let Some(r) = self.noise.escape_radius {
            put("noise.escape_radius", num(r, Dim::Length));
        }
        if let Some(p) = &self.input {
            put("input.result", p.display().to_string());
        }
        put("output.dir", self.output_dir.display().to_string());
        s
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.serialize().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn range(l: &Line) -> Result<[f64; 3], Error> {
    let r = l.vector::<3>(Dim::Length)?;
    if !(r[2] > 0.0) || r[1] < r[0] {
        return Err(l.err("expected 'start, stop, step' with start <= stop and step > 0"));
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "
        # comment
        name = p1
        trap.mobile_depth = 10 mK
        trap.static_depth = 4 mK   # trailing comment
        trap.sigma = 2 um
        geometry.a = 0, 19 um
        horizon.duration = 30 us
        horizon.dt = 1 ns
        noise.lambda = 5e-2 /ms
        state.initial = cyclic
        control.initial = ellipse
        control.radius = 7 um
    ";

    #[test]
    fn parses_units() {
        let c = ExperimentConfig::parse(SAMPLE, "sample").unwrap();
        assert_eq!(c.trap.mobile_depth, 10e-3);
        assert_eq!(c.trap.static_depth, 4e-3);
        assert_eq!(c.horizon.dt, 1e-3);
        assert_eq!(c.geometry.a, [0.0, 19.0]);
        assert_eq!(c.initial_state, InitialChoice::Cyclic);
        assert!(
            matches!(c.initial_control, InitialControl::Ellipse { radius, transverse, .. } if radius == 7.0 && transverse == 7.0)
        );
    }

    #[test]
    fn round_trip() {
        let c = ExperimentConfig::parse(SAMPLE, "sample").unwrap();
        let again = ExperimentConfig::parse(&c.serialize(), "again").unwrap();
        assert_eq!(c, again);
        assert_eq!(c.hash(), again.hash());
    }

    #[test]
    fn rejects_unknown_key_by_name() {
        let err = ExperimentConfig::parse("trap.sigma = 2 um\nsigma_z = 3", "x").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("sigma_z") && msg.contains("x:2"), "{msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "trap.sigma = -2 um",
            "trap.sigma = 2 mK",
            "trap.mobile_depth = 10",
            "weights.chi_r = 5 um",
            "horizon.dt = 0.003 us",
            "trap.sigma = 2 um\ntrap.sigma = 3 um",
            "no equals sign",
        ] {
            assert!(ExperimentConfig::parse(text, "x").is_err(), "{text}");
        }
    }
}
