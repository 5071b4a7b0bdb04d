//! Thermal (Langevin) perturbation of the atomic motion and Monte-Carlo
//! ensembles over it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::ControlSignal;
use crate::dynamics::{
    integrate_with, AtomPairState, IntegratorOptions, PairSystem, StepHook, TrajectoryRecord,
};
use crate::error::Error;
use crate::phase::phase_report;
use crate::scalar::{Real, Vec2};
use crate::units;

/// Name of the random-number generator, recorded in run metadata.
pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha), one stream per realization";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// K
    pub bath_temperature: f64,
    /// 1/ms
    pub lambda: f64,
    pub seed: u64,
    pub n_realizations: usize,
    /// Loss threshold around the nearest trap centre at `t = T` (µm); `None`
    /// means three trap widths.
    pub escape_radius: Option<f64>,
}

impl NoiseParams {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.bath_temperature >= 0.0) || !self.bath_temperature.is_finite() {
            return Err(Error::InvalidArgument(
                "bath temperature must be >= 0".into(),
            ));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidArgument("damping rate must be >= 0".into()));
        }
        if self.n_realizations == 0 {
            return Err(Error::InvalidArgument(
                "need at least one realization".into(),
            ));
        }
        if let Some(r) = self.escape_radius {
            if !(r > 0.0) {
                return Err(Error::InvalidArgument(
                    "escape radius must be positive".into(),
                ));
            }
        }
        Ok(())
    }

    /// Damping rate in 1/µs.
    pub fn lambda_per_us(&self) -> f64 {
        units::per_ms_to_per_us(self.lambda)
    }
}

/// Exact Ornstein–Uhlenbeck update of every momentum component over one
/// step: `p ← p·e^{−λdt} + ξ`, `var ξ = k_B T m (1 − e^{−2λdt})`.
pub struct OrnsteinUhlenbeck<T> {
    decay: T,
    kick: T,
    rng: ChaCha8Rng,
}

impl<T: Real> OrnsteinUhlenbeck<T> {
    /// `lambda` in 1/µs, `kt` in rad/µs, `mass` in internal units.
    pub fn new(lambda: T, kt: T, mass: T, dt: T, rng: ChaCha8Rng) -> Self {
        let decay = (-lambda * dt).exp();
        let kick = (kt * mass * (T::one() - decay * decay)).sqrt();
        Self { decay, kick, rng }
    }

    /// Stream `stream` of the master seed.
    pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        rng
    }
}

impl<T: Real> StepHook<T> for OrnsteinUhlenbeck<T> {
    fn after_step(&mut self, _step: usize, state: &mut AtomPairState<T>) {
        for a in 0..2 {
            for i in 0..2 {
                let xi: f64 = StandardNormal.sample(&mut self.rng);
                state.p[a][i] = state.p[a][i] * self.decay + self.kick * T::lit(xi);
            }
        }
    }
}

/// RK4 step followed by the stochastic momentum update. With `λ = 0` the
/// update is skipped and the result equals [`crate::dynamics::integrate`].
pub fn langevin_integrate<T: Real>(
    system: &PairSystem<T>,
    initial: &AtomPairState<T>,
    control: &ControlSignal<T>,
    noise: &NoiseParams,
    stream: u64,
    dt: T,
) -> Result<TrajectoryRecord<T>, Error> {
    noise.validate()?;
    let opts = IntegratorOptions::new(dt);
    if noise.lambda == 0.0 {
        return integrate_with(
            system,
            initial,
            control,
            &opts,
            &mut crate::dynamics::Deterministic,
        );
    }
    let per = crate::dynamics::steps_per_interval(control, dt)?;
    let step = control.spacing() / T::from_usize_lossy(per);
    let mut hook = OrnsteinUhlenbeck::new(
        T::lit(noise.lambda_per_us()),
        T::lit(units::kelvin_to_rad_per_us(noise.bath_temperature)),
        system.mass,
        step,
        OrnsteinUhlenbeck::<T>::stream(noise.seed, stream),
    );
    integrate_with(system, initial, control, &opts, &mut hook)
}

/// Outcome figures of one realization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealizationRow {
    pub index: usize,
    /// µm
    pub eps1: f64,
    /// µm
    pub eps2: f64,
    pub separability: f64,
    /// degrees
    pub gamma_g: f64,
    /// degrees
    pub gamma_d: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossEvent {
    pub index: usize,
    pub reason: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    /// Sample standard deviation (`n − 1`); 0 for a single sample.
    pub std: f64,
}

impl Moments {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        // Shifted by the first sample so identical samples give exactly 0.
        let x0 = values[0];
        let shift = values.iter().map(|v| v - x0).sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - x0 - shift).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self {
            mean: x0 + shift,
            std,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Freedman–Diaconis bin width `2·IQR·n^{−1/3}`; a single bin when the
    /// spread vanishes.
    pub fn freedman_diaconis(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self {
                edges: vec![],
                counts: vec![],
            };
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let (lo, hi) = (v[0], v[v.len() - 1]);
        let iqr = quantile(&v, 0.75) - quantile(&v, 0.25);
        let width = 2.0 * iqr / (v.len() as f64).cbrt();
        let bins = if width > 0.0 && hi > lo {
            (((hi - lo) / width).ceil() as usize).clamp(1, 1000)
        } else {
            1
        };
        let (lo, hi) = if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, hi + 0.5)
        };
        let step = (hi - lo) / bins as f64;
        let edges: Vec<f64> = (0..=bins).map(|k| lo + step * k as f64).collect();
        let mut counts = vec![0; bins];
        for x in &v {
            let k = (((x - lo) / step).floor() as usize).min(bins - 1);
            counts[k] += 1;
        }
        Self { edges, counts }
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let f = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - f) + sorted[i + 1] * f
    } else {
        sorted[i]
    }
}

/// Moments and histograms of each recorded quantity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantityStats {
    pub name: String,
    pub unit: String,
    pub moments: Moments,
    pub histogram: Histogram,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseStats {
    pub params: NoiseParams,
    pub rng: String,
    pub rows: Vec<RealizationRow>,
    pub losses: Vec<LossEvent>,
    pub summary: Vec<QuantityStats>,
}

impl NoiseStats {
    pub fn from_rows(
        params: NoiseParams,
        rows: Vec<RealizationRow>,
        losses: Vec<LossEvent>,
    ) -> Self {
        let columns: [(&str, &str, fn(&RealizationRow) -> f64); 5] = [
            ("eps1", "um", |r| r.eps1),
            ("eps2", "um", |r| r.eps2),
            ("separability", "1", |r| r.separability),
            ("gamma_g", "deg", |r| r.gamma_g),
            ("gamma_d", "deg", |r| r.gamma_d),
        ];
        let summary = columns
            .iter()
            .map(|(name, unit, f)| {
                let v: Vec<f64> = rows.iter().map(f).collect();
                QuantityStats {
                    name: name.to_string(),
                    unit: unit.to_string(),
                    moments: Moments::of(&v),
                    histogram: Histogram::freedman_diaconis(&v),
                }
            })
            .collect();
        Self {
            params,
            rng: RNG_ALGORITHM.into(),
            rows,
            losses,
            summary,
        }
    }

    pub fn quantity(&self, name: &str) -> Option<&QuantityStats> {
        self.summary.iter().find(|q| q.name == name)
    }
}

fn realization<T: Real>(
    system: &PairSystem<T>,
    initial: &AtomPairState<T>,
    control: &ControlSignal<T>,
    noise: &NoiseParams,
    dt: T,
    index: usize,
) -> Result<Result<RealizationRow, LossEvent>, Error> {
    let loss = |reason: String| Ok(Err(LossEvent { index, reason }));
    let record = match langevin_integrate(system, initial, control, noise, index as u64, dt) {
        Ok(r) => r,
        Err(e @ (Error::Geometry { .. } | Error::NonFinite { .. })) => return loss(e.to_string()),
        Err(e) => return Err(e),
    };
    let last = record.last();
    let u_end = *record.controls.last().expect("controls");
    let escape = noise.escape_radius.unwrap_or_else(|| {
        3.0 * system
            .fields
            .iter()
            .map(|f| f.sigma.to_f64_lossy())
            .fold(0.0, f64::max)
    });
    for a in 0..2 {
        let nearest = system
            .fields
            .iter()
            .map(|f| distance(last.r[a], f.resolve_center(u_end)))
            .fold(f64::INFINITY, f64::min);
        if nearest > escape {
            return loss(format!(
                "atom {} is {nearest:.3} um from the nearest trap",
                a + 1
            ));
        }
    }
    let report = match phase_report(&record) {
        Ok(r) => r,
        Err(e @ Error::DegenerateOverlap(_)) => return loss(e.to_string()),
        Err(e) => return Err(e),
    };
    Ok(Ok(RealizationRow {
        index,
        eps1: report.loop_error_r[0],
        eps2: report.loop_error_r[1],
        separability: report.separability_f,
        gamma_g: report.gamma_geometric,
        gamma_d: report.gamma_dynamical,
    }))
}

fn distance<T: Real>(a: Vec2<T>, b: Vec2<T>) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1]).to_f64_lossy()
}

/// Runs the ensemble in parallel; results are ordered by realization index.
pub fn run_ensemble<T: Real>(
    system: &PairSystem<T>,
    initial: &AtomPairState<T>,
    control: &ControlSignal<T>,
    noise: &NoiseParams,
    dt: T,
) -> Result<NoiseStats, Error> {
    noise.validate()?;
    let outcomes = (0..noise.n_realizations)
        .into_par_iter()
        .map(|i| realization(system, initial, control, noise, dt, i))
        .collect::<Result<Vec<_>, Error>>()?;
    let mut rows = Vec::new();
    let mut losses = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => rows.push(r),
            Err(l) => losses.push(l),
        }
    }
    Ok(NoiseStats::from_rows(*noise, rows, losses))
}

/// Result of the thermalization benchmark.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquipartitionCheck {
    /// Time- and ensemble-averaged `p²/2m` per degree of freedom, rad/µs.
    pub kinetic_per_dof: f64,
    /// `½ k_B T`, rad/µs.
    pub expected: f64,
    /// Ensemble variance of one momentum component at the final time.
    pub final_momentum_variance: f64,
}

impl EquipartitionCheck {
    pub fn ratio(&self) -> f64 {
        self.kinetic_per_dof / self.expected
    }
}

/// Two uncoupled atoms resting in deep static traps, thermalized by the
/// Langevin update; kinetic energy is averaged over the second half of the
/// run and over the ensemble.
pub fn equipartition_benchmark(
    depth: f64,
    sigma: f64,
    noise: &NoiseParams,
    duration: f64,
    dt: f64,
) -> Result<EquipartitionCheck, Error> {
    use crate::dynamics::{TrapCenter, TweezerField};
    use crate::hamiltonian::DipoleCoupling;
    noise.validate()?;
    let a = [0.0, 0.0];
    let b = [0.0, 100.0];
    let system = PairSystem {
        coupling: DipoleCoupling::with_c3(0.0),
        fields: vec![
            TweezerField::new(depth, sigma, TrapCenter::Mobile)?,
            TweezerField::new(depth, sigma, TrapCenter::Fixed(b))?,
        ],
        mass: units::rb87_mass_internal(),
    };
    let control = ControlSignal::constant(duration, 10, a);
    let initial = AtomPairState::at_rest(a, b, crate::dynamics::basis_state(0));
    let per_run = (0..noise.n_realizations)
        .into_par_iter()
        .map(|i| {
            let rec = langevin_integrate(&system, &initial, &control, noise, i as u64, dt)?;
            let half = rec.len() / 2;
            let mut ke = 0.0;
            for s in &rec.states[half..] {
                for p in s.p.iter().flatten() {
                    ke += p * p / (2.0 * system.mass);
                }
            }
            let p_end = rec.last().p[0][0];
            Ok((ke / ((rec.len() - half) * 4) as f64, p_end * p_end))
        })
        .collect::<Result<Vec<(f64, f64)>, Error>>()?;
    let n = per_run.len() as f64;
    Ok(EquipartitionCheck {
        kinetic_per_dof: per_run.iter().map(|r| r.0).sum::<f64>() / n,
        expected: 0.5 * units::kelvin_to_rad_per_us(noise.bath_temperature),
        final_momentum_variance: per_run.iter().map(|r| r.1).sum::<f64>() / n,
    })
}
