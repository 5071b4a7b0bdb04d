#![allow(dead_code)]

use aaphase::control::ControlSignal;
use aaphase::dynamics::{PairSystem, TrapCenter, TweezerField};
use aaphase::hamiltonian::DipoleCoupling;
use aaphase::optimal::{evaluate_objective, ControlProblem, Weights};
use aaphase::scalar::{Cplx, StateVector};
use aaphase::units;
use rand::Rng;

pub fn p1_system(anchor: [f64; 2]) -> PairSystem<f64> {
    PairSystem {
        coupling: DipoleCoupling::with_c3(units::c3_from_ghz_um3(2.39)),
        fields: vec![
            TweezerField::new(
                units::millikelvin_to_rad_per_us(10.0),
                2.0,
                TrapCenter::Mobile,
            )
            .unwrap(),
            TweezerField::new(
                units::millikelvin_to_rad_per_us(4.0),
                2.0,
                TrapCenter::Fixed(anchor),
            )
            .unwrap(),
        ],
        mass: units::rb87_mass_internal(),
    }
}

pub fn random_state(rng: &mut impl Rng) -> StateVector<f64> {
    let mut psi = [Cplx::new(0.0, 0.0); 4];
    for z in psi.iter_mut() {
        *z = Cplx::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    }
    let n = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    psi.map(|z| z / n)
}

/// T = 3 µs, 30 control intervals, random weights in [0.1, 10], a wobbling
/// tweezer path near the static atom and a random internal state.
pub fn random_short_problem(rng: &mut impl Rng) -> (ControlProblem<f64>, ControlSignal<f64>) {
    let b = [0.0, 0.0];
    let a = [rng.random_range(-3.0..3.0), rng.random_range(7.0..9.0)];
    let mut w = || rng.random_range(0.1..10.0);
    let weights = Weights {
        chi_r: w(),
        chi_p: w(),
        chi_psi: w(),
        chi_dy: w(),
        nu_x: w(),
        nu_y: w(),
    };
    let amp = [rng.random_range(0.5..2.0), rng.random_range(0.5..2.0)];
    let freq = [rng.random_range(0.5..2.0), rng.random_range(0.5..2.0)];
    let control = ControlSignal::from_fn(3.0, 30, |t| {
        let s = (std::f64::consts::PI * t / 3.0).sin();
        [
            a[0] + amp[0] * s * (freq[0] * t).sin(),
            a[1] + amp[1] * s * (freq[1] * t).cos(),
        ]
    });
    let problem = ControlProblem {
        system: p1_system(b),
        r0: [a, b],
        psi0: random_state(rng),
        weights,
        dt: 1e-3,
        phase_term: Default::default(),
        separability_term: true,
        pairing: Default::default(),
    };
    (problem, control)
}

/// Central difference of the objective in sample `k` of channel `ch`.
pub fn fd_component(
    problem: &ControlProblem<f64>,
    control: &ControlSignal<f64>,
    ch: usize,
    k: usize,
    h: f64,
) -> f64 {
    let shifted = |delta: f64| {
        let mut c = control.clone();
        if ch == 0 {
            c.ux[k] += delta;
        } else {
            c.uy[k] += delta;
        }
        evaluate_objective(problem, &c).unwrap().0.total
    };
    (shifted(h) - shifted(-h)) / (2.0 * h)
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
