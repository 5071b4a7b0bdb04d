//! Coupled classical motion of two tweezer-held atoms and Schrödinger
//! evolution of their internal pair state.
//!
//! Both subsystems are advanced together by a fixed-step RK4 scheme. Positions
//! feel every tweezer plus the dipole force `F¹ = −F² = −⟨Ψ|∇_{r¹}H|Ψ⟩`; the
//! wavefunction (and optionally the propagator) evolves under `H(r¹, r²)`.

use serde::{Deserialize, Serialize};

use crate::control::{ControlInterpolator, ControlSignal};
use crate::error::Error;
use crate::hamiltonian::{DipoleCoupling, HamiltonianGradient, HamiltonianMatrix};
use crate::scalar::{cmat_apply, czero, identity4, norm_sqr, CMat4, Cplx, Real, StateVector, Vec2};

/// Where a tweezer is centred.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum TrapCenter<T> {
    Fixed(Vec2<T>),
    /// Follows the control signal.
    Mobile,
}

/// Attractive Gaussian well `U = −depth · exp(−|r − c|²/σ²)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TweezerField<T> {
    /// rad/µs
    pub depth: T,
    /// µm
    pub sigma: T,
    pub center: TrapCenter<T>,
}

/// Potential value and its first and second position derivatives at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PotentialSample<T> {
    pub value: T,
    pub gradient: Vec2<T>,
    pub hessian: [[T; 2]; 2],
}

impl<T: Real> TweezerField<T> {
    pub fn new(depth: T, sigma: T, center: TrapCenter<T>) -> Result<Self, Error> {
        if !(depth > T::zero()) || !(sigma > T::zero()) {
            return Err(Error::InvalidArgument(
                "tweezer depth and sigma must be positive".into(),
            ));
        }
        Ok(Self {
            depth,
            sigma,
            center,
        })
    }

    pub fn resolve_center(&self, control: Vec2<T>) -> Vec2<T> {
        match self.center {
            TrapCenter::Fixed(c) => c,
            TrapCenter::Mobile => control,
        }
    }

    pub fn is_mobile(&self) -> bool {
        matches!(self.center, TrapCenter::Mobile)
    }

    pub fn potential(&self, r: Vec2<T>, center: Vec2<T>) -> T {
        let dx = r[0] - center[0];
        let dy = r[1] - center[1];
        -self.depth * (-(dx * dx + dy * dy) / (self.sigma * self.sigma)).exp()
    }

    /// Value, gradient and Hessian in `r`. Derivatives with respect to the
    /// centre follow from `∂/∂c = −∂/∂r`.
    pub fn sample(&self, r: Vec2<T>, center: Vec2<T>) -> PotentialSample<T> {
        let s2 = self.sigma * self.sigma;
        let d = [r[0] - center[0], r[1] - center[1]];
        let u = -self.depth * (-(d[0] * d[0] + d[1] * d[1]) / s2).exp();
        let two = T::lit(2.0);
        // ∂U/∂r_i = −2 d_i U / σ²
        let gradient = [-two * d[0] * u / s2, -two * d[1] * u / s2];
        let mut hessian = [[T::zero(); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                let delta = if i == j { T::one() } else { T::zero() };
                hessian[i][j] = (-two * delta / s2 + T::lit(4.0) * d[i] * d[j] / (s2 * s2)) * u;
            }
        }
        PotentialSample {
            value: u,
            gradient,
            hessian,
        }
    }

    /// `∂²U/∂r_j ∂u_i`, indexed `[j][i]`; zero for fixed traps.
    pub fn mixed_derivative(&self, r: Vec2<T>, center: Vec2<T>) -> [[T; 2]; 2] {
        match self.center {
            TrapCenter::Fixed(_) => [[T::zero(); 2]; 2],
            TrapCenter::Mobile => {
                let h = self.sample(r, center).hessian;
                [[-h[0][0], -h[0][1]], [-h[1][0], -h[1][1]]]
            }
        }
    }
}

/// Physical setting shared by all runs: coupling, traps and atomic mass.
#[derive(Clone, Debug)]
pub struct PairSystem<T> {
    pub coupling: DipoleCoupling<T>,
    pub fields: Vec<TweezerField<T>>,
    /// ħ·µs/µm²
    pub mass: T,
}

/// Total tweezer potential sample for one atom at one time.
pub fn trap_sample<T: Real>(
    fields: &[TweezerField<T>],
    r: Vec2<T>,
    control: Vec2<T>,
) -> PotentialSample<T> {
    let mut acc = PotentialSample {
        value: T::zero(),
        gradient: [T::zero(); 2],
        hessian: [[T::zero(); 2]; 2],
    };
    for f in fields {
        let s = f.sample(r, f.resolve_center(control));
        acc.value += s.value;
        for i in 0..2 {
            acc.gradient[i] += s.gradient[i];
            for j in 0..2 {
                acc.hessian[i][j] += s.hessian[i][j];
            }
        }
    }
    acc
}

/// Phase-space coordinates of both atoms plus the internal pair state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomPairState<T> {
    /// µm, `[atom][axis]`
    pub r: [Vec2<T>; 2],
    /// ħ/µm
    pub p: [Vec2<T>; 2],
    pub psi: StateVector<T>,
}

impl<T: Real> AtomPairState<T> {
    pub fn at_rest(r1: Vec2<T>, r2: Vec2<T>, psi: StateVector<T>) -> Self {
        Self {
            r: [r1, r2],
            p: [[T::zero(); 2]; 2],
            psi,
        }
    }

    pub fn norm(&self) -> T {
        norm_sqr(&self.psi).sqrt()
    }

    fn is_finite(&self) -> bool {
        self.r
            .iter()
            .chain(&self.p)
            .flatten()
            .all(|x| x.is_finite())
            && self
                .psi
                .iter()
                .all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Basis vector `|k⟩`.
pub fn basis_state<T: Real>(k: usize) -> StateVector<T> {
    let mut psi = [czero(); 4];
    psi[k] = Cplx::new(T::one(), T::zero());
    psi
}

/// Force on each atom (tweezers plus dipole).
pub fn total_force<T: Real>(
    system: &PairSystem<T>,
    state: &AtomPairState<T>,
    control: Vec2<T>,
) -> Result<[Vec2<T>; 2], Error> {
    let grad = system.coupling.gradient(&state.r[0], &state.r[1])?;
    Ok(forces_from(system, state, control, &grad))
}

/// `F^a = −⟨Ψ|∂H/∂r^a|Ψ⟩`.
pub fn dipole_force<T: Real>(grad: &HamiltonianGradient<T>, psi: &StateVector<T>) -> [Vec2<T>; 2] {
    let mut f = [[T::zero(); 2]; 2];
    for a in 0..2 {
        for i in 0..2 {
            f[a][i] = -grad[a][i].expectation(psi);
        }
    }
    f
}

fn forces_from<T: Real>(
    system: &PairSystem<T>,
    state: &AtomPairState<T>,
    control: Vec2<T>,
    grad: &HamiltonianGradient<T>,
) -> [Vec2<T>; 2] {
    let mut f = dipole_force(grad, &state.psi);
    for a in 0..2 {
        let trap = trap_sample(&system.fields, state.r[a], control);
        for i in 0..2 {
            f[a][i] -= trap.gradient[i];
        }
    }
    f
}

/// Integrator settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegratorOptions<T> {
    /// µs; must divide the control grid spacing.
    pub dt: T,
    pub record_propagator: bool,
    /// Infinite-mass limit: positions and momenta stay at their initial values.
    pub pin_positions: bool,
}

impl<T: Real> IntegratorOptions<T> {
    pub fn new(dt: T) -> Self {
        Self {
            dt,
            record_propagator: false,
            pin_positions: false,
        }
    }

    pub fn with_propagator(mut self) -> Self {
        self.record_propagator = true;
        self
    }

    pub fn pinned(mut self) -> Self {
        self.pin_positions = true;
        self
    }
}

/// Full time series of one run on the integration grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrajectoryRecord<T> {
    pub times: Vec<T>,
    pub states: Vec<AtomPairState<T>>,
    /// Mobile-tweezer centre at each sample.
    pub controls: Vec<Vec2<T>>,
    /// `⟨Ψ|H|Ψ⟩`, rad/µs
    pub energy: Vec<T>,
    /// `−∫₀ᵗ ⟨Ψ|H|Ψ⟩ dt'` (radians, trapezoidal, unwrapped)
    pub dynamical_phase: Vec<T>,
    pub propagator: Option<CMat4<T>>,
    /// Largest `|‖ψ‖ − 1|` seen after a step, before renormalization.
    pub max_norm_drift: T,
}

impl<T: Real> TrajectoryRecord<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn initial(&self) -> &AtomPairState<T> {
        &self.states[0]
    }

    pub fn last(&self) -> &AtomPairState<T> {
        self.states.last().expect("non-empty record")
    }

    pub fn duration(&self) -> T {
        *self.times.last().expect("non-empty record")
    }

    pub fn dt(&self) -> T {
        self.times[1] - self.times[0]
    }

    pub fn final_dynamical_phase(&self) -> T {
        *self.dynamical_phase.last().expect("non-empty record")
    }
}

/// Joint derivative of the state (and optionally the propagator).
#[derive(Clone, Copy)]
struct Rate<T> {
    r: [Vec2<T>; 2],
    p: [Vec2<T>; 2],
    psi: StateVector<T>,
    u: Option<CMat4<T>>,
}

fn minus_i<T: Real>(z: Cplx<T>) -> Cplx<T> {
    Cplx::new(z.im, -z.re)
}

/// Time derivative of the joint classical/quantum state.
pub(crate) fn state_rate<T: Real>(
    system: &PairSystem<T>,
    state: &AtomPairState<T>,
    control: Vec2<T>,
    pinned: bool,
) -> Result<(AtomPairState<T>, HamiltonianMatrix<T>), Error> {
    let (h, grad) = if pinned {
        (system.coupling.hamiltonian(&state.r[0], &state.r[1])?, None)
    } else {
        let (h, g) = system
            .coupling
            .hamiltonian_and_gradient(&state.r[0], &state.r[1])?;
        (h, Some(g))
    };
    let hpsi = h.apply(&state.psi);
    let mut rate = AtomPairState {
        r: [[T::zero(); 2]; 2],
        p: [[T::zero(); 2]; 2],
        psi: hpsi.map(minus_i),
    };
    if let Some(grad) = grad {
        let f = forces_from(system, state, control, &grad);
        for a in 0..2 {
            for i in 0..2 {
                rate.r[a][i] = state.p[a][i] / system.mass;
                rate.p[a][i] = f[a][i];
            }
        }
    }
    Ok((rate, h))
}

fn rate_with_propagator<T: Real>(
    system: &PairSystem<T>,
    state: &AtomPairState<T>,
    prop: Option<&CMat4<T>>,
    control: Vec2<T>,
    pinned: bool,
) -> Result<Rate<T>, Error> {
    let (s, h) = state_rate(system, state, control, pinned)?;
    let u = prop.map(|u| {
        let mut out = [[czero(); 4]; 4];
        for j in 0..4 {
            let col = [u[0][j], u[1][j], u[2][j], u[3][j]];
            let hc = h.apply(&col);
            for i in 0..4 {
                out[i][j] = minus_i(hc[i]);
            }
        }
        out
    });
    Ok(Rate {
        r: s.r,
        p: s.p,
        psi: s.psi,
        u,
    })
}

fn advance<T: Real>(
    state: &AtomPairState<T>,
    prop: Option<&CMat4<T>>,
    rate: &Rate<T>,
    h: T,
) -> (AtomPairState<T>, Option<CMat4<T>>) {
    let mut out = *state;
    for a in 0..2 {
        for i in 0..2 {
            out.r[a][i] += h * rate.r[a][i];
            out.p[a][i] += h * rate.p[a][i];
        }
    }
    for k in 0..4 {
        out.psi[k] += rate.psi[k] * h;
    }
    let u = prop.map(|u| {
        let du = rate.u.as_ref().expect("propagator rate");
        let mut v = *u;
        for i in 0..4 {
            for j in 0..4 {
                v[i][j] += du[i][j] * h;
            }
        }
        v
    });
    (out, u)
}

/// Checks that `dt` divides the control spacing; returns the number of
/// integration steps per control interval.
pub fn steps_per_interval<T: Real>(control: &ControlSignal<T>, dt: T) -> Result<usize, Error> {
    let ratio = (control.spacing() / dt).to_f64_lossy();
    let k = ratio.round();
    if !(dt > T::zero()) || k < 1.0 || (ratio - k).abs() > 1e-6 * k {
        return Err(Error::GridMismatch(format!(
            "dt = {dt} does not divide the control spacing {}",
            control.spacing()
        )));
    }
    Ok(k as usize)
}

/// Per-step hook, called with the step index and the state just produced by
/// the deterministic step.
pub trait StepHook<T> {
    fn after_step(&mut self, step: usize, state: &mut AtomPairState<T>);
}

/// No post-step modification.
pub struct Deterministic;

impl<T> StepHook<T> for Deterministic {
    fn after_step(&mut self, _: usize, _: &mut AtomPairState<T>) {}
}

/// RK4 integration of the joint system along `control`.
pub fn integrate<T: Real>(
    system: &PairSystem<T>,
    initial: &AtomPairState<T>,
    control: &ControlSignal<T>,
    opts: &IntegratorOptions<T>,
) -> Result<TrajectoryRecord<T>, Error> {
    integrate_with(system, initial, control, opts, &mut Deterministic)
}

/// As [`integrate`], with a hook applied after every step (used for the
/// stochastic momentum update).
pub fn integrate_with<T: Real, H: StepHook<T>>(
    system: &PairSystem<T>,
    initial: &AtomPairState<T>,
    control: &ControlSignal<T>,
    opts: &IntegratorOptions<T>,
    hook: &mut H,
) -> Result<TrajectoryRecord<T>, Error> {
    control.validate()?;
    let per = steps_per_interval(control, opts.dt)?;
    let steps = per * control.intervals();
    let dt = control.spacing() / T::from_usize_lossy(per);
    let interp = control.interpolator();

    let n0 = initial.norm();
    if (n0 - T::one()).abs() > T::lit(1e-9) {
        return Err(Error::InvalidArgument(format!(
            "initial state norm {n0} differs from 1"
        )));
    }

    let with_time = |e: Error, t: T| match e {
        Error::Geometry {
            separation, guard, ..
        } => Error::Geometry {
            separation,
            guard,
            time: t.to_f64_lossy(),
        },
        other => other,
    };

    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut controls = Vec::with_capacity(steps + 1);
    let mut energy = Vec::with_capacity(steps + 1);
    let mut phase = Vec::with_capacity(steps + 1);

    let mut state = *initial;
    let mut prop = opts.record_propagator.then(identity4::<T>);
    let mut max_drift = T::zero();
    let half = T::lit(0.5);

    let h0 = system
        .coupling
        .hamiltonian(&state.r[0], &state.r[1])
        .map_err(|e| with_time(e, T::zero()))?;
    times.push(T::zero());
    states.push(state);
    controls.push(interp.position(T::zero()));
    energy.push(h0.expectation(&state.psi));
    phase.push(T::zero());

    for n in 0..steps {
        let t = dt * T::from_usize_lossy(n);
        let tm = t + half * dt;
        let t1 = dt * T::from_usize_lossy(n + 1);
        let (c0, cm, c1) = (interp.position(t), interp.position(tm), interp.position(t1));
        let pin = opts.pin_positions;
        let eval = |s: &AtomPairState<T>, u: Option<&CMat4<T>>, c: Vec2<T>, at: T| {
            rate_with_propagator(system, s, u, c, pin).map_err(|e| with_time(e, at))
        };

        let k1 = eval(&state, prop.as_ref(), c0, t)?;
        let (s2, u2) = advance(&state, prop.as_ref(), &k1, half * dt);
        let k2 = eval(&s2, u2.as_ref(), cm, tm)?;
        let (s3, u3) = advance(&state, prop.as_ref(), &k2, half * dt);
        let k3 = eval(&s3, u3.as_ref(), cm, tm)?;
        let (s4, u4) = advance(&state, prop.as_ref(), &k3, dt);
        let k4 = eval(&s4, u4.as_ref(), c1, t1)?;

        let sixth = dt / T::lit(6.0);
        let two = T::lit(2.0);
        for a in 0..2 {
            for i in 0..2 {
                state.r[a][i] +=
                    sixth * (k1.r[a][i] + two * k2.r[a][i] + two * k3.r[a][i] + k4.r[a][i]);
                state.p[a][i] +=
                    sixth * (k1.p[a][i] + two * k2.p[a][i] + two * k3.p[a][i] + k4.p[a][i]);
            }
        }
        for k in 0..4 {
            state.psi[k] += (k1.psi[k] + k2.psi[k] * two + k3.psi[k] * two + k4.psi[k]) * sixth;
        }
        if let Some(u) = prop.as_mut() {
            let (d1, d2, d3, d4) = (
                k1.u.expect("rate"),
                k2.u.expect("rate"),
                k3.u.expect("rate"),
                k4.u.expect("rate"),
            );
            for i in 0..4 {
                for j in 0..4 {
                    u[i][j] += (d1[i][j] + d2[i][j] * two + d3[i][j] * two + d4[i][j]) * sixth;
                }
            }
        }

        let norm = state.norm();
        let drift = (norm - T::one()).abs();
        if drift > max_drift {
            max_drift = drift;
        }
        if drift > T::lit(1e-12) {
            state.psi = state.psi.map(|z| z / norm);
        }

        hook.after_step(n, &mut state);

        if !state.is_finite() {
            return Err(Error::NonFinite {
                time: t1.to_f64_lossy(),
                what: "atom pair state".into(),
            });
        }
        let h1 = system
            .coupling
            .hamiltonian(&state.r[0], &state.r[1])
            .map_err(|e| with_time(e, t1))?;
        let e1 = h1.expectation(&state.psi);
        let prev_e = *energy.last().expect("energy");
        let prev_phase = *phase.last().expect("phase");
        phase.push(prev_phase - half * dt * (prev_e + e1));
        energy.push(e1);
        times.push(t1);
        states.push(state);
        controls.push(c1);
    }

    Ok(TrajectoryRecord {
        times,
        states,
        controls,
        energy,
        dynamical_phase: phase,
        propagator: prop,
        max_norm_drift: max_drift,
    })
}

/// Classical energy `Σ_a p²/2m + U(r^a)` of the trap motion (dipole energy
/// excluded).
pub fn classical_energy<T: Real>(
    system: &PairSystem<T>,
    state: &AtomPairState<T>,
    control: Vec2<T>,
) -> T {
    let mut e = T::zero();
    for a in 0..2 {
        let p2 = state.p[a][0] * state.p[a][0] + state.p[a][1] * state.p[a][1];
        e += p2 / (T::lit(2.0) * system.mass)
            + trap_sample(&system.fields, state.r[a], control).value;
    }
    e
}

/// `U(T)Ψ(0)`, for cross-checking against the propagated state.
pub fn propagate_with<T: Real>(u: &CMat4<T>, psi: &StateVector<T>) -> StateVector<T> {
    cmat_apply(u, psi)
}

/// Helper for positions along the mobile tweezer path.
pub fn control_at<T: Real>(interp: &ControlInterpolator<T>, t: T) -> Vec2<T> {
    interp.position(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units;

    fn system(c3: f64) -> PairSystem<f64> {
        PairSystem {
            coupling: DipoleCoupling::with_c3(c3),
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
                    TrapCenter::Fixed([0.0, 0.0]),
                )
                .unwrap(),
            ],
            mass: units::rb87_mass_internal(),
        }
    }

    #[test]
    fn potential_reference_points() {
        let f = TweezerField::new(3.0, 2.0, TrapCenter::Fixed([1.0, 1.0])).unwrap();
        let s = f.sample([1.0, 1.0], [1.0, 1.0]);
        assert_eq!(s.value, -3.0);
        assert_eq!(s.gradient, [0.0, 0.0]);
        let at_sigma = f.potential([3.0, 1.0], [1.0, 1.0]);
        assert!((at_sigma + 3.0 * (-1.0f64).exp()).abs() < 1e-15);
        assert!((s.hessian[0][0] - 2.0 * 3.0 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_field_rejected() {
        assert!(TweezerField::new(1.0, -2.0, TrapCenter::<f64>::Mobile).is_err());
        assert!(TweezerField::new(0.0, 2.0, TrapCenter::<f64>::Mobile).is_err());
    }

    #[test]
    fn resting_atom_at_trap_center_stays_put() {
        let sys = system(0.0);
        let ctrl = ControlSignal::constant(5.0, 50, [19.0, 0.0]);
        let init = AtomPairState::at_rest([19.0, 0.0], [0.0, 0.0], basis_state(0));
        let rec = integrate(&sys, &init, &ctrl, &IntegratorOptions::new(1e-3)).unwrap();
        let last = rec.last();
        assert!((last.r[0][0] - 19.0).abs() < 1e-12 && last.r[0][1] == 0.0);
        assert!(last.p[0][0].abs() < 1e-12);
        assert_eq!(rec.final_dynamical_phase(), 0.0);
        assert_eq!(rec.len(), 5001);
    }

    #[test]
    fn dt_must_divide_spacing() {
        let sys = system(0.0);
        let ctrl = ControlSignal::constant(1.0, 10, [19.0, 0.0]);
        let init = AtomPairState::at_rest([19.0, 0.0], [0.0, 0.0], basis_state(0));
        let err = integrate(&sys, &init, &ctrl, &IntegratorOptions::new(0.03)).unwrap_err();
        assert!(matches!(err, Error::GridMismatch(_)));
    }

    #[test]
    fn geometry_failure_reports_time() {
        let sys = system(0.0);
        // tweezer drags atom 1 onto atom 2
        let ctrl = ControlSignal::from_fn(10.0, 20, |t| [6.0 * (1.0 - t / 10.0), 0.0]);
        let init = AtomPairState::at_rest([6.0, 0.0], [0.0, 0.0], basis_state(0));
        match integrate(&sys, &init, &ctrl, &IntegratorOptions::new(1e-3)) {
            Err(Error::Geometry { time, .. }) => assert!(time > 0.0 && time <= 10.0),
            other => panic!("expected geometry error, got {other:?}"),
        }
    }
}
