//! Optimal control of the mobile tweezer: objective, backward adjoint
//! integration, control gradient, line-search descent and the circular
//! initialization scan.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{derivative_energy_gradient, ControlSignal, SplineTranspose};
use crate::dynamics::{
    integrate, state_rate, trap_sample, AtomPairState, IntegratorOptions, PairSystem,
    TrajectoryRecord,
};
use crate::error::Error;
use crate::phase::{
    aa_eigenphases, phase_report, separability, separability_gradient, PhaseReport,
};
use crate::scalar::{czero, inner, Cplx, Real, StateVector, Vec2};

/// Goal and cost weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Weights<T> {
    /// Loop closure, per µm².
    pub chi_r: T,
    /// Final momentum.
    pub chi_p: T,
    /// Return of the internal state.
    pub chi_psi: T,
    /// Phase rejection.
    pub chi_dy: T,
    pub nu_x: T,
    pub nu_y: T,
}

impl<T: Real> Weights<T> {
    pub fn validate(&self) -> Result<(), Error> {
        let goal = [self.chi_r, self.chi_p, self.chi_psi, self.chi_dy];
        if goal.iter().any(|w| !w.is_finite() || *w < T::zero()) {
            return Err(Error::InvalidArgument(
                "goal weights must be finite and >= 0".into(),
            ));
        }
        if [self.nu_x, self.nu_y]
            .iter()
            .any(|w| !w.is_finite() || *w <= T::zero())
        {
            return Err(Error::InvalidArgument(
                "cost weights must be finite and > 0".into(),
            ));
        }
        Ok(())
    }
}

impl Default for Weights<f64> {
    fn default() -> Self {
        Self {
            chi_r: 1e3,
            chi_p: 10.0,
            chi_psi: 1.0,
            chi_dy: 1.0,
            nu_x: 1e-4,
            nu_y: 1e-4,
        }
    }
}

/// Which phase the rejection term acts on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseTerm {
    #[default]
    Dynamical,
    Geometric,
}

/// Which costate multiplies the mixed trap derivative in the control
/// gradient.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjointPairing {
    /// Costate of the momentum equation (the exact first variation).
    #[default]
    MomentumCostate,
    /// Costate of the position equation.
    PositionCostate,
}

/// Everything except the control that defines one optimization problem.
#[derive(Clone, Debug)]
pub struct ControlProblem<T> {
    pub system: PairSystem<T>,
    /// Initial atom positions (atoms start at rest).
    pub r0: [Vec2<T>; 2],
    pub psi0: StateVector<T>,
    pub weights: Weights<T>,
    pub dt: T,
    pub phase_term: PhaseTerm,
    pub separability_term: bool,
    pub pairing: AdjointPairing,
}

impl<T: Real> ControlProblem<T> {
    pub fn initial_state(&self) -> AtomPairState<T> {
        AtomPairState::at_rest(self.r0[0], self.r0[1], self.psi0)
    }

    pub fn with_psi0(&self, psi0: StateVector<T>) -> Self {
        Self {
            psi0,
            ..self.clone()
        }
    }

    pub fn integrate(&self, control: &ControlSignal<T>) -> Result<TrajectoryRecord<T>, Error> {
        integrate(
            &self.system,
            &self.initial_state(),
            control,
            &IntegratorOptions::new(self.dt),
        )
    }
}

/// Term-by-term value of `𝒢 + 𝒦`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    /// `½Σ_a (χ_r|r^a(T) − r^a(0)|² + χ_p|p^a(T)|²)`
    pub term_i: f64,
    /// `−χ_Ψ|⟨Ψ(0)|Ψ(T)⟩|²`
    pub term_ii: f64,
    /// `χ_dy|e^{iγ/2} − 1|²`
    pub term_iii: f64,
    /// `−F(Ψ(T))`
    pub term_iv: f64,
    /// `½∫(ν_x u̇_x² + ν_y u̇_y²)dt`
    pub cost_k: f64,
    pub total: f64,
}

impl ObjectiveBreakdown {
    pub fn infeasible() -> Self {
        Self {
            term_i: f64::INFINITY,
            term_ii: 0.0,
            term_iii: 0.0,
            term_iv: 0.0,
            cost_k: 0.0,
            total: f64::INFINITY,
        }
    }
}

/// Terminal quantities shared by the objective and the adjoint final
/// conditions.
struct Terminal<T> {
    overlap: Cplx<T>,
    /// Phase entering the rejection term, radians.
    gamma: T,
}

fn terminal<T: Real>(problem: &ControlProblem<T>, record: &TrajectoryRecord<T>) -> Terminal<T> {
    let overlap = inner(&problem.psi0, &record.last().psi);
    let gd = record.final_dynamical_phase();
    let gamma = match problem.phase_term {
        PhaseTerm::Dynamical => gd,
        PhaseTerm::Geometric => overlap.arg() - gd,
    };
    Terminal { overlap, gamma }
}

/// `𝒦` for a control.
pub fn control_cost<T: Real>(weights: &Weights<T>, control: &ControlSignal<T>) -> T {
    let [sx, sy] = control.splines();
    T::lit(0.5) * (weights.nu_x * sx.derivative_energy() + weights.nu_y * sy.derivative_energy())
}

/// Objective of a completed forward run.
pub fn objective_of_record<T: Real>(
    problem: &ControlProblem<T>,
    control: &ControlSignal<T>,
    record: &TrajectoryRecord<T>,
) -> Result<ObjectiveBreakdown, Error> {
    let w = &problem.weights;
    let first = record.initial();
    let last = record.last();
    let half = T::lit(0.5);
    let mut term_i = T::zero();
    for a in 0..2 {
        for i in 0..2 {
            let dr = last.r[a][i] - first.r[a][i];
            term_i += half * (w.chi_r * dr * dr + w.chi_p * last.p[a][i] * last.p[a][i]);
        }
    }
    let term = terminal(problem, record);
    let term_ii = -w.chi_psi * term.overlap.norm_sqr();
    let term_iii = w.chi_dy * (T::lit(2.0) - T::lit(2.0) * (half * term.gamma).cos());
    let term_iv = if problem.separability_term {
        -separability(&last.psi)?.f
    } else {
        T::zero()
    };
    let cost_k = control_cost(w, control);
    let parts = [term_i, term_ii, term_iii, term_iv, cost_k].map(|v| v.to_f64_lossy());
    Ok(ObjectiveBreakdown {
        term_i: parts[0],
        term_ii: parts[1],
        term_iii: parts[2],
        term_iv: parts[3],
        cost_k: parts[4],
        total: parts.iter().sum(),
    })
}

/// Runs the dynamics and evaluates `𝒢 + 𝒦`.
pub fn evaluate_objective<T: Real>(
    problem: &ControlProblem<T>,
    control: &ControlSignal<T>,
) -> Result<(ObjectiveBreakdown, TrajectoryRecord<T>), Error> {
    let record = problem.integrate(control)?;
    let b = objective_of_record(problem, control, &record)?;
    Ok((b, record))
}

/// Costates of the positions, momenta and wavefunction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdjointState<T> {
    /// Multiplier of the position equation, `[atom][axis]`.
    pub position: [Vec2<T>; 2],
    /// Multiplier of the momentum equation, `[atom][axis]`.
    pub momentum: [Vec2<T>; 2],
    pub phi: StateVector<T>,
}

impl<T: Real> AdjointState<T> {
    pub fn zero() -> Self {
        Self {
            position: [[T::zero(); 2]; 2],
            momentum: [[T::zero(); 2]; 2],
            phi: [czero(); 4],
        }
    }

    fn axpy(&self, h: T, d: &Self) -> Self {
        let mut out = *self;
        for a in 0..2 {
            for i in 0..2 {
                out.position[a][i] += h * d.position[a][i];
                out.momentum[a][i] += h * d.momentum[a][i];
            }
        }
        for k in 0..4 {
            out.phi[k] += d.phi[k] * h;
        }
        out
    }

    fn is_finite(&self) -> bool {
        self.position
            .iter()
            .chain(&self.momentum)
            .flatten()
            .all(|x| x.is_finite())
            && self
                .phi
                .iter()
                .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn distance(&self, other: &Self) -> T {
        let mut acc = T::zero();
        for a in 0..2 {
            for i in 0..2 {
                acc += (self.position[a][i] - other.position[a][i]).powi(2);
                acc += (self.momentum[a][i] - other.momentum[a][i]).powi(2);
            }
        }
        for k in 0..4 {
            acc += (self.phi[k] - other.phi[k]).norm_sqr();
        }
        acc.sqrt()
    }

    pub fn norm(&self) -> T {
        self.distance(&Self::zero())
    }
}

/// Costate trajectory on the integration grid.
#[derive(Clone, Debug)]
pub struct AdjointSeries<T> {
    pub states: Vec<AdjointState<T>>,
    /// Time derivatives at the grid points.
    pub rates: Vec<AdjointState<T>>,
    /// Constant multiplier of the accumulated dynamical phase.
    pub phase_multiplier: T,
}

/// Costate values at `t = T`.
pub fn adjoint_final_conditions<T: Real>(
    problem: &ControlProblem<T>,
    record: &TrajectoryRecord<T>,
) -> Result<(AdjointState<T>, T), Error> {
    let w = &problem.weights;
    let first = record.initial();
    let last = record.last();
    let mut fin = AdjointState::zero();
    for a in 0..2 {
        for i in 0..2 {
            fin.position[a][i] = w.chi_r * (last.r[a][i] - first.r[a][i]);
            fin.momentum[a][i] = w.chi_p * last.p[a][i];
        }
    }
    let term = terminal(problem, record);
    let two = T::lit(2.0);
    // −χ_Ψ|c|², c = ⟨Ψ(0)|Ψ(T)⟩
    for k in 0..4 {
        fin.phi[k] = problem.psi0[k] * term.overlap * (-two * w.chi_psi);
    }
    if problem.separability_term {
        let g = separability_gradient(&last.psi)?;
        for k in 0..4 {
            fin.phi[k] -= g[k];
        }
    }
    let s = w.chi_dy * (T::lit(0.5) * term.gamma).sin();
    let q = match problem.phase_term {
        PhaseTerm::Dynamical => s,
        PhaseTerm::Geometric => {
            // ∂ arg c / ∂Ψ(T) = iΨ(0)/c̄
            let c = term.overlap;
            if c.norm() > T::zero() {
                let f = Cplx::new(T::zero(), T::one()) / c.conj() * s;
                for k in 0..4 {
                    fin.phi[k] += problem.psi0[k] * f;
                }
            }
            -s
        }
    };
    Ok((fin, q))
}

/// Right-hand side of the costate equations for a given forward state.
fn adjoint_rate<T: Real>(
    system: &PairSystem<T>,
    fwd: &AtomPairState<T>,
    lam: &AdjointState<T>,
    q: T,
    control: Vec2<T>,
    pinned: bool,
) -> Result<AdjointState<T>, Error> {
    let (h, grad) = system
        .coupling
        .hamiltonian_and_gradient(&fwd.r[0], &fwd.r[1])?;
    let psi = &fwd.psi;
    let two = T::lit(2.0);
    let hphi = h.apply(&lam.phi);
    let hpsi = h.apply(psi);
    let mut out = AdjointState::zero();
    for k in 0..4 {
        out.phi[k] = Cplx::new(hphi[k].im, -hphi[k].re) + hpsi[k] * (two * q);
    }
    if pinned {
        return Ok(out);
    }
    let hess = system
        .coupling
        .hessian_contract(&fwd.r[0], &fwd.r[1], psi)?;
    for a in 0..2 {
        let trap = trap_sample(&system.fields, fwd.r[a], control);
        for k in 0..2 {
            let dpsi = grad[a][k].apply(psi);
            let mut v = T::zero();
            for j in 0..2 {
                v += trap.hessian[j][k] * lam.momentum[a][j];
                for b in 0..2 {
                    v += hess[b][a][j][k] * lam.momentum[b][j];
                }
            }
            v -= inner(&lam.phi, &dpsi).im;
            v += q * grad[a][k].expectation(psi);
            out.position[a][k] = v;
            out.momentum[a][k] = -lam.position[a][k] / system.mass;
            let lp = lam.momentum[a][k];
            for m in 0..4 {
                out.phi[m] += dpsi[m] * (two * lp);
            }
        }
    }
    Ok(out)
}

fn hermite_mid<T: Real>(y0: T, y1: T, d0: T, d1: T, dt: T) -> T {
    T::lit(0.5) * (y0 + y1) + dt / T::lit(8.0) * (d0 - d1)
}

fn hermite_mid_c<T: Real>(y0: Cplx<T>, y1: Cplx<T>, d0: Cplx<T>, d1: Cplx<T>, dt: T) -> Cplx<T> {
    Cplx::new(
        hermite_mid(y0.re, y1.re, d0.re, d1.re, dt),
        hermite_mid(y0.im, y1.im, d0.im, d1.im, dt),
    )
}

/// Forward state at the midpoint of step `n` from cubic Hermite
/// interpolation of the grid values and rates.
fn forward_midpoint<T: Real>(
    s0: &AtomPairState<T>,
    s1: &AtomPairState<T>,
    d0: &AtomPairState<T>,
    d1: &AtomPairState<T>,
    dt: T,
) -> AtomPairState<T> {
    let mut m = *s0;
    for a in 0..2 {
        for i in 0..2 {
            m.r[a][i] = hermite_mid(s0.r[a][i], s1.r[a][i], d0.r[a][i], d1.r[a][i], dt);
            m.p[a][i] = hermite_mid(s0.p[a][i], s1.p[a][i], d0.p[a][i], d1.p[a][i], dt);
        }
    }
    for k in 0..4 {
        m.psi[k] = hermite_mid_c(s0.psi[k], s1.psi[k], d0.psi[k], d1.psi[k], dt);
    }
    m
}

fn adjoint_midpoint<T: Real>(
    s0: &AdjointState<T>,
    s1: &AdjointState<T>,
    d0: &AdjointState<T>,
    d1: &AdjointState<T>,
    dt: T,
) -> AdjointState<T> {
    let mut m = *s0;
    for a in 0..2 {
        for i in 0..2 {
            m.position[a][i] = hermite_mid(
                s0.position[a][i],
                s1.position[a][i],
                d0.position[a][i],
                d1.position[a][i],
                dt,
            );
            m.momentum[a][i] = hermite_mid(
                s0.momentum[a][i],
                s1.momentum[a][i],
                d0.momentum[a][i],
                d1.momentum[a][i],
                dt,
            );
        }
    }
    for k in 0..4 {
        m.phi[k] = hermite_mid_c(s0.phi[k], s1.phi[k], d0.phi[k], d1.phi[k], dt);
    }
    m
}

/// Forward states, rates and midpoints needed by the costate integration.
struct ForwardSamples<T> {
    mids: Vec<AtomPairState<T>>,
    controls: Vec<Vec2<T>>,
    mid_controls: Vec<Vec2<T>>,
}

fn forward_samples<T: Real>(
    system: &PairSystem<T>,
    record: &TrajectoryRecord<T>,
    control: &ControlSignal<T>,
    pinned: bool,
) -> Result<ForwardSamples<T>, Error> {
    let interp = control.interpolator();
    let dt = record.dt();
    let mut rates = Vec::with_capacity(record.len());
    for (s, c) in record.states.iter().zip(&record.controls) {
        rates.push(state_rate(system, s, *c, pinned)?.0);
    }
    let n = record.len() - 1;
    let mut mids = Vec::with_capacity(n);
    let mut mid_controls = Vec::with_capacity(n);
    for k in 0..n {
        mids.push(forward_midpoint(
            &record.states[k],
            &record.states[k + 1],
            &rates[k],
            &rates[k + 1],
            dt,
        ));
        mid_controls.push(interp.position(record.times[k] + T::lit(0.5) * dt));
    }
    Ok(ForwardSamples {
        mids,
        controls: record.controls.clone(),
        mid_controls,
    })
}

fn rk4_adjoint_step<T: Real>(
    system: &PairSystem<T>,
    lam: &AdjointState<T>,
    q: T,
    mid: (&AtomPairState<T>, Vec2<T>),
    end: (&AtomPairState<T>, Vec2<T>),
    h: T,
    pinned: bool,
    k1: AdjointState<T>,
) -> Result<AdjointState<T>, Error> {
    let half = T::lit(0.5) * h;
    let k2 = adjoint_rate(system, mid.0, &lam.axpy(half, &k1), q, mid.1, pinned)?;
    let k3 = adjoint_rate(system, mid.0, &lam.axpy(half, &k2), q, mid.1, pinned)?;
    let k4 = adjoint_rate(system, end.0, &lam.axpy(h, &k3), q, end.1, pinned)?;
    let sixth = h / T::lit(6.0);
    let two = T::lit(2.0);
    let mut out = *lam;
    for a in 0..2 {
        for i in 0..2 {
            out.position[a][i] += sixth
                * (k1.position[a][i]
                    + two * k2.position[a][i]
                    + two * k3.position[a][i]
                    + k4.position[a][i]);
            out.momentum[a][i] += sixth
                * (k1.momentum[a][i]
                    + two * k2.momentum[a][i]
                    + two * k3.momentum[a][i]
                    + k4.momentum[a][i]);
        }
    }
    for k in 0..4 {
        out.phi[k] += (k1.phi[k] + k2.phi[k] * two + k3.phi[k] * two + k4.phi[k]) * sixth;
    }
    Ok(out)
}

/// Integrates the costates backward from `t = T` to `0` along a completed
/// forward run.
pub fn integrate_adjoint<T: Real>(
    problem: &ControlProblem<T>,
    control: &ControlSignal<T>,
    record: &TrajectoryRecord<T>,
) -> Result<AdjointSeries<T>, Error> {
    integrate_adjoint_pinned(problem, control, record, false)
}

fn integrate_adjoint_pinned<T: Real>(
    problem: &ControlProblem<T>,
    control: &ControlSignal<T>,
    record: &TrajectoryRecord<T>,
    pinned: bool,
) -> Result<AdjointSeries<T>, Error> {
    let (fin, q) = adjoint_final_conditions(problem, record)?;
    let fwd = forward_samples(&problem.system, record, control, pinned)?;
    adjoint_from(problem, record, &fwd, fin, q, pinned)
}

fn adjoint_from<T: Real>(
    problem: &ControlProblem<T>,
    record: &TrajectoryRecord<T>,
    fwd: &ForwardSamples<T>,
    fin: AdjointState<T>,
    q: T,
    pinned: bool,
) -> Result<AdjointSeries<T>, Error> {
    let n = record.len() - 1;
    let dt = record.dt();
    let sys = &problem.system;
    let mut states = vec![AdjointState::zero(); n + 1];
    let mut rates = vec![AdjointState::zero(); n + 1];
    states[n] = fin;
    rates[n] = adjoint_rate(sys, &record.states[n], &fin, q, fwd.controls[n], pinned)?;
    for k in (0..n).rev() {
        let next = rk4_adjoint_step(
            sys,
            &states[k + 1],
            q,
            (&fwd.mids[k], fwd.mid_controls[k]),
            (&record.states[k], fwd.controls[k]),
            -dt,
            pinned,
            rates[k + 1],
        )?;
        if !next.is_finite() {
            return Err(Error::NonFinite {
                time: record.times[k].to_f64_lossy(),
                what: "adjoint state".into(),
            });
        }
        states[k] = next;
        rates[k] = adjoint_rate(sys, &record.states[k], &next, q, fwd.controls[k], pinned)?;
    }
    Ok(AdjointSeries {
        states,
        rates,
        phase_multiplier: q,
    })
}

/// Re-integrates the costates forward from their `t = 0` values; the result
/// should reproduce the final conditions.
pub fn adjoint_forward_check<T: Real>(
    problem: &ControlProblem<T>,
    control: &ControlSignal<T>,
    record: &TrajectoryRecord<T>,
    series: &AdjointSeries<T>,
) -> Result<AdjointState<T>, Error> {
    let fwd = forward_samples(&problem.system, record, control, false)?;
    let dt = record.dt();
    let q = series.phase_multiplier;
    let sys = &problem.system;
    let mut lam = series.states[0];
    for k in 0..record.len() - 1 {
        let k1 = adjoint_rate(sys, &record.states[k], &lam, q, fwd.controls[k], false)?;
        lam = rk4_adjoint_step(
            sys,
            &lam,
            q,
            (&fwd.mids[k], fwd.mid_controls[k]),
            (&record.states[k + 1], fwd.controls[k + 1]),
            dt,
            false,
            k1,
        )?;
    }
    Ok(lam)
}

/// Costates of a frozen-position run (positions pinned in the forward
/// integration too).
pub fn integrate_adjoint_frozen<T: Real>(
    problem: &ControlProblem<T>,
    control: &ControlSignal<T>,
    record: &TrajectoryRecord<T>,
) -> Result<AdjointSeries<T>, Error> {
    integrate_adjoint_pinned(problem, control, record, true)
}

/// Gradient of `𝒢 + 𝒦` with respect to the control samples, `[channel][k]`.
pub fn control_gradient<T: Real>(
    problem: &ControlProblem<T>,
    control: &ControlSignal<T>,
    record: &TrajectoryRecord<T>,
    adjoint: &AdjointSeries<T>,
) -> Result<[Vec<T>; 2], Error> {
    let n = record.len() - 1;
    if adjoint.states.len() != n + 1 {
        return Err(Error::GridMismatch(format!(
            "adjoint has {} samples, record {}",
            adjoint.states.len(),
            n + 1
        )));
    }
    let dt = record.dt();
    let h = control.spacing();
    let knots = control.intervals() + 1;
    let fwd = forward_samples(&problem.system, record, control, false)?;
    let mut tr = [
        SplineTranspose::new(h, knots),
        SplineTranspose::new(h, knots),
    ];

    let density = |state: &AtomPairState<T>, lam: &AdjointState<T>, c: Vec2<T>| -> Vec2<T> {
        let mut g = [T::zero(); 2];
        for a in 0..2 {
            let costate = match problem.pairing {
                AdjointPairing::MomentumCostate => lam.momentum[a],
                AdjointPairing::PositionCostate => lam.position[a],
            };
            for f in problem.system.fields.iter().filter(|f| f.is_mobile()) {
                let mixed = f.mixed_derivative(state.r[a], c);
                for i in 0..2 {
                    for j in 0..2 {
                        g[i] -= mixed[j][i] * costate[j];
                    }
                }
            }
        }
        g
    };

    let w_end = dt / T::lit(6.0);
    let w_mid = T::lit(4.0) * dt / T::lit(6.0);
    for k in 0..n {
        let t0 = record.times[k];
        let tm = t0 + T::lit(0.5) * dt;
        let t1 = record.times[k + 1];
        let lam_mid = adjoint_midpoint(
            &adjoint.states[k],
            &adjoint.states[k + 1],
            &adjoint.rates[k],
            &adjoint.rates[k + 1],
            dt,
        );
        let g0 = density(&record.states[k], &adjoint.states[k], fwd.controls[k]);
        let gm = density(&fwd.mids[k], &lam_mid, fwd.mid_controls[k]);
        let g1 = density(
            &record.states[k + 1],
            &adjoint.states[k + 1],
            fwd.controls[k + 1],
        );
        for i in 0..2 {
            tr[i].add_value(t0, w_end * g0[i]);
            tr[i].add_value(tm, w_mid * gm[i]);
            tr[i].add_value(t1, w_end * g1[i]);
        }
    }
    let [tx, ty] = tr;
    let mut gx = tx.finish();
    let mut gy = ty.finish();
    let ex = derivative_energy_gradient(h, &control.ux);
    let ey = derivative_energy_gradient(h, &control.uy);
    for k in 0..knots {
        gx[k] += problem.weights.nu_x * ex[k];
        gy[k] += problem.weights.nu_y * ey[k];
    }
    Ok([gx, gy])
}

/// Objective, gradient and the forward run in one call.
pub fn objective_and_gradient<T: Real>(
    problem: &ControlProblem<T>,
    control: &ControlSignal<T>,
) -> Result<(ObjectiveBreakdown, [Vec<T>; 2], TrajectoryRecord<T>), Error> {
    let (b, record) = evaluate_objective(problem, control)?;
    let adj = integrate_adjoint(problem, control, &record)?;
    let g = control_gradient(problem, control, &record, &adj)?;
    Ok((b, g, record))
}

/// Line-search descent variant.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescentMethod {
    #[default]
    Gradient,
    Nesterov,
    Lbfgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescentOptions {
    pub method: DescentMethod,
    pub max_iterations: usize,
    pub gradient_tol: f64,
    /// First trial step (µm along the normalized gradient on the first
    /// iteration).
    pub initial_step: f64,
    pub armijo_c: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    pub lbfgs_memory: usize,
    /// Keep the first and last samples at their initial values.
    pub pin_endpoints: bool,
}

impl Default for DescentOptions {
    fn default() -> Self {
        Self {
            method: DescentMethod::Gradient,
            max_iterations: 200,
            gradient_tol: 1e-6,
            initial_step: 0.1,
            armijo_c: 1e-4,
            backtrack: 0.5,
            max_backtracks: 30,
            lbfgs_memory: 8,
            pin_endpoints: true,
        }
    }
}

/// One accepted iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub breakdown: ObjectiveBreakdown,
    pub gradient_norm: f64,
    pub step: f64,
    pub backtracks: usize,
}

/// Resumable optimizer state.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DescentCheckpoint<T> {
    pub control: ControlSignal<T>,
    pub history: Vec<IterationLog>,
    /// Step length to try next.
    pub step: f64,
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct OptimizationResult<T> {
    pub control: ControlSignal<T>,
    pub record: TrajectoryRecord<T>,
    pub report: PhaseReport,
    pub history: Vec<IterationLog>,
    pub converged: bool,
    pub iterations: usize,
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

fn flat_gradient<T: Real>(g: [Vec<T>; 2], pin: bool) -> Vec<T> {
    let [mut gx, mut gy] = g;
    if pin {
        let n = gx.len() - 1;
        gx[0] = T::zero();
        gx[n] = T::zero();
        gy[0] = T::zero();
        gy[n] = T::zero();
    }
    gx.into_iter().chain(gy).collect()
}

struct Evaluated<T> {
    x: Vec<T>,
    f: f64,
    breakdown: ObjectiveBreakdown,
    grad: Vec<T>,
}

fn evaluate_point<T: Real>(
    problem: &ControlProblem<T>,
    duration: T,
    x: Vec<T>,
    pin: bool,
) -> Result<Evaluated<T>, Error> {
    let control = ControlSignal::from_flat(duration, &x);
    let (b, g, _) = objective_and_gradient(problem, &control)?;
    Ok(Evaluated {
        x,
        f: b.total,
        breakdown: b,
        grad: flat_gradient(g, pin),
    })
}

/// Objective only; infeasible controls map to `+∞`.
fn objective_value<T: Real>(
    problem: &ControlProblem<T>,
    duration: T,
    x: &[T],
) -> Result<f64, Error> {
    let control = ControlSignal::from_flat(duration, x);
    match evaluate_objective(problem, &control) {
        Ok((b, _)) if b.total.is_finite() => Ok(b.total),
        Ok(_) => Ok(f64::INFINITY),
        Err(Error::Geometry { .. } | Error::NonFinite { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// Descent from an initial control.
pub fn descend<T: Real>(
    problem: &ControlProblem<T>,
    initial: &ControlSignal<T>,
    opts: &DescentOptions,
    observer: &mut dyn FnMut(&DescentCheckpoint<T>) -> Result<(), Error>,
) -> Result<OptimizationResult<T>, Error> {
    let start = DescentCheckpoint {
        control: initial.clone(),
        history: Vec::new(),
        step: opts.initial_step,
        converged: false,
    };
    descend_from(problem, start, opts, observer)
}

/// Continues a descent from a checkpoint. Curvature memory (L-BFGS) and
/// momentum restart from scratch.
pub fn descend_from<T: Real>(
    problem: &ControlProblem<T>,
    checkpoint: DescentCheckpoint<T>,
    opts: &DescentOptions,
    observer: &mut dyn FnMut(&DescentCheckpoint<T>) -> Result<(), Error>,
) -> Result<OptimizationResult<T>, Error> {
    problem.weights.validate()?;
    checkpoint.control.validate()?;
    let duration = checkpoint.control.duration;
    let pin = opts.pin_endpoints;
    let mut history = checkpoint.history;
    let mut step = checkpoint.step;
    let mut converged = checkpoint.converged;

    let mut cur = evaluate_point(problem, duration, checkpoint.control.to_flat(), pin)?;
    let mut prev_x: Option<Vec<T>> = None;
    let mut memory: Vec<(Vec<T>, Vec<T>)> = Vec::new();
    let mut momentum_k = 1usize;

    while !converged && history.len() < opts.max_iterations {
        let gnorm = dot(&cur.grad, &cur.grad).sqrt().to_f64_lossy();
        if gnorm <= opts.gradient_tol {
            converged = true;
            break;
        }
        // Base point and search direction.
        let mut base: Option<Evaluated<T>> = None;
        let direction: Vec<T> = match opts.method {
            DescentMethod::Gradient => cur.grad.clone(),
            DescentMethod::Lbfgs => lbfgs_direction(&cur.grad, &memory),
            DescentMethod::Nesterov => {
                if let Some(px) = prev_x.as_ref().filter(|_| momentum_k > 1) {
                    let beta = T::lit((momentum_k as f64 - 1.0) / (momentum_k as f64 + 2.0));
                    let y: Vec<T> = cur
                        .x
                        .iter()
                        .zip(px)
                        .map(|(x, p)| *x + beta * (*x - *p))
                        .collect();
                    match evaluate_point(problem, duration, y, pin) {
                        Ok(e) if e.f.is_finite() => {
                            let d = e.grad.clone();
                            base = Some(e);
                            d
                        }
                        _ => cur.grad.clone(),
                    }
                } else {
                    cur.grad.clone()
                }
            }
        };
        let (bx, bf, bg) = match &base {
            Some(b) => (&b.x, b.f, &b.grad),
            None => (&cur.x, cur.f, &cur.grad),
        };
        let mut slope = dot(bg, &direction).to_f64_lossy();
        let mut direction = direction;
        if !(slope > 0.0) {
            direction = bg.clone();
            slope = dot(bg, bg).to_f64_lossy();
            memory.clear();
        }
        let dnorm = dot(&direction, &direction).sqrt().to_f64_lossy();
        let mut alpha = match opts.method {
            DescentMethod::Lbfgs if !memory.is_empty() => 1.0,
            _ => step / dnorm,
        };

        let mut accepted = None;
        let mut backtracks = 0;
        while backtracks <= opts.max_backtracks {
            let a = T::lit(alpha);
            let trial: Vec<T> = bx
                .iter()
                .zip(&direction)
                .map(|(x, d)| *x - a * *d)
                .collect();
            let f = objective_value(problem, duration, &trial)?;
            if f <= bf - opts.armijo_c * alpha * slope && f <= cur.f {
                accepted = Some(trial);
                break;
            }
            alpha *= opts.backtrack;
            backtracks += 1;
        }

        let Some(trial) = accepted else {
            if base.is_some() {
                // Momentum overshoot: restart from the current iterate.
                momentum_k = 1;
                prev_x = None;
                continue;
            }
            if !memory.is_empty() {
                memory.clear();
                continue;
            }
            break;
        };

        let next = match evaluate_point(problem, duration, trial, pin) {
            Ok(e) => e,
            Err(Error::Geometry { .. } | Error::NonFinite { .. }) => break,
            Err(e) => return Err(e),
        };
        if opts.method == DescentMethod::Lbfgs {
            let s: Vec<T> = next.x.iter().zip(&cur.x).map(|(a, b)| *a - *b).collect();
            let y: Vec<T> = next
                .grad
                .iter()
                .zip(&cur.grad)
                .map(|(a, b)| *a - *b)
                .collect();
            if dot(&s, &y) > T::lit(1e-12) * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
                memory.push((s, y));
                if memory.len() > opts.lbfgs_memory {
                    memory.remove(0);
                }
            }
        }
        step = match opts.method {
            DescentMethod::Lbfgs if !memory.is_empty() => 1.0,
            _ => {
                let moved = alpha * dnorm;
                if backtracks == 0 {
                    moved * 2.0
                } else {
                    moved
                }
            }
        };
        prev_x = Some(std::mem::replace(&mut cur, next).x);
        momentum_k += 1;
        history.push(IterationLog {
            iteration: history.len() + 1,
            breakdown: cur.breakdown,
            gradient_norm: dot(&cur.grad, &cur.grad).sqrt().to_f64_lossy(),
            step: alpha * dnorm,
            backtracks,
        });
        observer(&DescentCheckpoint {
            control: ControlSignal::from_flat(duration, &cur.x),
            history: history.clone(),
            step,
            converged: false,
        })?;
    }
    if !converged {
        let gnorm = dot(&cur.grad, &cur.grad).sqrt().to_f64_lossy();
        converged = gnorm <= opts.gradient_tol;
    }

    let control = ControlSignal::from_flat(duration, &cur.x);
    let (_, record) = evaluate_objective(problem, &control)?;
    let report = phase_report(&record)?;
    let iterations = history.len();
    Ok(OptimizationResult {
        control,
        record,
        report,
        history,
        converged,
        iterations,
    })
}

/// Two-loop recursion; returns an approximation of `H⁻¹g`.
fn lbfgs_direction<T: Real>(g: &[T], memory: &[(Vec<T>, Vec<T>)]) -> Vec<T> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y) in memory.iter().rev() {
        let rho = T::one() / dot(y, s);
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * *yi;
        }
        alphas.push((a, rho));
    }
    if let Some((s, y)) = memory.last() {
        let gamma = dot(s, y) / dot(y, y);
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
    }
    for ((s, y), (a, rho)) in memory.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * *si;
        }
    }
    q
}

/// Placement of the initialization circles relative to the static atom.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircleGeometry<T> {
    /// Static atom position.
    pub anchor: Vec2<T>,
    /// Unit vector from the static atom towards the circle centre.
    pub direction: Vec2<T>,
    /// Counter-clockwise when true.
    pub counter_clockwise: bool,
}

impl<T: Real> CircleGeometry<T> {
    /// Centre and start point (the far side from the anchor) of a circle of
    /// radius `r` whose centre is `d` from the anchor.
    pub fn place(&self, r: T, d: T) -> (Vec2<T>, Vec2<T>) {
        let u = self.direction;
        let c = [self.anchor[0] + d * u[0], self.anchor[1] + d * u[1]];
        (c, [c[0] + r * u[0], c[1] + r * u[1]])
    }

    /// One uniform revolution starting from the far side.
    pub fn control(&self, r: T, d: T, duration: T, intervals: usize) -> ControlSignal<T> {
        let (c, _) = self.place(r, d);
        let theta0 = self.direction[1].atan2(self.direction[0]);
        let sign = if self.counter_clockwise {
            T::one()
        } else {
            -T::one()
        };
        ControlSignal::from_fn(duration, intervals, |t| {
            let th = theta0 + sign * T::TAU() * t / duration;
            [c[0] + r * th.cos(), c[1] + r * th.sin()]
        })
    }
}

/// How the initial internal state of a scan cell is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum InitialState<T> {
    Fixed(StateVector<T>),
    /// Best-scoring eigenvector of the cycle propagator for the control.
    Cyclic,
}

/// One scan cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanEntry {
    pub r: f64,
    pub d: f64,
    pub objective: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScanResult {
    pub entries: Vec<ScanEntry>,
    pub best: ScanEntry,
}

impl ScanResult {
    /// Fraction of finite entries with a strictly lower objective than `value`.
    pub fn rank_fraction(&self, value: f64) -> f64 {
        let finite: Vec<f64> = self
            .entries
            .iter()
            .map(|e| e.objective)
            .filter(|v| v.is_finite())
            .collect();
        if finite.is_empty() {
            return 1.0;
        }
        finite.iter().filter(|v| **v < value).count() as f64 / finite.len() as f64
    }
}

/// Picks the cyclic state of `control` with the lowest objective.
pub fn best_cyclic_state<T: Real>(
    problem: &ControlProblem<T>,
    control: &ControlSignal<T>,
) -> Result<(StateVector<T>, ObjectiveBreakdown), Error> {
    let rec = integrate(
        &problem.system,
        &problem.initial_state(),
        control,
        &IntegratorOptions::new(problem.dt).with_propagator(),
    )?;
    let u = rec.propagator.expect("propagator requested");
    let mut best: Option<(StateVector<T>, ObjectiveBreakdown)> = None;
    for cyc in aa_eigenphases(&u)? {
        let psi = cyc.vector.map(|z| Cplx::new(T::lit(z.re), T::lit(z.im)));
        let p = problem.with_psi0(psi);
        let b = match evaluate_objective(&p, control) {
            Ok((b, _)) => b,
            Err(Error::Geometry { .. } | Error::NonFinite { .. }) => continue,
            Err(e) => return Err(e),
        };
        if best.as_ref().is_none_or(|(_, bb)| b.total < bb.total) {
            best = Some((psi, b));
        }
    }
    best.ok_or(Error::Geometry {
        separation: f64::NAN,
        guard: problem.system.coupling.guard.to_f64_lossy(),
        time: f64::NAN,
    })
}

/// Objective of one circle; `+∞` when the geometry is infeasible.
pub fn circle_objective<T: Real>(
    problem: &ControlProblem<T>,
    geometry: &CircleGeometry<T>,
    initial: InitialState<T>,
    r: T,
    d: T,
    duration: T,
    intervals: usize,
) -> Result<f64, Error> {
    let guard = problem.system.coupling.guard;
    if !(d - r > guard) {
        return Ok(f64::INFINITY);
    }
    let (_, start) = geometry.place(r, d);
    let mut p = problem.clone();
    p.r0 = [start, geometry.anchor];
    let control = geometry.control(r, d, duration, intervals);
    let result = match initial {
        InitialState::Fixed(psi) => evaluate_objective(&p.with_psi0(psi), &control).map(|(b, _)| b),
        InitialState::Cyclic => best_cyclic_state(&p, &control).map(|(_, b)| b),
    };
    match result {
        Ok(b) if b.total.is_finite() => Ok(b.total),
        Ok(_) | Err(Error::Geometry { .. } | Error::NonFinite { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// Evaluates every `(r, d)` cell in parallel. Entries are in row-major
/// `(r, d)` order regardless of scheduling.
pub fn circle_scan<T: Real>(
    problem: &ControlProblem<T>,
    geometry: &CircleGeometry<T>,
    initial: InitialState<T>,
    r_values: &[f64],
    d_values: &[f64],
    duration: T,
    intervals: usize,
) -> Result<ScanResult, Error> {
    if r_values.is_empty() || d_values.is_empty() {
        return Err(Error::InvalidArgument(
            "scan grids must be non-empty".into(),
        ));
    }
    let cells: Vec<(f64, f64)> = r_values
        .iter()
        .flat_map(|&r| d_values.iter().map(move |&d| (r, d)))
        .collect();
    let entries = cells
        .par_iter()
        .map(|&(r, d)| {
            circle_objective(
                problem,
                geometry,
                initial,
                T::lit(r),
                T::lit(d),
                duration,
                intervals,
            )
            .map(|objective| ScanEntry { r, d, objective })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let best = *entries
        .iter()
        .min_by(|a, b| a.objective.total_cmp(&b.objective))
        .expect("non-empty grid");
    Ok(ScanResult { entries, best })
}

/// `start, start + step, …` up to `stop` inclusive.
pub fn grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|k| start + step * k as f64).collect()
}
