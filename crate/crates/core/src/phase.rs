//! Total, dynamical and geometric phases of a cyclic run, and the
//! single-particle separability measure.

use nalgebra::{DMatrix, Schur};
use serde::{Deserialize, Serialize};

use crate::dynamics::TrajectoryRecord;
use crate::error::Error;
use crate::hamiltonian::{PF2, PF3};
use crate::linalg::{canonical_phase, hermitian_eigen};
use crate::scalar::{
    czero, inner, norm_sqr, unitarity_defect, wrap_degrees, CMat4, Cplx, Real, StateVector,
};

/// Modulus below which the overlap phase is treated as undefined.
pub const MIN_OVERLAP: f64 = 1e-6;

/// Reduced-spectrum gap below which the analytic separability gradient is
/// replaced by finite differences.
pub const SEPARABILITY_GAP: f64 = 1e-6;

/// Dimension of the first atom's local space: `{|d⟩, |p⟩}`.
pub const ATOM1_DIM: usize = 2;
/// Dimension of the second atom's local space: `{|d⟩, |f,5/2⟩, |f,3/2⟩, |f,1/2⟩}`.
pub const ATOM2_DIM: usize = 4;

/// Position of each pair-basis state in the `2 × 4` product grid.
pub const EMBEDDING: [(usize, usize); 4] = [(0, 0), (1, 1), (1, 2), (1, 3)];

pub fn to_degrees(rad: f64) -> f64 {
    rad.to_degrees()
}

/// `−∫⟨Ψ|H|Ψ⟩dt` in degrees, unwrapped.
pub fn dynamical_phase<T: Real>(record: &TrajectoryRecord<T>) -> f64 {
    record.final_dynamical_phase().to_f64_lossy().to_degrees()
}

/// `(arg⟨ψ₀|ψ_T⟩` in degrees, `|⟨ψ₀|ψ_T⟩|)`.
pub fn total_phase_from_overlap<T: Real>(
    psi0: &StateVector<T>,
    psi_t: &StateVector<T>,
) -> Result<(f64, f64), Error> {
    let c = inner(psi0, psi_t);
    let modulus = c.norm().to_f64_lossy();
    if !(modulus >= MIN_OVERLAP) {
        return Err(Error::DegenerateOverlap(modulus));
    }
    let arg = c.im.to_f64_lossy().atan2(c.re.to_f64_lossy());
    Ok((wrap_degrees(arg.to_degrees()), modulus))
}

/// Eigenphase (degrees, wrapped) and cyclic state of the cycle propagator.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CyclicState {
    pub phase_deg: f64,
    pub vector: StateVector<f64>,
}

/// Eigen-decomposition of a unitary cycle propagator, sorted by phase.
pub fn aa_eigenphases<T: Real>(u: &CMat4<T>) -> Result<Vec<CyclicState>, Error> {
    let defect = unitarity_defect(u).to_f64_lossy();
    if !(defect <= 1e-6) {
        return Err(Error::NotUnitary(defect));
    }
    let m = DMatrix::from_fn(4, 4, |i, j| {
        Cplx::new(u[i][j].re.to_f64_lossy(), u[i][j].im.to_f64_lossy())
    });
    let (q, t) = Schur::new(m).unpack();
    let mut out: Vec<CyclicState> = (0..4)
        .map(|k| {
            let lambda = t[(k, k)];
            let v = canonical_phase((0..4).map(|i| q[(i, k)]).collect());
            CyclicState {
                phase_deg: wrap_degrees(lambda.arg().to_degrees()),
                vector: [v[0], v[1], v[2], v[3]],
            }
        })
        .collect();
    out.sort_by(|a, b| a.phase_deg.total_cmp(&b.phase_deg));
    Ok(out)
}

/// Top reduced-density eigenvectors and the resulting separability.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeparabilityDecomposition<T> {
    pub eta1: Vec<Cplx<T>>,
    pub eta2: Vec<Cplx<T>>,
    #[serde(rename = "F")]
    pub f: T,
    /// Gap between the two largest eigenvalues of the first reduced density.
    pub gap: T,
}

impl<T: Real> SeparabilityDecomposition<T> {
    /// `η₁ ⊗ η₂` projected back onto the pair basis.
    pub fn product_in_basis(&self) -> StateVector<T> {
        let mut w = [czero(); 4];
        for (k, &(i, j)) in EMBEDDING.iter().enumerate() {
            w[k] = self.eta1[i] * self.eta2[j];
        }
        w
    }
}

/// Places a pair-basis vector in the `2 × 4` product grid.
pub fn embed<T: Real>(psi: &StateVector<T>) -> [[Cplx<T>; ATOM2_DIM]; ATOM1_DIM] {
    let mut c = [[czero(); ATOM2_DIM]; ATOM1_DIM];
    for (k, &(i, j)) in EMBEDDING.iter().enumerate() {
        c[i][j] = psi[k];
    }
    c
}

/// Inverse of [`embed`]; fails if the grid carries weight outside the pair
/// basis.
pub fn restrict<T: Real>(c: &[[Cplx<T>; ATOM2_DIM]; ATOM1_DIM]) -> Result<StateVector<T>, Error> {
    let mut psi = [czero(); 4];
    let mut outside = T::zero();
    for i in 0..ATOM1_DIM {
        for j in 0..ATOM2_DIM {
            match EMBEDDING.iter().position(|&e| e == (i, j)) {
                Some(k) => psi[k] = c[i][j],
                None => outside += c[i][j].norm_sqr(),
            }
        }
    }
    if outside > T::lit(1e-24) {
        return Err(Error::Factorization(outside.to_f64_lossy()));
    }
    Ok(psi)
}

/// Separability of a state given on the full product grid.
pub fn separability_of_grid<T: Real>(
    c: &[[Cplx<T>; ATOM2_DIM]; ATOM1_DIM],
) -> Result<SeparabilityDecomposition<T>, Error> {
    restrict(c)?;
    let norm: T = c.iter().flatten().map(|z| z.norm_sqr()).sum();
    if (norm.sqrt() - T::one()).abs() > T::lit(1e-6) {
        return Err(Error::InvalidArgument(format!(
            "state norm {} differs from 1",
            norm.sqrt()
        )));
    }
    let rho1: Vec<Vec<Cplx<T>>> = (0..ATOM1_DIM)
        .map(|i| {
            (0..ATOM1_DIM)
                .map(|k| (0..ATOM2_DIM).map(|j| c[i][j] * c[k][j].conj()).sum())
                .collect()
        })
        .collect();
    let rho2: Vec<Vec<Cplx<T>>> = (0..ATOM2_DIM)
        .map(|j| {
            (0..ATOM2_DIM)
                .map(|l| (0..ATOM1_DIM).map(|i| c[i][j] * c[i][l].conj()).sum())
                .collect()
        })
        .collect();
    let e1 = hermitian_eigen(&rho1);
    let e2 = hermitian_eigen(&rho2);
    let gap = e1.values[0] - e1.values[1];
    let eta1 = top_vector(&e1.values, &e1.vectors);
    let eta2 = top_vector(&e2.values, &e2.vectors);
    let mut ov = czero::<T>();
    for i in 0..ATOM1_DIM {
        for j in 0..ATOM2_DIM {
            ov += (eta1[i] * eta2[j]).conj() * c[i][j];
        }
    }
    Ok(SeparabilityDecomposition {
        eta1,
        eta2,
        f: ov.norm(),
        gap,
    })
}

/// Separability `F = |⟨Ψ|η₁⊗η₂⟩|` of a pair-basis state.
pub fn separability<T: Real>(psi: &StateVector<T>) -> Result<SeparabilityDecomposition<T>, Error> {
    separability_of_grid(&embed(psi))
}

/// Top eigenvector; within a degenerate top eigenspace, the direction with
/// the largest first component.
fn top_vector<T: Real>(values: &[T], vectors: &[Vec<Cplx<T>>]) -> Vec<Cplx<T>> {
    let tol = T::lit(1e-10);
    let top: Vec<&Vec<Cplx<T>>> = values
        .iter()
        .zip(vectors)
        .filter(|(v, _)| values[0] - **v <= tol)
        .map(|(_, x)| x)
        .collect();
    if top.len() == 1 {
        return top[0].clone();
    }
    let n = top[0].len();
    // Project e₀ onto the eigenspace.
    let mut p = vec![czero::<T>(); n];
    for x in &top {
        let coef = x[0].conj();
        for i in 0..n {
            p[i] += x[i] * coef;
        }
    }
    let norm: T = p.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt();
    if norm <= T::lit(1e-12) {
        return top[0].clone();
    }
    canonical_phase(p.into_iter().map(|z| z / norm).collect())
}

/// Gradient of `F` in the real sense: `dF = Re⟨g|dψ⟩`.
pub fn separability_gradient<T: Real>(psi: &StateVector<T>) -> Result<StateVector<T>, Error> {
    let dec = separability(psi)?;
    if dec.gap.to_f64_lossy() >= SEPARABILITY_GAP && dec.f > T::zero() {
        let w = dec.product_in_basis();
        let c = inner(&w, psi);
        let s = c / c.norm();
        return Ok(w.map(|z| z * s));
    }
    separability_gradient_fd(psi)
}

/// Central finite differences of `F` without renormalization.
pub fn separability_gradient_fd<T: Real>(psi: &StateVector<T>) -> Result<StateVector<T>, Error> {
    let h = T::lit(1e-6).max(T::epsilon().sqrt() * T::lit(10.0));
    let eval = |x: StateVector<T>| -> Result<T, Error> {
        let n = norm_sqr(&x).sqrt();
        // F is 1-homogeneous in |ψ|, so evaluate on the normalized state.
        Ok(separability(&x.map(|z| z / n))?.f * n)
    };
    let mut g = [czero(); 4];
    for k in 0..4 {
        for part in 0..2 {
            let dir = if part == 0 {
                Cplx::new(h, T::zero())
            } else {
                Cplx::new(T::zero(), h)
            };
            let mut xp = *psi;
            xp[k] += dir;
            let mut xm = *psi;
            xm[k] -= dir;
            let d = (eval(xp)? - eval(xm)?) / (T::lit(2.0) * h);
            if part == 0 {
                g[k].re = d;
            } else {
                g[k].im = d;
            }
        }
    }
    Ok(g)
}

/// Phase and quality figures of a completed run; angles in degrees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub gamma_total: f64,
    pub gamma_dynamical: f64,
    pub gamma_geometric: f64,
    pub overlap_modulus: f64,
    #[serde(rename = "separability_F")]
    pub separability_f: f64,
    /// µm, per atom
    pub loop_error_r: [f64; 2],
    /// ħ/µm, per atom
    pub final_momentum: [f64; 2],
    /// Largest final population outside `|dd⟩` and `|pf₁⟩`.
    pub side_channel_population: f64,
}

pub fn phase_report<T: Real>(record: &TrajectoryRecord<T>) -> Result<PhaseReport, Error> {
    let first = record.initial();
    let last = record.last();
    let (gamma_total, overlap_modulus) = total_phase_from_overlap(&first.psi, &last.psi)?;
    let gamma_dynamical = dynamical_phase(record);
    let f = separability(&last.psi)?.f.to_f64_lossy();
    let dist = |a: [T; 2], b: [T; 2]| {
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2))
            .sqrt()
            .to_f64_lossy()
    };
    let side = [PF2, PF3]
        .iter()
        .map(|&k| last.psi[k].norm_sqr().to_f64_lossy())
        .fold(0.0, f64::max);
    Ok(PhaseReport {
        gamma_total,
        gamma_dynamical,
        gamma_geometric: wrap_degrees(gamma_total - gamma_dynamical),
        overlap_modulus,
        separability_f: f,
        loop_error_r: [dist(last.r[0], first.r[0]), dist(last.r[1], first.r[1])],
        final_momentum: [
            dist(last.p[0], [T::zero(); 2]),
            dist(last.p[1], [T::zero(); 2]),
        ],
        side_channel_population: side,
    })
}
