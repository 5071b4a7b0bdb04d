//! Two-atom dipole-dipole Hamiltonian in the four-state Rydberg pair basis.
//!
//! The Hamiltonian is `C3 / R³ · 𝒟(ϑ)`, where `𝒟` combines tensor products of
//! single-atom spherical dipole components `d_q` (q = 0, ±1) with angular
//! weights in `ϑ`, the angle between the interatomic axis and the
//! quantization axis. Every weight divided by `R³` is a quadratic form in the
//! relative position over `|Δ|⁵`, which is what the analytic gradient and
//! Hessian below differentiate.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::scalar::{Cplx, RMat4, Real, StateVector, Vec2};
use crate::wigner::{wigner3j, HalfInt};

/// Orbital label of a Rydberg level. Carried for bookkeeping; the dipole
/// matrix elements depend only on `(j, m)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orbital {
    P,
    D,
    F,
}

impl Orbital {
    pub fn symbol(self) -> char {
        match self {
            Orbital::P => 'p',
            Orbital::D => 'd',
            Orbital::F => 'f',
        }
    }
}

/// Single-atom level `|j, m⟩`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AngularMomentumState {
    pub j: HalfInt,
    pub m: HalfInt,
    pub orbital: Orbital,
}

impl AngularMomentumState {
    pub fn new(j: HalfInt, m: HalfInt, orbital: Orbital) -> Result<Self, Error> {
        if j.is_integer() || !matches!(j.twice(), 1 | 3 | 5) {
            return Err(Error::InvalidArgument(format!(
                "j = {j} outside {{1/2, 3/2, 5/2}}"
            )));
        }
        crate::wigner::check_jm(j, m)?;
        Ok(Self { j, m, orbital })
    }

    const fn raw(twice_j: i32, twice_m: i32, orbital: Orbital) -> Self {
        Self {
            j: HalfInt::from_twice(twice_j),
            m: HalfInt::from_twice(twice_m),
            orbital,
        }
    }

    pub fn label(&self) -> String {
        format!("{},m={}", self.orbital.symbol(), self.m)
    }
}

/// Ordered two-atom basis. Index order is fixed throughout the crate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TwoAtomBasis {
    pub states: [(AngularMomentumState, AngularMomentumState); 4],
}

pub const DD: usize = 0;
pub const PF1: usize = 1;
pub const PF2: usize = 2;
pub const PF3: usize = 3;

/// Names of the basis states, in index order.
pub const BASIS_LABELS: [&str; 4] = ["dd", "pf1", "pf2", "pf3"];

impl TwoAtomBasis {
    /// `|dd⟩ = |d,3/2; d,3/2⟩`, `|pf₁⟩ = |p,1/2; f,5/2⟩`,
    /// `|pf₂⟩ = |p,1/2; f,3/2⟩`, `|pf₃⟩ = |p,1/2; f,1/2⟩`.
    pub fn rydberg_pair() -> Self {
        use AngularMomentumState as S;
        let d = S::raw(3, 3, Orbital::D);
        let p = S::raw(1, 1, Orbital::P);
        Self {
            states: [
                (d, d),
                (p, S::raw(5, 5, Orbital::F)),
                (p, S::raw(5, 3, Orbital::F)),
                (p, S::raw(5, 1, Orbital::F)),
            ],
        }
    }
}

impl Default for TwoAtomBasis {
    fn default() -> Self {
        Self::rydberg_pair()
    }
}

/// `⟨j, m| d_q |j', m'⟩ = (−1)^(j'−1+m) · (j' 1 j; m' q −m)`.
pub fn dipole_element<T: Real>(
    bra: &AngularMomentumState,
    ket: &AngularMomentumState,
    q: i32,
) -> Result<T, Error> {
    if !(-1..=1).contains(&q) {
        return Err(Error::InvalidArgument(format!(
            "q = {q} not in {{-1, 0, 1}}"
        )));
    }
    let value: T = wigner3j(
        ket.j,
        HalfInt::integer(1),
        bra.j,
        ket.m,
        HalfInt::integer(q),
        -bra.m,
    )?;
    if value == T::zero() {
        return Ok(value);
    }
    let twice_exp = ket.j.twice() - 2 + bra.m.twice();
    if twice_exp % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "phase exponent j' - 1 + m = {}/2 is not an integer",
            twice_exp
        )));
    }
    Ok(if (twice_exp / 2).rem_euclid(2) == 1 {
        -value
    } else {
        value
    })
}

/// Angular coefficients of the four operator groups in `𝒟(ϑ)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DCoefficients<T> {
    /// weight of `d₀₀`
    pub zz: T,
    /// weight of `d₊₋ + d₋₊`
    pub pm: T,
    /// weight of `d₊₊ + d₋₋`
    pub pp: T,
    /// weight of `d₋₀ − d₊₀ + d₀₋ − d₀₊`
    pub cross: T,
}

impl<T: Real> DCoefficients<T> {
    pub fn at_angle(theta: T) -> Self {
        let (s, c) = theta.sin_cos();
        let three = T::lit(3.0);
        let three_half = T::lit(1.5);
        Self {
            zz: T::one() - three * c * c,
            pm: -(T::one() - three_half * s * s),
            pp: -three_half * s * s,
            cross: -(three / T::SQRT_2()) * s * c,
        }
    }

    fn as_array(&self) -> [T; 4] {
        [self.zz, self.pm, self.pp, self.cross]
    }
}

/// The four constant operator groups of `𝒟`, projected onto a basis.
#[derive(Clone, Debug)]
pub struct AngularStructure<T> {
    /// `[d₀₀, d₊₋+d₋₊, d₊₊+d₋₋, d₋₀−d₊₀+d₀₋−d₀₊]`
    pub groups: [RMat4<T>; 4],
}

impl<T: Real> AngularStructure<T> {
    pub fn new(basis: &TwoAtomBasis) -> Result<Self, Error> {
        // (q on atom 1, q on atom 2, sign) for each group
        let layout: [&[(i32, i32, f64)]; 4] = [
            &[(0, 0, 1.0)],
            &[(1, -1, 1.0), (-1, 1, 1.0)],
            &[(1, 1, 1.0), (-1, -1, 1.0)],
            &[(-1, 0, 1.0), (1, 0, -1.0), (0, -1, 1.0), (0, 1, -1.0)],
        ];
        let mut groups = [[[T::zero(); 4]; 4]; 4];
        for (g, terms) in layout.iter().enumerate() {
            for (row, (b1, b2)) in basis.states.iter().enumerate() {
                for (col, (k1, k2)) in basis.states.iter().enumerate() {
                    let mut acc = T::zero();
                    for &(q1, q2, sign) in terms.iter() {
                        let e1: T = dipole_element(b1, k1, q1)?;
                        let e2: T = dipole_element(b2, k2, q2)?;
                        acc += T::lit(sign) * e1 * e2;
                    }
                    groups[g][row][col] = acc;
                }
            }
        }
        Ok(Self { groups })
    }

    fn combine(&self, weights: [T; 4]) -> RMat4<T> {
        let mut out = [[T::zero(); 4]; 4];
        for (w, g) in weights.iter().zip(&self.groups) {
            for i in 0..4 {
                for j in 0..4 {
                    out[i][j] += *w * g[i][j];
                }
            }
        }
        out
    }

    /// `𝒟(ϑ)` as a real 4x4 matrix.
    pub fn operator_at(&self, theta: T) -> RMat4<T> {
        self.combine(DCoefficients::at_angle(theta).as_array())
    }
}

/// `𝒟(ϑ)` in the pair basis.
pub fn build_d<T: Real>(theta: T) -> RMat4<T> {
    AngularStructure::new(&TwoAtomBasis::rydberg_pair())
        .expect("pair basis is valid")
        .operator_at(theta)
}

/// Dipole-dipole Hamiltonian (rad/µs). Real symmetric in the pair basis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HamiltonianMatrix<T>(pub RMat4<T>);

impl<T: Real> HamiltonianMatrix<T> {
    pub fn zero() -> Self {
        Self([[T::zero(); 4]; 4])
    }

    pub fn apply(&self, psi: &StateVector<T>) -> StateVector<T> {
        let mut out = [Cplx::new(T::zero(), T::zero()); 4];
        for (i, row) in self.0.iter().enumerate() {
            for (h, z) in row.iter().zip(psi) {
                out[i] += z * *h;
            }
        }
        out
    }

    /// `⟨ψ|H|ψ⟩`, real because `H` is symmetric.
    pub fn expectation(&self, psi: &StateVector<T>) -> T {
        let hpsi = self.apply(psi);
        psi.iter().zip(&hpsi).map(|(a, b)| (a.conj() * b).re).sum()
    }

    pub fn frobenius(&self) -> T {
        self.0.iter().flatten().map(|x| *x * *x).sum::<T>().sqrt()
    }

    /// `‖H − H†‖ / ‖H‖` (zero for the zero matrix).
    pub fn hermiticity_defect(&self) -> T {
        let mut acc = T::zero();
        for i in 0..4 {
            for j in 0..4 {
                let d = self.0[i][j] - self.0[j][i];
                acc += d * d;
            }
        }
        let n = self.frobenius();
        if n == T::zero() {
            T::zero()
        } else {
            acc.sqrt() / n
        }
    }

    pub fn scaled(&self, s: T) -> Self {
        let mut m = self.0;
        m.iter_mut().flatten().for_each(|x| *x *= s);
        Self(m)
    }
}

/// Positions of both atoms together with the quantization axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeometryInput<T> {
    pub r1: Vec2<T>,
    pub r2: Vec2<T>,
    pub quantization_axis: Vec2<T>,
}

impl<T: Real> GeometryInput<T> {
    pub fn new(r1: Vec2<T>, r2: Vec2<T>) -> Self {
        Self {
            r1,
            r2,
            quantization_axis: [T::zero(), T::one()],
        }
    }

    pub fn separation(&self) -> T {
        let dx = self.r2[0] - self.r1[0];
        let dy = self.r2[1] - self.r1[1];
        dx.hypot(dy)
    }

    /// Signed angle of `r̂ = (r² − r¹)/R` from the quantization axis.
    pub fn theta(&self) -> T {
        let delta = [self.r2[0] - self.r1[0], self.r2[1] - self.r1[1]];
        let a = self.quantization_axis;
        let along = delta[0] * a[0] + delta[1] * a[1];
        let perp = delta[0] * a[1] - delta[1] * a[0];
        perp.atan2(along)
    }
}

/// Quadratic form `Δᵀ S Δ / |Δ|⁵` with its first and second derivatives.
#[derive(Clone, Copy, Debug)]
struct RadialQuadratic<T> {
    s: [[T; 2]; 2],
}

impl<T: Real> RadialQuadratic<T> {
    /// Form written in (along-axis, perpendicular) coordinates, rotated into
    /// Cartesian ones.
    fn rotated(local: [[T; 2]; 2], axis: Vec2<T>) -> Self {
        // rows of B: axis, perpendicular
        let b = [[axis[0], axis[1]], [axis[1], -axis[0]]];
        let mut s = [[T::zero(); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        s[i][j] += b[k][i] * local[k][l] * b[l][j];
                    }
                }
            }
        }
        Self { s }
    }

    fn value(&self, x: Vec2<T>) -> T {
        let r2 = x[0] * x[0] + x[1] * x[1];
        self.poly(x) / (r2 * r2 * r2.sqrt())
    }

    fn poly(&self, x: Vec2<T>) -> T {
        let s = &self.s;
        x[0] * (s[0][0] * x[0] + s[0][1] * x[1]) + x[1] * (s[1][0] * x[0] + s[1][1] * x[1])
    }

    fn gradient(&self, x: Vec2<T>) -> Vec2<T> {
        let r2 = x[0] * x[0] + x[1] * x[1];
        let r = r2.sqrt();
        let inv5 = T::one() / (r2 * r2 * r);
        let inv7 = inv5 / r2;
        let p = self.poly(x);
        let two = T::lit(2.0);
        let five = T::lit(5.0);
        let mut g = [T::zero(); 2];
        for i in 0..2 {
            let pi = two * (self.s[i][0] * x[0] + self.s[i][1] * x[1]);
            g[i] = pi * inv5 - five * p * x[i] * inv7;
        }
        g
    }

    fn hessian(&self, x: Vec2<T>) -> [[T; 2]; 2] {
        let r2 = x[0] * x[0] + x[1] * x[1];
        let r = r2.sqrt();
        let inv5 = T::one() / (r2 * r2 * r);
        let inv7 = inv5 / r2;
        let inv9 = inv7 / r2;
        let p = self.poly(x);
        let two = T::lit(2.0);
        let five = T::lit(5.0);
        let pi = [
            two * (self.s[0][0] * x[0] + self.s[0][1] * x[1]),
            two * (self.s[1][0] * x[0] + self.s[1][1] * x[1]),
        ];
        let mut h = [[T::zero(); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                let delta = if i == j { T::one() } else { T::zero() };
                h[i][j] = two * self.s[i][j] * inv5
                    - five * (pi[i] * x[j] + pi[j] * x[i]) * inv7
                    - five * p * delta * inv7
                    + T::lit(35.0) * p * x[i] * x[j] * inv9;
            }
        }
        h
    }
}

/// `∂H/∂r^a_i`, indexed `[atom][component]`.
pub type HamiltonianGradient<T> = [[HamiltonianMatrix<T>; 2]; 2];

/// `∂²⟨Ψ|H|Ψ⟩ / ∂r^a_i ∂r^{a'}_j`, indexed `[a][a'][i][j]`.
pub type PositionHessian<T> = [[[[T; 2]; 2]; 2]; 2];

/// Dipole coupling between the two atoms: angular structure, strength and
/// the minimum-separation guard.
#[derive(Clone, Debug)]
pub struct DipoleCoupling<T> {
    structure: AngularStructure<T>,
    forms: [RadialQuadratic<T>; 4],
    /// `C₃` in rad/µs·µm³.
    pub c3: T,
    pub axis: Vec2<T>,
    /// Minimum admissible separation (µm).
    pub guard: T,
}

impl<T: Real> DipoleCoupling<T> {
    pub fn new(c3: T, axis: Vec2<T>, guard: T) -> Result<Self, Error> {
        let norm = axis[0].hypot(axis[1]);
        if !(norm > T::zero()) || !guard.is_finite() || guard < T::zero() || !c3.is_finite() {
            return Err(Error::InvalidArgument(
                "coupling needs a non-zero axis, finite C3 and guard >= 0".into(),
            ));
        }
        let axis = [axis[0] / norm, axis[1] / norm];
        let structure = AngularStructure::new(&TwoAtomBasis::rydberg_pair())?;
        let x = -T::lit(1.5) / T::SQRT_2();
        let local = [
            [[-T::lit(2.0), T::zero()], [T::zero(), T::one()]],
            [[-T::one(), T::zero()], [T::zero(), T::lit(0.5)]],
            [[T::zero(), T::zero()], [T::zero(), -T::lit(1.5)]],
            [[T::zero(), x], [x, T::zero()]],
        ];
        let forms = local.map(|l| RadialQuadratic::rotated(l, axis));
        Ok(Self {
            structure,
            forms,
            c3,
            axis,
            guard,
        })
    }

    /// Default coupling: y quantization axis, 1 µm guard.
    pub fn with_c3(c3: T) -> Self {
        Self::new(c3, [T::zero(), T::one()], T::one()).expect("valid defaults")
    }

    pub fn structure(&self) -> &AngularStructure<T> {
        &self.structure
    }

    fn delta(&self, r1: &Vec2<T>, r2: &Vec2<T>) -> Result<Vec2<T>, Error> {
        let d = [r2[0] - r1[0], r2[1] - r1[1]];
        let sep = d[0].hypot(d[1]);
        if !(sep >= self.guard) {
            return Err(Error::Geometry {
                separation: sep.to_f64_lossy(),
                guard: self.guard.to_f64_lossy(),
                time: f64::NAN,
            });
        }
        Ok(d)
    }

    pub fn geometry(&self, r1: Vec2<T>, r2: Vec2<T>) -> GeometryInput<T> {
        GeometryInput {
            r1,
            r2,
            quantization_axis: self.axis,
        }
    }

    pub fn hamiltonian(&self, r1: &Vec2<T>, r2: &Vec2<T>) -> Result<HamiltonianMatrix<T>, Error> {
        let d = self.delta(r1, r2)?;
        let w = self.forms.map(|f| self.c3 * f.value(d));
        Ok(HamiltonianMatrix(self.structure.combine(w)))
    }

    pub fn hamiltonian_for(&self, geom: &GeometryInput<T>) -> Result<HamiltonianMatrix<T>, Error> {
        let coupling;
        let this = if geom.quantization_axis == self.axis {
            self
        } else {
            coupling = Self::new(self.c3, geom.quantization_axis, self.guard)?;
            &coupling
        };
        this.hamiltonian(&geom.r1, &geom.r2)
    }

    /// Analytic `∂H/∂r^a_i`. Atom-2 derivatives are the negatives of atom-1's.
    pub fn gradient(&self, r1: &Vec2<T>, r2: &Vec2<T>) -> Result<HamiltonianGradient<T>, Error> {
        let d = self.delta(r1, r2)?;
        let grads = self.forms.map(|f| f.gradient(d));
        let mut out = [[HamiltonianMatrix::zero(); 2]; 2];
        for i in 0..2 {
            let w = [0, 1, 2, 3].map(|k| self.c3 * grads[k][i]);
            let dh = HamiltonianMatrix(self.structure.combine(w));
            out[1][i] = dh;
            out[0][i] = dh.scaled(-T::one());
        }
        Ok(out)
    }

    /// `H` and its gradient in one pass.
    pub fn hamiltonian_and_gradient(
        &self,
        r1: &Vec2<T>,
        r2: &Vec2<T>,
    ) -> Result<(HamiltonianMatrix<T>, HamiltonianGradient<T>), Error> {
        Ok((self.hamiltonian(r1, r2)?, self.gradient(r1, r2)?))
    }

    /// Second position derivatives of `⟨ψ|H|ψ⟩` at fixed `ψ`.
    pub fn hessian_contract(
        &self,
        r1: &Vec2<T>,
        r2: &Vec2<T>,
        psi: &StateVector<T>,
    ) -> Result<PositionHessian<T>, Error> {
        let d = self.delta(r1, r2)?;
        let mut h = [[T::zero(); 2]; 2];
        for (form, group) in self.forms.iter().zip(&self.structure.groups) {
            let e = HamiltonianMatrix(*group).expectation(psi);
            let fh = form.hessian(d);
            for i in 0..2 {
                for j in 0..2 {
                    h[i][j] += self.c3 * e * fh[i][j];
                }
            }
        }
        let mut out = [[[[T::zero(); 2]; 2]; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                let sign = if a == b { T::one() } else { -T::one() };
                for i in 0..2 {
                    for j in 0..2 {
                        out[a][b][i][j] = sign * h[i][j];
                    }
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c3() -> f64 {
        crate::units::c3_from_ghz_um3(2.39)
    }

    #[test]
    fn coefficients_at_reference_angles() {
        let magic = (1.0f64 / 3f64.sqrt()).acos();
        assert!(DCoefficients::at_angle(magic).zz.abs() < 1e-15);

        let c = DCoefficients::at_angle(0.0f64);
        assert_eq!([c.zz, c.pm, c.pp, c.cross], [-2.0, -1.0, 0.0, 0.0]);

        let c = DCoefficients::at_angle(std::f64::consts::FRAC_PI_2);
        assert!((c.zz - 1.0).abs() < 1e-15);
        assert!((c.pm - 0.5).abs() < 1e-15);
        assert!((c.pp + 1.5).abs() < 1e-15);
        assert!(c.cross.abs() < 1e-15);
    }

    #[test]
    fn selection_rule_on_p_from_d() {
        let basis = TwoAtomBasis::rydberg_pair();
        let d = basis.states[DD].0;
        let p = basis.states[PF1].0;
        assert_eq!(dipole_element::<f64>(&p, &d, 0).unwrap(), 0.0);
        assert_eq!(dipole_element::<f64>(&p, &d, 1).unwrap(), 0.0);
        assert!(dipole_element::<f64>(&p, &d, -1).unwrap() != 0.0);
        assert!(dipole_element::<f64>(&p, &d, 2).is_err());
    }

    #[test]
    fn state_validation() {
        assert!(AngularMomentumState::new(
            HalfInt::from_twice(3),
            HalfInt::from_twice(5),
            Orbital::D
        )
        .is_err());
        assert!(AngularMomentumState::new(
            HalfInt::from_twice(2),
            HalfInt::from_twice(0),
            Orbital::D
        )
        .is_err());
        assert!(AngularMomentumState::new(
            HalfInt::from_twice(5),
            HalfInt::from_twice(-3),
            Orbital::F
        )
        .is_ok());
    }

    #[test]
    fn hamiltonian_matches_angle_route() {
        let coupling = DipoleCoupling::with_c3(c3());
        let r1 = [0.3, -1.2];
        let r2 = [5.1, 7.4];
        let h = coupling.hamiltonian(&r1, &r2).unwrap();
        let geom = coupling.geometry(r1, r2);
        let r = geom.separation();
        let d = coupling.structure().operator_at(geom.theta());
        for i in 0..4 {
            for j in 0..4 {
                let expected = c3() / r.powi(3) * d[i][j];
                assert!((h.0[i][j] - expected).abs() < 1e-12 * (1.0 + expected.abs()));
            }
        }
    }

    #[test]
    fn guard_refuses_close_atoms() {
        let coupling = DipoleCoupling::with_c3(c3());
        let err = coupling.hamiltonian(&[0.0, 0.0], &[0.5, 0.0]).unwrap_err();
        assert!(matches!(err, Error::Geometry { .. }));
    }

    #[test]
    fn doubling_separation_divides_by_eight() {
        let coupling = DipoleCoupling::with_c3(c3());
        let a = coupling.hamiltonian(&[0.0, 0.0], &[3.0, 4.0]).unwrap();
        let b = coupling.hamiltonian(&[0.0, 0.0], &[6.0, 8.0]).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!((a.0[i][j] - 8.0 * b.0[i][j]).abs() < 1e-12 * a.frobenius());
            }
        }
    }

    #[test]
    fn aligned_pair_has_zero_angle() {
        let coupling = DipoleCoupling::with_c3(c3());
        let g = coupling.geometry([0.0, 0.0], [0.0, 26.3]);
        assert_eq!(g.theta(), 0.0);
    }

    #[test]
    fn reflection_flips_angle_and_pf2_sign() {
        // Mirroring x → −x sends ϑ → −ϑ; H transforms by diag(1, 1, −1, 1).
        let coupling = DipoleCoupling::with_c3(c3());
        let h = coupling.hamiltonian(&[1.0, 2.0], &[4.0, 9.0]).unwrap();
        let m = coupling.hamiltonian(&[-1.0, 2.0], &[-4.0, 9.0]).unwrap();
        let s = [1.0, 1.0, -1.0, 1.0];
        for i in 0..4 {
            for j in 0..4 {
                assert!((m.0[i][j] - s[i] * s[j] * h.0[i][j]).abs() < 1e-13 * h.frobenius());
            }
        }
        let g = coupling.geometry([1.0, 2.0], [4.0, 9.0]);
        let gm = coupling.geometry([-1.0, 2.0], [-4.0, 9.0]);
        assert!((g.theta() + gm.theta()).abs() < 1e-15);
    }

    #[test]
    fn single_precision_build() {
        let coupling = DipoleCoupling::<f32>::with_c3(c3() as f32);
        let h = coupling.hamiltonian(&[0.0, 0.0], &[0.0, 10.0]).unwrap();
        assert!(h.hermiticity_defect() < 1e-6);
    }
}
