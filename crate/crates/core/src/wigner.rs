//! Wigner 3-j symbols for half-integer angular momenta.
//!
//! Evaluated with the Racah sum in exact rational arithmetic; only the final
//! square root is taken in floating point.

use std::fmt;

use num_rational::Ratio;

use crate::error::Error;
use crate::scalar::Real;

/// A half-integer (or integer) quantum number, stored as twice its value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HalfInt(i32);

impl HalfInt {
    pub const fn from_twice(twice: i32) -> Self {
        HalfInt(twice)
    }

    pub const fn integer(n: i32) -> Self {
        HalfInt(2 * n)
    }

    /// Parses a real value; fails unless `2x` is an integer.
    pub fn new(x: f64) -> Result<Self, Error> {
        let twice = 2.0 * x;
        if !twice.is_finite() || (twice - twice.round()).abs() > 1e-12 || twice.abs() > 1e6 {
            return Err(Error::InvalidArgument(format!("{x} is not a half-integer")));
        }
        Ok(HalfInt(twice.round() as i32))
    }

    pub const fn twice(self) -> i32 {
        self.0
    }

    pub fn value(self) -> f64 {
        f64::from(self.0) / 2.0
    }

    pub const fn is_integer(self) -> bool {
        self.0 % 2 == 0
    }
}

impl fmt::Display for HalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 % 2 == 0 {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

impl std::ops::Neg for HalfInt {
    type Output = HalfInt;
    fn neg(self) -> HalfInt {
        HalfInt(-self.0)
    }
}

impl std::ops::Add for HalfInt {
    type Output = HalfInt;
    fn add(self, rhs: HalfInt) -> HalfInt {
        HalfInt(self.0 + rhs.0)
    }
}

impl std::ops::Sub for HalfInt {
    type Output = HalfInt;
    fn sub(self, rhs: HalfInt) -> HalfInt {
        HalfInt(self.0 - rhs.0)
    }
}

/// Checks `j ≥ 0`, `|m| ≤ j` and that `j` and `m` share integrality.
pub fn check_jm(j: HalfInt, m: HalfInt) -> Result<(), Error> {
    if j.0 < 0 || m.0.abs() > j.0 || (j.0 - m.0) % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "invalid angular momentum pair j = {j}, m = {m}"
        )));
    }
    Ok(())
}

fn triangle(j1: HalfInt, j2: HalfInt, j3: HalfInt) -> bool {
    let (a, b, c) = (j1.0, j2.0, j3.0);
    c >= (a - b).abs() && c <= a + b && (a + b + c) % 2 == 0
}

fn factorial(n: i64) -> i128 {
    debug_assert!(n >= 0);
    (1..=n as i128).product::<i128>().max(1)
}

/// `(a + b)/2` for doubled values whose sum is known to be even.
fn half(twice: i32) -> i64 {
    debug_assert!(twice % 2 == 0);
    i64::from(twice / 2)
}

/// Sign and squared magnitude of the 3-j symbol as exact rationals:
/// `3j = sign · sum · sqrt(radicand)`. Returns `None` when the symbol vanishes
/// by selection rules.
fn racah_parts(j: [HalfInt; 3], m: [HalfInt; 3]) -> Option<(Ratio<i128>, Ratio<i128>)> {
    let [j1, j2, j3] = j;
    let [m1, m2, m3] = m;
    if m1.0 + m2.0 + m3.0 != 0 || !triangle(j1, j2, j3) {
        return None;
    }

    // Integer-valued combinations (guaranteed by the checks above).
    let a = half(j1.0 + j2.0 - j3.0);
    let b = half(j1.0 - j2.0 + j3.0);
    let c = half(-j1.0 + j2.0 + j3.0);
    let total = half(j1.0 + j2.0 + j3.0);

    let radicand = Ratio::new(
        factorial(a)
            * factorial(b)
            * factorial(c)
            * factorial(half(j1.0 + m1.0))
            * factorial(half(j1.0 - m1.0))
            * factorial(half(j2.0 + m2.0))
            * factorial(half(j2.0 - m2.0))
            * factorial(half(j3.0 + m3.0))
            * factorial(half(j3.0 - m3.0)),
        factorial(total + 1),
    );

    let t1 = half(j3.0 - j2.0 + m1.0);
    let t2 = half(j3.0 - j1.0 - m2.0);
    let t3 = a;
    let t4 = half(j1.0 - m1.0);
    let t5 = half(j2.0 + m2.0);
    let k_min = 0.max(-t1).max(-t2);
    let k_max = t3.min(t4).min(t5);

    let mut sum = Ratio::from_integer(0i128);
    for k in k_min..=k_max {
        let denom = factorial(k)
            * factorial(t1 + k)
            * factorial(t2 + k)
            * factorial(t3 - k)
            * factorial(t4 - k)
            * factorial(t5 - k);
        let term = Ratio::new(1i128, denom);
        if k % 2 == 0 {
            sum += term;
        } else {
            sum -= term;
        }
    }

    // (−1)^(j1 − j2 − m3); the exponent is an integer.
    if half(j1.0 - j2.0 - m3.0).rem_euclid(2) == 1 {
        sum = -sum;
    }
    Some((sum, radicand))
}

/// Wigner 3-j symbol `(j1 j2 j3; m1 m2 m3)`.
///
/// Exactly zero when `m1 + m2 + m3 ≠ 0` or the triangle rule fails. Each
/// `(j, m)` pair must be individually valid.
pub fn wigner3j<T: Real>(
    j1: HalfInt,
    j2: HalfInt,
    j3: HalfInt,
    m1: HalfInt,
    m2: HalfInt,
    m3: HalfInt,
) -> Result<T, Error> {
    check_jm(j1, m1)?;
    check_jm(j2, m2)?;
    check_jm(j3, m3)?;
    // Factorials stay inside i128 comfortably below this bound.
    if j1.0.max(j2.0).max(j3.0) > 40 {
        return Err(Error::InvalidArgument(
            "angular momenta above 20 are not supported".into(),
        ));
    }
    Ok(match racah_parts([j1, j2, j3], [m1, m2, m3]) {
        None => T::zero(),
        Some((sum, radicand)) => {
            let to_t = |r: Ratio<i128>| {
                T::from_i128(*r.numer()).expect("numerator")
                    / T::from_i128(*r.denom()).expect("denominator")
            };
            to_t(sum) * to_t(radicand).sqrt()
        }
    })
}

/// Convenience wrapper taking real-valued quantum numbers.
pub fn wigner3j_f64(j: [f64; 3], m: [f64; 3]) -> Result<f64, Error> {
    wigner3j(
        HalfInt::new(j[0])?,
        HalfInt::new(j[1])?,
        HalfInt::new(j[2])?,
        HalfInt::new(m[0])?,
        HalfInt::new(m[1])?,
        HalfInt::new(m[2])?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(x: f64) -> HalfInt {
        HalfInt::new(x).unwrap()
    }

    #[test]
    fn known_values() {
        let v = wigner3j_f64([1.0, 1.0, 0.0], [0.0, 0.0, 0.0]).unwrap();
        assert!((v + 1.0 / 3f64.sqrt()).abs() < 1e-15);
        let v = wigner3j_f64([1.5, 1.0, 1.5], [1.5, 0.0, -1.5]).unwrap();
        assert!((v - (3.0f64 / 20.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn selection_rules_give_exact_zero() {
        assert_eq!(
            wigner3j_f64([0.5, 1.0, 0.5], [0.5, 1.0, -0.5]).unwrap(),
            0.0
        );
        // triangle violation
        assert_eq!(
            wigner3j_f64([0.5, 1.0, 2.5], [0.5, 0.0, -0.5]).unwrap(),
            0.0
        );
    }

    #[test]
    fn malformed_inputs_rejected() {
        assert!(HalfInt::new(0.3).is_err());
        assert!(wigner3j_f64([0.5, 1.0, 0.5], [1.5, 0.0, -1.5]).is_err());
        assert!(wigner3j_f64([1.0, 1.0, 0.0], [0.5, -0.5, 0.0]).is_err());
    }

    #[test]
    fn orthogonality_sums() {
        // Σ_{m1,m2} (2j3+1)·3j² = 1 for every valid triad and m3.
        let js = [0.5, 1.0, 1.5, 2.0, 2.5];
        for &j1 in &js {
            for &j2 in &js {
                for &j3 in &js {
                    let (a, b, c) = (h(j1), h(j2), h(j3));
                    if !triangle(a, b, c) {
                        continue;
                    }
                    let mut m3 = -c.twice();
                    while m3 <= c.twice() {
                        let mut acc = 0.0;
                        let mut m1 = -a.twice();
                        while m1 <= a.twice() {
                            let m2 = -m1 - m3;
                            if m2.abs() <= b.twice() && (b.twice() - m2) % 2 == 0 {
                                let v: f64 = wigner3j(
                                    a,
                                    b,
                                    c,
                                    HalfInt::from_twice(m1),
                                    HalfInt::from_twice(m2),
                                    HalfInt::from_twice(m3),
                                )
                                .unwrap();
                                acc += v * v;
                            }
                            m1 += 2;
                        }
                        assert!(((2.0 * j3 + 1.0) * acc - 1.0).abs() < 1e-13);
                        m3 += 2;
                    }
                }
            }
        }
    }

    #[test]
    fn column_swap_symmetry() {
        let v: f64 = wigner3j_f64([1.5, 1.0, 2.5], [0.5, 1.0, -1.5]).unwrap();
        let swapped: f64 = wigner3j_f64([1.0, 1.5, 2.5], [1.0, 0.5, -1.5]).unwrap();
        // odd permutation picks up (−1)^(j1+j2+j3) = (−1)^5
        assert!((v + swapped).abs() < 1e-15);
    }

    #[test]
    fn single_precision_agrees() {
        let v: f32 = wigner3j(h(1.5), h(1.0), h(0.5), h(1.5), h(-1.0), h(-0.5)).unwrap();
        let w: f64 = wigner3j(h(1.5), h(1.0), h(0.5), h(1.5), h(-1.0), h(-0.5)).unwrap();
        assert!((f64::from(v) - w).abs() < 1e-6);
    }
}
