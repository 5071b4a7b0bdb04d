//! Time-sampled tweezer trajectories and their natural cubic-spline
//! interpolation.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::scalar::{Real, Vec2};

/// Tweezer-center trajectory `(u_x, u_y)` sampled on a uniform grid over
/// `[0, T]` with `N + 1` samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlSignal<T> {
    pub duration: T,
    pub ux: Vec<T>,
    pub uy: Vec<T>,
}

impl<T: Real> ControlSignal<T> {
    pub fn new(duration: T, ux: Vec<T>, uy: Vec<T>) -> Result<Self, Error> {
        let c = Self { duration, ux, uy };
        c.validate()?;
        Ok(c)
    }

    pub fn constant(duration: T, intervals: usize, at: Vec2<T>) -> Self {
        Self {
            duration,
            ux: vec![at[0]; intervals + 1],
            uy: vec![at[1]; intervals + 1],
        }
    }

    /// Samples `f(t)` at the grid points.
    pub fn from_fn(duration: T, intervals: usize, f: impl Fn(T) -> Vec2<T>) -> Self {
        let h = duration / T::from_usize_lossy(intervals);
        let (ux, uy) = (0..=intervals)
            .map(|k| f(h * T::from_usize_lossy(k)))
            .map(|v| (v[0], v[1]))
            .unzip();
        Self { duration, ux, uy }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(self.duration > T::zero()) || !self.duration.is_finite() {
            return Err(Error::InvalidArgument(
                "control duration must be positive".into(),
            ));
        }
        if self.ux.len() != self.uy.len() || self.ux.len() < 2 {
            return Err(Error::GridMismatch(format!(
                "control channels have {} and {} samples (need equal, >= 2)",
                self.ux.len(),
                self.uy.len()
            )));
        }
        if self.ux.iter().chain(&self.uy).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "control samples must be finite".into(),
            ));
        }
        Ok(())
    }

    /// Number of grid intervals `N`.
    pub fn intervals(&self) -> usize {
        self.ux.len() - 1
    }

    pub fn spacing(&self) -> T {
        self.duration / T::from_usize_lossy(self.intervals())
    }

    pub fn times(&self) -> Vec<T> {
        let h = self.spacing();
        (0..=self.intervals())
            .map(|k| h * T::from_usize_lossy(k))
            .collect()
    }

    pub fn sample(&self, k: usize) -> Vec2<T> {
        [self.ux[k], self.uy[k]]
    }

    pub fn splines(&self) -> [CubicSpline<T>; 2] {
        [
            CubicSpline::natural(self.spacing(), &self.ux),
            CubicSpline::natural(self.spacing(), &self.uy),
        ]
    }

    pub fn interpolator(&self) -> ControlInterpolator<T> {
        ControlInterpolator {
            splines: self.splines(),
        }
    }

    /// Flattened `[ux..., uy...]`.
    pub fn to_flat(&self) -> Vec<T> {
        self.ux.iter().chain(&self.uy).copied().collect()
    }

    pub fn from_flat(duration: T, flat: &[T]) -> Self {
        let n = flat.len() / 2;
        Self {
            duration,
            ux: flat[..n].to_vec(),
            uy: flat[n..].to_vec(),
        }
    }
}

/// Evaluates both control channels at arbitrary times.
#[derive(Clone, Debug)]
pub struct ControlInterpolator<T> {
    pub splines: [CubicSpline<T>; 2],
}

impl<T: Real> ControlInterpolator<T> {
    pub fn position(&self, t: T) -> Vec2<T> {
        [self.splines[0].value(t), self.splines[1].value(t)]
    }

    pub fn velocity(&self, t: T) -> Vec2<T> {
        [self.splines[0].derivative(t), self.splines[1].derivative(t)]
    }

    pub fn acceleration(&self, t: T) -> Vec2<T> {
        [
            self.splines[0].second_derivative(t),
            self.splines[1].second_derivative(t),
        ]
    }
}

/// Natural cubic spline through uniformly spaced samples starting at `t = 0`.
#[derive(Clone, Debug)]
pub struct CubicSpline<T> {
    h: T,
    y: Vec<T>,
    /// second derivatives at the knots; zero at both ends
    m: Vec<T>,
}

/// Solves the interior system `M[i-1] + 4 M[i] + M[i+1] = rhs[i]`
/// (natural ends) by the Thomas algorithm.
fn solve_natural_system<T: Real>(rhs: &[T]) -> Vec<T> {
    let n = rhs.len();
    if n == 0 {
        return Vec::new();
    }
    let four = T::lit(4.0);
    let mut c = vec![T::zero(); n];
    let mut d = vec![T::zero(); n];
    c[0] = T::one() / four;
    d[0] = rhs[0] / four;
    for i in 1..n {
        let denom = four - c[i - 1];
        c[i] = T::one() / denom;
        d[i] = (rhs[i] - d[i - 1]) / denom;
    }
    let mut x = vec![T::zero(); n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

/// Local basis weights of the spline at one time: `s = a·y_i + b·y_{i+1} + c·M_i + d·M_{i+1}`.
struct LocalWeights<T> {
    i: usize,
    a: T,
    b: T,
    c: T,
    d: T,
}

impl<T: Real> CubicSpline<T> {
    pub fn natural(h: T, y: &[T]) -> Self {
        assert!(y.len() >= 2, "spline needs two samples");
        let n = y.len() - 1;
        let six_over_h2 = T::lit(6.0) / (h * h);
        let rhs: Vec<T> = (1..n)
            .map(|i| six_over_h2 * (y[i + 1] - T::lit(2.0) * y[i] + y[i - 1]))
            .collect();
        let interior = solve_natural_system(&rhs);
        let mut m = vec![T::zero(); n + 1];
        m[1..n].copy_from_slice(&interior);
        Self {
            h,
            y: y.to_vec(),
            m,
        }
    }

    pub fn knots(&self) -> usize {
        self.y.len()
    }

    fn locate(&self, t: T) -> (usize, T, T) {
        locate(self.h, self.y.len(), t)
    }

    fn value_weights(&self, t: T) -> LocalWeights<T> {
        value_weights(self.h, self.y.len(), t)
    }

    fn derivative_weights(&self, t: T) -> LocalWeights<T> {
        derivative_weights(self.h, self.y.len(), t)
    }

    fn apply(&self, w: &LocalWeights<T>) -> T {
        w.a * self.y[w.i] + w.b * self.y[w.i + 1] + w.c * self.m[w.i] + w.d * self.m[w.i + 1]
    }

    pub fn value(&self, t: T) -> T {
        self.apply(&self.value_weights(t))
    }

    pub fn derivative(&self, t: T) -> T {
        self.apply(&self.derivative_weights(t))
    }

    pub fn second_derivative(&self, t: T) -> T {
        let (i, a, b) = self.locate(t);
        a * self.m[i] + b * self.m[i + 1]
    }

    /// `∫₀ᵀ s'(t)² dt`, exact (three-point Gauss–Legendre per interval).
    pub fn derivative_energy(&self) -> T {
        let mut acc = T::zero();
        for (node, weight) in gauss3::<T>() {
            for i in 0..self.y.len() - 1 {
                let t = self.h * (T::from_usize_lossy(i) + node);
                let v = self.derivative(t);
                acc += weight * self.h * v * v;
            }
        }
        acc
    }
}

fn locate<T: Real>(h: T, knots: usize, t: T) -> (usize, T, T) {
    let n = knots - 1;
    let x = t / h;
    let i = x.floor().to_usize().unwrap_or(0).min(n - 1);
    let b = x - T::from_usize_lossy(i);
    (i, T::one() - b, b)
}

fn value_weights<T: Real>(h: T, knots: usize, t: T) -> LocalWeights<T> {
    let (i, a, b) = locate(h, knots, t);
    let h2_6 = h * h / T::lit(6.0);
    LocalWeights {
        i,
        a,
        b,
        c: (a * a * a - a) * h2_6,
        d: (b * b * b - b) * h2_6,
    }
}

fn derivative_weights<T: Real>(h: T, knots: usize, t: T) -> LocalWeights<T> {
    let (i, a, b) = locate(h, knots, t);
    let three = T::lit(3.0);
    let h_6 = h / T::lit(6.0);
    LocalWeights {
        i,
        a: -T::one() / h,
        b: T::one() / h,
        c: -(three * a * a - T::one()) * h_6,
        d: (three * b * b - T::one()) * h_6,
    }
}

/// Nodes on [0, 1] and weights (summing to 1) of 3-point Gauss–Legendre.
fn gauss3<T: Real>() -> [(T, T); 3] {
    let half = T::lit(0.5);
    let off = T::lit(0.5 * (3.0f64 / 5.0).sqrt());
    [
        (half - off, T::lit(5.0 / 18.0)),
        (half, T::lit(8.0 / 18.0)),
        (half + off, T::lit(5.0 / 18.0)),
    ]
}

/// Accumulates `Σ w_n s(t_n)` and `Σ v_n s'(t_n)` style linear functionals of
/// a spline and maps them back onto the knot samples (the transpose of
/// spline evaluation).
#[derive(Clone, Debug)]
pub struct SplineTranspose<T> {
    h: T,
    wy: Vec<T>,
    wm: Vec<T>,
}

impl<T: Real> SplineTranspose<T> {
    pub fn new(h: T, knots: usize) -> Self {
        Self {
            h,
            wy: vec![T::zero(); knots],
            wm: vec![T::zero(); knots],
        }
    }

    fn add(&mut self, lw: LocalWeights<T>, weight: T) {
        self.wy[lw.i] += weight * lw.a;
        self.wy[lw.i + 1] += weight * lw.b;
        self.wm[lw.i] += weight * lw.c;
        self.wm[lw.i + 1] += weight * lw.d;
    }

    /// Adds `weight · s(t)`.
    pub fn add_value(&mut self, t: T, weight: T) {
        let lw = value_weights(self.h, self.wy.len(), t);
        self.add(lw, weight);
    }

    /// Adds `weight · s'(t)`.
    pub fn add_derivative(&mut self, t: T, weight: T) {
        let lw = derivative_weights(self.h, self.wy.len(), t);
        self.add(lw, weight);
    }

    /// Gradient of the accumulated functional with respect to the samples.
    pub fn finish(self) -> Vec<T> {
        let n = self.wy.len() - 1;
        let mut grad = self.wy;
        if n >= 2 {
            let z = solve_natural_system(&self.wm[1..n]);
            let six_over_h2 = T::lit(6.0) / (self.h * self.h);
            for (k, zi) in z.iter().enumerate() {
                let i = k + 1;
                let s = six_over_h2 * *zi;
                grad[i - 1] += s;
                grad[i] -= T::lit(2.0) * s;
                grad[i + 1] += s;
            }
        }
        grad
    }
}

/// `∇_u ½∫ s'(t)² dt` for one channel, exact.
pub fn derivative_energy_gradient<T: Real>(h: T, y: &[T]) -> Vec<T> {
    let spline = CubicSpline::natural(h, y);
    let mut tr = SplineTranspose::new(h, y.len());
    for (node, weight) in gauss3::<T>() {
        for i in 0..y.len() - 1 {
            let t = h * (T::from_usize_lossy(i) + node);
            tr.add_derivative(t, weight * h * spline.derivative(t));
        }
    }
    tr.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples() -> Vec<f64> {
        (0..=12)
            .map(|k| (0.37 * k as f64).sin() + 0.1 * k as f64)
            .collect()
    }

    #[test]
    fn interpolates_knots_with_natural_ends() {
        let y = samples();
        let s = CubicSpline::natural(0.25, &y);
        for (k, yk) in y.iter().enumerate() {
            assert!((s.value(0.25 * k as f64) - yk).abs() < 1e-14);
        }
        assert!(s.second_derivative(0.0).abs() < 1e-14);
        assert!(s.second_derivative(3.0).abs() < 1e-12);
    }

    #[test]
    fn continuous_first_and_second_derivatives() {
        let s = CubicSpline::natural(0.25, &samples());
        for k in 1..12 {
            let t = 0.25 * k as f64;
            let e = 1e-9;
            assert!((s.derivative(t - e) - s.derivative(t + e)).abs() < 1e-7);
            assert!((s.second_derivative(t - e) - s.second_derivative(t + e)).abs() < 1e-6);
        }
    }

    #[test]
    fn reproduces_lines_exactly() {
        let y: Vec<f64> = (0..=6).map(|k| 2.0 - 0.5 * k as f64).collect();
        let s = CubicSpline::natural(0.5, &y);
        assert!((s.value(1.3) - (2.0 - 1.3)).abs() < 1e-14);
        assert!((s.derivative(2.2) + 1.0).abs() < 1e-14);
    }

    #[test]
    fn transpose_matches_direct_evaluation() {
        let y = samples();
        let h = 0.25;
        let times = [0.0, 0.11, 0.9, 1.73, 2.5, 3.0];
        let weights = [0.3, -1.2, 0.7, 2.0, -0.4, 1.1];
        let mut tr = SplineTranspose::new(h, y.len());
        for (t, w) in times.iter().zip(&weights) {
            tr.add_value(*t, *w);
            tr.add_derivative(*t, 0.5 * w);
        }
        let grad = tr.finish();
        let s = CubicSpline::natural(h, &y);
        let direct: f64 = times
            .iter()
            .zip(&weights)
            .map(|(t, w)| w * s.value(*t) + 0.5 * w * s.derivative(*t))
            .sum();
        let linear: f64 = grad.iter().zip(&y).map(|(g, v)| g * v).sum();
        assert!((direct - linear).abs() < 1e-12);
    }

    #[test]
    fn energy_gradient_matches_finite_differences() {
        let y = samples();
        let h = 0.25;
        let g = derivative_energy_gradient(h, &y);
        for k in [0, 3, 7, 12] {
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[k] += 1e-6;
            ym[k] -= 1e-6;
            let fd = 0.5
                * (CubicSpline::natural(h, &yp).derivative_energy()
                    - CubicSpline::natural(h, &ym).derivative_energy())
                / 2e-6;
            assert!(
                (fd - g[k]).abs() < 1e-6 * (1.0 + g[k].abs()),
                "{k}: {fd} vs {}",
                g[k]
            );
        }
    }

    #[test]
    fn constant_signal_has_no_energy() {
        let s = CubicSpline::natural(0.1, &[1.5; 9]);
        assert_eq!(s.derivative_energy(), 0.0);
    }
}
