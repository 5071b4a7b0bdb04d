//! Small dense complex Hermitian eigenproblems (cyclic Jacobi).

use crate::scalar::{czero, Cplx, Real};

/// Eigenvalues in descending order and the matching orthonormal eigenvectors
/// (`vectors[k]` belongs to `values[k]`).
#[derive(Clone, Debug)]
pub struct HermitianEigen<T> {
    pub values: Vec<T>,
    pub vectors: Vec<Vec<Cplx<T>>>,
}

/// Diagonalizes a Hermitian matrix given as rows. Only the upper triangle is
/// read. Eigenvectors follow the first-nonzero-component-real-positive
/// convention.
pub fn hermitian_eigen<T: Real>(m: &[Vec<Cplx<T>>]) -> HermitianEigen<T> {
    let n = m.len();
    let mut a: Vec<Vec<Cplx<T>>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if j >= i { m[i][j] } else { m[j][i].conj() })
                .collect()
        })
        .collect();
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = Cplx::new(row[i].re, T::zero());
    }
    let mut v: Vec<Vec<Cplx<T>>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        Cplx::new(T::one(), T::zero())
                    } else {
                        czero()
                    }
                })
                .collect()
        })
        .collect();

    let scale = a.iter().flatten().map(|z| z.norm()).fold(T::zero(), T::max);
    let tol = T::epsilon() * T::epsilon() * scale * scale;

    for _sweep in 0..64 {
        let mut off = T::zero();
        for i in 0..n {
            for j in i + 1..n {
                off += a[i][j].norm_sqr();
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p][q];
                let mag = apq.norm();
                if mag == T::zero() {
                    continue;
                }
                // Phase-rotate so the (p,q) entry is real, then apply a real
                // Jacobi rotation.
                let phase = apq / mag;
                let (app, aqq) = (a[p][p].re, a[q][q].re);
                let tau = (aqq - app) / (T::lit(2.0) * mag);
                let t = tau.signum() / (tau.abs() + (T::one() + tau * tau).sqrt());
                let t = if tau == T::zero() { T::one() } else { t };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;
                // Columns: col_p' = c col_p − s conj(phase) col_q,
                //          col_q' = s phase col_p + c col_q.
                let sp = phase * s;
                let spc = phase.conj() * s;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = akp * c - akq * spc;
                    a[k][q] = akp * sp + akq * c;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = apk * c - aqk * sp;
                    a[q][k] = apk * spc + aqk * c;
                }
                a[p][q] = czero();
                a[q][p] = czero();
                a[p][p] = Cplx::new(a[p][p].re, T::zero());
                a[q][q] = Cplx::new(a[q][q].re, T::zero());
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = vp * c - vq * spc;
                    row[q] = vp * sp + vq * c;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| {
        a[y][y]
            .re
            .partial_cmp(&a[x][x].re)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&k| a[k][k].re).collect();
    let vectors = order
        .iter()
        .map(|&k| canonical_phase((0..n).map(|i| v[i][k]).collect()))
        .collect();
    HermitianEigen { values, vectors }
}

/// Rotates the global phase so the first component above `1e-14` in modulus
/// is real and positive.
pub fn canonical_phase<T: Real>(mut x: Vec<Cplx<T>>) -> Vec<Cplx<T>> {
    let thresh = T::lit(1e-14).max(T::epsilon() * T::lit(100.0));
    if let Some(z) = x.iter().find(|z| z.norm() > thresh).copied() {
        let ph = z.conj() / z.norm();
        for c in x.iter_mut() {
            *c *= ph;
        }
    }
    x
}
