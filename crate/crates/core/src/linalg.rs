//! Small dense-structure solvers: tridiagonal (real and complex), banded LU
//! with partial pivoting, and Sturm bisection for symmetric tridiagonal
//! spectra.

use std::ops::{Add, Div, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Scalar field the tridiagonal solver works over.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn zero() -> Self;
    fn magnitude(self) -> f64;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn magnitude(self) -> f64 {
        self.abs()
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn magnitude(self) -> f64 {
        self.norm()
    }
}

const PIVOT_TOL: f64 = 1e-300;

/// Factorised tridiagonal matrix (Thomas algorithm, no pivoting).
///
/// Row `i` reads `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1]`;
/// `lower[0]` and `upper[n-1]` are ignored.
#[derive(Debug, Clone)]
pub struct Tridiag<T: Scalar> {
    lower: Vec<T>,
    upper_mod: Vec<T>,
    pivots: Vec<T>,
    norm_inf: f64,
}

impl<T: Scalar> Tridiag<T> {
    pub fn factor(lower: &[T], diag: &[T], upper: &[T]) -> Result<Self> {
        let n = diag.len();
        if lower.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: lower.len(),
            });
        }
        if upper.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: upper.len(),
            });
        }
        let mut upper_mod = vec![T::zero(); n];
        let mut pivots = vec![T::zero(); n];
        let mut norm_inf: f64 = 0.0;
        for i in 0..n {
            let mut row = diag[i].magnitude();
            if i > 0 {
                row += lower[i].magnitude();
            }
            if i + 1 < n {
                row += upper[i].magnitude();
            }
            norm_inf = norm_inf.max(row);

            let pivot = if i == 0 {
                diag[0]
            } else {
                diag[i] - lower[i] * upper_mod[i - 1]
            };
            if !(pivot.magnitude() > PIVOT_TOL) {
                return Err(Error::SingularMatrix { row: i });
            }
            pivots[i] = pivot;
            if i + 1 < n {
                upper_mod[i] = upper[i] / pivot;
            }
        }
        Ok(Tridiag {
            lower: lower.to_vec(),
            upper_mod,
            pivots,
            norm_inf,
        })
    }

    pub fn len(&self) -> usize {
        self.pivots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pivots.is_empty()
    }

    /// Infinity norm of the original matrix.
    pub fn norm_inf(&self) -> f64 {
        self.norm_inf
    }

    pub fn solve(&self, rhs: &[T]) -> Result<Vec<T>> {
        let n = self.len();
        if rhs.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: rhs.len(),
            });
        }
        let mut x = vec![T::zero(); n];
        for i in 0..n {
            let r = if i == 0 {
                rhs[0]
            } else {
                rhs[i] - self.lower[i] * x[i - 1]
            };
            x[i] = r / self.pivots[i];
        }
        for i in (0..n.saturating_sub(1)).rev() {
            x[i] = x[i] - self.upper_mod[i] * x[i + 1];
        }
        Ok(x)
    }
}

/// One-shot tridiagonal solve.
pub fn solve_tridiag<T: Scalar>(lower: &[T], diag: &[T], upper: &[T], rhs: &[T]) -> Result<Vec<T>> {
    Tridiag::factor(lower, diag, upper)?.solve(rhs)
}

/// Cheap lower bound on the condition number: `||A|| ||x|| / ||b||`.
pub fn condition_lower_bound<T: Scalar>(norm_a: f64, x: &[T], b: &[T]) -> f64 {
    let nx = x.iter().map(|v| v.magnitude()).fold(0.0, f64::max);
    let nb = b.iter().map(|v| v.magnitude()).fold(0.0, f64::max);
    if nb == 0.0 {
        return 0.0;
    }
    norm_a * nx / nb
}

/// Real band matrix with `kl` sub- and `ku` super-diagonals, stored with
/// `kl` extra super-diagonals of fill-in room for partial pivoting.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        BandMatrix {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.data[self.idx(i, j)]
        } else {
            0.0
        }
    }

    /// Panics if `(i, j)` lies outside the declared band.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "({i},{j}) outside band");
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "({i},{j}) outside band");
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let j0 = i.saturating_sub(self.kl);
                let j1 = (i + self.ku).min(self.n - 1);
                (j0..=j1).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    /// In-place LU with partial pivoting.
    pub fn factor(mut self) -> Result<BandLu> {
        let n = self.n;
        let kl = self.kl;
        let span = self.ku + self.kl;
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.idx(k, k)].abs();
            for i in k + 1..=last {
                let v = self.data[self.idx(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > PIVOT_TOL) {
                return Err(Error::SingularMatrix { row: k });
            }
            piv[k] = p;
            let jmax = (k + span).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    let a = self.idx(k, j);
                    let b = self.idx(p, j);
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.idx(k, k)];
            for i in k + 1..=last {
                let ik = self.idx(i, k);
                let m = self.data[ik] / pivot;
                self.data[ik] = m;
                if m != 0.0 {
                    for j in k + 1..=jmax {
                        let kj = self.data[self.idx(k, j)];
                        let ij = self.idx(i, j);
                        self.data[ij] -= m * kj;
                    }
                }
            }
        }
        Ok(BandLu { m: self, piv })
    }
}

#[derive(Debug, Clone)]
pub struct BandLu {
    m: BandMatrix,
    piv: Vec<usize>,
}

impl BandLu {
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let a = &self.m;
        let n = a.n;
        if rhs.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: rhs.len(),
            });
        }
        let mut x = rhs.to_vec();
        for k in 0..n {
            x.swap(k, self.piv[k]);
            let last = (k + a.kl).min(n - 1);
            let xk = x[k];
            for i in k + 1..=last {
                x[i] -= a.data[a.idx(i, k)] * xk;
            }
        }
        let span = a.ku + a.kl;
        for k in (0..n).rev() {
            let jmax = (k + span).min(n - 1);
            let mut s = x[k];
            for j in k + 1..=jmax {
                s -= a.data[a.idx(k, j)] * x[j];
            }
            x[k] = s / a.data[a.idx(k, k)];
        }
        Ok(x)
    }
}

/// Number of eigenvalues strictly below `x` of the symmetric tridiagonal
/// matrix with diagonal `d` and off-diagonal `e` (`e[i]` couples i and i+1).
pub fn sturm_count(d: &[f64], e: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..d.len() {
        let e2 = if i == 0 { 0.0 } else { e[i - 1] * e[i - 1] };
        q = d[i] - x - if i == 0 { 0.0 } else { e2 / q };
        if q == 0.0 {
            q = -f64::EPSILON * (d[i].abs() + x.abs() + 1.0);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// The `k` largest eigenvalues (descending) by bisection to absolute `tol`.
pub fn sym_tridiag_top_eigenvalues(d: &[f64], e: &[f64], k: usize, tol: f64) -> Vec<f64> {
    let n = d.len();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        let r = if i > 0 { e[i - 1].abs() } else { 0.0 } + if i + 1 < n { e[i].abs() } else { 0.0 };
        lo = lo.min(d[i] - r);
        hi = hi.max(d[i] + r);
    }
    (0..k.min(n))
        .map(|j| {
            // eigenvalue index n-1-j in ascending order
            let target = n - 1 - j;
            let (mut a, mut b) = (lo, hi);
            while b - a > tol {
                let m = 0.5 * (a + b);
                if sturm_count(d, e, m) > target {
                    b = m;
                } else {
                    a = m;
                }
            }
            0.5 * (a + b)
        })
        .collect()
}

/// Eigenvector for a known eigenvalue estimate by inverse iteration.
pub fn sym_tridiag_eigenvector(d: &[f64], e: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let n = d.len();
    let shift = lambda + 1e-10 * (1.0 + lambda.abs());
    let diag: Vec<f64> = d.iter().map(|x| x - shift).collect();
    let mut lower = vec![0.0; n];
    let mut upper = vec![0.0; n];
    lower[1..].copy_from_slice(&e[..n - 1]);
    upper[..n - 1].copy_from_slice(&e[..n - 1]);
    let lu = Tridiag::factor(&lower, &diag, &upper)?;
    let mut v = vec![1.0; n];
    for _ in 0..4 {
        v = lu.solve(&v)?;
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
    }
    Ok(v)
}
