//! Dense complex kernels: matrix products, exponential, LU solve and power
//! iteration. Sizes here are a few hundred at most, so everything is plain
//! row-major `Vec<Complex64>`.

use std::ops::{Index, IndexMut};

use num_complex::Complex64;

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Square dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    n: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![ZERO; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    pub fn from_diagonal(diag: &[Complex64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn matmul(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.n, other.n, "dimension mismatch in matrix product");
        let n = self.n;
        let mut out = CMatrix::zeros(n);
        for i in 0..n {
            let out_row = &mut out.data[i * n..(i + 1) * n];
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == ZERO {
                    continue;
                }
                let other_row = &other.data[k * n..(k + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(other_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.n, v.len(), "dimension mismatch in matrix-vector product");
        (0..self.n)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn add(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.n, other.n, "dimension mismatch in matrix sum");
        CMatrix {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &CMatrix) -> CMatrix {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, s: Complex64) -> CMatrix {
        CMatrix {
            n: self.n,
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> f64 {
        (0..self.n)
            .map(|j| (0..self.n).map(|i| self.data[i * self.n + j].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|a| a.re.is_finite() && a.im.is_finite())
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = Complex64;

    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.n + j]
    }
}

/// Taylor degree of the scaled kernel.
const TAYLOR_ORDER: usize = 18;
/// Scaled 1-norm bound before the Taylor kernel is applied.
const SCALED_NORM_BOUND: f64 = 0.5;

/// `exp(t A)` by scaling and squaring with a truncated Taylor kernel.
pub fn matexp(a: &CMatrix, t: f64) -> Result<CMatrix> {
    if !a.is_finite() || !t.is_finite() {
        return Err(Error::Numerical("matrix exponential of non-finite input".into()));
    }
    let n = a.dim();
    let norm = a.norm1() * t.abs();
    let squarings = if norm > SCALED_NORM_BOUND {
        (norm / SCALED_NORM_BOUND).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a.scale(Complex64::new(t * 2f64.powi(-squarings), 0.0));

    // Horner form of sum_{k <= m} X^k / k!
    let mut result = CMatrix::identity(n);
    for k in (1..=TAYLOR_ORDER).rev() {
        result = scaled.matmul(&result).scale(Complex64::new(1.0 / k as f64, 0.0));
        for i in 0..n {
            result[(i, i)] += ONE;
        }
    }
    for _ in 0..squarings {
        result = result.matmul(&result);
    }
    if !result.is_finite() {
        return Err(Error::Numerical(format!(
            "matrix exponential overflowed (scaled norm {norm:e}, {squarings} squarings)"
        )));
    }
    Ok(result)
}

/// Solves `A x = rhs` by LU factorization with partial pivoting.
pub fn lu_solve(a: &CMatrix, rhs: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = a.dim();
    if rhs.len() != n {
        return Err(Error::InvalidInput(format!(
            "right-hand side has length {} for a {n}x{n} system",
            rhs.len()
        )));
    }
    let threshold = 1e-14 * a.max_abs();
    let mut lu = a.clone();
    let mut x = rhs.to_vec();

    for col in 0..n {
        let (pivot_row, pivot) = (col..n)
            .map(|r| (r, lu[(r, col)].norm()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot <= threshold || pivot == 0.0 {
            return Err(Error::SingularMatrix {
                column: col,
                pivot,
                threshold,
            });
        }
        if pivot_row != col {
            for j in 0..n {
                lu.data.swap(col * n + j, pivot_row * n + j);
            }
            x.swap(col, pivot_row);
        }
        let diag = lu[(col, col)];
        for r in col + 1..n {
            let factor = lu[(r, col)] / diag;
            if factor == ZERO {
                continue;
            }
            lu[(r, col)] = ZERO;
            for j in col + 1..n {
                let u = lu[(col, j)];
                lu[(r, j)] -= factor * u;
            }
            let xc = x[col];
            x[r] -= factor * xc;
        }
    }
    for i in (0..n).rev() {
        let mut acc = x[i];
        for j in i + 1..n {
            acc -= lu[(i, j)] * x[j];
        }
        x[i] = acc / lu[(i, i)];
    }
    Ok(x)
}

/// Result of [`power_iteration`].
#[derive(Debug, Clone)]
pub struct Eigenpair {
    pub value: Complex64,
    /// Normalized so that the entry at the start index equals one.
    pub vector: Vec<Complex64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Power iteration from the unit vector at `start`, renormalizing at every
/// step so that entry `start` equals one. Stops when two successive iterates
/// differ by less than `tol` in max-norm.
///
/// The eigenvalue is read off the normalization entry, `(Q v)_start` with
/// `v_start = 1`. For the density-space operators used here `start` is the
/// degree-zero mode, so this is the one-step mass multiplier of the
/// stationary density, which stays exact when `Q` conserves mass.
pub fn power_iteration(q: &CMatrix, start: usize, tol: f64, max_iter: usize) -> Result<Eigenpair> {
    let n = q.dim();
    let mut v = vec![ZERO; n];
    v[start] = ONE;
    let mut diff = f64::INFINITY;
    for it in 1..=max_iter {
        let w = q.mul_vec(&v);
        let anchor = w[start];
        let scale = w.iter().map(|x| x.norm()).fold(0.0, f64::max);
        if !(scale.is_finite()) || anchor.norm() <= 1e-300 * scale.max(1.0) || scale == 0.0 {
            return Err(Error::Numerical(format!(
                "power iteration lost the normalization entry at iteration {it}"
            )));
        }
        let next: Vec<Complex64> = w.iter().map(|x| x / anchor).collect();
        diff = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        v = next;
        if diff < tol {
            let value = q.mul_vec(&v)[start];
            let residual = residual_max(q, &v, value);
            return Ok(Eigenpair {
                value,
                vector: v,
                iterations: it,
                residual,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: diff,
    })
}

/// `max_i |(Q v - value v)_i|`.
pub fn residual_max(q: &CMatrix, v: &[Complex64], value: Complex64) -> f64 {
    q.mul_vec(v)
        .iter()
        .zip(v)
        .map(|(a, b)| (a - value * b).norm())
        .fold(0.0, f64::max)
}
