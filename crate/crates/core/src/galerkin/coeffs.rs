use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Which side of the Lebesgue duality a coefficient object lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    /// Test functions, acted on by `L`.
    Function,
    /// Densities against Lebesgue measure, acted on by the adjoint `L^dagger`.
    Density,
}

/// Fourier coefficients indexed by degree `-N..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffVector {
    entries: Vec<Complex64>,
    space: Space,
}

impl CoeffVector {
    pub fn zeros(half_width: usize, space: Space) -> Self {
        Self {
            entries: vec![Complex64::new(0.0, 0.0); 2 * half_width + 1],
            space,
        }
    }

    /// The unit vector at degree zero (uniform density / constant function 1).
    pub fn unit(half_width: usize, space: Space) -> Self {
        let mut v = Self::zeros(half_width, space);
        v.entries[half_width] = Complex64::new(1.0, 0.0);
        v
    }

    /// Panics when `entries` has even length.
    pub fn from_entries(entries: Vec<Complex64>, space: Space) -> Self {
        assert!(entries.len() % 2 == 1, "coefficient vectors have odd length");
        Self { entries, space }
    }

    pub fn half_width(&self) -> usize {
        self.entries.len() / 2
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn with_space(mut self, space: Space) -> Self {
        self.space = space;
        self
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<Complex64> {
        self.entries
    }

    /// Coefficient of degree `k`; zero outside the stored range.
    pub fn get(&self, k: i64) -> Complex64 {
        let n = self.half_width() as i64;
        if k.abs() > n {
            Complex64::new(0.0, 0.0)
        } else {
            self.entries[(k + n) as usize]
        }
    }

    /// Total mass `int rho = rho_0` of a density.
    pub fn mass(&self) -> Complex64 {
        self.get(0)
    }

    /// Divides by the degree-zero coefficient.
    pub fn normalized(&self) -> Result<Self> {
        let m = self.mass();
        if m.norm() == 0.0 || !m.re.is_finite() {
            return Err(Error::Numerical("cannot normalize a vector with zero mass".into()));
        }
        Ok(Self {
            entries: self.entries.iter().map(|x| x / m).collect(),
            space: self.space,
        })
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            entries: self.entries.iter().map(|x| x * s).collect(),
            space: self.space,
        }
    }

    /// Lebesgue pairing `int f g = sum_k f_k g_{-k}`.
    pub fn pair(&self, other: &Self) -> Complex64 {
        let n = self.half_width().min(other.half_width()) as i64;
        (-n..=n).map(|k| self.get(k) * other.get(-k)).sum()
    }

    /// Evaluates the Fourier series at `q`.
    pub fn eval(&self, q: f64) -> Complex64 {
        let n = self.half_width() as i64;
        (-n..=n)
            .map(|k| self.get(k) * Complex64::from_polar(1.0, TAU * k as f64 * q))
            .sum()
    }

    /// Real parts of the series on `npts` uniform points `i / npts`.
    pub fn grid_values(&self, npts: usize) -> Vec<f64> {
        (0..npts).map(|i| self.eval(i as f64 / npts as f64).re).collect()
    }

    /// Largest `|c_{-k} - conj(c_k)|`.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.half_width() as i64;
        (0..=n)
            .map(|k| (self.get(-k) - self.get(k).conj()).norm())
            .fold(0.0, f64::max)
    }
}

/// Number of quadrature points used for a truncation `N`.
pub fn grid_size(half_width: usize) -> usize {
    8 * half_width + 8
}
