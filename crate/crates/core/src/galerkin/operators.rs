use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use super::coeffs::{CoeffVector, Space};
use super::linalg::{matexp, CMatrix};
use crate::error::{Error, Result};
use crate::model::ProblemSpec;

/// Dense `(2N+1) x (2N+1)` operator acting on Fourier coefficients of degree `-N..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    half_width: usize,
    matrix: CMatrix,
    space: Space,
}

impl OperatorMatrix {
    pub fn from_matrix(half_width: usize, matrix: CMatrix, space: Space) -> Self {
        assert_eq!(matrix.dim(), 2 * half_width + 1, "operator size does not match N");
        Self {
            half_width,
            matrix,
            space,
        }
    }

    /// Builds the operator from its entries indexed by degrees `(j, k)`.
    pub fn from_modes(
        half_width: usize,
        space: Space,
        mut entry: impl FnMut(i64, i64) -> Complex64,
    ) -> Self {
        let n = half_width as i64;
        let matrix = CMatrix::from_fn(2 * half_width + 1, |i, j| entry(i as i64 - n, j as i64 - n));
        Self::from_matrix(half_width, matrix, space)
    }

    pub fn identity(half_width: usize, space: Space) -> Self {
        Self::from_matrix(half_width, CMatrix::identity(2 * half_width + 1), space)
    }

    pub fn half_width(&self) -> usize {
        self.half_width
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// Entry at degrees `(j, k)`.
    pub fn entry(&self, j: i64, k: i64) -> Complex64 {
        let n = self.half_width as i64;
        self.matrix[((j + n) as usize, (k + n) as usize)]
    }

    pub fn apply(&self, v: &CoeffVector) -> CoeffVector {
        assert_eq!(self.space, v.space(), "operator and vector live in different spaces");
        assert_eq!(self.half_width, v.half_width(), "truncation mismatch");
        CoeffVector::from_entries(self.matrix.mul_vec(v.entries()), self.space)
    }

    pub fn compose(&self, other: &Self) -> Self {
        assert_eq!(self.space, other.space, "cannot compose operators from different spaces");
        Self::from_matrix(self.half_width, self.matrix.matmul(&other.matrix), self.space)
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.space, other.space, "cannot add operators from different spaces");
        Self::from_matrix(self.half_width, self.matrix.add(&other.matrix), self.space)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_matrix(
            self.half_width,
            self.matrix.scale(Complex64::new(s, 0.0)),
            self.space,
        )
    }

    pub fn shift(&self, s: f64) -> Self {
        let mut matrix = self.matrix.clone();
        for i in 0..matrix.dim() {
            matrix[(i, i)] += s;
        }
        Self::from_matrix(self.half_width, matrix, self.space)
    }

    /// Lebesgue adjoint: `out(j, k) = self(-k, -j)`, moved to the other space.
    pub fn flip_transpose(&self) -> Self {
        let space = match self.space {
            Space::Function => Space::Density,
            Space::Density => Space::Function,
        };
        Self::from_modes(self.half_width, space, |j, k| self.entry(-k, -j))
    }

    /// Same matrix relabelled to the other space, for multiplication operators
    /// that are their own Lebesgue adjoint.
    pub fn in_space(&self, space: Space) -> Self {
        Self {
            space,
            ..self.clone()
        }
    }

    pub fn exp(&self, t: f64) -> Result<Self> {
        Ok(Self::from_matrix(self.half_width, matexp(&self.matrix, t)?, self.space))
    }
}

/// Generator `L = b d/dq + (sigma^2/2) d^2/dq^2` acting on test functions:
/// entry `(j, k) = 2 i pi k b_{j-k} - 2 pi^2 sigma^2 k^2 delta_{jk}`.
pub fn assemble_function_generator(spec: &ProblemSpec, half_width: usize) -> OperatorMatrix {
    let b = spec.drift_field();
    let diffusion = 2.0 * PI * PI * spec.sigma() * spec.sigma();
    OperatorMatrix::from_modes(half_width, Space::Function, |j, k| {
        let mut e = Complex64::new(0.0, TAU * k as f64) * b.coeff(j - k);
        if j == k {
            e -= diffusion * (k * k) as f64;
        }
        e
    })
}

/// Fokker-Planck operator `L^dagger rho = -(b rho)' + (sigma^2/2) rho''` on densities:
/// entry `(j, k) = -2 i pi j b_{j-k} - 2 pi^2 sigma^2 j^2 delta_{jk}`.
pub fn assemble_density_generator(spec: &ProblemSpec, half_width: usize) -> OperatorMatrix {
    let b = spec.drift_field();
    let diffusion = 2.0 * PI * PI * spec.sigma() * spec.sigma();
    OperatorMatrix::from_modes(half_width, Space::Density, |j, k| {
        let mut e = Complex64::new(0.0, -TAU * j as f64) * b.coeff(j - k);
        if j == k {
            e -= diffusion * (j * j) as f64;
        }
        e
    })
}

/// Multiplication by `W`: Toeplitz with entry `(j, k) = W_{j-k}`.
pub fn assemble_weight(spec: &ProblemSpec, half_width: usize, space: Space) -> OperatorMatrix {
    let w = spec.weight();
    OperatorMatrix::from_modes(half_width, space, |j, k| w.coeff(j - k))
}

fn check_step(dt: f64, delta: f64) -> Result<()> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::config("dt", format!("timestep must be positive, got {dt}")));
    }
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::config("delta", format!("must lie in [0, 1], got {delta}")));
    }
    Ok(())
}

/// Density-space one-step operator of `exp((1-delta) dt W) Q_dt exp(delta dt W)`
/// with the exact semigroup `Q_dt = exp(dt L)`:
/// `exp(delta dt B) exp(dt L^dagger) exp((1-delta) dt B)`.
pub fn scheme_matrix(
    spec: &ProblemSpec,
    half_width: usize,
    dt: f64,
    delta: f64,
) -> Result<OperatorMatrix> {
    check_step(dt, delta)?;
    let generator = assemble_density_generator(spec, half_width);
    let weight = assemble_weight(spec, half_width, Space::Density);
    let transport = generator.exp(dt)?;
    let after = weight.exp(delta * dt)?;
    let before = if delta == 0.5 {
        after.clone()
    } else {
        weight.exp((1.0 - delta) * dt)?
    };
    Ok(after.compose(&transport).compose(&before))
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Coefficient of `dt^k` in the expansion of `exp((1-delta) dt W) exp(dt L) exp(delta dt W)`
/// on test functions:
/// `sum_{a+b+c=k} (1-delta)^a delta^c W^a L^b W^c / (a! b! c!)`.
pub fn expansion_term(
    spec: &ProblemSpec,
    half_width: usize,
    order: usize,
    delta: f64,
) -> OperatorMatrix {
    let generator = assemble_function_generator(spec, half_width);
    let weight = assemble_weight(spec, half_width, Space::Function);
    let powers = |m: &OperatorMatrix| {
        let mut out = vec![OperatorMatrix::identity(half_width, Space::Function)];
        for i in 1..=order {
            let next = out[i - 1].compose(m);
            out.push(next);
        }
        out
    };
    let l_pow = powers(&generator);
    let w_pow = powers(&weight);

    let mut total = OperatorMatrix::identity(half_width, Space::Function).scale(0.0);
    for a in 0..=order {
        for c in 0..=order - a {
            let b = order - a - c;
            let coeff = (1.0 - delta).powi(a as i32) * delta.powi(c as i32)
                / (factorial(a) * factorial(b) * factorial(c));
            if coeff == 0.0 {
                continue;
            }
            let term = w_pow[a].compose(&l_pow[b]).compose(&w_pow[c]);
            total = total.add(&term.scale(coeff));
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Preset, TrigPolynomial};

    fn max_diff(a: &OperatorMatrix, b: &OperatorMatrix) -> f64 {
        a.matrix().sub(b.matrix()).max_abs()
    }

    #[test]
    fn laplacian_is_diagonal() {
        let spec = Preset::ZeroPotential.spec();
        let l = assemble_function_generator(&spec, 6);
        let ld = assemble_density_generator(&spec, 6);
        for j in -6i64..=6 {
            for k in -6i64..=6 {
                let expected = if j == k {
                    Complex64::new(-4.0 * PI * PI * (k * k) as f64, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                };
                assert!((l.entry(j, k) - expected).norm() < 1e-12);
                assert!((ld.entry(j, k) - expected).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_drift_shifts_diagonal() {
        let base = Preset::ZeroPotential.spec();
        let drifted = ProblemSpec::new(
            TrigPolynomial::zero(),
            1.5,
            base.sigma(),
            base.weight().clone(),
            base.observable().clone(),
        )
        .unwrap();
        let l0 = assemble_function_generator(&base, 5);
        let l1 = assemble_function_generator(&drifted, 5);
        for k in -5i64..=5 {
            let shift = l1.entry(k, k) - l0.entry(k, k);
            assert!((shift - Complex64::new(0.0, TAU * k as f64 * 1.5)).norm() < 1e-12);
        }
    }

    #[test]
    fn strong_potential_off_diagonals() {
        let spec = Preset::StrongPotential.spec();
        let l = assemble_function_generator(&spec, 5);
        // b_1 = -i pi, b_{-1} = i pi
        for k in -4i64..=4 {
            let up = l.entry(k + 1, k);
            let down = l.entry(k - 1, k);
            let i_k = Complex64::new(0.0, TAU * k as f64);
            assert!((up - i_k * Complex64::new(0.0, -PI)).norm() < 1e-12);
            assert!((down - i_k * Complex64::new(0.0, PI)).norm() < 1e-12);
        }
    }

    #[test]
    fn adjoint_flip_transpose_identity() {
        for preset in Preset::ALL {
            let spec = preset.spec();
            for n in [8usize, 40] {
                let lf = assemble_function_generator(&spec, n);
                let ld = assemble_density_generator(&spec, n);
                assert!(max_diff(&lf.flip_transpose(), &ld) < 1e-14);
            }
        }
    }

    #[test]
    fn fokker_planck_conserves_mass() {
        let spec = Preset::StrongPotential.spec();
        let ld = assemble_density_generator(&spec, 8);
        for k in -8i64..=8 {
            assert!(ld.entry(0, k).norm() < 1e-15);
        }
    }

    #[test]
    fn weight_matrices() {
        let spec = Preset::ZeroPotential.spec();
        let b = assemble_weight(&spec, 6, Space::Density);
        for j in -6i64..=6 {
            for k in -6i64..=6 {
                let expected = match (j - k).abs() {
                    0 => 0.5,
                    2 => 0.25,
                    _ => 0.0,
                };
                assert_eq!(b.entry(j, k), Complex64::new(expected, 0.0));
            }
        }
        let constant = spec.with_weight(TrigPolynomial::constant(0.7));
        let bc = assemble_weight(&constant, 4, Space::Density);
        assert!(max_diff(&bc, &OperatorMatrix::identity(4, Space::Density).scale(0.7)) == 0.0);
        let zero = spec.with_weight(TrigPolynomial::zero());
        assert_eq!(assemble_weight(&zero, 4, Space::Density).matrix().max_abs(), 0.0);
    }

    #[test]
    fn scheme_matrix_without_weight_ignores_delta() {
        let spec = Preset::StrongPotential.spec().with_weight(TrigPolynomial::zero());
        let reference = assemble_density_generator(&spec, 10).exp(0.1).unwrap();
        for delta in [0.0, 0.3, 1.0] {
            let q = scheme_matrix(&spec, 10, 0.1, delta).unwrap();
            assert!(max_diff(&q, &reference) < 1e-14);
        }
    }

    #[test]
    fn scheme_matrix_validates_arguments() {
        let spec = Preset::ZeroPotential.spec();
        assert!(scheme_matrix(&spec, 4, 0.0, 0.5).is_err());
        assert!(scheme_matrix(&spec, 4, 0.1, 1.5).is_err());
    }

    #[test]
    fn trapezoid_scheme_is_symmetric_product() {
        let spec = Preset::StrongPotential.spec();
        let n = 10;
        let dt = 0.1;
        let half = assemble_weight(&spec, n, Space::Density).exp(dt / 2.0).unwrap();
        let transport = assemble_density_generator(&spec, n).exp(dt).unwrap();
        let expected = half.compose(&transport).compose(&half);
        let q = scheme_matrix(&spec, n, dt, 0.5).unwrap();
        assert!(max_diff(&q, &expected) < 1e-14);
    }

    #[test]
    fn expansion_low_orders() {
        let spec = Preset::StrongPotential.spec();
        let n = 8;
        let l = assemble_function_generator(&spec, n);
        let w = assemble_weight(&spec, n, Space::Function);
        let id = OperatorMatrix::identity(n, Space::Function);
        for delta in [0.0, 0.25, 0.5, 1.0] {
            assert!(max_diff(&expansion_term(&spec, n, 0, delta), &id) == 0.0);
            assert!(max_diff(&expansion_term(&spec, n, 1, delta), &l.add(&w)) < 1e-10);
        }
        let lw = l.add(&w);
        let square = lw.compose(&lw).scale(0.5);
        let a2 = expansion_term(&spec, n, 2, 0.5);
        let scale = square.matrix().max_abs();
        assert!(max_diff(&a2, &square) <= 1e-12 * scale);

        // left point rule: L^2/2 + W L + W^2/2 = (L+W)^2/2 + (W L - L W)/2
        let left = expansion_term(&spec, n, 2, 0.0);
        let direct = l
            .compose(&l)
            .scale(0.5)
            .add(&w.compose(&l))
            .add(&w.compose(&w).scale(0.5));
        assert!(max_diff(&left, &direct) <= 1e-12 * scale);
        let commutator = w.compose(&l).add(&l.compose(&w).scale(-1.0)).scale(0.5);
        assert!(max_diff(&left, &square.add(&commutator)) <= 1e-12 * scale);
        assert!(commutator.matrix().max_abs() > 1.0);
    }

    #[test]
    fn third_order_trapezoid_term_matches_closed_form() {
        // L^3/6 + W^3/6 + L W^2/8 + L^2 W/4 + W L^2/4 + W L W/4 + W^2 L/8
        let spec = Preset::StrongPotential.spec();
        let n = 6;
        let l = assemble_function_generator(&spec, n);
        let w = assemble_weight(&spec, n, Space::Function);
        let l2 = l.compose(&l);
        let w2 = w.compose(&w);
        let closed = l2
            .compose(&l)
            .scale(1.0 / 6.0)
            .add(&w2.compose(&w).scale(1.0 / 6.0))
            .add(&l.compose(&w2).scale(1.0 / 8.0))
            .add(&l2.compose(&w).scale(0.25))
            .add(&w.compose(&l2).scale(0.25))
            .add(&w.compose(&l).compose(&w).scale(0.25))
            .add(&w2.compose(&l).scale(1.0 / 8.0));
        let a3 = expansion_term(&spec, n, 3, 0.5);
        assert!(max_diff(&a3, &closed) <= 1e-12 * closed.matrix().max_abs());
    }
}
