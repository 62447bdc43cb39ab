//! Principal eigenpairs of the continuous and discretized Feynman-Kac
//! operators, together with the grid quadratures built on them.

use num_complex::Complex64;

use super::coeffs::{grid_size, CoeffVector, Space};
use super::linalg::{lu_solve, power_iteration, residual_max, CMatrix};
use super::operators::{
    assemble_density_generator, assemble_function_generator, assemble_weight, scheme_matrix,
    OperatorMatrix,
};
use crate::error::{Error, Result};
use crate::model::{ProblemSpec, TrigPolynomial};

/// Largest tolerated imaginary part of a principal eigenvalue.
pub const REALNESS_TOL: f64 = 1e-10;

/// Power iteration settings.
#[derive(Debug, Clone, Copy)]
pub struct EigenSettings {
    pub tol: f64,
    pub max_iter: usize,
    /// Exponentiation time used to turn a generator into a contraction.
    pub exp_time: f64,
}

impl Default for EigenSettings {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 100_000,
            exp_time: 1.0,
        }
    }
}

/// Dominant eigenpair of `q` by power iteration started from the degree-zero
/// unit vector; the eigenvector is scaled so that its degree-zero entry is one.
pub fn dominant_eigenpair(
    q: &OperatorMatrix,
    tol: f64,
    max_iter: usize,
) -> Result<(Complex64, CoeffVector)> {
    let pair = power_iteration(q.matrix(), q.half_width(), tol, max_iter)?;
    let v = CoeffVector::from_entries(pair.vector, q.space());
    Ok((pair.value, v))
}

fn real_log(value: Complex64, what: &str) -> Result<f64> {
    let log = value.ln();
    if log.im.abs() > REALNESS_TOL || !log.re.is_finite() {
        return Err(Error::Numerical(format!(
            "{what} is not a positive real eigenvalue: {value}"
        )));
    }
    Ok(log.re)
}

/// Continuum (`dt = 0`) principal eigenvalue and eigenvectors of `L + W`.
#[derive(Debug, Clone)]
pub struct ContinuumReference {
    pub lambda: f64,
    /// Density of the tilted stationary measure, unit mass.
    pub nu_w: CoeffVector,
    /// Principal eigenfunction of `L + W`, degree-zero coefficient one.
    pub h_hat: CoeffVector,
}

pub fn continuum_reference(spec: &ProblemSpec, half_width: usize) -> Result<ContinuumReference> {
    continuum_reference_with(spec, half_width, EigenSettings::default())
}

pub fn continuum_reference_with(
    spec: &ProblemSpec,
    half_width: usize,
    settings: EigenSettings,
) -> Result<ContinuumReference> {
    let t = settings.exp_time;
    let density_op = assemble_density_generator(spec, half_width)
        .add(&assemble_weight(spec, half_width, Space::Density));
    let (big_lambda, nu_w) = dominant_eigenpair(&density_op.exp(t)?, settings.tol, settings.max_iter)?;
    real_log(big_lambda, "continuum density eigenvalue")?;
    // Row zero of L^dagger vanishes, so (A nu)_0 = int W nu: reading the
    // eigenvalue off the generator avoids the roundoff that repeated squaring
    // puts into exp(t A).
    let generator_value = density_op.apply(&nu_w).get(0);
    if generator_value.im.abs() > REALNESS_TOL {
        return Err(Error::Numerical(format!(
            "continuum eigenvalue is not real: {generator_value}"
        )));
    }
    let lambda = generator_value.re;
    let nu_w = refine_eigenvector(&density_op, lambda)?;

    let function_op = assemble_function_generator(spec, half_width)
        .add(&assemble_weight(spec, half_width, Space::Function));
    let h_hat = refine_eigenvector(&function_op, lambda)?;

    Ok(ContinuumReference {
        lambda,
        nu_w,
        h_hat,
    })
}

/// Solves `(A - lambda) v = 0` with `v_0 = 1` as a bordered linear system.
///
/// Power iteration on `exp(t A)` only resolves the fast-decaying high modes
/// to absolute precision; the direct solve gets them to relative precision,
/// which matters once high powers of the generator act on `v`.
fn refine_eigenvector(op: &OperatorMatrix, lambda: f64) -> Result<CoeffVector> {
    let m = op.matrix();
    let n = m.dim();
    let zero_mode = op.half_width();
    let one = Complex64::new(1.0, 0.0);
    let bordered = CMatrix::from_fn(n + 1, |i, j| match (i < n, j < n) {
        (true, true) if i == j => m[(i, j)] - lambda,
        (true, true) => m[(i, j)],
        (true, false) if i == zero_mode => one,
        (false, true) if j == zero_mode => one,
        _ => Complex64::new(0.0, 0.0),
    });
    let mut rhs = vec![Complex64::new(0.0, 0.0); n + 1];
    rhs[n] = one;
    let mut v = lu_solve(&bordered, &rhs)?;
    v.pop();
    Ok(CoeffVector::from_entries(v, op.space()))
}

/// Principal eigenvalue `log(Lambda)/dt` and stationary density of the scheme.
#[derive(Debug, Clone)]
pub struct SchemeEigen {
    pub lambda_dt: f64,
    /// Dominant eigenvalue `Lambda` of the one-step operator.
    pub multiplier: Complex64,
    pub nu_w_dt: CoeffVector,
    pub residual: f64,
}

pub fn scheme_eigen(
    spec: &ProblemSpec,
    half_width: usize,
    dt: f64,
    delta: f64,
) -> Result<SchemeEigen> {
    let settings = EigenSettings::default();
    let q = scheme_matrix(spec, half_width, dt, delta)?;
    let (big_lambda, nu_w_dt) = dominant_eigenpair(&q, settings.tol, settings.max_iter)?;
    let lambda_dt = real_log(big_lambda, "scheme eigenvalue")? / dt;
    let residual = residual_max(q.matrix(), nu_w_dt.entries(), big_lambda);
    Ok(SchemeEigen {
        lambda_dt,
        multiplier: big_lambda,
        nu_w_dt,
        residual,
    })
}

/// `int phi rho / int rho` by the periodic trapezoid rule on `8N + 8` points.
pub fn observable_average(density: &CoeffVector, phi: impl Fn(f64) -> f64) -> Result<f64> {
    weighted_average(density, phi, |_| 1.0)
}

/// Average of `phi` after reweighting the first-order stationary density by
/// `exp(dt W / 2)`.
pub fn tu_corrected_average(
    density_first_order: &CoeffVector,
    phi: impl Fn(f64) -> f64,
    weight: &TrigPolynomial,
    dt: f64,
) -> Result<f64> {
    weighted_average(density_first_order, phi, |q| (0.5 * dt * weight.eval(q)).exp())
}

fn weighted_average(
    density: &CoeffVector,
    phi: impl Fn(f64) -> f64,
    tilt: impl Fn(f64) -> f64,
) -> Result<f64> {
    let npts = grid_size(density.half_width());
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, rho) in density.grid_values(npts).into_iter().enumerate() {
        let q = i as f64 / npts as f64;
        let w = tilt(q) * rho;
        num += phi(q) * w;
        den += w;
    }
    if den == 0.0 || !den.is_finite() {
        return Err(Error::Numerical("density has zero mass on the quadrature grid".into()));
    }
    Ok(num / den)
}

/// One step `mu -> Q mu / (Q mu)_0` of the normalized measure dynamics.
pub fn measure_map_apply(q: &OperatorMatrix, mu: &CoeffVector) -> Result<CoeffVector> {
    q.apply(mu).normalized()
}

/// Half the L1 distance between two densities on the quadrature grid.
pub fn grid_total_variation(a: &CoeffVector, b: &CoeffVector) -> f64 {
    let npts = grid_size(a.half_width().max(b.half_width()));
    let ga = a.grid_values(npts);
    let gb = b.grid_values(npts);
    0.5 * ga.iter().zip(&gb).map(|(x, y)| (x - y).abs()).sum::<f64>() / npts as f64
}

/// Summary of one Galerkin computation at a given timestep.
#[derive(Debug, Clone)]
pub struct GalerkinReport {
    pub half_width: usize,
    pub dt: f64,
    pub delta: f64,
    pub lambda0: f64,
    pub lambda_dt: f64,
    pub nu_w: CoeffVector,
    pub nu_w_dt: CoeffVector,
    pub h_hat: CoeffVector,
    /// `(name, continuum average, scheme average)`.
    pub averages: Vec<(String, f64, f64)>,
}

pub fn galerkin_report(
    spec: &ProblemSpec,
    half_width: usize,
    dt: f64,
    delta: f64,
) -> Result<GalerkinReport> {
    let reference = continuum_reference(spec, half_width)?;
    let scheme = scheme_eigen(spec, half_width, dt, delta)?;
    let phi = spec.observable();
    let w = spec.weight();
    let averages = vec![
        (
            phi.name().to_string(),
            observable_average(&reference.nu_w, |q| phi.eval(q))?,
            observable_average(&scheme.nu_w_dt, |q| phi.eval(q))?,
        ),
        (
            "W".to_string(),
            observable_average(&reference.nu_w, |q| w.eval(q))?,
            observable_average(&scheme.nu_w_dt, |q| w.eval(q))?,
        ),
    ];
    Ok(GalerkinReport {
        half_width,
        dt,
        delta,
        lambda0: reference.lambda,
        lambda_dt: scheme.lambda_dt,
        nu_w: reference.nu_w,
        nu_w_dt: scheme.nu_w_dt,
        h_hat: reference.h_hat,
        averages,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Preset;
    use std::f64::consts::TAU;

    #[test]
    fn scaled_identity_eigenpair() {
        let q = OperatorMatrix::identity(5, Space::Density).scale((0.4f64 * 0.1).exp());
        let (value, v) = dominant_eigenpair(&q, 1e-12, 10).unwrap();
        assert!((value.re - (0.04f64).exp()).abs() < 1e-15);
        assert_eq!(v, CoeffVector::unit(5, Space::Density));
    }

    #[test]
    fn unweighted_zero_potential_keeps_uniform_density() {
        let spec = Preset::ZeroPotential.spec().with_weight(TrigPolynomial::zero());
        let q = assemble_density_generator(&spec, 8).exp(0.3).unwrap();
        let (value, v) = dominant_eigenpair(&q, 1e-12, 100).unwrap();
        assert!((value - Complex64::new(1.0, 0.0)).norm() < 1e-14);
        assert!(v.entries().iter().zip(CoeffVector::unit(8, Space::Density).entries())
            .all(|(a, b)| (a - b).norm() < 1e-14));
    }

    #[test]
    fn weighted_scheme_residual() {
        let spec = Preset::ZeroPotential.spec();
        let eig = scheme_eigen(&spec, 30, 0.1, 0.5).unwrap();
        assert!(eig.multiplier.re > 0.0);
        assert!(eig.multiplier.im.abs() < 1e-12);
        assert!(eig.residual <= 1e-10);
    }

    #[test]
    fn constant_weight_shifts_spectrum() {
        for preset in Preset::ALL {
            let spec = preset.spec().with_weight(TrigPolynomial::constant(0.7));
            let plain = preset.spec().with_weight(TrigPolynomial::zero());
            let a = continuum_reference(&spec, 16).unwrap();
            let b = continuum_reference(&plain, 16).unwrap();
            assert!((a.lambda - 0.7).abs() < 1e-12);
            assert!(b.lambda.abs() < 1e-12);
            assert!(grid_total_variation(&a.nu_w, &b.nu_w) < 1e-12);
            // h_0 = 1 without weight
            assert!(b
                .h_hat
                .entries()
                .iter()
                .zip(CoeffVector::unit(16, Space::Function).entries())
                .all(|(x, y)| (x - y).norm() < 1e-12));
            for dt in [0.2, 0.05] {
                for delta in [0.0, 0.5] {
                    let e = scheme_eigen(&spec, 16, dt, delta).unwrap();
                    assert!((e.lambda_dt - 0.7).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn continuum_self_convergence() {
        let spec = Preset::ZeroPotential.spec();
        let coarse = continuum_reference(&spec, 30).unwrap();
        let fine = continuum_reference(&spec, 60).unwrap();
        assert!((coarse.lambda - fine.lambda).abs() < 1e-10);
    }

    #[test]
    fn small_timestep_approaches_continuum() {
        let spec = Preset::ZeroPotential.spec();
        let reference = continuum_reference(&spec, 30).unwrap();
        let eig = scheme_eigen(&spec, 30, 1e-3, 0.5).unwrap();
        assert!((eig.lambda_dt - reference.lambda).abs() <= 1e-4);
    }

    #[test]
    fn delta_family_shares_eigenvalue() {
        let spec = Preset::StrongPotential.spec();
        let a = scheme_eigen(&spec, 30, 0.1, 0.0).unwrap();
        let b = scheme_eigen(&spec, 30, 0.1, 1.0).unwrap();
        let c = scheme_eigen(&spec, 30, 0.1, 0.5).unwrap();
        assert!((a.lambda_dt - b.lambda_dt).abs() < 1e-10);
        assert!((a.lambda_dt - c.lambda_dt).abs() < 1e-10);
        assert!(grid_total_variation(&a.nu_w_dt, &b.nu_w_dt) > 1e-4);
    }

    #[test]
    fn average_examples() {
        let uniform = CoeffVector::unit(4, Space::Density);
        assert!((observable_average(&uniform, |_| 3.0).unwrap() - 3.0).abs() < 1e-15);
        assert!(observable_average(&uniform, |q| (TAU * q).cos()).unwrap().abs() < 1e-12);
        let mut entries = uniform.entries().to_vec();
        entries[3] = Complex64::new(0.5, 0.0);
        entries[5] = Complex64::new(0.5, 0.0);
        let rho = CoeffVector::from_entries(entries, Space::Density);
        assert!((observable_average(&rho, |q| (TAU * q).cos()).unwrap() - 0.5).abs() < 1e-12);
        assert!(observable_average(&CoeffVector::zeros(4, Space::Density), |_| 1.0).is_err());
    }

    #[test]
    fn tu_correction_degenerate_cases() {
        let spec = Preset::ZeroPotential.spec();
        let eig = scheme_eigen(&spec, 20, 0.1, 0.0).unwrap();
        let phi = |q: f64| (TAU * q).cos().exp();
        let plain = observable_average(&eig.nu_w_dt, phi).unwrap();
        let constant = TrigPolynomial::constant(0.7);
        let tu_const = tu_corrected_average(&eig.nu_w_dt, phi, &constant, 0.1).unwrap();
        assert!((tu_const - plain).abs() < 1e-14);
        let tu_zero_dt = tu_corrected_average(&eig.nu_w_dt, phi, spec.weight(), 0.0).unwrap();
        assert!((tu_zero_dt - plain).abs() < 1e-15);
    }

    #[test]
    fn averaging_w_recovers_lambda() {
        for preset in Preset::ALL {
            let spec = preset.spec();
            let r = continuum_reference(&spec, 30).unwrap();
            let avg_w = observable_average(&r.nu_w, |q| spec.weight().eval(q)).unwrap();
            assert!((avg_w - r.lambda).abs() < 1e-9, "{preset}: {avg_w} vs {}", r.lambda);
        }
    }

    #[test]
    fn eigenvectors_are_positive() {
        for preset in Preset::ALL {
            let spec = preset.spec();
            let r = continuum_reference(&spec, 30).unwrap();
            let npts = grid_size(30);
            assert!(r.nu_w.grid_values(npts).iter().all(|&x| x > 0.0));
            assert!(r.h_hat.grid_values(npts).iter().all(|&x| x > 0.0));
            assert!(r.nu_w.symmetry_defect() < 1e-10);
        }
    }

    #[test]
    fn measure_map_fixed_point_and_mass() {
        let spec = Preset::StrongPotential.spec();
        let q = scheme_matrix(&spec, 30, 0.1, 0.5).unwrap();
        let eig = scheme_eigen(&spec, 30, 0.1, 0.5).unwrap();
        let next = measure_map_apply(&q, &eig.nu_w_dt).unwrap();
        assert!(grid_total_variation(&next, &eig.nu_w_dt) < 1e-10);

        let free = spec.with_weight(TrigPolynomial::zero());
        let q0 = scheme_matrix(&free, 30, 0.1, 0.5).unwrap();
        let mut mu = CoeffVector::unit(30, Space::Density);
        for _ in 0..5 {
            let raw = q0.apply(&mu);
            assert!((raw.mass() - Complex64::new(1.0, 0.0)).norm() < 1e-12);
            mu = measure_map_apply(&q0, &mu).unwrap();
        }
    }
}
