//! Leading-order timestep corrections of the stationary measure and of the
//! principal eigenvalue.
//!
//! For a scheme consistent at order `p` with expansion coefficients `A_k`,
//! the stationary density satisfies `nu_dt ~ (1 + dt^p f) nu` where
//! `nu f0` solves the Poisson problem
//!
//! ```text
//! (L^dagger + W - lambda) x = -A_{p+1}^dagger nu + c nu,   int x h = 0,
//! c = <A_{p+1} h, nu> / <h, nu>,
//! ```
//!
//! and `f = f0 - int f0 dnu`. The eigenvalue coefficient is
//! `lambda_{p+1} - lambda^{p+1}/(p+1)!` with
//! `lambda_{p+1} = int A_{p+1} 1 dnu + int W f dnu`.

use num_complex::Complex64;

use super::coeffs::{grid_size, CoeffVector, Space};
use super::linalg::{lu_solve, CMatrix};
use super::operators::{assemble_density_generator, assemble_weight, expansion_term};
use super::spectral::{continuum_reference, ContinuumReference};
use crate::error::{Error, Result};
use crate::model::ProblemSpec;

#[derive(Debug, Clone)]
pub struct LeadingCorrection {
    pub order: usize,
    pub delta: f64,
    pub reference: ContinuumReference,
    /// Quadrature nodes `i / npts`.
    pub grid: Vec<f64>,
    /// Stationary density on the grid.
    pub nu_grid: Vec<f64>,
    /// Correction function `f` on the grid.
    pub f_grid: Vec<f64>,
    /// Coefficients of `x = nu f0` (density space).
    pub poisson_solution: CoeffVector,
    /// Centering constant `<A_{p+1} h, nu> / <h, nu>`.
    pub centering: f64,
    pub lambda_p1: f64,
}

impl LeadingCorrection {
    /// `int phi f dnu`.
    pub fn correction(&self, phi: impl Fn(f64) -> f64) -> f64 {
        self.grid
            .iter()
            .zip(&self.nu_grid)
            .zip(&self.f_grid)
            .map(|((&q, &nu), &f)| phi(q) * f * nu)
            .sum::<f64>()
            / self.grid.len() as f64
    }

    /// Predicted `(lambda_dt - lambda) / dt^p` as `dt -> 0`.
    pub fn eigenvalue_coefficient(&self) -> f64 {
        let p1 = self.order + 1;
        let fact: f64 = (1..=p1).map(|i| i as f64).product();
        self.lambda_p1 - self.reference.lambda.powi(p1 as i32) / fact
    }

    pub fn max_abs_f(&self) -> f64 {
        self.f_grid.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Checks that `delta` makes the `(1-delta, delta)` weight splitting
/// consistent at order `p` (`p = 1` for every delta, `p = 2` only for 1/2).
fn check_order(order: usize, delta: f64) -> Result<()> {
    match order {
        1 if (0.0..=1.0).contains(&delta) => Ok(()),
        2 if delta == 0.5 => Ok(()),
        1 => Err(Error::config("delta", format!("must lie in [0, 1], got {delta}"))),
        2 => Err(Error::config(
            "delta",
            format!("order 2 requires the trapezoid rule delta = 0.5, got {delta}"),
        )),
        _ => Err(Error::config("p", format!("order must be 1 or 2, got {order}"))),
    }
}

pub fn leading_correction(
    spec: &ProblemSpec,
    half_width: usize,
    order: usize,
    delta: f64,
) -> Result<LeadingCorrection> {
    check_order(order, delta)?;
    let reference = continuum_reference(spec, half_width)?;
    let lambda = reference.lambda;
    let nu = &reference.nu_w;
    let h = &reference.h_hat;

    let a_next = expansion_term(spec, half_width, order + 1, delta);
    let a_next_adj = a_next.flip_transpose();

    let h_nu = h.pair(nu);
    let centering = a_next.apply(h).pair(nu) / h_nu;
    if centering.im.abs() > 1e-8 * centering.norm().max(1.0) {
        return Err(Error::Numerical(format!(
            "centering constant is not real: {centering}"
        )));
    }
    let rhs: Vec<Complex64> = a_next_adj
        .apply(nu)
        .entries()
        .iter()
        .zip(nu.entries())
        .map(|(a, n)| -a + centering * n)
        .collect();

    // Bordered system [[M, u], [u^H, 0]] with M = L^dagger + W - lambda and the
    // row enforcing sum_k x_k h_{-k} = 0.
    let m = assemble_density_generator(spec, half_width)
        .add(&assemble_weight(spec, half_width, Space::Density))
        .shift(-lambda);
    let n = m.matrix().dim();
    let nn = half_width as i64;
    let border_row: Vec<Complex64> = (-nn..=nn).map(|k| h.get(-k)).collect();
    let bordered = CMatrix::from_fn(n + 1, |i, j| match (i < n, j < n) {
        (true, true) => m.matrix()[(i, j)],
        (true, false) => border_row[i].conj(),
        (false, true) => border_row[j],
        (false, false) => Complex64::new(0.0, 0.0),
    });
    let mut full_rhs = rhs;
    full_rhs.push(Complex64::new(0.0, 0.0));
    let mut solution = lu_solve(&bordered, &full_rhs)?;
    solution.pop();
    let poisson_solution = CoeffVector::from_entries(solution, Space::Density);

    let npts = grid_size(half_width);
    let grid: Vec<f64> = (0..npts).map(|i| i as f64 / npts as f64).collect();
    let nu_grid = nu.grid_values(npts);
    if let Some(i) = nu_grid.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::Numerical(format!(
            "stationary density is not positive at q = {}",
            grid[i]
        )));
    }
    let x_grid = poisson_solution.grid_values(npts);
    let f0: Vec<f64> = x_grid.iter().zip(&nu_grid).map(|(x, n)| x / n).collect();
    let mean_f0 = x_grid.iter().sum::<f64>() / npts as f64;
    let f_grid: Vec<f64> = f0.iter().map(|v| v - mean_f0).collect();

    let ones = CoeffVector::unit(half_width, Space::Function);
    let creation = a_next.apply(&ones).pair(nu).re;
    let w = spec.weight();
    let w_f = grid
        .iter()
        .zip(&nu_grid)
        .zip(&f_grid)
        .map(|((&q, &n), &f)| w.eval(q) * f * n)
        .sum::<f64>()
        / npts as f64;

    Ok(LeadingCorrection {
        order,
        delta,
        reference,
        grid,
        nu_grid,
        f_grid,
        poisson_solution,
        centering: centering.re,
        lambda_p1: creation + w_f,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::galerkin::spectral::{observable_average, scheme_eigen};
    use crate::model::{Preset, TrigPolynomial};

    #[test]
    fn constant_weight_has_no_correction() {
        for preset in Preset::ALL {
            let spec = preset.spec().with_weight(TrigPolynomial::constant(0.7));
            for (p, delta) in [(1, 0.0), (2, 0.5)] {
                let lc = leading_correction(&spec, 20, p, delta).unwrap();
                assert!(lc.max_abs_f() <= 1e-10, "{preset} p={p}: {}", lc.max_abs_f());
                assert!(lc.correction(|q| (std::f64::consts::TAU * q).cos().exp()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn correction_is_centered() {
        for preset in Preset::ALL {
            let lc = leading_correction(&preset.spec(), 30, 1, 0.0).unwrap();
            assert!(lc.correction(|_| 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_inconsistent_order() {
        let spec = Preset::ZeroPotential.spec();
        assert!(leading_correction(&spec, 10, 2, 0.0).is_err());
        assert!(leading_correction(&spec, 10, 3, 0.5).is_err());
    }

    #[test]
    fn first_order_coefficients_match_extrapolated_scheme() {
        let spec = Preset::ZeroPotential.spec();
        let n = 30;
        let lc = leading_correction(&spec, n, 1, 0.0).unwrap();
        let phi = |q: f64| spec.observable().eval(q);
        let avg0 = observable_average(&lc.reference.nu_w, phi).unwrap();
        let slope = |dt: f64| {
            let eig = scheme_eigen(&spec, n, dt, 0.0).unwrap();
            let avg = observable_average(&eig.nu_w_dt, phi).unwrap();
            ((avg - avg0) / dt, (eig.lambda_dt - lc.reference.lambda) / dt)
        };
        let (a1, e1) = slope(0.00125);
        let (a2, e2) = slope(0.000625);
        // the O(dt) remainder cancels in 2 s(dt/2) - s(dt)
        let extrapolated = 2.0 * a2 - a1;
        let theory = lc.correction(phi);
        assert!(((extrapolated - theory) / theory).abs() < 1e-3, "{extrapolated} vs {theory}");
        // the eigenvalue is second order for every splitting
        assert!(lc.eigenvalue_coefficient().abs() < 1e-9);
        assert!((e1 / e2 - 2.0).abs() < 0.05, "{e1} {e2}");
    }
}
