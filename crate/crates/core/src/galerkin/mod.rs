//! Fourier-Galerkin reference solver.
//!
//! Operators act on Fourier coefficients of degree `-N..=N` with basis
//! `e_k(q) = exp(2 i pi k q)`. Test functions and densities are kept apart by
//! [`Space`]; the two representations of an operator are related by the
//! flip-transpose `A^dagger(j, k) = A(-k, -j)`.

mod coeffs;
mod correction;
pub mod linalg;
mod operators;
mod spectral;

pub use coeffs::{grid_size, CoeffVector, Space};
pub use correction::{leading_correction, LeadingCorrection};
pub use linalg::{lu_solve, matexp, CMatrix};
pub use operators::{
    assemble_density_generator, assemble_function_generator, assemble_weight, expansion_term,
    scheme_matrix, OperatorMatrix,
};
pub use spectral::{
    continuum_reference, continuum_reference_with, dominant_eigenpair, galerkin_report,
    grid_total_variation, measure_map_apply, observable_average, scheme_eigen,
    tu_corrected_average, ContinuumReference, EigenSettings, GalerkinReport, SchemeEigen,
    REALNESS_TOL,
};

/// Default truncation `N`.
pub const DEFAULT_HALF_WIDTH: usize = 30;
