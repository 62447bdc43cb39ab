//! Timestep sweeps, convergence-order fits and the verification checks built
//! on the Galerkin and Monte Carlo solvers.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::galerkin::{
    continuum_reference, grid_total_variation, leading_correction, measure_map_apply,
    observable_average, scheme_eigen, scheme_matrix, tu_corrected_average, CoeffVector,
    ContinuumReference, SchemeEigen, Space, DEFAULT_HALF_WIDTH,
};
use crate::integrators::IntegratorKind;
use crate::model::{Observable, Preset, ProblemSpec};
use crate::smc::{smc_run, QuadratureRule, SmcConfig, SmcEstimate};

pub const DEFAULT_DT_GRID: [f64; 5] = [0.2, 0.1, 0.05, 0.025, 0.0125];

/// Deterministic errors below this are treated as zero by the order fit.
pub const DETERMINISTIC_FLOOR: f64 = 1e-11;

/// Stochastic errors must exceed this many standard errors to enter a fit.
pub const STDERR_FACTOR: f64 = 10.0;

/// |z| above this flags a Monte Carlo / Galerkin disagreement.
pub const Z_THRESHOLD: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Mc,
    Galerkin,
}

impl Source {
    pub fn name(self) -> &'static str {
        match self {
            Source::Mc => "mc",
            Source::Galerkin => "galerkin",
        }
    }
}

impl FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mc" => Ok(Source::Mc),
            "galerkin" => Ok(Source::Galerkin),
            other => Err(Error::config("methods", format!("unknown source `{other}`"))),
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Eigenvalue,
    ObservableAverage,
    AverageOfW,
}

impl Target {
    pub const ALL: [Target; 3] = [Target::Eigenvalue, Target::ObservableAverage, Target::AverageOfW];

    pub fn name(self) -> &'static str {
        match self {
            Target::Eigenvalue => "eigenvalue",
            Target::ObservableAverage => "observable_average",
            Target::AverageOfW => "average_of_W",
        }
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Target::ALL
            .into_iter()
            .find(|t| t.name() == s || (s == "average_of_w" && *t == Target::AverageOfW))
            .ok_or_else(|| Error::config("targets", format!("unknown target `{s}`")))
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    /// Continuum values at `dt = 0`.
    GalerkinDt0,
    /// Galerkin values of the same scheme at the same timestep.
    GalerkinSameDt,
}

impl FromStr for Reference {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "galerkin_dt0" => Ok(Reference::GalerkinDt0),
            "galerkin_same_dt" => Ok(Reference::GalerkinSameDt),
            other => Err(Error::config("reference", format!("unknown reference `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Method {
    pub source: Source,
    /// Ignored by Galerkin rows, which use the exact semigroup.
    pub integrator: IntegratorKind,
    pub delta: f64,
}

impl Method {
    pub fn galerkin(delta: f64) -> Self {
        Self {
            source: Source::Galerkin,
            integrator: IntegratorKind::Euler,
            delta,
        }
    }

    pub fn mc(integrator: IntegratorKind, delta: f64) -> Self {
        Self {
            source: Source::Mc,
            integrator,
            delta,
        }
    }

    /// Integrator name, empty for Galerkin.
    pub fn integrator_label(&self) -> &'static str {
        match self.source {
            Source::Mc => self.integrator.name(),
            Source::Galerkin => "",
        }
    }

    fn same_series(&self, other: &Method) -> bool {
        self.source == other.source
            && self.delta == other.delta
            && (self.source == Source::Galerkin || self.integrator == other.integrator)
    }
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub preset: Preset,
    pub dt_grid: Vec<f64>,
    pub methods: Vec<Method>,
    pub targets: Vec<Target>,
    pub reference: Reference,
    /// Template for Monte Carlo cells; `dt`, `integrator` and `rule` are overridden per cell.
    pub smc: SmcConfig,
    pub half_width: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            preset: Preset::ZeroPotential,
            dt_grid: DEFAULT_DT_GRID.to_vec(),
            methods: vec![Method::galerkin(0.0), Method::galerkin(0.5)],
            targets: vec![Target::Eigenvalue, Target::ObservableAverage],
            reference: Reference::GalerkinDt0,
            smc: SmcConfig::default(),
            half_width: DEFAULT_HALF_WIDTH,
        }
    }
}

pub fn validate_dt_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::config("dt_grid", "needs at least one timestep"));
    }
    if let Some(dt) = grid.iter().find(|dt| !(dt.is_finite() && **dt > 0.0)) {
        return Err(Error::config("dt_grid", format!("timesteps must be positive, got {dt}")));
    }
    if grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::config("dt_grid", "timesteps must be strictly decreasing"));
    }
    Ok(())
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        validate_dt_grid(&self.dt_grid)?;
        if self.methods.is_empty() {
            return Err(Error::config("methods", "at least one method is required"));
        }
        if self.targets.is_empty() {
            return Err(Error::config("targets", "at least one target is required"));
        }
        for m in &self.methods {
            QuadratureRule::new(m.delta)?;
        }
        if self.half_width == 0 {
            return Err(Error::config("N", "Galerkin truncation must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub method: Method,
    pub dt: f64,
    pub target: Target,
    pub value: Option<f64>,
    pub reference: Option<f64>,
    pub error: Option<f64>,
    /// Standard error of stochastic rows.
    pub stderr: Option<f64>,
    /// Message of the error that prevented this cell from completing.
    pub failure: Option<String>,
}

impl SweepRow {
    /// Whether the row is informative enough to enter an order fit.
    pub fn fit_eligible(&self) -> bool {
        match (self.error, self.stderr) {
            (Some(e), Some(s)) => e > STDERR_FACTOR * s && e > 0.0,
            (Some(e), None) => e > DETERMINISTIC_FLOOR,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrderFit {
    pub slope: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeriesFit {
    pub method: Method,
    pub target: Target,
    /// `None` when fewer than two rows were eligible.
    pub fit: Option<OrderFit>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub preset: Preset,
    /// Ordered by method, then dt descending, then target.
    pub rows: Vec<SweepRow>,
    pub fits: Vec<SeriesFit>,
}

impl SweepResult {
    pub fn fit_for(&self, method: &Method, target: Target) -> Option<OrderFit> {
        self.fits
            .iter()
            .find(|f| f.method.same_series(method) && f.target == target)
            .and_then(|f| f.fit)
    }

    pub fn series(&self, method: &Method, target: Target) -> Vec<&SweepRow> {
        self.rows
            .iter()
            .filter(|r| r.method.same_series(method) && r.target == target)
            .collect()
    }
}

/// Least-squares slope of `log(error)` against `log(dt)` and its `r^2`.
pub fn fit_order(rows: &[(f64, f64)]) -> Result<OrderFit> {
    let points: Vec<(f64, f64)> = rows
        .iter()
        .filter(|(dt, e)| *dt > 0.0 && *e > 0.0 && e.is_finite())
        .map(|(dt, e)| (dt.ln(), e.ln()))
        .collect();
    if points.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "order fit needs two positive errors, got {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("order fit needs two distinct timesteps".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let ss_tot: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(OrderFit { slope, r2 })
}

#[derive(Debug, Clone)]
struct ContinuumValues {
    lambda: f64,
    phi: f64,
}

fn continuum_values(spec: &ProblemSpec, reference: &ContinuumReference) -> Result<ContinuumValues> {
    let phi = spec.observable();
    Ok(ContinuumValues {
        lambda: reference.lambda,
        phi: observable_average(&reference.nu_w, |q| phi.eval(q))?,
    })
}

/// Galerkin values of each target for one scheme.
#[derive(Debug, Clone, Copy)]
struct SchemeValues {
    lambda: f64,
    phi: f64,
    w: f64,
}

impl SchemeValues {
    fn get(&self, target: Target) -> f64 {
        match target {
            Target::Eigenvalue => self.lambda,
            Target::ObservableAverage => self.phi,
            Target::AverageOfW => self.w,
        }
    }
}

fn scheme_values(spec: &ProblemSpec, half_width: usize, dt: f64, delta: f64) -> Result<SchemeValues> {
    let eig: SchemeEigen = scheme_eigen(spec, half_width, dt, delta)?;
    let phi = spec.observable();
    let w = spec.weight();
    Ok(SchemeValues {
        lambda: eig.lambda_dt,
        phi: observable_average(&eig.nu_w_dt, |q| phi.eval(q))?,
        w: observable_average(&eig.nu_w_dt, |q| w.eval(q))?,
    })
}

fn continuum_target(values: &ContinuumValues, target: Target) -> f64 {
    match target {
        Target::Eigenvalue => values.lambda,
        Target::ObservableAverage => values.phi,
        // int W dnu_W equals the principal eigenvalue
        Target::AverageOfW => values.lambda,
    }
}

struct CellValue {
    value: f64,
    stderr: Option<f64>,
}

fn smc_cell_config(template: &SmcConfig, method: &Method, dt: f64) -> Result<SmcConfig> {
    Ok(SmcConfig {
        dt,
        integrator: method.integrator,
        rule: QuadratureRule::new(method.delta)?,
        ..template.clone()
    })
}

fn mc_cell(
    spec: &ProblemSpec,
    template: &SmcConfig,
    method: &Method,
    dt: f64,
    targets: &[Target],
) -> Result<Vec<CellValue>> {
    let config = smc_cell_config(template, method, dt)?;
    let needs_phi = targets.iter().any(|t| *t != Target::AverageOfW);
    let main: Option<SmcEstimate> = if needs_phi { Some(smc_run(spec, &config)?) } else { None };
    let w_run = if targets.contains(&Target::AverageOfW) {
        let w = spec.weight().clone();
        let w_spec = spec.with_observable(Observable::from_trig("W", w));
        Some(smc_run(&w_spec, &config)?)
    } else {
        None
    };
    Ok(targets
        .iter()
        .map(|t| match t {
            Target::Eigenvalue => {
                let e = main.as_ref().expect("eigenvalue run present");
                CellValue {
                    value: e.lambda_hat,
                    stderr: e.stderr_lambda,
                }
            }
            Target::ObservableAverage => {
                let e = main.as_ref().expect("observable run present");
                CellValue {
                    value: e.phi_hat,
                    stderr: e.stderr_phi,
                }
            }
            Target::AverageOfW => {
                let e = w_run.as_ref().expect("weight run present");
                CellValue {
                    value: e.phi_hat,
                    stderr: e.stderr_phi,
                }
            }
        })
        .collect())
}

/// Runs every (method, dt) cell and fits an order per (method, target) series.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepResult> {
    config.validate()?;
    let spec = config.preset.spec();
    let n = config.half_width;
    let continuum = match config.reference {
        Reference::GalerkinDt0 => Some(continuum_values(&spec, &continuum_reference(&spec, n)?)?),
        Reference::GalerkinSameDt => None,
    };

    let cells: Vec<(Method, f64)> = config
        .methods
        .iter()
        .flat_map(|m| config.dt_grid.iter().map(move |&dt| (*m, dt)))
        .collect();

    let rows: Vec<Vec<SweepRow>> = cells
        .par_iter()
        .map(|&(method, dt)| {
            let outcome = (|| -> Result<Vec<(CellValue, f64)>> {
                let same_dt = match config.reference {
                    Reference::GalerkinSameDt => Some(scheme_values(&spec, n, dt, method.delta)?),
                    Reference::GalerkinDt0 => None,
                };
                let reference_of = |t: Target| match (&continuum, &same_dt) {
                    (Some(c), _) => continuum_target(c, t),
                    (None, Some(s)) => s.get(t),
                    (None, None) => unreachable!("one reference is always computed"),
                };
                let values = match method.source {
                    Source::Galerkin => {
                        let s = match same_dt {
                            Some(s) => s,
                            None => scheme_values(&spec, n, dt, method.delta)?,
                        };
                        config
                            .targets
                            .iter()
                            .map(|&t| CellValue {
                                value: s.get(t),
                                stderr: None,
                            })
                            .collect()
                    }
                    Source::Mc => mc_cell(&spec, &config.smc, &method, dt, &config.targets)?,
                };
                Ok(values
                    .into_iter()
                    .zip(&config.targets)
                    .map(|(v, &t)| (v, reference_of(t)))
                    .collect())
            })();
            match outcome {
                Ok(values) => values
                    .into_iter()
                    .zip(&config.targets)
                    .map(|((v, reference), &target)| SweepRow {
                        method,
                        dt,
                        target,
                        value: Some(v.value),
                        reference: Some(reference),
                        error: Some((v.value - reference).abs()),
                        stderr: v.stderr,
                        failure: None,
                    })
                    .collect(),
                Err(e) => config
                    .targets
                    .iter()
                    .map(|&target| SweepRow {
                        method,
                        dt,
                        target,
                        value: None,
                        reference: None,
                        error: None,
                        stderr: None,
                        failure: Some(e.to_string()),
                    })
                    .collect(),
            }
        })
        .collect();
    let rows: Vec<SweepRow> = rows.into_iter().flatten().collect();

    let mut fits = Vec::new();
    for method in &config.methods {
        for &target in &config.targets {
            let data: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.method.same_series(method) && r.target == target && r.fit_eligible())
                .map(|r| (r.dt, r.error.unwrap_or(0.0)))
                .collect();
            fits.push(SeriesFit {
                method: *method,
                target,
                fit: fit_order(&data).ok(),
            });
        }
    }
    Ok(SweepResult {
        preset: config.preset,
        rows,
        fits,
    })
}

/// Empirical against predicted leading coefficient of one quantity.
#[derive(Debug, Clone, Serialize)]
pub struct CoefficientCheck {
    pub theory: f64,
    /// `(value_dt - value_0) / dt^p` at `dt` and `dt / 2`.
    pub empirical: [f64; 2],
    /// `|empirical - theory|` at both timesteps.
    pub abs_deviation: [f64; 2],
}

impl CoefficientCheck {
    /// `|empirical - theory| / |theory|` at both timesteps.
    pub fn relative_deviation(&self) -> [f64; 2] {
        self.abs_deviation.map(|d| d / self.theory.abs())
    }

    /// Deviation at `dt` over deviation at `dt / 2`.
    pub fn halving_ratio(&self) -> f64 {
        self.abs_deviation[0] / self.abs_deviation[1]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RichardsonReport {
    pub order: usize,
    pub delta: f64,
    pub dt_pair: [f64; 2],
    pub observable: CoefficientCheck,
    pub eigenvalue: CoefficientCheck,
}

/// Compares the empirical leading timestep coefficients of the Galerkin scheme
/// with the predicted ones, at `dt` and `dt / 2`.
pub fn richardson_check(
    spec: &ProblemSpec,
    half_width: usize,
    order: usize,
    delta: f64,
    dt: f64,
) -> Result<RichardsonReport> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::config("dt", format!("timestep must be positive, got {dt}")));
    }
    let lc = leading_correction(spec, half_width, order, delta)?;
    let phi = spec.observable();
    let avg0 = observable_average(&lc.reference.nu_w, |q| phi.eval(q))?;
    let lambda0 = lc.reference.lambda;
    let dts = [dt, dt / 2.0];
    let mut obs = [0.0; 2];
    let mut eig = [0.0; 2];
    for (i, &h) in dts.iter().enumerate() {
        let s = scheme_eigen(spec, half_width, h, delta)?;
        let scale = h.powi(order as i32);
        obs[i] = (observable_average(&s.nu_w_dt, |q| phi.eval(q))? - avg0) / scale;
        eig[i] = (s.lambda_dt - lambda0) / scale;
    }
    let check = |theory: f64, empirical: [f64; 2]| CoefficientCheck {
        theory,
        empirical,
        abs_deviation: empirical.map(|e| (e - theory).abs()),
    };
    Ok(RichardsonReport {
        order,
        delta,
        dt_pair: dts,
        observable: check(lc.correction(|q| phi.eval(q)), obs),
        eigenvalue: check(lc.eigenvalue_coefficient(), eig),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareRow {
    pub dt: f64,
    pub delta: f64,
    pub lambda_mc: f64,
    pub stderr_lambda: Option<f64>,
    pub lambda_galerkin: f64,
    pub z_lambda: f64,
    pub phi_mc: f64,
    pub stderr_phi: Option<f64>,
    pub phi_galerkin: f64,
    pub z_phi: f64,
}

impl CompareRow {
    pub fn flagged(&self) -> bool {
        !(self.z_lambda.abs() <= Z_THRESHOLD && self.z_phi.abs() <= Z_THRESHOLD)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareReport {
    pub rows: Vec<CompareRow>,
}

impl CompareReport {
    pub fn any_flagged(&self) -> bool {
        self.rows.iter().any(CompareRow::flagged)
    }

    pub fn max_abs_z(&self) -> f64 {
        self.rows
            .iter()
            .flat_map(|r| [r.z_lambda.abs(), r.z_phi.abs()])
            .fold(0.0, f64::max)
    }
}

/// Differences this small are exact agreement (constant weights), whatever the stderr.
const AGREEMENT_FLOOR: f64 = 1e-12;

fn z_score(mc: f64, reference: f64, stderr: Option<f64>) -> f64 {
    let diff = mc - reference;
    if diff.abs() <= AGREEMENT_FLOOR {
        return 0.0;
    }
    match stderr {
        Some(s) if s > 0.0 => diff / s,
        _ => f64::INFINITY.copysign(diff),
    }
}

/// z-scores of Monte Carlo estimates against same-scheme Galerkin values, for
/// every `dt` and `delta`.
pub fn compare_mc_galerkin(
    spec: &ProblemSpec,
    half_width: usize,
    dt_grid: &[f64],
    deltas: &[f64],
    template: &SmcConfig,
) -> Result<CompareReport> {
    validate_dt_grid(dt_grid)?;
    let cells: Vec<(f64, f64)> = dt_grid
        .iter()
        .flat_map(|&dt| deltas.iter().map(move |&d| (dt, d)))
        .collect();
    let rows = cells
        .par_iter()
        .map(|&(dt, delta)| {
            let method = Method::mc(template.integrator, delta);
            let est = smc_run(spec, &smc_cell_config(template, &method, dt)?)?;
            let g = scheme_values(spec, half_width, dt, delta)?;
            Ok(CompareRow {
                dt,
                delta,
                lambda_mc: est.lambda_hat,
                stderr_lambda: est.stderr_lambda,
                lambda_galerkin: g.lambda,
                z_lambda: z_score(est.lambda_hat, g.lambda, est.stderr_lambda),
                phi_mc: est.phi_hat,
                stderr_phi: est.stderr_phi,
                phi_galerkin: g.phi,
                z_phi: z_score(est.phi_hat, g.phi, est.stderr_phi),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CompareReport { rows })
}

/// Largest minus smallest scheme eigenvalue over the given weight splittings.
pub fn delta_spread(spec: &ProblemSpec, half_width: usize, dt: f64, deltas: &[f64]) -> Result<f64> {
    let values = deltas
        .iter()
        .map(|&d| Ok(scheme_eigen(spec, half_width, dt, d)?.lambda_dt))
        .collect::<Result<Vec<f64>>>()?;
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(max - min)
}

#[derive(Debug, Clone, Serialize)]
pub struct TuComparison {
    pub dt: f64,
    /// Reweighted average from the left-point density.
    pub corrected: f64,
    /// Plain average from the trapezoid density.
    pub trapezoid: f64,
}

impl TuComparison {
    pub fn difference(&self) -> f64 {
        (self.corrected - self.trapezoid).abs()
    }
}

pub fn tu_comparison(spec: &ProblemSpec, half_width: usize, dt: f64) -> Result<TuComparison> {
    let phi = spec.observable();
    let left = scheme_eigen(spec, half_width, dt, 0.0)?;
    let trap = scheme_eigen(spec, half_width, dt, 0.5)?;
    Ok(TuComparison {
        dt,
        corrected: tu_corrected_average(&left.nu_w_dt, |q| phi.eval(q), spec.weight(), dt)?,
        trapezoid: observable_average(&trap.nu_w_dt, |q| phi.eval(q))?,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ContractionReport {
    /// Grid total variation between the n-th iterate and the fixed point, `n = 0..=steps`.
    pub distances: Vec<f64>,
    /// Geometric decay rate fitted on the distances above roundoff.
    pub fitted_ratio: f64,
    /// Largest coefficient difference between the final iterate and the scheme eigenvector.
    pub final_coeff_distance: f64,
    pub final_tv_distance: f64,
}

/// Iterates the normalized measure map from the uniform density.
pub fn measure_map_contraction(
    spec: &ProblemSpec,
    half_width: usize,
    dt: f64,
    delta: f64,
    steps: usize,
) -> Result<ContractionReport> {
    let q = scheme_matrix(spec, half_width, dt, delta)?;
    let fixed = scheme_eigen(spec, half_width, dt, delta)?.nu_w_dt;
    let mut mu = CoeffVector::unit(half_width, Space::Density);
    let mut distances = vec![grid_total_variation(&mu, &fixed)];
    for _ in 0..steps {
        mu = measure_map_apply(&q, &mu)?;
        distances.push(grid_total_variation(&mu, &fixed));
    }
    let fit_rows: Vec<(f64, f64)> = distances
        .iter()
        .enumerate()
        .filter(|(_, d)| **d > 1e-13)
        .map(|(n, d)| (n as f64, d.ln()))
        .collect();
    let fitted_ratio = if fit_rows.len() >= 2 {
        let n = fit_rows.len() as f64;
        let mx = fit_rows.iter().map(|p| p.0).sum::<f64>() / n;
        let my = fit_rows.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = fit_rows.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = fit_rows.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        (sxy / sxx).exp()
    } else {
        0.0
    };
    let final_coeff_distance = mu
        .entries()
        .iter()
        .zip(fixed.entries())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    Ok(ContractionReport {
        final_tv_distance: *distances.last().expect("at least the initial distance"),
        distances,
        fitted_ratio,
        final_coeff_distance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TrigPolynomial;

    #[test]
    fn fit_order_exact_power_laws() {
        for p in [1.0, 2.0] {
            let rows: Vec<_> = DEFAULT_DT_GRID.iter().map(|&h| (h, 3.0 * h.powf(p))).collect();
            let fit = fit_order(&rows).unwrap();
            assert!((fit.slope - p).abs() < 1e-12);
            assert!((fit.r2 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fit_order_with_small_quadratic_term() {
        let rows: Vec<_> = DEFAULT_DT_GRID.iter().map(|&h| (h, h + 0.1 * h * h)).collect();
        let fit = fit_order(&rows).unwrap();
        assert!(fit.slope > 0.9 && fit.slope < 1.1);
    }

    #[test]
    fn fit_order_needs_two_points() {
        assert!(matches!(fit_order(&[(0.1, 0.01)]), Err(Error::InsufficientData(_))));
        assert!(fit_order(&[(0.1, 0.01), (0.05, 0.0)]).is_err());
    }

    #[test]
    fn dropping_largest_dt_barely_moves_clean_fit() {
        let rows: Vec<_> = DEFAULT_DT_GRID.iter().map(|&h| (h, 0.7 * h * h)).collect();
        let all = fit_order(&rows).unwrap().slope;
        let trimmed = fit_order(&rows[1..]).unwrap().slope;
        assert!((all - trimmed).abs() < 0.05);
    }

    #[test]
    fn galerkin_sweep_orders() {
        let config = SweepConfig {
            dt_grid: vec![0.02, 0.01, 0.005],
            half_width: 20,
            ..SweepConfig::default()
        };
        let result = run_sweep(&config).unwrap();
        assert_eq!(result.rows.len(), 2 * 3 * 2);
        assert!(result.rows.iter().all(|r| r.failure.is_none() && r.stderr.is_none()));
        // method, then dt descending
        assert_eq!(result.rows[0].dt, 0.02);
        assert_eq!(result.rows[2].dt, 0.01);
        assert_eq!(result.rows[6].method.delta, 0.5);
        let eig = result.fit_for(&Method::galerkin(0.0), Target::Eigenvalue).unwrap();
        assert!((eig.slope - 2.0).abs() < 0.2, "{eig:?}");
        // the left-point average carries a large O(dt^2) term, so its slope
        // only settles near 1 below these timesteps
        let left = result.fit_for(&Method::galerkin(0.0), Target::ObservableAverage).unwrap();
        assert!(left.slope > 0.5 && left.slope < 1.2, "{left:?}");
        let trap = result.fit_for(&Method::galerkin(0.5), Target::ObservableAverage).unwrap();
        assert!((trap.slope - 2.0).abs() < 0.2, "{trap:?}");
    }

    #[test]
    fn sweep_records_failures() {
        let config = SweepConfig {
            dt_grid: vec![0.1],
            methods: vec![Method::mc(IntegratorKind::Euler, 0.0)],
            smc: SmcConfig {
                total_time: 0.01,
                ..SmcConfig::default()
            },
            half_width: 8,
            ..SweepConfig::default()
        };
        let result = run_sweep(&config).unwrap();
        assert_eq!(result.rows.len(), 2);
        assert!(result.rows.iter().all(|r| r.failure.is_some() && r.value.is_none()));
    }

    #[test]
    fn sweep_rejects_bad_grid() {
        let config = SweepConfig {
            dt_grid: vec![0.05, 0.1],
            ..SweepConfig::default()
        };
        assert!(matches!(run_sweep(&config), Err(Error::Config { .. })));
    }

    #[test]
    fn mc_constant_weight_rows_are_exact() {
        let config = SweepConfig {
            preset: Preset::StrongPotential,
            dt_grid: vec![0.2, 0.1],
            methods: vec![Method::mc(IntegratorKind::Weak2, 0.5)],
            targets: vec![Target::Eigenvalue],
            smc: SmcConfig {
                replicas: 50,
                total_time: 2.0,
                realizations: 2,
                ..SmcConfig::default()
            },
            half_width: 8,
            ..SweepConfig::default()
        };
        let spec = config.preset.spec().with_weight(TrigPolynomial::constant(0.7));
        for &dt in &config.dt_grid {
            let cell = mc_cell(&spec, &config.smc, &config.methods[0], dt, &config.targets).unwrap();
            assert!((cell[0].value - 0.7).abs() < 1e-12);
        }
        let report = compare_mc_galerkin(&spec, 8, &[0.2], &[0.0], &config.smc).unwrap();
        assert_eq!(report.rows[0].z_lambda, 0.0);
    }

    #[test]
    fn richardson_constant_weight_is_zero() {
        let spec = Preset::WeakPotential.spec().with_weight(TrigPolynomial::constant(0.7));
        let r = richardson_check(&spec, 12, 1, 0.0, 0.05).unwrap();
        assert!(r.observable.theory.abs() < 1e-10);
        assert!(r.eigenvalue.theory.abs() < 1e-10);
        assert!(r.observable.empirical.iter().all(|e| e.abs() < 1e-9));
        assert!(r.eigenvalue.empirical.iter().all(|e| e.abs() < 1e-9));
    }

    #[test]
    fn richardson_second_order() {
        let spec = Preset::ZeroPotential.spec();
        let r = richardson_check(&spec, 30, 2, 0.5, 0.02).unwrap();
        for c in [&r.observable, &r.eigenvalue] {
            assert!(c.relative_deviation()[1] <= 0.05, "{r:?}");
            assert!(c.halving_ratio() >= 1.7, "{r:?}");
        }
    }

    #[test]
    fn tu_and_delta_invariance() {
        let spec = Preset::StrongPotential.spec();
        assert!(delta_spread(&spec, 20, 0.1, &[0.0, 0.5, 1.0]).unwrap() < 1e-10);
        let tu = tu_comparison(&spec, 20, 0.1).unwrap();
        assert!(tu.difference() < 1e-10, "{tu:?}");
    }

    #[test]
    fn contraction_from_uniform() {
        let spec = Preset::StrongPotential.spec();
        let r = measure_map_contraction(&spec, 20, 0.1, 0.5, 200).unwrap();
        assert!(r.fitted_ratio < 1.0 && r.fitted_ratio > 0.0);
        assert!(r.final_coeff_distance < 1e-8);
    }
}
