//! Population Monte Carlo for the weighted dynamics, with multinomial
//! resampling at every step.
//!
//! Each step moves every replica with the chosen integrator, weighs it by
//! `exp(chi)`, records the mean weight `P^n`, and resamples. The principal
//! eigenvalue is estimated by `(1/dt) log(mean_n P^n)` over the kept steps and
//! observable averages by the mean of `phi` over the resampled populations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrators::{step, IntegratorKind};
use crate::model::{ProblemSpec, TorusPoint};

/// Placement of the weight inside the step: `chi = dt [(1 - delta) W(q) + delta W(q')]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureRule {
    delta: f64,
}

impl QuadratureRule {
    pub const LEFT_POINT: QuadratureRule = QuadratureRule { delta: 0.0 };
    pub const TRAPEZOID: QuadratureRule = QuadratureRule { delta: 0.5 };

    pub fn new(delta: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&delta) {
            Ok(Self { delta })
        } else {
            Err(Error::config("delta", format!("must lie in [0, 1], got {delta}")))
        }
    }

    pub fn delta(self) -> f64 {
        self.delta
    }
}

/// Integrated weight over one step from `q` to `q_next`.
#[inline]
pub fn chi(rule: QuadratureRule, spec: &ProblemSpec, q: TorusPoint, q_next: TorusPoint, dt: f64) -> f64 {
    let w = spec.weight();
    let d = rule.delta;
    let left = if d < 1.0 { (1.0 - d) * w.eval(q.get()) } else { 0.0 };
    let right = if d > 0.0 { d * w.eval(q_next.get()) } else { 0.0 };
    dt * (left + right)
}

#[derive(Debug, Clone, Serialize)]
pub struct SmcConfig {
    /// Number of replicas `M`.
    pub replicas: usize,
    pub dt: f64,
    /// Total simulated time `T`.
    pub total_time: f64,
    pub burn_in_fraction: f64,
    pub seed: u64,
    pub integrator: IntegratorKind,
    pub rule: QuadratureRule,
    pub realizations: usize,
    /// Keep per-step mass and observable records in the estimate.
    pub record_traces: bool,
}

pub const DEFAULT_SEED: u64 = 20_160_915;

impl Default for SmcConfig {
    fn default() -> Self {
        Self {
            replicas: 5000,
            dt: 0.1,
            total_time: 200.0,
            burn_in_fraction: 0.5,
            seed: DEFAULT_SEED,
            integrator: IntegratorKind::Euler,
            rule: QuadratureRule::LEFT_POINT,
            realizations: 8,
            record_traces: false,
        }
    }
}

impl SmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicas == 0 {
            return Err(Error::config("M", "need at least one replica"));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::config("dt", format!("timestep must be positive, got {}", self.dt)));
        }
        if !(self.total_time.is_finite() && self.total_time >= self.dt) {
            return Err(Error::config(
                "T",
                format!("total time {} is shorter than one step {}", self.total_time, self.dt),
            ));
        }
        if !(0.0..1.0).contains(&self.burn_in_fraction) {
            return Err(Error::config(
                "burn_in",
                format!("must lie in [0, 1), got {}", self.burn_in_fraction),
            ));
        }
        if self.realizations == 0 {
            return Err(Error::config("realizations", "need at least one realization"));
        }
        QuadratureRule::new(self.rule.delta)?;
        Ok(())
    }

    /// `N_iter = floor(T / dt)`, guarding against `T / dt` landing just below an integer.
    pub fn n_iter(&self) -> usize {
        let ratio = self.total_time / self.dt;
        let rounded = ratio.round();
        let n = if (ratio - rounded).abs() <= 1e-9 * ratio { rounded } else { ratio.floor() };
        n as usize
    }

    /// Index of the first kept step.
    pub fn burn_in_steps(&self) -> usize {
        (self.burn_in_fraction * self.n_iter() as f64).floor() as usize
    }
}

/// Replica positions together with the mass created by the last step.
#[derive(Debug, Clone)]
pub struct Population {
    pub positions: Vec<TorusPoint>,
    pub step_mass: f64,
}

/// Output of the move-and-weigh stage, before resampling.
#[derive(Debug, Clone)]
pub struct Proposal {
    pub positions: Vec<TorusPoint>,
    pub weights: Vec<f64>,
    /// Mean weight `P^n`.
    pub mass: f64,
}

/// Moves replica `m` with a normal draw from `streams[m]` and weighs it.
pub fn propagate_and_weigh(
    spec: &ProblemSpec,
    config: &SmcConfig,
    population: &Population,
    streams: &mut [ChaCha8Rng],
) -> Result<Proposal> {
    if streams.len() != population.positions.len() {
        return Err(Error::InvalidInput(format!(
            "{} random streams for {} replicas",
            streams.len(),
            population.positions.len()
        )));
    }
    let moved: Vec<(TorusPoint, f64)> = population
        .positions
        .par_iter()
        .zip(streams.par_iter_mut())
        .map(|(&q, rng)| {
            let g: f64 = rng.sample(StandardNormal);
            let q_next = step(config.integrator, spec, q, config.dt, g)?;
            Ok((q_next, chi(config.rule, spec, q, q_next, config.dt).exp()))
        })
        .collect::<Result<_>>()?;
    let (positions, weights): (Vec<_>, Vec<_>) = moved.into_iter().unzip();
    let mass = neumaier_sum(weights.iter().copied()) / weights.len() as f64;
    Ok(Proposal {
        positions,
        weights,
        mass,
    })
}

/// Draws `positions.len()` indices from the categorical law `w / sum(w)`.
/// `step` only labels errors.
pub fn resample_multinomial(
    weights: &[f64],
    positions: &[TorusPoint],
    rng: &mut impl Rng,
    step: usize,
) -> Result<Vec<TorusPoint>> {
    let idx = resample_indices(weights, positions.len(), rng, step)?;
    Ok(idx.into_iter().map(|i| positions[i]).collect())
}

/// Index draws behind [`resample_multinomial`].
pub fn resample_indices(
    weights: &[f64],
    draws: usize,
    rng: &mut impl Rng,
    step: usize,
) -> Result<Vec<usize>> {
    if weights.is_empty() {
        return Err(Error::InvalidInput("cannot resample an empty population".into()));
    }
    let mut cumulative = Vec::with_capacity(weights.len());
    let mut total = 0.0;
    for (m, &w) in weights.iter().enumerate() {
        if !(w.is_finite() && w > 0.0) {
            return Err(Error::Numerical(format!(
                "weight {w} of replica {m} at step {step} is not positive and finite"
            )));
        }
        total += w;
        cumulative.push(total);
    }
    let last = weights.len() - 1;
    Ok((0..draws)
        .map(|_| {
            let target = rng.gen::<f64>() * total;
            cumulative.partition_point(|&c| c <= target).min(last)
        })
        .collect())
}

/// `(1/dt) log(mean P^n)`.
pub fn estimate_lambda(kept_masses: &[f64], dt: f64) -> Result<f64> {
    if kept_masses.is_empty() {
        return Err(Error::InsufficientData("no mass records after burn-in".into()));
    }
    if let Some(p) = kept_masses.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
        return Err(Error::Numerical(format!("non-positive mass record {p}")));
    }
    let mean = neumaier_sum(kept_masses.iter().copied()) / kept_masses.len() as f64;
    Ok(mean.ln() / dt)
}

/// Compensated summation; keeps `M` identical weights summing to `M w` exactly
/// often enough that constant weights give `lambda_hat = c` to roundoff.
pub(crate) fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[derive(Debug, Clone, Serialize)]
pub struct RealizationEstimate {
    pub lambda_hat: f64,
    pub phi_hat: f64,
    /// `P^n` for every step, when traces are requested.
    pub mass_trace: Option<Vec<f64>>,
    /// `(1/M) sum phi(q^{n+1})` for every step, when traces are requested.
    pub phi_trace: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SmcEstimate {
    /// Mean over realizations.
    pub lambda_hat: f64,
    pub phi_hat: f64,
    pub per_realization: Vec<RealizationEstimate>,
    /// Sample standard deviation over realizations divided by `sqrt(R)`; absent for `R = 1`.
    pub stderr_lambda: Option<f64>,
    pub stderr_phi: Option<f64>,
}

const STREAM_TAG_MOVE: u64 = 0x6d6f_7665;
const STREAM_TAG_RESAMPLE: u64 = 0x7265_7361;

fn mix(seed: u64, tag: u64, realization: u64) -> u64 {
    // splitmix64 finalizer over the combined words
    let mut z = seed
        .wrapping_add(tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(realization.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One independent stream per replica for the given realization.
pub fn replica_streams(seed: u64, realization: usize, replicas: usize) -> Vec<ChaCha8Rng> {
    let key = mix(seed, STREAM_TAG_MOVE, realization as u64);
    (0..replicas)
        .map(|m| {
            let mut rng = ChaCha8Rng::seed_from_u64(key);
            rng.set_stream(m as u64);
            rng
        })
        .collect()
}

/// Dedicated resampling stream for step `n` of the given realization.
pub fn resampling_stream(seed: u64, realization: usize, n: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, STREAM_TAG_RESAMPLE, realization as u64));
    rng.set_stream(n as u64);
    rng
}

/// A single realization of the algorithm.
pub fn run_realization(
    spec: &ProblemSpec,
    config: &SmcConfig,
    realization: usize,
) -> Result<RealizationEstimate> {
    config.validate()?;
    let n_iter = config.n_iter();
    let burn = config.burn_in_steps();
    let mut streams = replica_streams(config.seed, realization, config.replicas);
    let positions = streams
        .iter_mut()
        .map(|rng| TorusPoint::wrap(rng.gen::<f64>()))
        .collect::<Result<Vec<_>>>()?;
    let mut population = Population {
        positions,
        step_mass: 1.0,
    };
    let phi = spec.observable();

    let mut masses = Vec::with_capacity(n_iter);
    let mut phis = Vec::with_capacity(n_iter);
    for n in 0..n_iter {
        let proposal = propagate_and_weigh(spec, config, &population, &mut streams)?;
        let mut rng = resampling_stream(config.seed, realization, n);
        let positions = resample_multinomial(&proposal.weights, &proposal.positions, &mut rng, n)?;
        let phi_mean = neumaier_sum(positions.iter().map(|q| phi.eval(q.get()))) / positions.len() as f64;
        masses.push(proposal.mass);
        phis.push(phi_mean);
        population = Population {
            positions,
            step_mass: proposal.mass,
        };
    }

    let lambda_hat = estimate_lambda(&masses[burn..], config.dt)?;
    let kept_phi = &phis[burn..];
    let phi_hat = neumaier_sum(kept_phi.iter().copied()) / kept_phi.len() as f64;
    let (mass_trace, phi_trace) = if config.record_traces {
        (Some(masses), Some(phis))
    } else {
        (None, None)
    };
    Ok(RealizationEstimate {
        lambda_hat,
        phi_hat,
        mass_trace,
        phi_trace,
    })
}

fn mean_and_stderr(values: &[f64]) -> (f64, Option<f64>) {
    let r = values.len() as f64;
    let mean = neumaier_sum(values.iter().copied()) / r;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0);
    (mean, Some((var / r).sqrt()))
}

/// Runs `config.realizations` independent realizations and aggregates them.
pub fn smc_run(spec: &ProblemSpec, config: &SmcConfig) -> Result<SmcEstimate> {
    config.validate()?;
    let per_realization = (0..config.realizations)
        .into_par_iter()
        .map(|r| run_realization(spec, config, r))
        .collect::<Result<Vec<_>>>()?;
    let lambdas: Vec<f64> = per_realization.iter().map(|e| e.lambda_hat).collect();
    let phis: Vec<f64> = per_realization.iter().map(|e| e.phi_hat).collect();
    let (lambda_hat, stderr_lambda) = mean_and_stderr(&lambdas);
    let (phi_hat, stderr_phi) = mean_and_stderr(&phis);
    Ok(SmcEstimate {
        lambda_hat,
        phi_hat,
        per_realization,
        stderr_lambda,
        stderr_phi,
    })
}
