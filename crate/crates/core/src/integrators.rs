//! One-step Markov kernels for `dq = (-V'(q) + gamma) dt + sigma dB` on the torus.
//!
//! Gaussian increments are passed in, so every kernel here is a pure function.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{drift, ProblemSpec, TorusPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntegratorKind {
    /// Euler-Maruyama, weak order one.
    Euler,
    /// Midpoint-corrected scheme of weak order two.
    Weak2,
}

impl IntegratorKind {
    pub fn name(self) -> &'static str {
        match self {
            IntegratorKind::Euler => "euler",
            IntegratorKind::Weak2 => "weak2",
        }
    }
}

impl FromStr for IntegratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(IntegratorKind::Euler),
            "weak2" => Ok(IntegratorKind::Weak2),
            other => Err(Error::config("integrator", format!("unknown integrator `{other}`"))),
        }
    }
}

impl fmt::Display for IntegratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if dt.is_finite() && dt > 0.0 {
        Ok(())
    } else {
        Err(Error::config("dt", format!("timestep must be positive, got {dt}")))
    }
}

/// `q + b(q) dt + sigma sqrt(dt) g`, wrapped.
pub fn euler_step(spec: &ProblemSpec, q: TorusPoint, dt: f64, g: f64) -> Result<TorusPoint> {
    check_dt(dt)?;
    let next = q.get() + drift(spec, q) * dt + spec.sigma() * dt.sqrt() * g;
    TorusPoint::wrap(next)
}

/// Second-order scheme
///
/// ```text
/// q' = q - V'(q + b(q) dt/2 + sigma sqrt(dt) g/2) dt + gamma dt
///        - (sigma^2/8) V'''(q) dt^2 + sigma sqrt(dt) g
/// ```
///
/// with the same draw `g` in the predictor and in the noise term. The
/// predictor point is not wrapped; `V'` is periodic.
pub fn weak2_step(spec: &ProblemSpec, q: TorusPoint, dt: f64, g: f64) -> Result<TorusPoint> {
    check_dt(dt)?;
    let x = q.get();
    let noise = spec.sigma() * dt.sqrt() * g;
    let predictor = x + drift(spec, q) * dt / 2.0 + noise / 2.0;
    let sigma2 = spec.sigma() * spec.sigma();
    let next = x - spec.potential_grad(predictor) * dt + spec.gamma() * dt
        - sigma2 / 8.0 * spec.potential_third(x) * dt * dt
        + noise;
    TorusPoint::wrap(next)
}

pub fn step(
    kind: IntegratorKind,
    spec: &ProblemSpec,
    q: TorusPoint,
    dt: f64,
    g: f64,
) -> Result<TorusPoint> {
    match kind {
        IntegratorKind::Euler => euler_step(spec, q, dt, g),
        IntegratorKind::Weak2 => weak2_step(spec, q, dt, g),
    }
}
