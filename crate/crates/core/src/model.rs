//! Torus geometry, periodic scalar fields and the experiment presets.

use std::f64::consts::{SQRT_2, TAU};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::galerkin::{CoeffVector, Space};

/// A position on the unit torus `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct TorusPoint(f64);

impl TorusPoint {
    /// Periodizes a finite real into `[0, 1)`.
    pub fn wrap(x: f64) -> Result<Self> {
        if !x.is_finite() {
            return Err(Error::InvalidInput(format!("cannot wrap non-finite value {x}")));
        }
        Ok(Self::wrap_finite(x))
    }

    /// Same as [`TorusPoint::wrap`] for values already known to be finite.
    #[inline]
    pub(crate) fn wrap_finite(x: f64) -> Self {
        let r = x - x.floor();
        // x slightly below an integer can round up to exactly 1.0
        if r >= 1.0 {
            TorusPoint(0.0)
        } else {
            TorusPoint(r)
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl From<TorusPoint> for f64 {
    fn from(p: TorusPoint) -> f64 {
        p.0
    }
}

/// Periodizes `x` into `[0, 1)`.
pub fn wrap(x: f64) -> Result<TorusPoint> {
    TorusPoint::wrap(x)
}

/// A real trigonometric polynomial `sum_k c_k exp(2 i pi k q)`, `|k| <= K`.
///
/// Coefficients are stored from degree `-K` to `K` and are kept conjugate
/// symmetric so that evaluations are real.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigPolynomial {
    coeffs: Vec<Complex64>,
}

impl TrigPolynomial {
    const SYMMETRY_TOL: f64 = 1e-12;

    /// Builds a polynomial from `2K + 1` coefficients ordered from degree `-K` to `K`.
    pub fn new(coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() % 2 == 0 {
            return Err(Error::InvalidInput(format!(
                "trigonometric polynomial needs an odd number of coefficients, got {}",
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::InvalidInput("non-finite Fourier coefficient".into()));
        }
        let k_max = coeffs.len() / 2;
        let scale = coeffs.iter().map(|c| c.norm()).fold(1.0, f64::max);
        for k in 0..=k_max {
            let plus = coeffs[k_max + k];
            let minus = coeffs[k_max - k];
            if (plus - minus.conj()).norm() > Self::SYMMETRY_TOL * scale {
                return Err(Error::InvalidInput(format!(
                    "coefficients of degree {k} and -{k} are not conjugate: field is not real"
                )));
            }
        }
        let mut poly = Self { coeffs };
        poly.symmetrize();
        Ok(poly)
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn constant(c: f64) -> Self {
        Self {
            coeffs: vec![Complex64::new(c, 0.0)],
        }
    }

    /// `amplitude * cos(2 pi freq q)`.
    pub fn cosine(amplitude: f64, freq: usize) -> Self {
        let mut coeffs = vec![Complex64::new(0.0, 0.0); 2 * freq + 1];
        if freq == 0 {
            coeffs[0] = Complex64::new(amplitude, 0.0);
        } else {
            coeffs[0] = Complex64::new(amplitude / 2.0, 0.0);
            coeffs[2 * freq] = Complex64::new(amplitude / 2.0, 0.0);
        }
        Self { coeffs }
    }

    /// `amplitude * sin(2 pi freq q)`.
    pub fn sine(amplitude: f64, freq: usize) -> Self {
        let mut coeffs = vec![Complex64::new(0.0, 0.0); 2 * freq + 1];
        if freq > 0 {
            coeffs[0] = Complex64::new(0.0, amplitude / 2.0);
            coeffs[2 * freq] = Complex64::new(0.0, -amplitude / 2.0);
        }
        Self { coeffs }
    }

    /// Maximal degree `K` of the stored coefficient range.
    pub fn degree(&self) -> usize {
        self.coeffs.len() / 2
    }

    /// Coefficient of degree `k`, zero outside the stored range.
    pub fn coeff(&self, k: i64) -> Complex64 {
        let kmax = self.degree() as i64;
        if k.abs() > kmax {
            Complex64::new(0.0, 0.0)
        } else {
            self.coeffs[(k + kmax) as usize]
        }
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn is_constant(&self) -> bool {
        let k = self.degree();
        (1..=k).all(|j| self.coeffs[k + j] == Complex64::new(0.0, 0.0))
    }

    /// Evaluates the polynomial at `q`.
    #[inline]
    pub fn eval(&self, q: f64) -> f64 {
        let kmax = self.degree();
        let mut value = self.coeffs[kmax].re;
        if kmax == 0 {
            return value;
        }
        let base = Complex64::from_polar(1.0, TAU * q);
        let mut phase = base;
        for k in 1..=kmax {
            value += 2.0 * (self.coeffs[kmax + k] * phase).re;
            phase *= base;
        }
        value
    }

    /// Derivative of order `n`: `c_k -> (2 i pi k)^n c_k`.
    pub fn derivative(&self, n: u32) -> Self {
        let kmax = self.degree() as i64;
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let k = i as i64 - kmax;
                Complex64::new(0.0, TAU * k as f64).powu(n) * c
            })
            .collect();
        let mut poly = Self { coeffs };
        poly.symmetrize();
        poly
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    pub fn add_constant(&self, c: f64) -> Self {
        let mut out = self.clone();
        let k = out.degree();
        out.coeffs[k] += c;
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        let kmax = self.degree().max(other.degree()) as i64;
        let coeffs = (-kmax..=kmax)
            .map(|k| self.coeff(k) + other.coeff(k))
            .collect();
        Self { coeffs }
    }

    /// Pointwise product (discrete convolution of coefficients).
    pub fn mul(&self, other: &Self) -> Self {
        let a = self.degree() as i64;
        let b = other.degree() as i64;
        let kmax = a + b;
        let mut coeffs = vec![Complex64::new(0.0, 0.0); (2 * kmax + 1) as usize];
        for j in -a..=a {
            for k in -b..=b {
                coeffs[(j + k + kmax) as usize] += self.coeff(j) * other.coeff(k);
            }
        }
        let mut poly = Self { coeffs };
        poly.symmetrize();
        poly
    }

    /// Maximum of `|f|` bounded by the sum of coefficient moduli.
    pub fn sup_bound(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).sum()
    }

    fn symmetrize(&mut self) {
        let kmax = self.degree();
        self.coeffs[kmax].im = 0.0;
        for k in 1..=kmax {
            let avg = 0.5 * (self.coeffs[kmax + k] + self.coeffs[kmax - k].conj());
            self.coeffs[kmax + k] = avg;
            self.coeffs[kmax - k] = avg.conj();
        }
    }
}

/// A periodic observable evaluated pointwise (never expanded in Fourier series).
#[derive(Clone)]
pub struct Observable {
    name: String,
    func: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl Observable {
    pub fn new(name: impl Into<String>, func: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            func: Arc::new(func),
        }
    }

    pub fn from_trig(name: impl Into<String>, poly: TrigPolynomial) -> Self {
        Self::new(name, move |q| poly.eval(q))
    }

    /// `exp(cos(2 pi q))`.
    pub fn exp_cos() -> Self {
        Self::new("exp_cos", |q: f64| (TAU * q).cos().exp())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn eval(&self, q: f64) -> f64 {
        (self.func)(q)
    }
}

impl fmt::Debug for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Observable").field("name", &self.name).finish()
    }
}

/// Overdamped dynamics `dq = (-V'(q) + gamma) dt + sigma dB` on the torus,
/// weighted by `W`, together with the observable of interest.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    potential: TrigPolynomial,
    gamma: f64,
    sigma: f64,
    weight: TrigPolynomial,
    observable: Observable,
    potential_d1: TrigPolynomial,
    potential_d3: TrigPolynomial,
    drift: TrigPolynomial,
}

impl ProblemSpec {
    pub fn new(
        potential: TrigPolynomial,
        gamma: f64,
        sigma: f64,
        weight: TrigPolynomial,
        observable: Observable,
    ) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::config("sigma", format!("must be positive and finite, got {sigma}")));
        }
        if !gamma.is_finite() {
            return Err(Error::config("gamma", "must be finite"));
        }
        let potential_d1 = potential.derivative(1);
        let potential_d3 = potential.derivative(3);
        let drift = potential_d1.scale(-1.0).add_constant(gamma);
        Ok(Self {
            potential,
            gamma,
            sigma,
            weight,
            observable,
            potential_d1,
            potential_d3,
            drift,
        })
    }

    pub fn potential(&self) -> &TrigPolynomial {
        &self.potential
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn weight(&self) -> &TrigPolynomial {
        &self.weight
    }

    pub fn observable(&self) -> &Observable {
        &self.observable
    }

    /// Drift `b = -V' + gamma` as a trigonometric polynomial.
    pub fn drift_field(&self) -> &TrigPolynomial {
        &self.drift
    }

    #[inline]
    pub fn potential_grad(&self, q: f64) -> f64 {
        self.potential_d1.eval(q)
    }

    #[inline]
    pub fn potential_third(&self, q: f64) -> f64 {
        self.potential_d3.eval(q)
    }

    /// True when `V` is identically zero.
    pub fn is_potential_free(&self) -> bool {
        self.potential.coefficients().iter().all(|c| c.norm() == 0.0)
    }

    pub fn with_weight(&self, weight: TrigPolynomial) -> Self {
        Self {
            weight,
            ..self.clone()
        }
    }

    pub fn with_observable(&self, observable: Observable) -> Self {
        Self {
            observable,
            ..self.clone()
        }
    }
}

/// `-V'(q) + gamma`.
#[inline]
pub fn drift(spec: &ProblemSpec, q: TorusPoint) -> f64 {
    -spec.potential_grad(q.get()) + spec.gamma
}

/// The three model configurations used in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    ZeroPotential,
    StrongPotential,
    WeakPotential,
}

impl Preset {
    pub const ALL: [Preset; 3] = [
        Preset::ZeroPotential,
        Preset::StrongPotential,
        Preset::WeakPotential,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::ZeroPotential => "zero_potential",
            Preset::StrongPotential => "strong_potential",
            Preset::WeakPotential => "weak_potential",
        }
    }

    /// `W(q) = cos^2(2 pi q) = 1/2 + cos(4 pi q)/2`.
    pub fn default_weight() -> TrigPolynomial {
        TrigPolynomial::cosine(0.5, 2).add_constant(0.5)
    }

    pub fn spec(self) -> ProblemSpec {
        let (potential, gamma) = match self {
            Preset::ZeroPotential => (TrigPolynomial::zero(), 0.0),
            Preset::StrongPotential => (TrigPolynomial::cosine(1.0, 1), 1.0),
            Preset::WeakPotential => (TrigPolynomial::cosine(0.02, 1), 1.0),
        };
        ProblemSpec::new(
            potential,
            gamma,
            SQRT_2,
            Self::default_weight(),
            Observable::exp_cos(),
        )
        .expect("preset parameters are valid")
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::config("preset", format!("unknown preset `{s}`")))
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Looks up a preset by name.
pub fn preset(name: &str) -> Result<ProblemSpec> {
    Ok(name.parse::<Preset>()?.spec())
}

/// Exact Fourier coefficients of a trigonometric polynomial, degrees `-K..=K`.
pub fn fourier_coeffs_trig(field: &TrigPolynomial, k_max: usize) -> CoeffVector {
    let k = k_max as i64;
    let entries = (-k..=k).map(|j| field.coeff(j)).collect();
    CoeffVector::from_entries(entries, Space::Function)
}

/// Fourier coefficients of a closed-form periodic function by the periodic
/// trapezoid rule on `max(8K + 1, 16)` uniform points.
pub fn fourier_coeffs_fn(field: impl Fn(f64) -> f64, k_max: usize) -> CoeffVector {
    let npts = (8 * k_max + 1).max(16);
    let samples: Vec<f64> = (0..npts).map(|i| field(i as f64 / npts as f64)).collect();
    let k = k_max as i64;
    let entries = (-k..=k)
        .map(|j| {
            let sum: Complex64 = samples
                .iter()
                .enumerate()
                .map(|(i, &f)| {
                    f * Complex64::from_polar(1.0, -TAU * j as f64 * i as f64 / npts as f64)
                })
                .sum();
            sum / npts as f64
        })
        .collect();
    CoeffVector::from_entries(entries, Space::Function)
}

/// Fourier coefficients of either kind of field.
pub enum Field<'a> {
    Trig(&'a TrigPolynomial),
    Closed(&'a dyn Fn(f64) -> f64),
}

pub fn fourier_coeffs(field: Field<'_>, k_max: usize) -> CoeffVector {
    match field {
        Field::Trig(p) => fourier_coeffs_trig(p, k_max),
        Field::Closed(f) => fourier_coeffs_fn(f, k_max),
    }
}
