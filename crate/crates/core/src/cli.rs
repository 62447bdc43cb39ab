//! Command-line front end: configuration, dispatch and CSV/SVG output.
//!
//! Configuration is a single flat JSON object. Recognized keys:
//!
//! | key            | type              | default                          |
//! |----------------|-------------------|----------------------------------|
//! | `preset`       | string            | `zero_potential`                 |
//! | `N`            | integer           | 30                               |
//! | `dt_grid`      | array of numbers  | `[0.2, 0.1, 0.05, 0.025, 0.0125]`|
//! | `M`            | integer           | 5000                             |
//! | `T`            | number            | 200                              |
//! | `burn_in`      | number in [0, 1)  | 0.5                              |
//! | `seed`         | integer           | fixed constant                   |
//! | `realizations` | integer           | 8                                |
//! | `integrator`   | `euler`, `weak2`  | `euler`                          |
//! | `delta`        | number in [0, 1]  | (see `deltas`)                   |
//! | `deltas`       | array of numbers  | `[0, 0.5]`                       |
//! | `methods`      | array of `galerkin`, `mc` | `["galerkin"]`           |
//! | `targets`      | array of `eigenvalue`, `observable_average`, `average_of_W` | first two |
//! | `reference`    | `galerkin_dt0`, `galerkin_same_dt` | `galerkin_dt0`  |
//! | `p`            | 1 or 2            | 1                                |
//! | `svg`          | bool              | true                             |
//!
//! Unknown keys are rejected.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::galerkin::DEFAULT_HALF_WIDTH;
use crate::harness::{
    compare_mc_galerkin, richardson_check, run_sweep, validate_dt_grid, CompareReport, Method,
    Reference, RichardsonReport, Source, SweepConfig, SweepResult, Target, DEFAULT_DT_GRID,
};
use crate::integrators::IntegratorKind;
use crate::model::Preset;
use crate::smc::{QuadratureRule, SmcConfig, DEFAULT_SEED};

#[derive(Debug, Parser)]
#[command(name = "fklab", version, about = "Timestep bias of discretized Feynman-Kac dynamics on the torus")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; nothing is written outside it.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Override one configuration key, e.g. `--set M=1000`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Size of the worker pool.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Population Monte Carlo estimates over the timestep grid.
    RunMc,
    /// Galerkin scheme values over the timestep grid.
    RunGalerkin,
    /// Error sweep with order fits for the configured methods.
    Sweep,
    /// Predicted against empirical leading error coefficients.
    Richardson,
    /// z-scores of Monte Carlo against Galerkin values.
    Compare,
}

const KNOWN_KEYS: [&str; 16] = [
    "preset",
    "N",
    "dt_grid",
    "M",
    "T",
    "burn_in",
    "seed",
    "realizations",
    "integrator",
    "delta",
    "deltas",
    "methods",
    "targets",
    "reference",
    "p",
    "svg",
];

/// Validated experiment configuration with defaults applied.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub half_width: usize,
    pub dt_grid: Vec<f64>,
    pub replicas: usize,
    pub total_time: f64,
    pub burn_in: f64,
    pub seed: u64,
    pub realizations: usize,
    pub integrator: IntegratorKind,
    pub deltas: Vec<f64>,
    /// Whether `delta`/`deltas` was given explicitly.
    pub deltas_explicit: bool,
    pub sources: Vec<Source>,
    pub targets: Vec<Target>,
    pub reference: Reference,
    pub order: usize,
    pub svg: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let smc = SmcConfig::default();
        Self {
            preset: Preset::ZeroPotential,
            half_width: DEFAULT_HALF_WIDTH,
            dt_grid: DEFAULT_DT_GRID.to_vec(),
            replicas: smc.replicas,
            total_time: smc.total_time,
            burn_in: smc.burn_in_fraction,
            seed: DEFAULT_SEED,
            realizations: smc.realizations,
            integrator: smc.integrator,
            deltas: vec![0.0, 0.5],
            deltas_explicit: false,
            sources: vec![Source::Galerkin],
            targets: vec![Target::Eigenvalue, Target::ObservableAverage],
            reference: Reference::GalerkinDt0,
            order: 1,
            svg: true,
        }
    }
}

impl ExperimentConfig {
    /// SMC template; `dt`, integrator and rule are set per cell.
    pub fn smc_template(&self) -> SmcConfig {
        SmcConfig {
            replicas: self.replicas,
            total_time: self.total_time,
            burn_in_fraction: self.burn_in,
            seed: self.seed,
            integrator: self.integrator,
            realizations: self.realizations,
            ..SmcConfig::default()
        }
    }

    pub fn sweep_config(&self, sources: &[Source]) -> SweepConfig {
        let methods = sources
            .iter()
            .flat_map(|&s| {
                self.deltas.iter().map(move |&d| match s {
                    Source::Galerkin => Method::galerkin(d),
                    Source::Mc => Method::mc(self.integrator, d),
                })
            })
            .collect();
        SweepConfig {
            preset: self.preset,
            dt_grid: self.dt_grid.clone(),
            methods,
            targets: self.targets.clone(),
            reference: self.reference,
            smc: self.smc_template(),
            half_width: self.half_width,
        }
    }
}

fn type_error(key: &str, expected: &str, value: &Value) -> Error {
    Error::config(key, format!("expected {expected}, got {value}"))
}

fn as_f64(key: &str, v: &Value) -> Result<f64> {
    v.as_f64().ok_or_else(|| type_error(key, "a number", v))
}

fn as_usize(key: &str, v: &Value) -> Result<usize> {
    v.as_u64()
        .map(|x| x as usize)
        .ok_or_else(|| type_error(key, "a non-negative integer", v))
}

fn as_str<'a>(key: &str, v: &'a Value) -> Result<&'a str> {
    v.as_str().ok_or_else(|| type_error(key, "a string", v))
}

fn as_array<'a>(key: &str, v: &'a Value) -> Result<&'a Vec<Value>> {
    v.as_array().ok_or_else(|| type_error(key, "an array", v))
}

fn check_delta(key: &str, d: f64) -> Result<f64> {
    QuadratureRule::new(d).map_err(|_| Error::config(key, format!("must lie in [0, 1], got {d}")))?;
    Ok(d)
}

/// Builds a configuration from a JSON object, rejecting unknown keys.
pub fn config_from_map(map: &Map<String, Value>) -> Result<ExperimentConfig> {
    if let Some(key) = map.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
        return Err(Error::config(key.clone(), "unknown configuration key"));
    }
    if map.contains_key("delta") && map.contains_key("deltas") {
        return Err(Error::config("delta", "give either `delta` or `deltas`, not both"));
    }
    let mut c = ExperimentConfig::default();
    for (key, v) in map {
        let k = key.as_str();
        match k {
            "preset" => c.preset = as_str(k, v)?.parse()?,
            "N" => c.half_width = as_usize(k, v)?,
            "dt_grid" => {
                c.dt_grid = as_array(k, v)?.iter().map(|x| as_f64(k, x)).collect::<Result<_>>()?;
            }
            "M" => c.replicas = as_usize(k, v)?,
            "T" => c.total_time = as_f64(k, v)?,
            "burn_in" => c.burn_in = as_f64(k, v)?,
            "seed" => c.seed = v.as_u64().ok_or_else(|| type_error(k, "an unsigned 64-bit integer", v))?,
            "realizations" => c.realizations = as_usize(k, v)?,
            "integrator" => c.integrator = as_str(k, v)?.parse()?,
            "delta" => {
                c.deltas = vec![check_delta(k, as_f64(k, v)?)?];
                c.deltas_explicit = true;
            }
            "deltas" => {
                c.deltas = as_array(k, v)?
                    .iter()
                    .map(|x| check_delta(k, as_f64(k, x)?))
                    .collect::<Result<_>>()?;
                c.deltas_explicit = true;
            }
            "methods" => {
                c.sources = as_array(k, v)?
                    .iter()
                    .map(|x| as_str(k, x)?.parse())
                    .collect::<Result<_>>()?;
            }
            "targets" => {
                c.targets = as_array(k, v)?
                    .iter()
                    .map(|x| as_str(k, x)?.parse())
                    .collect::<Result<_>>()?;
            }
            "reference" => c.reference = as_str(k, v)?.parse()?,
            "p" => c.order = as_usize(k, v)?,
            "svg" => c.svg = v.as_bool().ok_or_else(|| type_error(k, "a boolean", v))?,
            _ => unreachable!("keys were checked above"),
        }
    }
    validate(&c)?;
    Ok(c)
}

fn validate(c: &ExperimentConfig) -> Result<()> {
    if c.half_width == 0 || c.half_width > 200 {
        return Err(Error::config("N", format!("must lie in 1..=200, got {}", c.half_width)));
    }
    validate_dt_grid(&c.dt_grid)?;
    if c.replicas == 0 {
        return Err(Error::config("M", "need at least one replica"));
    }
    if !(c.total_time.is_finite() && c.total_time >= c.dt_grid[0]) {
        return Err(Error::config(
            "T",
            format!("must cover at least one step of the largest dt, got {}", c.total_time),
        ));
    }
    if !(0.0..1.0).contains(&c.burn_in) {
        return Err(Error::config("burn_in", format!("must lie in [0, 1), got {}", c.burn_in)));
    }
    if c.realizations == 0 {
        return Err(Error::config("realizations", "need at least one realization"));
    }
    if c.deltas.is_empty() {
        return Err(Error::config("deltas", "need at least one value"));
    }
    if c.sources.is_empty() {
        return Err(Error::config("methods", "need at least one method"));
    }
    if c.targets.is_empty() {
        return Err(Error::config("targets", "need at least one target"));
    }
    if !(1..=2).contains(&c.order) {
        return Err(Error::config("p", format!("order must be 1 or 2, got {}", c.order)));
    }
    Ok(())
}

/// Applies `key=value` overrides; values are read as JSON, falling back to a plain string.
pub fn apply_overrides(map: &mut Map<String, Value>, overrides: &[String]) -> Result<()> {
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| Error::config(item.clone(), "override must have the form key=value"))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        map.insert(key.trim().to_string(), value);
    }
    Ok(())
}

pub fn parse_config_str(text: &str, overrides: &[String]) -> Result<ExperimentConfig> {
    let value: Value = serde_json::from_str(text)
        .map_err(|e| Error::config("config", format!("malformed JSON: {e}")))?;
    let Value::Object(mut map) = value else {
        return Err(Error::config("config", "top level must be a JSON object"));
    };
    apply_overrides(&mut map, overrides)?;
    config_from_map(&map)
}

/// Reads and validates a configuration file; `None` uses defaults plus overrides.
pub fn parse_config(path: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig> {
    match path {
        None => parse_config_str("{}", overrides),
        Some(p) => {
            let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
            let text = String::from_utf8(bytes)
                .map_err(|_| Error::config("config", format!("{} is not UTF-8", p.display())))?;
            parse_config_str(&text, overrides).map_err(|e| match e {
                Error::Config { key, message } => Error::Config {
                    key,
                    message: format!("{message} (in {})", p.display()),
                },
                other => other,
            })
        }
    }
}

/// Shortest decimal that reads back to the same `f64`.
fn num(x: f64) -> String {
    format!("{x:?}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub const CSV_HEADER: &str = "method,delta,integrator,dt,target,value,reference,error,stderr,order_fit,r2";

/// Renders sweep rows in their stored order (method, then dt descending).
pub fn sweep_csv(result: &SweepResult) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in &result.rows {
        let fit = result.fit_for(&row.method, row.target);
        let value = match (&row.failure, row.value) {
            (Some(_), _) => "failed".to_string(),
            (None, v) => opt(v),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            row.method.source,
            num(row.method.delta),
            row.method.integrator_label(),
            num(row.dt),
            row.target,
            value,
            opt(row.reference),
            opt(row.error),
            opt(row.stderr),
            opt(fit.map(|f| f.slope)),
            opt(fit.map(|f| f.r2)),
        );
    }
    out
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn emit_csv(result: &SweepResult, path: &Path) -> Result<()> {
    write_file(path, &sweep_csv(result))
}

pub fn richardson_csv(reports: &[RichardsonReport]) -> String {
    let mut out = String::from("p,delta,dt,target,theory,empirical,abs_deviation,relative_deviation\n");
    for r in reports {
        for (name, check) in [("observable_average", &r.observable), ("eigenvalue", &r.eigenvalue)] {
            let rel = check.relative_deviation();
            for i in 0..2 {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    r.order,
                    num(r.delta),
                    num(r.dt_pair[i]),
                    name,
                    num(check.theory),
                    num(check.empirical[i]),
                    num(check.abs_deviation[i]),
                    num(rel[i]),
                );
            }
        }
    }
    out
}

pub fn compare_csv(report: &CompareReport) -> String {
    let mut out = String::from("delta,dt,target,mc,stderr,galerkin,z,flagged\n");
    for r in &report.rows {
        for (name, mc, se, g, z) in [
            ("eigenvalue", r.lambda_mc, r.stderr_lambda, r.lambda_galerkin, r.z_lambda),
            ("observable_average", r.phi_mc, r.stderr_phi, r.phi_galerkin, r.z_phi),
        ] {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                num(r.delta),
                num(r.dt),
                name,
                num(mc),
                opt(se),
                num(g),
                num(z),
                z.abs() > crate::harness::Z_THRESHOLD,
            );
        }
    }
    out
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
}

fn plot_series(result: &SweepResult) -> Vec<Series> {
    let mut series: Vec<Series> = Vec::new();
    let mut keys: Vec<(Method, Target)> = Vec::new();
    for row in &result.rows {
        let key = (row.method, row.target);
        if !keys.iter().any(|(m, t)| *m == key.0 && *t == key.1) {
            keys.push(key);
        }
    }
    for (method, target) in keys {
        let points: Vec<(f64, f64)> = result
            .series(&method, target)
            .iter()
            .filter_map(|r| r.error.filter(|e| *e > 0.0 && e.is_finite()).map(|e| (r.dt, e)))
            .collect();
        if points.is_empty() {
            continue;
        }
        let mut label = format!("{} delta={}", method.source, method.delta);
        if method.source == Source::Mc {
            let _ = write!(label, " {}", method.integrator);
        }
        let _ = write!(label, " {target}");
        if points.len() >= 2 {
            if let Some(fit) = result.fit_for(&method, target) {
                let _ = write!(label, " (slope {:.2})", fit.slope);
            }
        }
        series.push(Series { label, points });
    }
    series
}

/// Log-log plot of error against timestep with dashed slope-1 and slope-2
/// guides through the first series at its largest timestep. Returns `false`
/// (and writes nothing) when no row has a positive error.
pub fn emit_svg_loglog(result: &SweepResult, path: &Path) -> Result<bool> {
    match render_svg(result) {
        Some(svg) => write_file(path, &svg).map(|_| true),
        None => Ok(false),
    }
}

pub fn render_svg(result: &SweepResult) -> Option<String> {
    let series = plot_series(result);
    let first = series.first()?;
    let (w, h) = (720.0, 480.0);
    let (left, right, top, bottom) = (70.0, 250.0, 20.0, 50.0);

    let anchor = first
        .points
        .iter()
        .copied()
        .fold((f64::NEG_INFINITY, 0.0), |a, p| if p.0 > a.0 { p } else { a });
    let dt_min = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).fold(f64::INFINITY, f64::min);
    let guide = |order: f64, dt: f64| anchor.1 * (dt / anchor.0).powf(order);
    let guides: Vec<(f64, [(f64, f64); 2])> = [1.0, 2.0]
        .iter()
        .map(|&o| (o, [(anchor.0, anchor.1), (dt_min, guide(o, dt_min))]))
        .collect();

    let all = series
        .iter()
        .flat_map(|s| s.points.iter().copied())
        .chain(guides.iter().flat_map(|g| g.1));
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in all {
        x0 = x0.min(x.log10());
        x1 = x1.max(x.log10());
        y0 = y0.min(y.log10());
        y1 = y1.max(y.log10());
    }
    if x1 - x0 < 1e-12 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let (x0, x1, y0, y1) = (x0.floor(), x1.ceil(), y0.floor(), y1.ceil());
    let pw = w - left - right;
    let ph = h - top - bottom;
    let sx = |x: f64| left + (x.log10() - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + (y1 - y.log10()) / (y1 - y0) * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for d in (x0 as i32)..=(x1 as i32) {
        let x = sx(10f64.powi(d));
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{top}" x2="{x:.2}" y2="{:.2}" stroke="#ddd"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">1e{d}</text>"##,
            top + ph,
            top + ph + 18.0
        );
    }
    for d in (y0 as i32)..=(y1 as i32) {
        let y = sy(10f64.powi(d));
        let _ = writeln!(
            svg,
            r##"<line x1="{left}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">1e{d}</text>"##,
            left + pw,
            left - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">dt</text>"#,
        left + pw / 2.0,
        h - 10.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">error</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );

    for (order, [a, b]) in &guides {
        let _ = writeln!(
            svg,
            r##"<line class="guide" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#555" stroke-dasharray="6 4"/>"##,
            sx(a.0),
            sy(a.1),
            sx(b.0),
            sy(b.1)
        );
        let _ = writeln!(
            svg,
            r##"<text x="{:.2}" y="{:.2}" fill="#555">slope {order}</text>"##,
            sx(b.0) + 4.0,
            sy(b.1)
        );
    }

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if s.points.len() >= 2 {
            let pts: Vec<String> = s.points.iter().map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1))).collect();
            let _ = writeln!(
                svg,
                r#"<polyline class="series" points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                pts.join(" ")
            );
        }
        for p in &s.points {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                sx(p.0),
                sy(p.1)
            );
        }
        let ly = top + 14.0 + 18.0 * i as f64;
        let lx = w - right + 12.0;
        let _ = writeln!(
            svg,
            r#"<g class="legend"><line x1="{lx:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{ly:.2}">{}</text></g>"#,
            ly - 4.0,
            lx + 18.0,
            ly - 4.0,
            lx + 24.0,
            s.label
        );
    }
    svg.push_str("</svg>\n");
    Some(svg)
}

fn sweep_outputs(result: &SweepResult, config: &ExperimentConfig, out: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    let csv = out.join(format!("{stem}.csv"));
    emit_csv(result, &csv)?;
    let mut written = vec![csv];
    if config.svg {
        let svg = out.join(format!("{stem}.svg"));
        if emit_svg_loglog(result, &svg)? {
            written.push(svg);
        } else {
            eprintln!("warning: no positive errors to plot, {} not written", svg.display());
        }
    }
    for row in result.rows.iter().filter(|r| r.failure.is_some()) {
        eprintln!(
            "warning: {} delta={} dt={} failed: {}",
            row.method.source,
            row.method.delta,
            row.dt,
            row.failure.as_deref().unwrap_or_default()
        );
    }
    Ok(written)
}

/// Runs one command and returns the files it wrote.
pub fn execute(command: Command, config: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    match command {
        Command::RunMc => sweep_outputs(&run_sweep(&config.sweep_config(&[Source::Mc]))?, config, out, "run_mc"),
        Command::RunGalerkin => sweep_outputs(
            &run_sweep(&config.sweep_config(&[Source::Galerkin]))?,
            config,
            out,
            "run_galerkin",
        ),
        Command::Sweep => sweep_outputs(&run_sweep(&config.sweep_config(&config.sources))?, config, out, "sweep"),
        Command::Richardson => {
            let spec = config.preset.spec();
            let deltas = if config.order == 2 && !config.deltas_explicit {
                vec![0.5]
            } else {
                config.deltas.clone()
            };
            let mut reports = Vec::new();
            for &delta in &deltas {
                for &dt in &config.dt_grid {
                    reports.push(richardson_check(&spec, config.half_width, config.order, delta, dt)?);
                }
            }
            let path = out.join("richardson.csv");
            write_file(&path, &richardson_csv(&reports))?;
            Ok(vec![path])
        }
        Command::Compare => {
            let report = compare_mc_galerkin(
                &config.preset.spec(),
                config.half_width,
                &config.dt_grid,
                &config.deltas,
                &config.smc_template(),
            )?;
            if report.any_flagged() {
                eprintln!("warning: |z| = {:.2} exceeds {}", report.max_abs_z(), crate::harness::Z_THRESHOLD);
            }
            let path = out.join("compare.csv");
            write_file(&path, &compare_csv(&report))?;
            Ok(vec![path])
        }
    }
}

/// Entry point behind the binary.
pub fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    let config = parse_config(cli.config.as_deref(), &overrides)?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::config("threads", "must be positive"));
        }
        // fails only if a pool already exists, in which case it is reused
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    execute(cli.command, &config, &cli.out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{OrderFit, SeriesFit, SweepRow};

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config_str(r#"{"preset":"zero_potential","dt_grid":[0.1],"delta":0.5}"#, &[]).unwrap();
        assert_eq!(c.preset, Preset::ZeroPotential);
        assert_eq!(c.dt_grid, vec![0.1]);
        assert_eq!(c.deltas, vec![0.5]);
        assert_eq!(c.half_width, 30);
        assert_eq!(c.replicas, 5000);
        assert_eq!(c.seed, DEFAULT_SEED);
    }

    #[test]
    fn config_errors_name_the_key() {
        let key_of = |text: &str| match parse_config_str(text, &[]) {
            Err(Error::Config { key, .. }) => key,
            other => panic!("expected a configuration error, got {other:?}"),
        };
        assert_eq!(key_of(r#"{"delta":1.5}"#), "delta");
        assert_eq!(key_of(r#"{"preset":"typo"}"#), "preset");
        assert_eq!(key_of(r#"{"colour":1}"#), "colour");
        assert_eq!(key_of(r#"{"M":"many"}"#), "M");
        assert_eq!(key_of(r#"{"dt_grid":[0.1,0.2]}"#), "dt_grid");
        assert_eq!(key_of(r#"{"p":3}"#), "p");
        assert_eq!(key_of(r#"{"burn_in":1.0}"#), "burn_in");
        assert_eq!(key_of("[1]"), "config");
        assert_eq!(key_of("{"), "config");
    }

    #[test]
    fn overrides_apply_before_validation() {
        let c = parse_config_str("{}", &["M=100".into(), "integrator=weak2".into(), "deltas=[0.25]".into()]).unwrap();
        assert_eq!(c.replicas, 100);
        assert_eq!(c.integrator, IntegratorKind::Weak2);
        assert_eq!(c.deltas, vec![0.25]);
        assert!(parse_config_str("{}", &["nonsense".into()]).is_err());
        assert!(parse_config_str("{}", &["unknown=1".into()]).is_err());
    }

    fn row(method: Method, dt: f64, error: f64, stderr: Option<f64>) -> SweepRow {
        SweepRow {
            method,
            dt,
            target: Target::Eigenvalue,
            value: Some(1.0 + error),
            reference: Some(1.0),
            error: Some(error),
            stderr,
            failure: None,
        }
    }

    #[test]
    fn csv_layout() {
        let empty = SweepResult {
            preset: Preset::ZeroPotential,
            rows: vec![],
            fits: vec![],
        };
        assert_eq!(sweep_csv(&empty), format!("{CSV_HEADER}\n"));

        let result = SweepResult {
            preset: Preset::ZeroPotential,
            rows: vec![row(Method::galerkin(0.5), 0.1, 0.25, None)],
            fits: vec![],
        };
        let csv = sweep_csv(&result);
        let line = csv.lines().nth(1).unwrap();
        assert_eq!(line, "galerkin,0.5,,0.1,eigenvalue,1.25,1.0,0.25,,,");

        let mc = Method::mc(IntegratorKind::Weak2, 0.0);
        let result = SweepResult {
            preset: Preset::ZeroPotential,
            rows: vec![row(mc, 0.2, 1e-7, Some(3e-9))],
            fits: vec![SeriesFit {
                method: mc,
                target: Target::Eigenvalue,
                fit: Some(OrderFit { slope: 2.0, r2: 1.0 }),
            }],
        };
        let line = sweep_csv(&result).lines().nth(1).unwrap().to_string();
        assert_eq!(line, "mc,0.0,weak2,0.2,eigenvalue,1.0000001,1.0,1e-7,3e-9,2.0,1.0");
    }

    fn synthetic(methods: &[Method], grid: &[f64]) -> SweepResult {
        let rows = methods
            .iter()
            .enumerate()
            .flat_map(|(i, &m)| grid.iter().map(move |&dt| row(m, dt, (i + 1) as f64 * dt * dt, None)))
            .collect();
        let fits = methods
            .iter()
            .map(|&m| SeriesFit {
                method: m,
                target: Target::Eigenvalue,
                fit: Some(OrderFit { slope: 2.0, r2: 1.0 }),
            })
            .collect();
        SweepResult {
            preset: Preset::ZeroPotential,
            rows,
            fits,
        }
    }

    #[test]
    fn svg_quadratic_data_follows_slope_two_guide() {
        let result = synthetic(&[Method::galerkin(0.5)], &DEFAULT_DT_GRID);
        let svg = render_svg(&result).unwrap();
        // the slope-2 guide starts and ends on the first and last data points
        let circles: Vec<&str> = svg.lines().filter(|l| l.starts_with("<circle")).collect();
        let guide = svg.lines().filter(|l| l.contains("class=\"guide\"")).nth(1).unwrap();
        let coords = |l: &str, a: &str, b: &str| {
            let get = |k: &str| {
                let s = &l[l.find(&format!("{k}=\"")).unwrap() + k.len() + 2..];
                s[..s.find('"').unwrap()].to_string()
            };
            (get(a), get(b))
        };
        let (gx1, gy1) = coords(guide, "x1", "y1");
        let (gx2, gy2) = coords(guide, "x2", "y2");
        assert_eq!(coords(circles[0], "cx", "cy"), (gx1, gy1));
        assert_eq!(coords(circles[circles.len() - 1], "cx", "cy"), (gx2, gy2));
        assert!(svg.contains("stroke-dasharray"));
    }

    #[test]
    fn svg_two_methods_two_polylines() {
        let result = synthetic(&[Method::galerkin(0.0), Method::galerkin(0.5)], &[0.1, 0.05]);
        let svg = render_svg(&result).unwrap();
        assert_eq!(svg.matches("class=\"series\"").count(), 2);
        assert_eq!(svg.matches("class=\"legend\"").count(), 2);
    }

    #[test]
    fn svg_single_dt_has_points_only() {
        let result = synthetic(&[Method::galerkin(0.5)], &[0.1]);
        let svg = render_svg(&result).unwrap();
        assert_eq!(svg.matches("class=\"series\"").count(), 0);
        assert_eq!(svg.matches("<circle").count(), 1);
        assert!(!svg.contains("(slope"));
    }

    #[test]
    fn svg_needs_positive_errors() {
        let mut result = synthetic(&[Method::galerkin(0.5)], &[0.1]);
        result.rows[0].error = Some(0.0);
        assert!(render_svg(&result).is_none());
    }
}
