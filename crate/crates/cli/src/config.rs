//! Run configuration from flags and an optional JSON document.
//!
//! The JSON keys are the [`FileConfig`] field names; any flag given on the
//! command line replaces the file's value.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use hdc_core::oracle::CACHE_ENV;
use hdc_core::stability::RasterSpec;
use hdc_core::steppers::StepperKind;
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "hdc", version, about = "Convergence tables, stability regions and trajectories for DC6RK2/4")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Option<Command>,

    /// JSON run configuration; flags override its values
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Problem name (see `hdc list`)
    #[arg(long, global = true)]
    pub problem: Option<String>,

    /// Problem parameter override, repeatable
    #[arg(long = "param", global = true, value_name = "NAME=VALUE", value_parser = parse_param)]
    pub params: Vec<(String, f64)>,

    /// Comma-separated methods: rk2, rk4, rk6, dc6rk24
    #[arg(long, global = true, value_delimiter = ',', num_args = 0..)]
    pub methods: Option<Vec<String>>,

    /// Comma-separated steps; integers are step counts N, anything else a step size k
    #[arg(long, global = true, value_delimiter = ',')]
    pub steps: Option<Vec<String>>,

    /// Output directory
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,

    #[arg(long, global = true)]
    pub format: Option<Format>,

    /// Agreement tolerance for generated reference solutions
    #[arg(long, global = true)]
    pub ref_tol: Option<f64>,

    /// Reference cache directory (default: $HDC_REF_CACHE)
    #[arg(long, global = true, value_name = "DIR")]
    pub ref_cache: Option<PathBuf>,

    /// Cap on stored samples per run
    #[arg(long, global = true)]
    pub max_samples: Option<usize>,

    /// Spatial intervals M for PDE problems
    #[arg(long, global = true)]
    pub intervals: Option<usize>,

    /// Comma-separated times for PDE profile snapshots
    #[arg(long, global = true, value_delimiter = ',')]
    pub snapshots: Option<Vec<f64>>,

    #[arg(long, global = true, allow_negative_numbers = true)]
    pub re_min: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub re_max: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub im_min: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub im_max: Option<f64>,
    /// Raster columns (real axis)
    #[arg(long, global = true)]
    pub nx: Option<usize>,
    /// Raster rows (imaginary axis)
    #[arg(long, global = true)]
    pub ny: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Error and order tables for an ODE problem
    Convergence,
    /// Stability metrics, region rasters and the containment verdict
    Stability,
    /// Error and order tables for a reaction-diffusion problem
    Pde,
    /// One run, writing the sampled trajectory
    Solve,
    /// Registered problems and methods
    List,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Markdown,
}

/// JSON form of a run configuration.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub command: Option<Command>,
    pub problem: Option<String>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub methods: Option<Vec<String>>,
    pub steps: Option<Vec<serde_json::Value>>,
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
    pub ref_tol: Option<f64>,
    pub ref_cache: Option<PathBuf>,
    pub max_samples: Option<usize>,
    pub intervals: Option<usize>,
    pub snapshots: Option<Vec<f64>>,
    pub re_min: Option<f64>,
    pub re_max: Option<f64>,
    pub im_min: Option<f64>,
    pub im_max: Option<f64>,
    pub nx: Option<usize>,
    pub ny: Option<usize>,
}

/// A step given either as a count or as a size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSpec {
    Count(usize),
    Size(f64),
}

impl StepSpec {
    pub fn parse(token: &str) -> Result<StepSpec, CliError> {
        let t = token.trim();
        let bad = || CliError::usage(format!("invalid step `{token}`"));
        if !t.is_empty() && t.chars().all(|c| c.is_ascii_digit() || c == '_') {
            let n: usize = t.replace('_', "").parse().map_err(|_| bad())?;
            return if n == 0 { Err(bad()) } else { Ok(StepSpec::Count(n)) };
        }
        let k: f64 = t.parse().map_err(|_| bad())?;
        if k > 0.0 && k.is_finite() { Ok(StepSpec::Size(k)) } else { Err(bad()) }
    }

    /// Step count over `[0, t_end]`; sizes must divide the interval.
    pub fn count(self, t_end: f64) -> Result<usize, CliError> {
        match self {
            StepSpec::Count(n) => Ok(n),
            StepSpec::Size(k) => {
                let n = (t_end / k).round();
                if n < 1.0 || ((n * k - t_end) / t_end).abs() > 1e-9 {
                    return Err(CliError::usage(format!("step size {k} does not divide T = {t_end}")));
                }
                Ok(n as usize)
            }
        }
    }
}

/// Fully resolved configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub problem: Option<String>,
    pub params: Vec<(String, f64)>,
    /// `None` when neither flags nor file name any methods.
    pub methods: Option<Vec<StepperKind>>,
    pub steps: Vec<StepSpec>,
    pub output: PathBuf,
    pub format: Format,
    pub ref_tol: f64,
    pub ref_cache: Option<PathBuf>,
    pub max_samples: Option<usize>,
    pub intervals: Option<usize>,
    pub snapshots: Vec<f64>,
    pub raster: RasterSpec,
}

pub const DEFAULT_REF_TOL: f64 = 1e-12;

fn parse_param(s: &str) -> Result<(String, f64), String> {
    let (name, value) = s.split_once('=').ok_or_else(|| format!("expected NAME=VALUE, got `{s}`"))?;
    let value: f64 = value.trim().parse().map_err(|_| format!("`{value}` is not a number"))?;
    Ok((name.trim().to_string(), value))
}

fn read_file(path: &Path) -> Result<FileConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn json_step(v: &serde_json::Value) -> Result<StepSpec, CliError> {
    match v {
        serde_json::Value::Number(n) => StepSpec::parse(&n.to_string()),
        serde_json::Value::String(s) => StepSpec::parse(s),
        other => Err(CliError::usage(format!("invalid step {other}"))),
    }
}

impl RunConfig {
    pub fn resolve(cli: Cli) -> Result<RunConfig, CliError> {
        let file = match &cli.config {
            Some(path) => read_file(path)?,
            None => FileConfig::default(),
        };
        let command = cli
            .command
            .or(file.command)
            .ok_or_else(|| CliError::usage("no command given (convergence, stability, pde, solve, list)"))?;

        let mut params: Vec<(String, f64)> = file.params.into_iter().collect();
        params.extend(cli.params);

        let methods = match cli.methods.or(file.methods) {
            None => None,
            Some(names) => Some(
                names
                    .iter()
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| s.parse::<StepperKind>().map_err(|e| CliError::usage(e.to_string())))
                    .collect::<Result<Vec<_>, _>>()?,
            ),
        };

        let steps = match cli.steps {
            Some(tokens) => tokens.iter().map(|t| StepSpec::parse(t)).collect::<Result<Vec<_>, _>>()?,
            None => file.steps.unwrap_or_default().iter().map(json_step).collect::<Result<Vec<_>, _>>()?,
        };

        let defaults = RasterSpec::default();
        let raster = RasterSpec {
            re_range: (
                cli.re_min.or(file.re_min).unwrap_or(defaults.re_range.0),
                cli.re_max.or(file.re_max).unwrap_or(defaults.re_range.1),
            ),
            im_range: (
                cli.im_min.or(file.im_min).unwrap_or(defaults.im_range.0),
                cli.im_max.or(file.im_max).unwrap_or(defaults.im_range.1),
            ),
            nx: cli.nx.or(file.nx).unwrap_or(defaults.nx),
            ny: cli.ny.or(file.ny).unwrap_or(defaults.ny),
        };
        if !(raster.re_range.0 < raster.re_range.1 && raster.im_range.0 < raster.im_range.1) {
            return Err(CliError::usage("raster ranges must satisfy min < max"));
        }
        if raster.nx < 2 || raster.ny < 2 {
            return Err(CliError::usage("raster needs at least 2 points per axis"));
        }

        let ref_tol = cli.ref_tol.or(file.ref_tol).unwrap_or(DEFAULT_REF_TOL);
        if !(ref_tol > 0.0 && ref_tol.is_finite()) {
            return Err(CliError::usage("--ref-tol must be positive"));
        }
        let max_samples = cli.max_samples.or(file.max_samples);
        if max_samples.is_some_and(|s| s < 2) {
            return Err(CliError::usage("--max-samples must be at least 2"));
        }

        Ok(RunConfig {
            command,
            problem: cli.problem.or(file.problem),
            params,
            methods,
            steps,
            output: cli.output.or(file.output).unwrap_or_else(|| PathBuf::from("hdc-out")),
            format: cli.format.or(file.format).unwrap_or_default(),
            ref_tol,
            ref_cache: cli.ref_cache.or(file.ref_cache).or_else(|| std::env::var_os(CACHE_ENV).map(PathBuf::from)),
            max_samples,
            intervals: cli.intervals.or(file.intervals),
            snapshots: cli.snapshots.or(file.snapshots).unwrap_or_default(),
            raster,
        })
    }

    /// Step counts over `[0, t_end]`, checked to be strictly increasing.
    pub fn step_counts(&self, t_end: f64) -> Result<Vec<usize>, CliError> {
        if self.steps.is_empty() {
            return Err(CliError::usage("no steps given (--steps)"));
        }
        let ns = self.steps.iter().map(|s| s.count(t_end)).collect::<Result<Vec<_>, _>>()?;
        if ns.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CliError::usage("steps must be strictly decreasing in k (increasing in N)"));
        }
        Ok(ns)
    }

    /// Methods for table commands; an explicitly empty list is an error.
    pub fn methods_or(&self, default: &[StepperKind]) -> Result<Vec<StepperKind>, CliError> {
        match &self.methods {
            None => Ok(default.to_vec()),
            Some(m) if m.is_empty() => Err(CliError::usage("no methods given")),
            Some(m) => Ok(m.clone()),
        }
    }

    pub fn require_problem(&self) -> Result<&str, CliError> {
        self.problem.as_deref().ok_or_else(|| CliError::usage("no problem given (--problem)"))
    }
}
