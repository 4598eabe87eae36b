//! Run settings: command-line flags override the config file, which
//! overrides the preset defaults.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, ValueEnum};
use mfopt::matfun::PhiSolver;
use mfopt::models::{make_preset, PresetName};
use mfopt::optimizer::{DescentConfig, StepRule};
use mfopt::problem::ModelSpec;

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LambdaMode {
    Armijo,
    Fixed,
}

impl FromStr for LambdaMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        <LambdaMode as ValueEnum>::from_str(s, true)
    }
}

/// Flags shared by every subcommand. All optional so that the config file
/// and preset defaults can fill the gaps.
#[derive(Args, Clone, Debug, Default)]
pub struct Flags {
    /// key = value settings file; flags take precedence
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub preset: Option<String>,
    /// Spatial grid points
    #[arg(long)]
    pub n: Option<usize>,
    /// Time steps
    #[arg(long)]
    pub m: Option<usize>,
    /// Final time
    #[arg(long = "T", value_name = "T")]
    pub horizon: Option<f64>,
    /// Stop when |J^(l+1) - J^l| < tol
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Initial step (armijo) or the step itself (fixed)
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, value_enum)]
    pub lambda_mode: Option<LambdaMode>,
    #[arg(long)]
    pub krylov_tol: Option<f64>,
    /// Largest constant operator evaluated with a cached dense exponential
    #[arg(long)]
    pub dense_threshold: Option<usize>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated step counts for `converge`
    #[arg(long)]
    pub m_list: Option<String>,
    /// Reference run of `converge` uses ref_factor * max(m-list) steps
    #[arg(long)]
    pub ref_factor: Option<usize>,
    /// Number of agents for `particles`
    #[arg(long)]
    pub agents: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Run,
    Converge,
    Particles,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub preset: PresetName,
    pub n: usize,
    pub m: usize,
    pub horizon: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub lambda_mode: LambdaMode,
    pub lambda: f64,
    pub krylov_tol: f64,
    pub dense_threshold: usize,
    pub out: PathBuf,
    pub seed: u64,
    pub m_list: Vec<usize>,
    pub ref_factor: usize,
    pub agents: usize,
}

const KEYS: [&str; 15] = [
    "preset",
    "n",
    "m",
    "T",
    "tol",
    "max_iters",
    "lambda",
    "lambda_mode",
    "krylov_tol",
    "dense_threshold",
    "out",
    "seed",
    "m_list",
    "ref_factor",
    "agents",
];

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Config(format!(
                "line {}: expected `key = value`, got `{}`",
                lineno + 1,
                raw.trim()
            )));
        };
        let key = key.trim().replace('-', "_");
        let key = if key.eq_ignore_ascii_case("t") {
            "T".to_string()
        } else {
            key
        };
        if !KEYS.contains(&key.as_str()) {
            return Err(CliError::Config(format!(
                "line {}: unknown key `{key}`",
                lineno + 1
            )));
        }
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}

fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config_text(&text)
}

fn pick<T>(
    flag: Option<T>,
    file: &BTreeMap<String, String>,
    key: &str,
) -> Result<Option<T>, CliError>
where
    T: FromStr,
    T::Err: Display,
{
    if flag.is_some() {
        return Ok(flag);
    }
    file.get(key)
        .map(|v| {
            v.parse::<T>()
                .map_err(|e| CliError::Config(format!("bad value `{v}` for {key}: {e}")))
        })
        .transpose()
}

pub fn parse_m_list(s: &str) -> Result<Vec<usize>, CliError> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|e| CliError::Config(format!("bad m-list entry `{}`: {e}", p.trim())))
        })
        .collect()
}

impl RunConfig {
    pub fn resolve(flags: &Flags, mode: Mode) -> Result<Self, CliError> {
        let file = match &flags.config {
            Some(path) => read_config_file(path)?,
            None => BTreeMap::new(),
        };
        let preset: String = pick(flags.preset.clone(), &file, "preset")?.ok_or_else(|| {
            CliError::Config("no preset given (use --preset or `preset = ...`)".into())
        })?;
        let preset: PresetName = preset
            .parse()
            .map_err(|e| CliError::Config(format!("{e}")))?;
        let spec = make_preset(preset);

        let (n_default, m_default) = match mode {
            Mode::Run => preset.default_resolution(),
            Mode::Converge => (200, 300),
            Mode::Particles => (201, 200),
        };
        let horizon_default = match mode {
            Mode::Run => spec.horizon,
            Mode::Converge => preset.study_horizon(),
            Mode::Particles => 1.0,
        };
        let m_list = match pick(flags.m_list.clone(), &file, "m_list")? {
            Some(s) => parse_m_list(&s)?,
            None => vec![300, 400, 500, 600, 700],
        };
        let lambda_mode =
            pick(flags.lambda_mode, &file, "lambda_mode")?.unwrap_or(LambdaMode::Armijo);
        let lambda = pick(flags.lambda, &file, "lambda")?;
        if lambda_mode == LambdaMode::Fixed && lambda.is_none() {
            return Err(CliError::Config(
                "fixed lambda mode needs a lambda value".into(),
            ));
        }
        let descent = DescentConfig::default();
        let phi = PhiSolver::default();

        let cfg = RunConfig {
            preset,
            n: pick(flags.n, &file, "n")?.unwrap_or(n_default),
            m: pick(flags.m, &file, "m")?.unwrap_or(m_default),
            horizon: pick(flags.horizon, &file, "T")?.unwrap_or(horizon_default),
            tol: pick(flags.tol, &file, "tol")?.unwrap_or(descent.tol),
            max_iters: pick(flags.max_iters, &file, "max_iters")?.unwrap_or(descent.max_iters),
            lambda_mode,
            lambda: lambda.unwrap_or(descent.lambda0),
            krylov_tol: pick(flags.krylov_tol, &file, "krylov_tol")?.unwrap_or(phi.krylov.tol),
            dense_threshold: pick(flags.dense_threshold, &file, "dense_threshold")?
                .unwrap_or(phi.dense_threshold),
            out: pick(flags.out.clone(), &file, "out")?.unwrap_or_else(|| PathBuf::from(".")),
            seed: pick(flags.seed, &file, "seed")?.unwrap_or(0),
            m_list,
            ref_factor: pick(flags.ref_factor, &file, "ref_factor")?.unwrap_or(4),
            agents: pick(flags.agents, &file, "agents")?.unwrap_or(100_000),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |what: String| Err(CliError::Config(what));
        if self.n < 3 {
            return bad(format!("n must be at least 3, got {}", self.n));
        }
        if self.m == 0 {
            return bad("m must be positive".into());
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("T must be positive, got {}", self.horizon));
        }
        if !(self.tol > 0.0) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be positive".into());
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.krylov_tol > 0.0 && self.krylov_tol < 1.0) {
            return bad(format!(
                "krylov_tol must lie in (0, 1), got {}",
                self.krylov_tol
            ));
        }
        if self.agents == 0 {
            return bad("agents must be positive".into());
        }
        if self.m_list.is_empty()
            || self.m_list[0] == 0
            || self.m_list.windows(2).any(|w| w[1] <= w[0])
        {
            return bad(format!(
                "m-list must be positive and strictly increasing, got {:?}",
                self.m_list
            ));
        }
        if self.ref_factor < 2 {
            return bad(format!(
                "ref_factor must be at least 2, got {}",
                self.ref_factor
            ));
        }
        Ok(())
    }

    pub fn model(&self) -> ModelSpec {
        let mut spec = make_preset(self.preset);
        spec.horizon = self.horizon;
        spec
    }

    pub fn phi(&self) -> PhiSolver {
        let mut phi = PhiSolver::default().with_tol(self.krylov_tol);
        phi.dense_threshold = self.dense_threshold;
        phi
    }

    pub fn descent(&self) -> DescentConfig {
        let mut cfg = DescentConfig {
            tol: self.tol,
            max_iters: self.max_iters,
            phi: self.phi(),
            ..DescentConfig::default()
        };
        match self.lambda_mode {
            LambdaMode::Armijo => cfg.lambda0 = self.lambda,
            LambdaMode::Fixed => cfg.rule = StepRule::Fixed(self.lambda),
        }
        cfg
    }
}
