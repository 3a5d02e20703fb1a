use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use fbsde_hjb::config::{GridConfig, ModelConfig, ProblemConfig, UtilityConfig};
use fbsde_hjb::Error;
use serde::{Deserialize, Serialize};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Parser)]
#[command(name = "fbsde", version, about = "Stochastic HJB solver and FBSDE Monte Carlo checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CommandKind,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandKind {
    /// Solve the HJB equation and dump the value and control fields.
    Solve,
    /// Simulate the forward equation under the solved feedback control.
    Simulate,
    /// Reconstruct (Y, Z, K) and measure BSDE and Itô-Ventzell residuals.
    Verify,
    /// Girsanov entropy estimate and the minimal-risk identity.
    Entropy,
    /// Run the benchmarks against their closed forms.
    Bench,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct Flags {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Benchmark name: riskmin or merton-log.
    #[arg(long, global = true)]
    pub problem: Option<String>,
    #[arg(long = "T", global = true)]
    pub horizon: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub b: Option<f64>,
    #[arg(long, global = true)]
    pub sigma: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub x0: Option<f64>,
    #[arg(long, global = true)]
    pub n_paths: Option<usize>,
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory for summary.json and CSV files.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_paths: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// A run as read from `--config`; flags override its fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: CommandKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<ProblemConfig>,
    #[serde(default, rename = "T", skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(
                Error::UnstableStep { .. }
                | Error::NonFiniteLayer { .. }
                | Error::NonFinitePath { .. }
                | Error::NonFiniteCoefficient { .. }
                | Error::NonFiniteIntegrand { .. }
                | Error::PolicyUndefined { .. },
            ) => 2,
            _ => 1,
        }
    }
}

pub fn parse_run_config(text: &str) -> Result<RunConfig, CliError> {
    serde_json::from_str(text).map_err(|e| {
        CliError::Core(Error::Config { line: e.line(), column: e.column(), message: e.to_string() })
    })
}

impl RunConfig {
    pub fn from_cli(command: CommandKind, flags: &Flags) -> Result<Self, CliError> {
        let mut cfg = match &flags.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
                let cfg = parse_run_config(&text)?;
                if cfg.command != command {
                    return Err(CliError::Usage(format!(
                        "config is for `{}`, invoked as `{}`",
                        command_name(cfg.command),
                        command_name(command)
                    )));
                }
                cfg
            }
            None => RunConfig {
                command,
                problem: None,
                spec: None,
                horizon: None,
                b: None,
                sigma: None,
                x0: None,
                grid: None,
                mc: McConfig::default(),
                out: None,
                format: None,
            },
        };
        macro_rules! take {
            ($($field:ident),*) => {$(
                if flags.$field.is_some() {
                    cfg.$field = flags.$field.clone();
                }
            )*};
        }
        take!(problem, horizon, b, sigma, x0, out, format);
        if flags.n_paths.is_some() {
            cfg.mc.n_paths = flags.n_paths;
        }
        if flags.dt.is_some() {
            cfg.mc.dt = flags.dt;
        }
        if flags.seed.is_some() {
            cfg.mc.seed = flags.seed;
        }
        Ok(cfg)
    }

    pub fn seed(&self) -> u64 {
        self.mc.seed.unwrap_or(DEFAULT_SEED)
    }

    /// Problem named by `problem` (or the inline `spec`) with the scalar overrides applied.
    pub fn resolve_problem(&self, default: &str) -> Result<ProblemConfig, CliError> {
        let mut p = match (&self.spec, &self.problem) {
            (Some(_), Some(_)) => {
                return Err(CliError::Usage("give either `problem` or `spec`, not both".into()));
            }
            (Some(spec), None) => spec.clone(),
            (None, name) => benchmark(name.as_deref().unwrap_or(default))?,
        };
        if let Some(t) = self.horizon {
            p.horizon = t;
        }
        match &mut p.model {
            ModelConfig::Merton { b, sigma, x0, .. } | ModelConfig::Riskmin { b, sigma, x0, .. } => {
                if let Some(v) = self.b {
                    *b = v;
                }
                if let Some(v) = self.sigma {
                    *sigma = v;
                }
                if let Some(v) = self.x0 {
                    *x0 = v;
                }
            }
            ModelConfig::Affine { x0, .. } => {
                if self.b.is_some() || self.sigma.is_some() {
                    return Err(CliError::Usage("--b/--sigma apply only to merton and riskmin models".into()));
                }
                if let Some(v) = self.x0 {
                    *x0 = v;
                }
            }
        }
        if let Some(g) = self.grid {
            p.grid = Some(g);
        }
        let g = p.grid.get_or_insert_with(GridConfig::default);
        if !g.x_min.is_some() || !g.x_max.is_some() {
            let built = p.build()?;
            let g = p.grid.as_mut().expect("grid set above");
            g.x_min = Some(built.grid.x_min());
            g.x_max = Some(built.grid.x_max());
        }
        Ok(p)
    }

    /// Copy of this run with the problem inlined and every default spelled out.
    pub fn resolved(&self, problem: Option<ProblemConfig>, n_paths: Option<usize>, dt: Option<f64>) -> RunConfig {
        let mut r = self.clone();
        if let Some(p) = problem {
            r.spec = Some(p);
            r.problem = None;
            r.horizon = None;
            r.b = None;
            r.sigma = None;
            r.x0 = None;
            r.grid = None;
        }
        r.mc = McConfig { n_paths, dt, seed: Some(self.seed()) };
        r
    }
}

pub fn command_name(c: CommandKind) -> &'static str {
    match c {
        CommandKind::Solve => "solve",
        CommandKind::Simulate => "simulate",
        CommandKind::Verify => "verify",
        CommandKind::Entropy => "entropy",
        CommandKind::Bench => "bench",
    }
}

pub fn benchmark(name: &str) -> Result<ProblemConfig, CliError> {
    let model = match name {
        "riskmin" => ModelConfig::Riskmin {
            b: 0.2,
            sigma: 0.4,
            b_slope: 0.0,
            x0: 1.0,
            declarations: Default::default(),
        },
        "merton-log" | "merton" => ModelConfig::Merton {
            b: 0.05,
            sigma: 0.2,
            b_slope: 0.0,
            x0: 1.0,
            utility: UtilityConfig::Log,
            declarations: Default::default(),
        },
        other => {
            return Err(CliError::Usage(format!("unknown problem `{other}` (expected riskmin or merton-log)")));
        }
    };
    Ok(ProblemConfig { model, grid: None, jumps: vec![], controls: None, horizon: 1.0, sense: None })
}
