//! JSON problem documents.
//!
//! ```json
//! {
//!   "model": { "family": "riskmin", "b": 0.2, "sigma": 0.4, "x0": 1.0 },
//!   "grid": { "nx": 200, "nt": 400 },
//!   "jumps": [],
//!   "controls": { "interval": { "lo": -10, "hi": 10, "resolution": 0.01 } },
//!   "horizon": 1.0,
//!   "sense": "maximize"
//! }
//! ```
//!
//! Families: `merton`, `riskmin`, `affine`. Unknown keys are rejected and
//! parse errors carry the line and column of the offending token.

use serde::{Deserialize, Serialize};

use crate::benchmarks::{build_merton, build_riskmin, MarketParams, Utility, MERTON_DOMAIN};
use crate::error::{Error, Result};
use crate::model::{
    validate_problem, CoefficientSet, ControlSet, JumpAtom, JumpMeasure, ProblemSpec, Sense, SpaceTimeGrid,
};
use crate::solver::ComparisonDeclarations;

pub const DEFAULT_NX: usize = 200;
pub const DEFAULT_NT: usize = 400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub model: ModelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub jumps: Vec<JumpAtom>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controls: Option<ControlSet>,
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sense: Option<Sense>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_nx")]
    pub nx: usize,
    #[serde(default = "default_nt")]
    pub nt: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_max: Option<f64>,
}

fn default_nx() -> usize {
    DEFAULT_NX
}

fn default_nt() -> usize {
    DEFAULT_NT
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { nx: DEFAULT_NX, nt: DEFAULT_NT, x_min: None, x_max: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UtilityConfig {
    Log,
    Linear,
    Power(f64),
}

/// Named parametric coefficient families. Drift may ramp linearly in time:
/// `b(t) = b + b_slope · t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    #[serde(alias = "merton-log")]
    Merton {
        b: f64,
        sigma: f64,
        #[serde(default)]
        b_slope: f64,
        x0: f64,
        #[serde(default = "default_utility")]
        utility: UtilityConfig,
        #[serde(default)]
        declarations: ComparisonDeclarations,
    },
    Riskmin {
        b: f64,
        sigma: f64,
        #[serde(default)]
        b_slope: f64,
        x0: f64,
        #[serde(default)]
        declarations: ComparisonDeclarations,
    },
    /// `α = a0 + a_x x + a_u u`, `β = s0 + s_u u`, `γ = jump_scale · ζ`,
    /// `g = g0 + g_y y − ½ g_zz z²`, `h = h[0] + h[1] x + h[2] x²`.
    Affine {
        x0: f64,
        #[serde(default)]
        a0: f64,
        #[serde(default)]
        a_x: f64,
        #[serde(default)]
        a_u: f64,
        #[serde(default)]
        s0: f64,
        #[serde(default)]
        s_u: f64,
        #[serde(default)]
        jump_scale: f64,
        #[serde(default)]
        g0: f64,
        #[serde(default)]
        g_y: f64,
        #[serde(default)]
        g_zz: f64,
        #[serde(default)]
        terminal: [f64; 3],
        domain: [f64; 2],
        #[serde(default)]
        declarations: ComparisonDeclarations,
    },
}

fn default_utility() -> UtilityConfig {
    UtilityConfig::Log
}

/// A config turned into solver inputs.
#[derive(Debug, Clone)]
pub struct BuiltProblem {
    pub spec: ProblemSpec,
    pub grid: SpaceTimeGrid,
    pub declarations: ComparisonDeclarations,
    /// Market parameters when the model is one of the benchmarks.
    pub market: Option<MarketParams>,
}

pub fn parse_problem_config(text: &str) -> Result<ProblemConfig> {
    serde_json::from_str(text).map_err(|e| Error::Config { line: e.line(), column: e.column(), message: e.to_string() })
}

impl ProblemConfig {
    pub fn build(&self) -> Result<BuiltProblem> {
        if !(self.horizon > 0.0) {
            return Err(Error::InvalidProblem(vec![format!("horizon nonpositive ({})", self.horizon)]));
        }
        let jumps = JumpMeasure::new(self.jumps.clone());
        let (mut spec, declarations, market) = match &self.model {
            ModelConfig::Merton { b, sigma, b_slope, x0, utility, declarations } => {
                let utility = match utility {
                    UtilityConfig::Log => Utility::Log,
                    UtilityConfig::Linear => Utility::Linear,
                    UtilityConfig::Power(p) => Utility::Power(*p),
                };
                let p = market(*b, *b_slope, *sigma, self.horizon, *x0, utility);
                (build_merton(&p)?, *declarations, Some(p))
            }
            ModelConfig::Riskmin { b, sigma, b_slope, x0, declarations } => {
                let p = market(*b, *b_slope, *sigma, self.horizon, *x0, Utility::Linear);
                (build_riskmin(&p)?, *declarations, Some(p))
            }
            ModelConfig::Affine {
                x0,
                a0,
                a_x,
                a_u,
                s0,
                s_u,
                jump_scale,
                g0,
                g_y,
                g_zz,
                terminal,
                domain,
                declarations,
            } => {
                let (a0, a_x, a_u, s0, s_u, js, g0, g_y, g_zz, h) =
                    (*a0, *a_x, *a_u, *s0, *s_u, *jump_scale, *g0, *g_y, *g_zz, *terminal);
                let coefficients = CoefficientSet::zero()
                    .with_alpha(move |a| a0 + a_x * a.x + a_u * a.u)
                    .with_beta(move |a| s0 + s_u * a.u)
                    .with_gamma(move |_, zeta| js * zeta)
                    .with_driver(move |a| g0 + g_y * a.y - 0.5 * g_zz * a.z * a.z)
                    .with_terminal(move |x| h[0] + h[1] * x + h[2] * x * x);
                let spec = ProblemSpec {
                    name: "affine".into(),
                    coefficients,
                    jumps: JumpMeasure::none(),
                    controls: ControlSet::interval(-1.0, 1.0, 0.01),
                    horizon: self.horizon,
                    x0: *x0,
                    sense: Sense::Maximize,
                    deterministic_coefficients: true,
                    domain: (domain[0], domain[1]),
                };
                (spec, *declarations, None)
            }
        };
        spec.jumps = jumps;
        if let Some(c) = &self.controls {
            spec.controls = c.clone();
        }
        if let Some(s) = self.sense {
            spec.sense = s;
        }
        let report = validate_problem(&spec);
        if !report.is_valid() {
            return Err(Error::InvalidProblem(report.violations));
        }
        let g = self.grid.unwrap_or_default();
        let (default_lo, default_hi) = match &self.model {
            ModelConfig::Merton { .. } => MERTON_DOMAIN,
            _ => spec.domain,
        };
        let grid = SpaceTimeGrid::uniform(
            self.horizon,
            g.nt,
            g.x_min.unwrap_or(default_lo),
            g.x_max.unwrap_or(default_hi),
            g.nx,
        )?;
        Ok(BuiltProblem { spec, grid, declarations, market })
    }
}

fn market(b: f64, b_slope: f64, sigma: f64, horizon: f64, x0: f64, utility: Utility) -> MarketParams {
    let p = MarketParams::constant(b, sigma, horizon, x0, utility);
    if b_slope != 0.0 {
        p.with_drift(move |t| b + b_slope * t)
    } else {
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const RISKMIN: &str = r#"{
        "model": { "family": "riskmin", "b": 0.2, "sigma": 0.4, "x0": 1.0 },
        "grid": { "nx": 51, "nt": 40 },
        "horizon": 1.0,
        "sense": "maximize"
    }"#;

    #[test]
    fn parses_and_builds() {
        let cfg = parse_problem_config(RISKMIN).unwrap();
        let built = cfg.build().unwrap();
        assert_eq!(built.grid.nx(), 51);
        assert_eq!(built.grid.x_min(), -1.0);
        assert!(built.market.is_some());
        let back = serde_json::to_string(&cfg).unwrap();
        assert_eq!(parse_problem_config(&back).unwrap(), cfg);
    }

    #[test]
    fn unknown_key_reports_position() {
        let text = "{\n  \"model\": { \"family\": \"riskmin\", \"b\": 0.2, \"sigma\": 0.4, \"x0\": 1.0 },\n  \"horizn\": 1.0\n}";
        match parse_problem_config(text).unwrap_err() {
            Error::Config { line, column, message } => {
                assert_eq!(line, 3);
                assert!(column > 0);
                assert!(message.contains("horizn"), "{message}");
            }
            e => panic!("{e}"),
        }
        let nested = r#"{"model": {"family": "merton", "b": 0.1, "sigma": 0.2, "x0": 1, "rate": 3}, "horizon": 1}"#;
        assert!(parse_problem_config(nested).is_err());
    }

    #[test]
    fn invariant_breaches_surface() {
        let cfg = parse_problem_config(
            r#"{"model": {"family": "merton", "b": 0.05, "sigma": 0.2, "x0": 1}, "horizon": 0}"#,
        )
        .unwrap();
        assert!(cfg.build().unwrap_err().to_string().contains("horizon nonpositive"));

        let cfg = parse_problem_config(
            r#"{"model": {"family": "affine", "x0": 0, "domain": [-1, 1]},
                "jumps": [{"zeta": 0.0, "weight": 1.0}], "horizon": 1}"#,
        )
        .unwrap();
        assert!(cfg.build().unwrap_err().to_string().contains("atom at zero"));
    }

    #[test]
    fn controls_and_utility_variants() {
        let cfg = parse_problem_config(
            r#"{"model": {"family": "merton", "b": 0.05, "sigma": 0.2, "x0": 1, "utility": {"power": 0.5}},
                "controls": {"list": [0, 1, 2]}, "horizon": 1, "sense": "minimize"}"#,
        )
        .unwrap();
        let built = cfg.build().unwrap();
        assert_eq!(built.spec.controls, ControlSet::List(vec![0.0, 1.0, 2.0]));
        assert_eq!(built.spec.sense, Sense::Minimize);
        assert!(((built.spec.coefficients.h_terminal)(4.0) - 4.0).abs() < 1e-12);
    }
}
