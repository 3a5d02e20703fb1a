//! The two worked problems: Merton utility maximization and entropic risk
//! minimization, as problem specs plus their closed-form oracles.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::{first_derivative, second_derivative};
use crate::model::{CoefficientSet, ControlSet, JumpMeasure, ProblemSpec, Sense, SpaceTimeGrid};
use crate::quad::{trapezoid, DEFAULT_NODES};

pub type TimeCurve = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Terminal utility of the Merton problem.
#[derive(Clone)]
pub enum Utility {
    Log,
    /// `x^p / p`, `p < 1`, `p ≠ 0`.
    Power(f64),
    Linear,
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Utility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Utility::Log => f.write_str("Log"),
            Utility::Power(p) => write!(f, "Power({p})"),
            Utility::Linear => f.write_str("Linear"),
            Utility::Custom(_) => f.write_str("Custom"),
        }
    }
}

impl Utility {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Utility::Log => x.ln(),
            Utility::Power(p) => x.powf(*p) / p,
            Utility::Linear => x,
            Utility::Custom(f) => f(x),
        }
    }
}

/// One risky asset `dS = S (b dt + σ dB)` plus a unit-price riskless asset.
#[derive(Clone)]
pub struct MarketParams {
    pub b: TimeCurve,
    pub sigma: TimeCurve,
    pub horizon: f64,
    pub x0: f64,
    pub utility: Utility,
}

impl fmt::Debug for MarketParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MarketParams")
            .field("b(0)", &(self.b)(0.0))
            .field("sigma(0)", &(self.sigma)(0.0))
            .field("horizon", &self.horizon)
            .field("x0", &self.x0)
            .field("utility", &self.utility)
            .finish()
    }
}

pub const SIGMA_MIN: f64 = 1e-8;
pub const DEFAULT_CONTROL_BOUND: f64 = 10.0;
pub const DEFAULT_CONTROL_RESOLUTION: f64 = 0.01;

impl MarketParams {
    pub fn constant(b: f64, sigma: f64, horizon: f64, x0: f64, utility: Utility) -> Self {
        MarketParams { b: Arc::new(move |_| b), sigma: Arc::new(move |_| sigma), horizon, x0, utility }
    }

    pub fn with_drift(mut self, b: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.b = Arc::new(b);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) {
            return Err(Error::InvalidProblem(vec![format!("horizon nonpositive ({})", self.horizon)]));
        }
        let min_sigma = (0..DEFAULT_NODES)
            .map(|i| (self.sigma)(self.horizon * i as f64 / (DEFAULT_NODES - 1) as f64))
            .fold(f64::INFINITY, f64::min);
        if !(min_sigma >= SIGMA_MIN) {
            return Err(Error::DegenerateVolatility { min_sigma });
        }
        Ok(())
    }

    /// `∫_t^T ½ (b/σ)² ds`
    pub fn half_sharpe_integral(&self, t: f64) -> f64 {
        trapezoid(|s| 0.5 * ((self.b)(s) / (self.sigma)(s)).powi(2), t, self.horizon, DEFAULT_NODES)
    }
}

fn wealth_coefficients(params: &MarketParams) -> CoefficientSet {
    let (b, s) = (params.b.clone(), params.sigma.clone());
    CoefficientSet::zero().with_alpha(move |a| a.u * b(a.t)).with_beta(move |a| a.u * s(a.t))
}

/// Default Merton state box; keeps clear of the log singularity at zero.
pub const MERTON_DOMAIN: (f64, f64) = (0.2, 5.0);

/// `α = u b(t)`, `β = u σ(t)`, `g = 0`, `h = U`, maximize.
pub fn build_merton(params: &MarketParams) -> Result<ProblemSpec> {
    params.validate()?;
    let utility = params.utility.clone();
    Ok(ProblemSpec {
        name: "merton".into(),
        coefficients: wealth_coefficients(params).with_terminal(move |x| utility.eval(x)),
        jumps: JumpMeasure::none(),
        controls: ControlSet::interval(-DEFAULT_CONTROL_BOUND, DEFAULT_CONTROL_BOUND, DEFAULT_CONTROL_RESOLUTION),
        horizon: params.horizon,
        x0: params.x0,
        sense: Sense::Maximize,
        deterministic_coefficients: true,
        domain: MERTON_DOMAIN,
    })
}

/// `ln x + ∫_t^T b²/(2σ²) ds`, the log-utility value function.
pub fn merton_log_value(t: f64, x: f64, params: &MarketParams) -> Result<f64> {
    if !matches!(params.utility, Utility::Log) {
        return Err(Error::InvalidArgument("closed form exists only for log utility".into()));
    }
    if !(x > 0.0) {
        return Err(Error::NonPositiveWealth(x));
    }
    Ok(x.ln() + params.half_sharpe_integral(t))
}

/// Wealth dynamics with `g(z) = −½ z²` and `h(x) = x`.
///
/// Minimizing the risk `−Y(0)` is maximizing `Y(0)`, so the sense is maximize.
pub fn build_riskmin(params: &MarketParams) -> Result<ProblemSpec> {
    params.validate()?;
    Ok(ProblemSpec {
        name: "riskmin".into(),
        coefficients: wealth_coefficients(params).with_driver(|a| -0.5 * a.z * a.z).with_terminal(|x| x),
        jumps: JumpMeasure::none(),
        controls: ControlSet::interval(-DEFAULT_CONTROL_BOUND, DEFAULT_CONTROL_BOUND, DEFAULT_CONTROL_RESOLUTION),
        horizon: params.horizon,
        x0: params.x0,
        sense: Sense::Maximize,
        deterministic_coefficients: true,
        domain: (params.x0 - 2.0, params.x0 + 2.0),
    })
}

/// Closed-form risk-minimization solution `ŷ(t, x) = x + a(t)`.
#[derive(Debug, Clone)]
pub struct RiskMinSolution {
    params: MarketParams,
    pub a0: f64,
    pub rho_min: f64,
}

impl RiskMinSolution {
    pub fn a(&self, t: f64) -> f64 {
        self.params.half_sharpe_integral(t)
    }

    pub fn y_hat(&self, t: f64, x: f64) -> f64 {
        x + self.a(t)
    }

    /// `b(t) / σ²(t)`
    pub fn u_hat(&self, t: f64) -> f64 {
        (self.params.b)(t) / (self.params.sigma)(t).powi(2)
    }
}

pub fn riskmin_closed_form(params: &MarketParams) -> Result<RiskMinSolution> {
    params.validate()?;
    let a0 = params.half_sharpe_integral(0.0);
    Ok(RiskMinSolution { params: params.clone(), a0, rho_min: -params.x0 - a0 })
}

/// Default grids: Merton on `[0.2, 5]`, risk-min on `x0 ± 2`.
pub fn merton_grid(params: &MarketParams, nx: usize, nt: usize) -> Result<SpaceTimeGrid> {
    SpaceTimeGrid::uniform(params.horizon, nt, MERTON_DOMAIN.0, MERTON_DOMAIN.1, nx)
}

pub fn riskmin_grid(params: &MarketParams, nx: usize, nt: usize) -> Result<SpaceTimeGrid> {
    SpaceTimeGrid::uniform(params.horizon, nt, params.x0 - 2.0, params.x0 + 2.0, nx)
}

/// Max interior residual of the discrete Merton operator
/// `∂_t φ − φ'² b² / (2 φ'' σ²)` applied to the log-utility closed form.
pub fn merton_pde_residual(params: &MarketParams, grid: &SpaceTimeGrid) -> Result<f64> {
    oracle_residual(params, grid, |t, x| merton_log_value(t, x, params), |yp, ypp, b, s| {
        -(yp * yp * b * b) / (2.0 * ypp * s * s)
    })
}

/// Same for the risk-min operator `∂_t ŷ + (ŷ' b)² / (2 (ŷ'² − ŷ'') σ²)`.
pub fn riskmin_pde_residual(params: &MarketParams, grid: &SpaceTimeGrid) -> Result<f64> {
    let sol = riskmin_closed_form(params)?;
    oracle_residual(params, grid, |t, x| Ok(sol.y_hat(t, x)), |yp, ypp, b, s| {
        (yp * b).powi(2) / (2.0 * (yp * yp - ypp) * s * s)
    })
}

fn oracle_residual(
    params: &MarketParams,
    grid: &SpaceTimeGrid,
    value: impl Fn(f64, f64) -> Result<f64>,
    operator: impl Fn(f64, f64, f64, f64) -> f64,
) -> Result<f64> {
    let ts = grid.t_nodes();
    let xs = grid.x_nodes();
    let mut worst: f64 = 0.0;
    let mut prev: Vec<f64> = xs.iter().map(|&x| value(ts[0], x)).collect::<Result<_>>()?;
    for n in 0..grid.nt() {
        let next: Vec<f64> = xs.iter().map(|&x| value(ts[n + 1], x)).collect::<Result<_>>()?;
        let dt = ts[n + 1] - ts[n];
        let yp = first_derivative(&next, grid.dx())?;
        let ypp = second_derivative(&next, grid.dx())?;
        let t = ts[n + 1];
        let (b, s) = ((params.b)(t), (params.sigma)(t));
        for i in 1..xs.len() - 1 {
            let r = (next[i] - prev[i]) / dt + operator(yp[i], ypp[i], b, s);
            worst = worst.max(r.abs());
        }
        prev = next;
    }
    Ok(worst)
}
