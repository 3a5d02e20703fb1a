use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite integrand value {value} at jump atom {index} (zeta = {zeta})")]
    NonFiniteIntegrand { index: usize, zeta: f64, value: f64 },

    #[error("coefficient `{name}` returned non-finite value {value} at t = {t}, x = {x}")]
    NonFiniteCoefficient { name: &'static str, t: f64, x: f64, value: f64 },

    #[error("grid needs at least {needed} spatial nodes, got {got}")]
    TooFewNodes { needed: usize, got: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid problem: {}", .0.join("; "))]
    InvalidProblem(Vec<String>),

    #[error("solver requires deterministic coefficients")]
    StochasticCoefficients,

    #[error("unstable step size: max|y| grew from {before:e} to {after:e} at layer {layer}")]
    UnstableStep { layer: usize, before: f64, after: f64 },

    #[error("non-finite value in layer {layer} at node {node}")]
    NonFiniteLayer { layer: usize, node: usize },

    #[error("dt = {dt} does not divide horizon {horizon}")]
    DtMismatch { dt: f64, horizon: f64 },

    #[error("non-finite state on path {path} at step {step}")]
    NonFinitePath { path: usize, step: usize },

    #[error("control policy undefined at t = {t}, x = {x}")]
    PolicyUndefined { t: f64, x: f64 },

    #[error("path bundle is missing reconstructed {0}")]
    MissingReconstruction(&'static str),

    #[error("volatility too close to zero ({min_sigma:e}) on the quadrature lattice")]
    DegenerateVolatility { min_sigma: f64 },

    #[error("log value requires x > 0, got {0}")]
    NonPositiveWealth(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error at line {line}, column {column}: {message}")]
    Config { line: usize, column: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
