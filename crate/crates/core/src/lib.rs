//! Optimal control of coupled forward-backward SDEs with jumps through a
//! stochastic HJB equation.
//!
//! The pipeline: describe the controlled system as a [`ProblemSpec`], solve
//! the backward equation for the decoupling field with [`solve`] (which
//! maximizes the transformed driver `G_u` node by node), then check the
//! result against the original FBSDE by Monte Carlo ([`mc`]) and against the
//! closed forms in [`benchmarks`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmarks;
pub mod config;
pub mod driver;
pub mod error;
pub mod field;
pub mod mc;
pub mod model;
pub mod par;
pub mod quad;
pub mod solver;

pub use benchmarks::{
    build_merton, build_riskmin, merton_log_value, riskmin_closed_form, MarketParams, RiskMinSolution, Utility,
};
pub use config::{parse_problem_config, BuiltProblem, ProblemConfig};
pub use driver::{
    driver_terms, eval_driver, ito_ventzell_residual, maximize_driver, DriverContext, DriverOptimum, DriverTerms,
    OptimizerBranch, ResidualStats,
};
pub use error::{Error, Result};
pub use field::{lift_k, lift_z, DecouplingField, DerivativeLayer, FieldMode, FieldSample};
pub use mc::{
    bsde_residual, girsanov_entropy, minimal_risk_identity, reconstruct_backward, simulate_coupled,
    simulate_forward, BsdeResidual, ControlPolicy, GirsanovEstimate, PathBundle,
};
pub use model::{
    levy_integral, validate_problem, CoeffArgs, CoefficientSet, ControlSet, JumpAtom, JumpMeasure, ProblemSpec,
    Sense, SpaceTimeGrid, ValidationReport,
};
pub use solver::{
    check_comparison_hypotheses, classical_hjb_crosscheck, solve, verify_comparison, ComparisonDeclarations,
    ComparisonReport, ComparisonVerdict, CrosscheckReport, HypothesisReport, SolveReport,
};
