//! Backward explicit solver for the stochastic HJB equation in the
//! deterministic-coefficient case (`z = k = 0`):
//!
//! ```text
//! y(t_n, x) = y(t_{n+1}, x) + Δt · sup_u G_u(t_{n+1}, x),   y(T, x) = h(x)
//! ```
//!
//! Each output interval is split into equal explicit substeps whenever the
//! effective diffusion `½ β(û)²` would violate the explicit stability bound
//! `h ≤ Δx² / (2 D)`. The optimizer is re-run at every substep.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::benchmarks::{build_merton, MarketParams};
use crate::driver::{maximize_driver, DriverContext, DriverOptimum, OptimizerBranch};
use crate::error::{Error, Result};
use crate::field::{first_derivative, second_derivative, DecouplingField, DerivativeLayer};
use crate::model::{validate_problem, CoeffArgs, ProblemSpec, SpaceTimeGrid};
use crate::par::map_indices;

/// Fraction of the explicit stability bound used for substeps.
pub const STABILITY_SAFETY: f64 = 0.9;
/// Abort when `max|y|` grows by more than this factor across one layer.
pub const BLOWUP_FACTOR: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveDiagnostics {
    pub time_steps: usize,
    pub substeps: usize,
    pub nx: usize,
    pub dx: f64,
    pub max_dt: f64,
    /// Share of jump-shifted driver queries that landed outside the grid.
    pub extrapolated_fraction: f64,
    /// `max_x |G_û(t_n, x)|` per time layer.
    pub max_abs_g: Vec<f64>,
    pub branch_counts: BTreeMap<OptimizerBranch, usize>,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub field: DecouplingField,
    /// Row-major `[time][space]` feedback control `û(t_n, x_i)`.
    pub control_field: Vec<f64>,
    /// `ŷ(0, x0)`, the optimal value `sup_u Y^u(0)`.
    pub y0_at_x0: f64,
    pub diagnostics: SolveDiagnostics,
}

impl SolveReport {
    pub fn control_row(&self, n: usize) -> &[f64] {
        let nx = self.field.grid().nx();
        &self.control_field[n * nx..(n + 1) * nx]
    }
}

struct LayerOutcome {
    optima: Vec<DriverOptimum>,
    max_diffusion: f64,
}

fn optimize_layer(spec: &ProblemSpec, grid: &SpaceTimeGrid, t: f64, y: &[f64], zeros: &[f64]) -> Result<LayerOutcome> {
    let derivs = DerivativeLayer {
        y_prime: first_derivative(y, grid.dx())?,
        y_double_prime: second_derivative(y, grid.dx())?,
        z_prime: zeros.to_vec(),
    };
    let k_rows = vec![zeros; spec.jumps.len()];
    let ctx = DriverContext::new(spec, grid, t, y, zeros, k_rows, &derivs)?;
    let no_k = vec![0.0; spec.jumps.len()];
    let results = map_indices(grid.nx(), |i| -> Result<(DriverOptimum, f64)> {
        let opt = maximize_driver(&ctx, i)?;
        let args = CoeffArgs::new(t, grid.x_nodes()[i], y[i], 0.0, &no_k, opt.u_hat);
        let beta = (spec.coefficients.beta)(&args);
        Ok((opt, 0.5 * beta * beta))
    });
    let mut optima = Vec::with_capacity(grid.nx());
    let mut max_diffusion: f64 = 0.0;
    for r in results {
        let (opt, d) = r?;
        max_diffusion = max_diffusion.max(d);
        optima.push(opt);
    }
    Ok(LayerOutcome { optima, max_diffusion })
}

fn stable_step(spec: &ProblemSpec, grid: &SpaceTimeGrid, max_diffusion: f64) -> f64 {
    let mut h = f64::INFINITY;
    if max_diffusion > 0.0 {
        h = STABILITY_SAFETY * grid.dx() * grid.dx() / (2.0 * max_diffusion);
    }
    let lambda = spec.jumps.total_intensity();
    if lambda > 0.0 {
        h = h.min(0.5 / lambda);
    }
    h
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solves the HJB equation backward from `y(T, ·) = h(·)`.
pub fn solve(spec: &ProblemSpec, grid: &SpaceTimeGrid) -> Result<SolveReport> {
    if !spec.deterministic_coefficients {
        return Err(Error::StochasticCoefficients);
    }
    let report = validate_problem(spec);
    if !report.is_valid() {
        return Err(Error::InvalidProblem(report.violations));
    }
    if (grid.horizon() - spec.horizon).abs() > 1e-12 * spec.horizon {
        return Err(Error::InvalidGrid(format!(
            "grid horizon {} differs from problem horizon {}",
            grid.horizon(),
            spec.horizon
        )));
    }
    let nx = grid.nx();
    let nt = grid.nt();
    let ts = grid.t_nodes();
    let zeros = vec![0.0; nx];

    let mut layers: Vec<Vec<f64>> = vec![Vec::new(); nt + 1];
    layers[nt] = grid.x_nodes().iter().map(|&x| (spec.coefficients.h_terminal)(x)).collect();
    let mut controls = vec![0.0; (nt + 1) * nx];
    let mut max_abs_g = vec![0.0; nt + 1];
    let mut branch_counts: BTreeMap<OptimizerBranch, usize> = BTreeMap::new();
    let mut extrapolated = 0usize;
    let mut queries = 0usize;
    let mut substeps = 0usize;

    let mut record = |n: usize, outcome: &LayerOutcome, controls: &mut Vec<f64>, max_abs_g: &mut Vec<f64>| {
        for (i, opt) in outcome.optima.iter().enumerate() {
            controls[n * nx + i] = opt.u_hat;
            *branch_counts.entry(opt.branch).or_default() += 1;
            extrapolated += opt.extrapolated;
            queries += spec.jumps.len();
        }
        max_abs_g[n] = outcome.optima.iter().fold(0.0, |m, o| m.max(o.g_hat.abs()));
    };

    for n in (0..nt).rev() {
        let mut current = layers[n + 1].clone();
        let mut tau = ts[n + 1];
        let mut remaining = ts[n + 1] - ts[n];
        let mut first = true;
        while remaining > 0.0 {
            let outcome = optimize_layer(spec, grid, tau, &current, &zeros)?;
            if first {
                record(n + 1, &outcome, &mut controls, &mut max_abs_g);
                first = false;
            }
            let h_stable = stable_step(spec, grid, outcome.max_diffusion);
            let pieces = (remaining / h_stable).ceil().max(1.0);
            let h = if pieces <= 1.0 { remaining } else { remaining / pieces };
            for (y, opt) in current.iter_mut().zip(&outcome.optima) {
                *y += h * opt.g_hat;
            }
            substeps += 1;
            if pieces <= 1.0 {
                remaining = 0.0;
            } else {
                remaining -= h;
                tau -= h;
            }
            if let Some(node) = current.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteLayer { layer: n, node });
            }
        }
        let before = max_abs(&layers[n + 1]);
        let after = max_abs(&current);
        if after > BLOWUP_FACTOR * before.max(1.0) {
            return Err(Error::UnstableStep { layer: n, before, after });
        }
        layers[n] = current;
    }
    let outcome = optimize_layer(spec, grid, 0.0, &layers[0], &zeros)?;
    record(0, &outcome, &mut controls, &mut max_abs_g);

    let y: Vec<f64> = layers.into_iter().flatten().collect();
    let field = DecouplingField::deterministic(grid.clone(), spec.jumps.len(), y)?;
    let y0_at_x0 = field.y_at(0.0, spec.x0)?;
    Ok(SolveReport {
        field,
        control_field: controls,
        y0_at_x0,
        diagnostics: SolveDiagnostics {
            time_steps: nt,
            substeps,
            nx,
            dx: grid.dx(),
            max_dt: grid.max_dt(),
            extrapolated_fraction: if queries == 0 { 0.0 } else { extrapolated as f64 / queries as f64 },
            max_abs_g,
            branch_counts,
        },
    })
}

/// Analytic conditions that cannot be machine-checked; echoed into the report.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonDeclarations {
    #[serde(default)]
    pub lipschitz: bool,
    #[serde(default)]
    pub bounded: bool,
    #[serde(default)]
    pub square_integrable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub no_jumps: bool,
    pub alpha_independent_of_z: bool,
    pub lipschitz_declared: bool,
    pub bounded_declared: bool,
    pub square_integrability_declared: bool,
}

impl HypothesisReport {
    pub fn all_hold(&self) -> bool {
        self.no_jumps
            && self.alpha_independent_of_z
            && self.lipschitz_declared
            && self.bounded_declared
            && self.square_integrability_declared
    }
}

/// Machine-checks the no-jump and `α`-independent-of-`z` conditions; echoes the rest.
pub fn check_comparison_hypotheses(spec: &ProblemSpec, declarations: &ComparisonDeclarations) -> HypothesisReport {
    let (lo, hi) = spec.domain;
    let ts = [0.0, 0.5 * spec.horizon, spec.horizon];
    let xs: Vec<f64> = (0..5).map(|i| lo + (hi - lo) * i as f64 / 4.0).collect();
    let us = spec.controls.probe_points();
    let k = vec![0.0; spec.jumps.len()];
    let alpha = &spec.coefficients.alpha;
    let mut independent = true;
    'probe: for &t in &ts {
        for &x in &xs {
            for &y in &[-1.0, 0.0, 1.0] {
                for &z in &[-1.0, 0.0, 1.0] {
                    for &u in &us {
                        let base = alpha(&CoeffArgs::new(t, x, y, z, &k, u));
                        for delta in [1e-3, 0.5, -1.0] {
                            let moved = alpha(&CoeffArgs::new(t, x, y, z + delta, &k, u));
                            if !((moved - base).abs() < 1e-12) {
                                independent = false;
                                break 'probe;
                            }
                        }
                    }
                }
            }
        }
    }
    HypothesisReport {
        no_jumps: spec.jumps.is_empty(),
        alpha_independent_of_z: independent,
        lipschitz_declared: declarations.lipschitz,
        bounded_declared: declarations.bounded,
        square_integrability_declared: declarations.square_integrable,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComparisonVerdict {
    Pass,
    Fail,
    HypothesisViolated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub verdict: ComparisonVerdict,
    /// `min (y2 − y1)` over the grid.
    pub min_gap: f64,
    pub argmin_t: f64,
    pub argmin_x: f64,
    pub tolerance: f64,
    pub terminal_ordered: bool,
    pub driver_ordered: bool,
    /// Largest observed `Ĝ1 − Ĝ2` on the probe lattice (≤ 0 when ordered).
    pub max_driver_excess: f64,
    pub y0_first: f64,
    pub y0_second: f64,
}

/// Solves both problems and checks `y1 ≤ y2` on the grid, after spot-checking
/// `h1 ≤ h2` at the nodes and `Ĝ1 ≤ Ĝ2` on sampled layers of both solutions.
pub fn verify_comparison(first: &ProblemSpec, second: &ProblemSpec, grid: &SpaceTimeGrid) -> Result<ComparisonReport> {
    let s1 = solve(first, grid)?;
    let s2 = solve(second, grid)?;
    let nx = grid.nx();
    let nt = grid.nt();

    let terminal_ordered = grid
        .x_nodes()
        .iter()
        .all(|&x| (first.coefficients.h_terminal)(x) <= (second.coefficients.h_terminal)(x));

    let stride = (nt / 10).max(1);
    let mut max_excess = f64::NEG_INFINITY;
    for report in [&s1, &s2] {
        for n in (0..=nt).step_by(stride) {
            let derivs = report.field.estimate_derivatives(n)?;
            let c1 = DriverContext::from_field(first, &report.field, n, &derivs)?;
            let c2 = DriverContext::from_field(second, &report.field, n, &derivs)?;
            for i in 0..nx {
                let g1 = maximize_driver(&c1, i)?.g_hat;
                let g2 = maximize_driver(&c2, i)?.g_hat;
                max_excess = max_excess.max(g1 - g2 - 1e-12 * (1.0 + g1.abs().max(g2.abs())));
            }
        }
    }
    let driver_ordered = max_excess <= 0.0;

    let (y1, y2) = (s1.field.y_values(), s2.field.y_values());
    let (mut min_gap, mut arg) = (f64::INFINITY, 0);
    for (j, (a, b)) in y1.iter().zip(y2).enumerate() {
        if b - a < min_gap {
            min_gap = b - a;
            arg = j;
        }
    }
    let tolerance = 10.0 * grid.max_dt();
    let verdict = if !(terminal_ordered && driver_ordered) {
        ComparisonVerdict::HypothesisViolated
    } else if min_gap >= -tolerance {
        ComparisonVerdict::Pass
    } else {
        ComparisonVerdict::Fail
    };
    Ok(ComparisonReport {
        verdict,
        min_gap,
        argmin_t: grid.t_nodes()[arg / nx],
        argmin_x: grid.x_nodes()[arg % nx],
        tolerance,
        terminal_ordered,
        driver_ordered,
        max_driver_excess: max_excess,
        y0_first: s1.y0_at_x0,
        y0_second: s2.y0_at_x0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrosscheckReport {
    /// Max `|û_stochastic − û_classical|` over interior nodes and all layers.
    pub max_discrepancy: f64,
    /// Max `|û_solver − clamp(û_classical)|`, the solver's recorded control
    /// against the closed-form optimizer on the same field.
    pub max_solver_gap: f64,
    pub nodes_checked: usize,
    /// Nodes skipped because `y'' = 0` there.
    pub nodes_skipped: usize,
    pub y0_at_x0: f64,
}

/// Solves the Merton problem, then evaluates on the solved field both the
/// stochastic-HJB optimizer `−(y'b + z'σ)/(y''σ²)` (with `z' = 0`) and the
/// classical one `−b φ' / (φ'' σ²)`.
pub fn classical_hjb_crosscheck(params: &MarketParams, grid: &SpaceTimeGrid) -> Result<CrosscheckReport> {
    let spec = build_merton(params)?;
    let report = solve(&spec, grid)?;
    let nx = grid.nx();
    let (lo, hi) = spec.controls.bounds();
    let (mut max_discrepancy, mut max_solver_gap): (f64, f64) = (0.0, 0.0);
    let (mut checked, mut skipped) = (0, 0);
    for (n, &t) in grid.t_nodes().iter().enumerate() {
        let d = report.field.estimate_derivatives(n)?;
        let (b, s) = ((params.b)(t), (params.sigma)(t));
        for i in 1..nx - 1 {
            let (yp, ypp, zp) = (d.y_prime[i], d.y_double_prime[i], d.z_prime[i]);
            if ypp == 0.0 {
                skipped += 1;
                continue;
            }
            let stochastic = -(yp * b + zp * s) / (ypp * s * s);
            let classical = -(b * yp) / (ypp * s * s);
            max_discrepancy = max_discrepancy.max((stochastic - classical).abs());
            if ypp < 0.0 {
                max_solver_gap = max_solver_gap.max((report.control_row(n)[i] - classical.clamp(lo, hi)).abs());
            }
            checked += 1;
        }
    }
    Ok(CrosscheckReport {
        max_discrepancy,
        max_solver_gap,
        nodes_checked: checked,
        nodes_skipped: skipped,
        y0_at_x0: report.y0_at_x0,
    })
}
