//! The transformed driver `G_u(t, x)`, its pointwise optimizer, and the
//! path-level Itô–Ventzell residual.
//!
//! ```text
//! G_u = g(t, x, y, z̃, k̃, u) + y'α + ½ y''β² + z'β
//!     + ∫ { y(x+γ) − y(x) − y'γ } ν(dζ) + ∫ { k(x+γ, ζ) − k(x, ζ) } ν(dζ)
//! z̃ = z + y'β,   k̃(ζ) = y(x+γ) − y(x) + k(x+γ, ζ)
//! ```
//!
//! α, β and γ are evaluated at the field values `(y, z, k)` at `(t, x)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{interp_row, lift_z, DecouplingField, DerivativeLayer, FieldMode};
use crate::mc::PathBundle;
use crate::model::{levy_integral_indexed, CoeffArgs, ControlSet, ProblemSpec, SpaceTimeGrid};
use crate::par::pairwise_sum;

/// Everything `G_u` needs at one time level.
#[derive(Debug, Clone)]
pub struct DriverContext<'a> {
    pub spec: &'a ProblemSpec,
    pub grid: &'a SpaceTimeGrid,
    pub t: f64,
    pub y: &'a [f64],
    pub z: &'a [f64],
    /// One spatial row per jump atom.
    pub k: Vec<&'a [f64]>,
    pub derivs: &'a DerivativeLayer,
}

impl<'a> DriverContext<'a> {
    pub fn new(
        spec: &'a ProblemSpec,
        grid: &'a SpaceTimeGrid,
        t: f64,
        y: &'a [f64],
        z: &'a [f64],
        k: Vec<&'a [f64]>,
        derivs: &'a DerivativeLayer,
    ) -> Result<Self> {
        let nx = grid.nx();
        let lens = [y.len(), z.len(), derivs.y_prime.len(), derivs.y_double_prime.len(), derivs.z_prime.len()];
        if lens.iter().any(|&l| l != nx) || k.iter().any(|row| row.len() != nx) {
            return Err(Error::Dimension(format!("driver context rows must have {nx} nodes")));
        }
        if k.len() != spec.jumps.len() {
            return Err(Error::Dimension(format!(
                "{} k rows for {} jump atoms",
                k.len(),
                spec.jumps.len()
            )));
        }
        if !(t >= 0.0 && t <= spec.horizon) {
            return Err(Error::TimeOutOfRange { t, horizon: spec.horizon });
        }
        Ok(DriverContext { spec, grid, t, y, z, k, derivs })
    }

    /// Context for time index `n` of a field.
    pub fn from_field(
        spec: &'a ProblemSpec,
        field: &'a DecouplingField,
        n: usize,
        derivs: &'a DerivativeLayer,
    ) -> Result<Self> {
        let k = (0..field.n_atoms()).map(|a| field.k_row(n, a)).collect();
        DriverContext::new(spec, field.grid(), field.grid().t_nodes()[n], field.y_row(n), field.z_row(n), k, derivs)
    }
}

/// `G_u` split into its additive pieces.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct DriverTerms {
    pub g: f64,
    /// `y'α`
    pub drift: f64,
    /// `½ y''β²`
    pub diffusion: f64,
    /// `z'β`
    pub cross: f64,
    /// `∫ { y(x+γ) − y(x) − y'γ } ν(dζ)`
    pub jump_y: f64,
    /// `∫ { k(x+γ, ζ) − k(x, ζ) } ν(dζ)`
    pub jump_k: f64,
    /// Number of shifted points `x + γ` that fell outside the grid.
    pub extrapolated: usize,
}

impl DriverTerms {
    pub fn total(&self) -> f64 {
        self.g + self.drift + self.diffusion + self.cross + self.jump_y + self.jump_k
    }
}

fn finite(name: &'static str, t: f64, x: f64, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFiniteCoefficient { name, t, x, value })
    }
}

pub fn driver_terms(ctx: &DriverContext<'_>, x_index: usize, u: f64) -> Result<DriverTerms> {
    let nx = ctx.grid.nx();
    if x_index >= nx {
        return Err(Error::IndexOutOfRange { index: x_index, len: nx });
    }
    let c = &ctx.spec.coefficients;
    let (t, x) = (ctx.t, ctx.grid.x_nodes()[x_index]);
    let (y, z) = (ctx.y[x_index], ctx.z[x_index]);
    let yp = ctx.derivs.y_prime[x_index];
    let ypp = ctx.derivs.y_double_prime[x_index];
    let zp = ctx.derivs.z_prime[x_index];
    let k_here: Vec<f64> = ctx.k.iter().map(|row| row[x_index]).collect();

    let args = CoeffArgs::new(t, x, y, z, &k_here, u);
    let alpha = finite("alpha", t, x, (c.alpha)(&args))?;
    let beta = finite("beta", t, x, (c.beta)(&args))?;

    let atoms = ctx.spec.jumps.atoms();
    let mut gammas = Vec::with_capacity(atoms.len());
    let mut extrapolated = 0;
    for atom in atoms {
        let gamma = finite("gamma", t, x, (c.gamma)(&args, atom.zeta))?;
        let shifted = x + gamma;
        if shifted < ctx.grid.x_min() || shifted > ctx.grid.x_max() {
            extrapolated += 1;
        }
        gammas.push(gamma);
    }
    let y_shift: Vec<f64> = gammas.iter().map(|g| interp_row(ctx.grid, ctx.y, x + g)).collect();
    let k_shift: Vec<f64> = gammas
        .iter()
        .zip(&ctx.k)
        .map(|(g, row)| interp_row(ctx.grid, row, x + g))
        .collect();

    let z_tilde = lift_z(z, yp, beta);
    let k_tilde: Vec<f64> = y_shift.iter().zip(&k_shift).map(|(ys, ks)| ys - y + ks).collect();
    let g = finite("g_driver", t, x, (c.g_driver)(&CoeffArgs::new(t, x, y, z_tilde, &k_tilde, u)))?;

    let jump_y = levy_integral_indexed(&ctx.spec.jumps, |a, _| y_shift[a] - y - yp * gammas[a])?;
    let jump_k = levy_integral_indexed(&ctx.spec.jumps, |a, _| k_shift[a] - k_here[a])?;

    Ok(DriverTerms {
        g,
        drift: yp * alpha,
        diffusion: 0.5 * ypp * beta * beta,
        cross: zp * beta,
        jump_y,
        jump_k,
        extrapolated,
    })
}

/// `G_u(t, x_i)`.
pub fn eval_driver(ctx: &DriverContext<'_>, x_index: usize, u: f64) -> Result<f64> {
    Ok(driver_terms(ctx, x_index, u)?.total())
}

/// Which route [`maximize_driver`] took.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerBranch {
    /// Quadratic in `u` with the right curvature; stationary point inside `V`.
    Vertex,
    /// As `Vertex`, but the stationary point was clamped to the interval.
    ClampedVertex,
    /// Quadratic with the wrong curvature for the requested sense; best endpoint.
    CurvatureEndpoint,
    /// Quadratic with vanishing second-order coefficient; grid search.
    DegenerateGrid,
    /// Not quadratic; grid search plus local golden-section polish.
    GridSearch,
    /// Finite control list; exhaustive.
    Enumeration,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriverOptimum {
    pub u_hat: f64,
    pub g_hat: f64,
    pub branch: OptimizerBranch,
    pub extrapolated: usize,
}

const QUAD_FIT_TOL: f64 = 1e-10;
const CURVATURE_EPS: f64 = 1e-12;

/// Pointwise optimizer of `u ↦ G_u(t, x_i)` over the control set, honoring
/// the problem's sense. Ties go to the smallest control.
pub fn maximize_driver(ctx: &DriverContext<'_>, x_index: usize) -> Result<DriverOptimum> {
    let sign = ctx.spec.sense.sign();
    let mut extrapolated = 0;
    let mut objective = |u: f64| -> Result<(f64, f64)> {
        let terms = driver_terms(ctx, x_index, u)?;
        extrapolated = extrapolated.max(terms.extrapolated);
        let g = terms.total();
        Ok((sign * g, g))
    };

    let result = match &ctx.spec.controls {
        ControlSet::List(values) => {
            let mut sorted = values.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let (u, g) = argmax(&sorted, &mut objective)?;
            (u, g, OptimizerBranch::Enumeration)
        }
        ControlSet::Interval { lo, hi, resolution } => {
            let (lo, hi, res) = (*lo, *hi, *resolution);
            let mid = 0.5 * (lo + hi);
            let half = 0.5 * (hi - lo);
            let probes: Vec<f64> = (0..5).map(|j| lo + (hi - lo) * j as f64 / 4.0).collect();
            let mut vals = [0.0; 5];
            for (v, &p) in vals.iter_mut().zip(&probes) {
                *v = objective(p)?.0;
            }
            // quadratic through s = -1, 0, 1 (probes 0, 2, 4); check at s = ±1/2
            let a = 0.5 * (vals[4] + vals[0] - 2.0 * vals[2]);
            let b = 0.5 * (vals[4] - vals[0]);
            let c = vals[2];
            let q = |s: f64| a * s * s + b * s + c;
            let scale = vals.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
            let quadratic = (q(-0.5) - vals[1]).abs() < QUAD_FIT_TOL * scale
                && (q(0.5) - vals[3]).abs() < QUAD_FIT_TOL * scale;

            if quadratic && a < -CURVATURE_EPS * scale {
                let s_star = -b / (2.0 * a);
                let raw = mid + half * s_star;
                let u = raw.clamp(lo, hi);
                let g = objective(u)?.1;
                let branch = if u == raw { OptimizerBranch::Vertex } else { OptimizerBranch::ClampedVertex };
                (u, g, branch)
            } else if quadratic && a > CURVATURE_EPS * scale {
                let (u, g) = argmax(&[lo, hi], &mut objective)?;
                (u, g, OptimizerBranch::CurvatureEndpoint)
            } else {
                let pts = ctx.spec.controls.search_points();
                let (u, g) = argmax(&pts, &mut objective)?;
                if quadratic {
                    (u, g, OptimizerBranch::DegenerateGrid)
                } else {
                    let (u, g) = golden_polish(u, g, (u - res).max(lo), (u + res).min(hi), sign, &mut objective)?;
                    (u, g, OptimizerBranch::GridSearch)
                }
            }
        }
    };
    Ok(DriverOptimum { u_hat: result.0, g_hat: result.1, branch: result.2, extrapolated })
}

/// Argmax of the objective over `points` (ascending), first maximizer wins.
fn argmax<F>(points: &[f64], objective: &mut F) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    let mut best: Option<(f64, f64, f64)> = None;
    for &u in points {
        let (obj, g) = objective(u)?;
        match best {
            Some((b, _, _)) if obj <= b => {}
            _ => best = Some((obj, u, g)),
        }
    }
    let (_, u, g) = best.ok_or_else(|| Error::InvalidArgument("empty control set".into()))?;
    Ok((u, g))
}

fn golden_polish<F>(u0: f64, g0: f64, mut a: f64, mut b: f64, sign: f64, objective: &mut F) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut best_u, mut best_g) = (u0, g0);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut gc) = objective(c)?;
    let (mut fd, mut gd) = objective(d)?;
    for _ in 0..60 {
        if fc >= fd {
            b = d;
            (d, fd, gd) = (c, fc, gc);
            c = b - INV_PHI * (b - a);
            (fc, gc) = objective(c)?;
        } else {
            a = c;
            (c, fc, gc) = (d, fd, gd);
            d = a + INV_PHI * (b - a);
            (fd, gd) = objective(d)?;
        }
        if (b - a).abs() < 1e-12 * (1.0 + best_u.abs()) {
            break;
        }
    }
    for (u, f, g) in [(c, fc, gc), (d, fd, gd)] {
        if f > sign * best_g {
            best_u = u;
            best_g = g;
        }
    }
    Ok((best_u, best_g))
}

/// Summary of a per-step residual sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualStats {
    pub mean: f64,
    pub rms: f64,
    pub max_abs: f64,
    pub steps: usize,
}

impl ResidualStats {
    pub fn from_values(values: &[f64]) -> Self {
        if values.is_empty() {
            return ResidualStats { mean: 0.0, rms: 0.0, max_abs: 0.0, steps: 0 };
        }
        let n = values.len() as f64;
        let squares: Vec<f64> = values.iter().map(|r| r * r).collect();
        ResidualStats {
            mean: pairwise_sum(values) / n,
            rms: (pairwise_sum(&squares) / n).sqrt(),
            max_abs: values.iter().fold(0.0, |m, r| m.max(r.abs())),
            steps: values.len(),
        }
    }
}

/// Per-step residuals of the composition `Y = y(t, X)` along one simulated path.
///
/// The field's own time increment `y(t_{n+1}, X_n) − y(t_n, X_n)` plays the
/// role of the `A(·) dt` term.
pub fn ito_ventzell_steps(
    field: &DecouplingField,
    spec: &ProblemSpec,
    bundle: &PathBundle,
    path: usize,
    dt: f64,
) -> Result<Vec<f64>> {
    if field.mode() != FieldMode::Deterministic {
        return Err(Error::InvalidArgument("Itô-Ventzell residual needs a deterministic-mode field".into()));
    }
    if (bundle.dt - dt).abs() > 1e-12 * dt {
        return Err(Error::DtMismatch { dt, horizon: bundle.dt });
    }
    if path >= bundle.n_paths {
        return Err(Error::IndexOutOfRange { index: path, len: bundle.n_paths });
    }
    let layers = field.all_derivatives()?;
    let atoms = spec.jumps.atoms();
    let c = &spec.coefficients;
    let xs = bundle.path_x(path);
    let counts = bundle.jump_counts(path);
    let mut out = Vec::with_capacity(bundle.n_steps());
    for n in 0..bundle.n_steps() {
        let (t0, t1) = (bundle.times[n], bundle.times[n + 1]);
        let (x0, x1) = (xs[n], xs[n + 1]);
        let u = bundle.control(path, n);
        let here = field.eval(t0, x0)?;
        let (yp, ypp, zp) = field.derivatives_at(&layers, t0, x0)?;
        let args = CoeffArgs::new(t0, x0, here.y, here.z, &here.k, u);
        let alpha = finite("alpha", t0, x0, (c.alpha)(&args))?;
        let beta = finite("beta", t0, x0, (c.beta)(&args))?;

        let field_increment = field.y_at(t1, x0)? - here.y;
        let mut drift = yp * alpha + 0.5 * ypp * beta * beta + zp * beta;
        let mut jump_part = 0.0;
        for (a, atom) in atoms.iter().enumerate() {
            let gamma = finite("gamma", t0, x0, (c.gamma)(&args, atom.zeta))?;
            let y_s = field.y_at(t0, x0 + gamma)?;
            let k_s = field.k_at(t0, x0 + gamma, a)?;
            drift += atom.weight * (y_s - here.y - yp * gamma) + atom.weight * (k_s - here.k[a]);
            let compensated = counts[n * atoms.len() + a] as f64 - atom.weight * dt;
            jump_part += (y_s - here.y + k_s) * compensated;
        }
        let diffusion = lift_z(here.z, yp, beta);
        let r = (field.y_at(t1, x1)? - here.y) - field_increment - drift * dt - diffusion * bundle.db(path, n) - jump_part;
        out.push(r);
    }
    Ok(out)
}

/// Residual statistics for one path; see [`ito_ventzell_steps`].
pub fn ito_ventzell_residual(
    field: &DecouplingField,
    spec: &ProblemSpec,
    bundle: &PathBundle,
    path: usize,
    dt: f64,
) -> Result<ResidualStats> {
    Ok(ResidualStats::from_values(&ito_ventzell_steps(field, spec, bundle, path, dt)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CoefficientSet, JumpMeasure, Sense};

    fn spec_with(coefficients: CoefficientSet, controls: ControlSet, jumps: JumpMeasure) -> ProblemSpec {
        ProblemSpec {
            name: "test".into(),
            coefficients,
            jumps,
            controls,
            horizon: 1.0,
            x0: 0.0,
            sense: Sense::Maximize,
            deterministic_coefficients: true,
            domain: (-1.0, 1.0),
        }
    }

    fn merton_coeffs(b: f64, sigma: f64) -> CoefficientSet {
        CoefficientSet::zero().with_alpha(move |a| a.u * b).with_beta(move |a| a.u * sigma)
    }

    fn riskmin_coeffs(b: f64, sigma: f64) -> CoefficientSet {
        merton_coeffs(b, sigma).with_driver(|a| -0.5 * a.z * a.z)
    }

    struct Layers {
        grid: SpaceTimeGrid,
        y: Vec<f64>,
        z: Vec<f64>,
        d: DerivativeLayer,
    }

    fn constant_layers(yp: f64, ypp: f64, zp: f64) -> Layers {
        let grid = SpaceTimeGrid::uniform(1.0, 1, -1.0, 1.0, 5).unwrap();
        Layers {
            grid,
            y: vec![0.0; 5],
            z: vec![0.0; 5],
            d: DerivativeLayer { y_prime: vec![yp; 5], y_double_prime: vec![ypp; 5], z_prime: vec![zp; 5] },
        }
    }

    #[test]
    fn merton_driver_value() {
        let spec = spec_with(merton_coeffs(0.1, 0.2), ControlSet::interval(-10.0, 10.0, 0.01), JumpMeasure::none());
        let l = constant_layers(1.0, -1.0, 0.0);
        let ctx = DriverContext::new(&spec, &l.grid, 0.0, &l.y, &l.z, vec![], &l.d).unwrap();
        assert!((eval_driver(&ctx, 2, 1.0).unwrap() - 0.08).abs() < 1e-15);

        let opt = maximize_driver(&ctx, 2).unwrap();
        assert!((opt.u_hat - 2.5).abs() < 1e-9, "{opt:?}");
        assert_eq!(opt.branch, OptimizerBranch::Vertex);
    }

    #[test]
    fn null_driver_is_zero_and_ties_to_smallest() {
        let spec = spec_with(CoefficientSet::zero(), ControlSet::interval(-1.0, 1.0, 0.5), JumpMeasure::none());
        let l = constant_layers(0.3, -2.0, 0.1);
        let ctx = DriverContext::new(&spec, &l.grid, 0.5, &l.y, &l.z, vec![], &l.d).unwrap();
        for u in [-1.0, 0.0, 0.7] {
            assert_eq!(eval_driver(&ctx, 1, u).unwrap(), 0.0);
        }
        let opt = maximize_driver(&ctx, 1).unwrap();
        assert_eq!(opt.u_hat, -1.0);
        assert_eq!(opt.branch, OptimizerBranch::DegenerateGrid);
    }

    #[test]
    fn riskmin_driver_value_and_optimizer() {
        let spec = spec_with(riskmin_coeffs(0.2, 0.4), ControlSet::interval(-10.0, 10.0, 0.01), JumpMeasure::none());
        let l = constant_layers(1.0, 0.0, 0.0);
        let ctx = DriverContext::new(&spec, &l.grid, 0.0, &l.y, &l.z, vec![], &l.d).unwrap();
        // -½(1.25·0.4)² + 1.25·0.2 = -0.125 + 0.25
        assert!((eval_driver(&ctx, 0, 1.25).unwrap() - 0.125).abs() < 1e-15);
        let opt = maximize_driver(&ctx, 0).unwrap();
        assert!((opt.u_hat - 1.25).abs() < 1e-9);
        assert!((opt.g_hat - 0.125).abs() < 1e-12);
    }

    #[test]
    fn enumeration_over_finite_list() {
        let spec = spec_with(merton_coeffs(0.1, 0.2), ControlSet::List(vec![2.5, 0.0, 1.0]), JumpMeasure::none());
        let l = constant_layers(1.0, -1.0, 0.0);
        let ctx = DriverContext::new(&spec, &l.grid, 0.0, &l.y, &l.z, vec![], &l.d).unwrap();
        // brute force over the list
        let best = [0.0, 1.0, 2.5]
            .iter()
            .map(|&u| (u, 0.1 * u - 0.5 * 0.04 * u * u))
            .fold((f64::NAN, f64::NEG_INFINITY), |acc, p| if p.1 > acc.1 { p } else { acc });
        let opt = maximize_driver(&ctx, 3).unwrap();
        assert_eq!(opt.u_hat, best.0);
        assert_eq!(opt.g_hat, eval_driver(&ctx, 3, 2.5).unwrap());
        assert_eq!(opt.branch, OptimizerBranch::Enumeration);
    }

    #[test]
    fn wrong_curvature_and_minimize() {
        // convex in u under maximize: best endpoint
        let spec = spec_with(merton_coeffs(0.1, 0.2), ControlSet::interval(-1.0, 3.0, 0.01), JumpMeasure::none());
        let l = constant_layers(1.0, 1.0, 0.0);
        let ctx = DriverContext::new(&spec, &l.grid, 0.0, &l.y, &l.z, vec![], &l.d).unwrap();
        let opt = maximize_driver(&ctx, 2).unwrap();
        assert_eq!(opt.branch, OptimizerBranch::CurvatureEndpoint);
        assert_eq!(opt.u_hat, 3.0);

        let mut min_spec = spec.clone();
        min_spec.sense = Sense::Minimize;
        let ctx = DriverContext::new(&min_spec, &l.grid, 0.0, &l.y, &l.z, vec![], &l.d).unwrap();
        let opt = maximize_driver(&ctx, 2).unwrap();
        // 0.1u + ½·0.04u² minimal at u = -2.5, clamped to -1
        assert_eq!(opt.branch, OptimizerBranch::ClampedVertex);
        assert_eq!(opt.u_hat, -1.0);
    }

    #[test]
    fn non_quadratic_grid_search_polishes() {
        let coeffs = CoefficientSet::zero().with_driver(|a| -(a.u - 0.123_456).abs().powf(1.5));
        let spec = spec_with(coeffs, ControlSet::interval(-1.0, 1.0, 0.01), JumpMeasure::none());
        let l = constant_layers(0.0, 0.0, 0.0);
        let ctx = DriverContext::new(&spec, &l.grid, 0.0, &l.y, &l.z, vec![], &l.d).unwrap();
        let opt = maximize_driver(&ctx, 0).unwrap();
        assert_eq!(opt.branch, OptimizerBranch::GridSearch);
        assert!((opt.u_hat - 0.123_456).abs() < 1e-6, "{}", opt.u_hat);
    }

    #[test]
    fn term_isolation_without_driver_or_jumps() {
        let coeffs = CoefficientSet::zero()
            .with_alpha(|a| 0.3 + a.x * a.u)
            .with_beta(|a| 0.5 - 0.2 * a.u + 0.1 * a.t);
        let spec = spec_with(coeffs.clone(), ControlSet::interval(-1.0, 1.0, 0.1), JumpMeasure::none());
        let l = constant_layers(0.7, -1.3, 0.4);
        let ctx = DriverContext::new(&spec, &l.grid, 0.25, &l.y, &l.z, vec![], &l.d).unwrap();
        let x = l.grid.x_nodes()[3];
        let u = 0.6;
        let alpha = 0.3 + x * u;
        let beta = 0.5 - 0.2 * u + 0.1 * 0.25;
        let expected = 0.7 * alpha + 0.5 * (-1.3) * beta * beta + 0.4 * beta;
        assert_eq!(eval_driver(&ctx, 3, u).unwrap(), expected);
    }

    #[test]
    fn nonfinite_coefficient_is_named() {
        let coeffs = CoefficientSet::zero().with_beta(|_| f64::INFINITY);
        let spec = spec_with(coeffs, ControlSet::interval(-1.0, 1.0, 0.1), JumpMeasure::none());
        let l = constant_layers(1.0, 1.0, 0.0);
        let ctx = DriverContext::new(&spec, &l.grid, 0.0, &l.y, &l.z, vec![], &l.d).unwrap();
        assert!(matches!(
            eval_driver(&ctx, 0, 0.0),
            Err(Error::NonFiniteCoefficient { name: "beta", .. })
        ));
    }

    #[test]
    fn context_rejects_mismatched_rows() {
        let spec = spec_with(CoefficientSet::zero(), ControlSet::interval(-1.0, 1.0, 0.1), JumpMeasure::single(0.5, 1.0));
        let l = constant_layers(1.0, 1.0, 0.0);
        assert!(DriverContext::new(&spec, &l.grid, 0.0, &l.y, &l.z, vec![], &l.d).is_err());
        assert!(DriverContext::new(&spec, &l.grid, 2.0, &l.y, &l.z, vec![&l.z], &l.d).is_err());
    }
}
