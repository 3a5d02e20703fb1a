//! Jump-diffusion Monte Carlo for the forward equation, backward
//! reconstruction through a decoupling field, and the entropy estimator.
//!
//! Every path owns a ChaCha8 stream selected by `(seed, path index)`, and
//! all reductions run over path-ordered vectors, so results do not depend
//! on how paths are scheduled across threads.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::Serialize;

use crate::benchmarks::{riskmin_closed_form, MarketParams};
use crate::driver::ResidualStats;
use crate::error::{Error, Result};
use crate::field::{lift_k, lift_z, DecouplingField, FieldMode};
use crate::model::{CoeffArgs, ProblemSpec, SpaceTimeGrid};
use crate::par::{map_indices, pairwise_sum};
use crate::quad::{trapezoid, DEFAULT_NODES};

/// Feedback control used by the forward simulation.
#[derive(Clone)]
pub enum ControlPolicy {
    Constant(f64),
    /// Control values on a grid, row-major `[time][space]`, as produced by the solver.
    Field { grid: SpaceTimeGrid, values: Vec<f64> },
    Feedback { id: String, f: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync> },
}

impl fmt::Debug for ControlPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ControlPolicy({})", self.id())
    }
}

impl ControlPolicy {
    pub fn feedback(id: impl Into<String>, f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        ControlPolicy::Feedback { id: id.into(), f: Arc::new(f) }
    }

    pub fn id(&self) -> String {
        match self {
            ControlPolicy::Constant(u) => format!("constant:{u}"),
            ControlPolicy::Field { grid, .. } => format!("field:{}x{}", grid.nt() + 1, grid.nx()),
            ControlPolicy::Feedback { id, .. } => format!("feedback:{id}"),
        }
    }

    fn eval(&self, spec: &ProblemSpec, t: f64, x: f64) -> Result<f64> {
        let u = match self {
            ControlPolicy::Constant(u) => *u,
            ControlPolicy::Field { grid, values } => {
                let (ti, wt) = grid.locate_time(t)?;
                let nx = grid.nx();
                let t1 = (ti + 1).min(grid.nt());
                let row = |n: usize| &values[n * nx..(n + 1) * nx];
                let a = crate::field::interp_row(grid, row(ti), x);
                let v = if wt == 0.0 { a } else { (1.0 - wt) * a + wt * crate::field::interp_row(grid, row(t1), x) };
                spec.controls.project(v)
            }
            ControlPolicy::Feedback { f, .. } => f(t, x),
        };
        if u.is_finite() {
            Ok(u)
        } else {
            Err(Error::PolicyUndefined { t, x })
        }
    }
}

/// Monte Carlo ensemble of forward paths, optionally with reconstructed `(Y, Z, K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    pub n_paths: usize,
    pub dt: f64,
    pub times: Vec<f64>,
    pub n_atoms: usize,
    pub seed: u64,
    pub control_policy_id: String,
    /// `[path][time]`, `n_steps + 1` entries per path.
    x: Vec<f64>,
    /// `[path][step]`
    db: Vec<f64>,
    /// `[path][step]`
    u: Vec<f64>,
    /// `[path][step][atom]` Poisson counts.
    counts: Vec<u32>,
    pub y: Option<Vec<f64>>,
    pub z: Option<Vec<f64>>,
    /// `[path][time][atom]`
    pub k: Option<Vec<f64>>,
    /// Fraction of reconstruction queries that left the field's spatial box.
    pub extrapolated_fraction: f64,
}

impl PathBundle {
    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn path_x(&self, p: usize) -> &[f64] {
        let m = self.times.len();
        &self.x[p * m..(p + 1) * m]
    }

    pub fn db(&self, p: usize, n: usize) -> f64 {
        self.db[p * self.n_steps() + n]
    }

    pub fn control(&self, p: usize, n: usize) -> f64 {
        self.u[p * self.n_steps() + n]
    }

    /// Per-step, per-atom jump counts of one path.
    pub fn jump_counts(&self, p: usize) -> &[u32] {
        let w = self.n_steps() * self.n_atoms;
        &self.counts[p * w..(p + 1) * w]
    }

    /// `(time index, atom index)` of every jump on a path, one entry per jump.
    pub fn jump_marks(&self, p: usize) -> Vec<(usize, usize)> {
        let mut marks = Vec::new();
        for (i, &c) in self.jump_counts(p).iter().enumerate() {
            for _ in 0..c {
                marks.push((i / self.n_atoms, i % self.n_atoms));
            }
        }
        marks
    }

    pub fn terminal_x(&self) -> Vec<f64> {
        (0..self.n_paths).map(|p| *self.path_x(p).last().unwrap()).collect()
    }

    pub fn stats(&self, spec: &ProblemSpec) -> BundleStats {
        let xt = self.terminal_x();
        let (mean, var) = mean_var(&xt);
        let jumps: Vec<f64> = (0..self.n_paths)
            .map(|p| self.jump_counts(p).iter().map(|&c| c as f64).sum())
            .collect();
        let (jm, jv) = mean_var(&jumps);
        BundleStats {
            n_paths: self.n_paths,
            n_steps: self.n_steps(),
            dt: self.dt,
            seed: self.seed,
            control_policy_id: self.control_policy_id.clone(),
            mean_x_terminal: mean,
            var_x_terminal: var,
            se_mean_x_terminal: (var / self.n_paths as f64).sqrt(),
            mean_jump_count: jm,
            var_jump_count: jv,
            expected_jump_count: spec.jumps.total_intensity() * self.times[self.times.len() - 1],
        }
    }

    /// One row per path × time: `path,t,X,Y,Z,K_1..K_A`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut header = String::from("path,t,X,Y,Z");
        for a in 1..=self.n_atoms {
            header.push_str(&format!(",K_{a}"));
        }
        writeln!(w, "{header}")?;
        let m = self.times.len();
        for p in 0..self.n_paths {
            for (n, t) in self.times.iter().enumerate() {
                let i = p * m + n;
                let opt = |v: &Option<Vec<f64>>| v.as_ref().map_or(f64::NAN, |v| v[i]);
                let mut line = format!("{p},{t:.16e},{:.16e},{:.16e},{:.16e}", self.x[i], opt(&self.y), opt(&self.z));
                for a in 0..self.n_atoms {
                    let k = self.k.as_ref().map_or(f64::NAN, |k| k[i * self.n_atoms + a]);
                    line.push_str(&format!(",{k:.16e}"));
                }
                writeln!(w, "{line}")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BundleStats {
    pub n_paths: usize,
    pub n_steps: usize,
    pub dt: f64,
    pub seed: u64,
    pub control_policy_id: String,
    pub mean_x_terminal: f64,
    pub var_x_terminal: f64,
    pub se_mean_x_terminal: f64,
    pub mean_jump_count: f64,
    pub var_jump_count: f64,
    pub expected_jump_count: f64,
}

/// Sample mean and unbiased sample variance.
pub fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = pairwise_sum(values) / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    (mean, pairwise_sum(&sq) / (n - 1.0))
}

pub(crate) fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

pub(crate) fn time_steps(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !(horizon > 0.0) {
        return Err(Error::DtMismatch { dt, horizon });
    }
    let m = (horizon / dt).round();
    if m < 1.0 || (m * dt - horizon).abs() > 1e-9 {
        return Err(Error::DtMismatch { dt, horizon });
    }
    Ok(m as usize)
}

/// Euler–Maruyama simulation of the controlled forward equation with
/// compensated finite-atom jumps. Coefficients see `y = z = k = 0`.
pub fn simulate_forward(
    spec: &ProblemSpec,
    policy: &ControlPolicy,
    n_paths: usize,
    dt: f64,
    seed: u64,
) -> Result<PathBundle> {
    simulate(spec, policy, None, n_paths, dt, seed)
}

/// As [`simulate_forward`], but coefficients read `(y, z, k)` from `field`
/// at the current state, for specs whose forward equation is coupled.
pub fn simulate_coupled(
    spec: &ProblemSpec,
    policy: &ControlPolicy,
    field: &DecouplingField,
    n_paths: usize,
    dt: f64,
    seed: u64,
) -> Result<PathBundle> {
    simulate(spec, policy, Some(field), n_paths, dt, seed)
}

struct PathData {
    x: Vec<f64>,
    db: Vec<f64>,
    u: Vec<f64>,
    counts: Vec<u32>,
}

fn simulate(
    spec: &ProblemSpec,
    policy: &ControlPolicy,
    coupling: Option<&DecouplingField>,
    n_paths: usize,
    dt: f64,
    seed: u64,
) -> Result<PathBundle> {
    if n_paths == 0 {
        return Err(Error::InvalidArgument("n_paths must be at least 1".into()));
    }
    let m = time_steps(spec.horizon, dt)?;
    let times: Vec<f64> = (0..=m).map(|n| if n == m { spec.horizon } else { n as f64 * dt }).collect();
    let atoms = spec.jumps.atoms();
    let poissons: Vec<Option<Poisson<f64>>> = atoms
        .iter()
        .map(|a| if a.weight > 0.0 { Poisson::new(a.weight * dt).ok() } else { None })
        .collect();
    let sqrt_dt = dt.sqrt();
    let c = &spec.coefficients;
    let zeros = vec![0.0; atoms.len()];

    let simulate_path = |p: usize| -> Result<PathData> {
        let mut rng = path_rng(seed, p);
        let mut x = Vec::with_capacity(m + 1);
        let mut db = Vec::with_capacity(m);
        let mut us = Vec::with_capacity(m);
        let mut counts = Vec::with_capacity(m * atoms.len());
        let mut state = spec.x0;
        x.push(state);
        for (n, &t) in times[..m].iter().enumerate() {
            let u = policy.eval(spec, t, state)?;
            let sample = match coupling {
                Some(f) => Some(f.eval(t, state)?),
                None => None,
            };
            let (yv, zv, kv) = match &sample {
                Some(s) => (s.y, s.z, s.k.as_slice()),
                None => (0.0, 0.0, zeros.as_slice()),
            };
            let args = CoeffArgs::new(t, state, yv, zv, kv, u);
            let alpha = (c.alpha)(&args);
            let beta = (c.beta)(&args);
            let d_b: f64 = sqrt_dt * rng.sample::<f64, _>(StandardNormal);
            let mut next = state + alpha * dt + beta * d_b;
            for (a, atom) in atoms.iter().enumerate() {
                let count = match &poissons[a] {
                    Some(dist) => dist.sample(&mut rng) as u32,
                    None => 0,
                };
                let gamma = (c.gamma)(&args, atom.zeta);
                next += gamma * (count as f64 - atom.weight * dt);
                counts.push(count);
            }
            if !next.is_finite() {
                return Err(Error::NonFinitePath { path: p, step: n });
            }
            state = next;
            x.push(state);
            db.push(d_b);
            us.push(u);
        }
        Ok(PathData { x, db, u: us, counts })
    };

    let paths = map_indices(n_paths, simulate_path);
    let mut bundle = PathBundle {
        n_paths,
        dt,
        times,
        n_atoms: atoms.len(),
        seed,
        control_policy_id: policy.id(),
        x: Vec::with_capacity(n_paths * (m + 1)),
        db: Vec::with_capacity(n_paths * m),
        u: Vec::with_capacity(n_paths * m),
        counts: Vec::with_capacity(n_paths * m * atoms.len()),
        y: None,
        z: None,
        k: None,
        extrapolated_fraction: 0.0,
    };
    for path in paths {
        let path = path?;
        bundle.x.extend(path.x);
        bundle.db.extend(path.db);
        bundle.u.extend(path.u);
        bundle.counts.extend(path.counts);
    }
    Ok(bundle)
}

/// `(Y, Z, K, extrapolated count)` of one path.
type Reconstructed = (Vec<f64>, Vec<f64>, Vec<f64>, usize);

/// Fills `Y = y(t, X)`, `Z = z + y'β`, `K(ζ) = y(x+γ) − y(x) + k(x+γ, ζ)` along every path.
pub fn reconstruct_backward(field: &DecouplingField, mut bundle: PathBundle, spec: &ProblemSpec) -> Result<PathBundle> {
    if field.mode() != FieldMode::Deterministic {
        return Err(Error::InvalidArgument("reconstruction needs a deterministic-mode field".into()));
    }
    if field.n_atoms() != bundle.n_atoms {
        return Err(Error::Dimension(format!(
            "field has {} atoms, bundle {}",
            field.n_atoms(),
            bundle.n_atoms
        )));
    }
    let layers = field.all_derivatives()?;
    let atoms = spec.jumps.atoms();
    let c = &spec.coefficients;
    let m = bundle.times.len();
    let b = &bundle;

    let per_path = map_indices(b.n_paths, |p| -> Result<Reconstructed> {
        let xs = b.path_x(p);
        let mut ys = Vec::with_capacity(m);
        let mut zs = Vec::with_capacity(m);
        let mut ks = Vec::with_capacity(m * atoms.len());
        let mut outside = 0;
        for (n, (&t, &x)) in b.times.iter().zip(xs).enumerate() {
            let s = field.eval(t, x)?;
            if s.extrapolated {
                outside += 1;
            }
            let u = b.control(p, n.min(m - 2));
            let (yp, _, _) = field.derivatives_at(&layers, t, x)?;
            let args = CoeffArgs::new(t, x, s.y, s.z, &s.k, u);
            let beta = (c.beta)(&args);
            ys.push(s.y);
            zs.push(lift_z(s.z, yp, beta));
            for (a, atom) in atoms.iter().enumerate() {
                let gamma = (c.gamma)(&args, atom.zeta);
                ks.push(lift_k(field, t, x, gamma, a)?);
            }
        }
        Ok((ys, zs, ks, outside))
    });

    let mut y = Vec::with_capacity(b.n_paths * m);
    let mut z = Vec::with_capacity(b.n_paths * m);
    let mut k = Vec::with_capacity(b.n_paths * m * atoms.len());
    let mut outside = 0;
    for r in per_path {
        let (ys, zs, ks, o) = r?;
        y.extend(ys);
        z.extend(zs);
        k.extend(ks);
        outside += o;
    }
    bundle.extrapolated_fraction = outside as f64 / (bundle.n_paths * m) as f64;
    bundle.y = Some(y);
    bundle.z = Some(z);
    bundle.k = Some(k);
    Ok(bundle)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BsdeResidual {
    /// Statistics of the per-step residuals over all paths and steps.
    pub step: ResidualStats,
    /// RMS over paths of the accumulated residual `Σ_n r_n`.
    pub path_rms: f64,
    /// Mean over paths of the accumulated residual.
    pub path_mean: f64,
    /// `max_p |Y_M − h(X_M)|`
    pub terminal_mismatch: f64,
}

/// Residual of the backward equation along reconstructed paths:
/// `r_n = Y_{n+1} − Y_n + g(·) dt − Z_n ΔB_n − Σ_a K_{n,a} ΔÑ_{n,a}`.
pub fn bsde_residual(spec: &ProblemSpec, bundle: &PathBundle) -> Result<BsdeResidual> {
    let y = bundle.y.as_ref().ok_or(Error::MissingReconstruction("Y"))?;
    let z = bundle.z.as_ref().ok_or(Error::MissingReconstruction("Z"))?;
    let k = bundle.k.as_ref().ok_or(Error::MissingReconstruction("K"))?;
    let atoms = spec.jumps.atoms();
    let na = atoms.len();
    let m = bundle.times.len();
    let dt = bundle.dt;
    let c = &spec.coefficients;

    let per_path = map_indices(bundle.n_paths, |p| -> Result<(Vec<f64>, f64, f64)> {
        let xs = bundle.path_x(p);
        let counts = bundle.jump_counts(p);
        let mut steps = Vec::with_capacity(m - 1);
        for n in 0..m - 1 {
            let i = p * m + n;
            let kn = &k[i * na..(i + 1) * na];
            let t = bundle.times[n];
            let args = CoeffArgs::new(t, xs[n], y[i], z[i], kn, bundle.control(p, n));
            let g = (c.g_driver)(&args);
            if !g.is_finite() {
                return Err(Error::NonFiniteCoefficient { name: "g_driver", t, x: xs[n], value: g });
            }
            let mut jump = 0.0;
            for (a, atom) in atoms.iter().enumerate() {
                jump += kn[a] * (counts[n * na + a] as f64 - atom.weight * dt);
            }
            steps.push(y[i + 1] - y[i] + g * dt - z[i] * bundle.db(p, n) - jump);
        }
        let total = steps.iter().sum();
        let terminal = (y[p * m + m - 1] - (c.h_terminal)(xs[m - 1])).abs();
        Ok((steps, total, terminal))
    });

    let mut all = Vec::with_capacity(bundle.n_paths * (m - 1));
    let mut totals = Vec::with_capacity(bundle.n_paths);
    let mut terminal_mismatch: f64 = 0.0;
    for r in per_path {
        let (steps, total, terminal) = r?;
        all.extend(steps);
        totals.push(total);
        terminal_mismatch = terminal_mismatch.max(terminal);
    }
    let sq: Vec<f64> = totals.iter().map(|v| v * v).collect();
    let np = totals.len() as f64;
    Ok(BsdeResidual {
        step: ResidualStats::from_values(&all),
        path_rms: (pairwise_sum(&sq) / np).sqrt(),
        path_mean: pairwise_sum(&totals) / np,
        terminal_mismatch,
    })
}

/// Monte Carlo estimate of `H(Q|P) = E[Γ(T) ln Γ(T)]` against its closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GirsanovEstimate {
    pub entropy_hat: f64,
    pub std_err: f64,
    pub n_paths: usize,
    pub closed_form: f64,
    /// Sample mean of `Γ(T)` and its standard error (martingale check).
    pub gamma_mean: f64,
    pub gamma_std_err: f64,
}

impl GirsanovEstimate {
    pub fn within(&self, n_se: f64) -> bool {
        (self.entropy_hat - self.closed_form).abs() <= n_se * self.std_err
    }
}

/// `½ ∫_0^T (b/σ)² dt` by trapezoid quadrature.
pub fn entropy_closed_form(b: &dyn Fn(f64) -> f64, sigma: &dyn Fn(f64) -> f64, horizon: f64) -> f64 {
    trapezoid(|t| 0.5 * (b(t) / sigma(t)).powi(2), 0.0, horizon, DEFAULT_NODES)
}

/// Simulates `ln Γ` exactly per step,
/// `ln Γ_{n+1} = ln Γ_n − θ_n ΔB_n − ½ θ_n² dt` with `θ = b/σ`,
/// and averages `Γ(T) ln Γ(T)`.
pub fn girsanov_entropy(
    b: &(dyn Fn(f64) -> f64 + Sync),
    sigma: &(dyn Fn(f64) -> f64 + Sync),
    horizon: f64,
    n_paths: usize,
    dt: f64,
    seed: u64,
) -> Result<GirsanovEstimate> {
    if n_paths == 0 {
        return Err(Error::InvalidArgument("n_paths must be at least 1".into()));
    }
    let min_sigma = (0..DEFAULT_NODES)
        .map(|i| sigma(horizon * i as f64 / (DEFAULT_NODES - 1) as f64).abs())
        .fold(f64::INFINITY, f64::min);
    if !(min_sigma > 1e-8) {
        return Err(Error::DegenerateVolatility { min_sigma });
    }
    let m = time_steps(horizon, dt)?;
    let theta: Vec<f64> = (0..m).map(|n| b(n as f64 * dt) / sigma(n as f64 * dt)).collect();
    let sqrt_dt = dt.sqrt();

    let samples = map_indices(n_paths, |p| {
        let mut rng = path_rng(seed, p);
        let mut log_gamma = 0.0;
        for &th in &theta {
            let d_b: f64 = sqrt_dt * rng.sample::<f64, _>(StandardNormal);
            log_gamma += -th * d_b - 0.5 * th * th * dt;
        }
        let gamma = log_gamma.exp();
        (gamma * log_gamma, gamma)
    });
    let (values, gammas): (Vec<f64>, Vec<f64>) = samples.into_iter().unzip();
    let (mean, var) = mean_var(&values);
    let (gm, gv) = mean_var(&gammas);
    let n = n_paths as f64;
    Ok(GirsanovEstimate {
        entropy_hat: mean,
        std_err: (var / n).sqrt(),
        n_paths,
        closed_form: entropy_closed_form(b, sigma, horizon),
        gamma_mean: gm,
        gamma_std_err: (gv / n).sqrt(),
    })
}

/// Cross-check of `ρ_min = −x0 − H(Q_Γ | P)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MinimalRiskIdentity {
    pub rho_min: f64,
    pub x0: f64,
    pub entropy: GirsanovEstimate,
    /// `|(−ρ_min − x0) − closed-form entropy|`
    pub identity_gap: f64,
    pub mc_within_3se: bool,
}

pub fn minimal_risk_identity(params: &MarketParams, n_paths: usize, dt: f64, seed: u64) -> Result<MinimalRiskIdentity> {
    let closed = riskmin_closed_form(params)?;
    let b = params.b.clone();
    let s = params.sigma.clone();
    let entropy = girsanov_entropy(&move |t| b(t), &move |t| s(t), params.horizon, n_paths, dt, seed)?;
    let gap = ((-closed.rho_min - params.x0) - entropy.closed_form).abs();
    Ok(MinimalRiskIdentity {
        rho_min: closed.rho_min,
        x0: params.x0,
        entropy,
        identity_gap: gap,
        mc_within_3se: entropy.within(3.0),
    })
}
