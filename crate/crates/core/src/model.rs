//! Problem data model: coefficients, jump measure, control set, grids.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Arguments shared by every coefficient function.
///
/// `k` holds the jump-sensitivity function sampled at the atoms of the
/// problem's [`JumpMeasure`] (empty when there are no jumps).
#[derive(Debug, Clone, Copy)]
pub struct CoeffArgs<'a> {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub k: &'a [f64],
    pub u: f64,
}

impl<'a> CoeffArgs<'a> {
    pub fn new(t: f64, x: f64, y: f64, z: f64, k: &'a [f64], u: f64) -> Self {
        CoeffArgs { t, x, y, z, k, u }
    }
}

pub type ScalarCoeff = Arc<dyn Fn(&CoeffArgs<'_>) -> f64 + Send + Sync>;
pub type JumpCoeff = Arc<dyn Fn(&CoeffArgs<'_>, f64) -> f64 + Send + Sync>;
pub type TerminalFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Drift, diffusion, jump amplitude, BSDE driver and terminal condition.
#[derive(Clone)]
pub struct CoefficientSet {
    pub alpha: ScalarCoeff,
    pub beta: ScalarCoeff,
    pub gamma: JumpCoeff,
    pub g_driver: ScalarCoeff,
    pub h_terminal: TerminalFn,
}

impl CoefficientSet {
    /// All coefficients identically zero.
    pub fn zero() -> Self {
        CoefficientSet {
            alpha: Arc::new(|_| 0.0),
            beta: Arc::new(|_| 0.0),
            gamma: Arc::new(|_, _| 0.0),
            g_driver: Arc::new(|_| 0.0),
            h_terminal: Arc::new(|_| 0.0),
        }
    }

    pub fn with_alpha(mut self, f: impl Fn(&CoeffArgs<'_>) -> f64 + Send + Sync + 'static) -> Self {
        self.alpha = Arc::new(f);
        self
    }

    pub fn with_beta(mut self, f: impl Fn(&CoeffArgs<'_>) -> f64 + Send + Sync + 'static) -> Self {
        self.beta = Arc::new(f);
        self
    }

    pub fn with_gamma(
        mut self,
        f: impl Fn(&CoeffArgs<'_>, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.gamma = Arc::new(f);
        self
    }

    pub fn with_driver(mut self, f: impl Fn(&CoeffArgs<'_>) -> f64 + Send + Sync + 'static) -> Self {
        self.g_driver = Arc::new(f);
        self
    }

    pub fn with_terminal(mut self, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.h_terminal = Arc::new(f);
        self
    }
}

impl fmt::Debug for CoefficientSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CoefficientSet { .. }")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpAtom {
    pub zeta: f64,
    pub weight: f64,
}

/// Finite-atom Lévy measure. An empty atom list is the no-jump case.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct JumpMeasure {
    atoms: Vec<JumpAtom>,
    total_intensity: f64,
}

impl JumpMeasure {
    /// Builds the measure without checking atom validity; see [`JumpMeasure::violations`].
    pub fn new(atoms: Vec<JumpAtom>) -> Self {
        let total_intensity = atoms.iter().map(|a| a.weight).sum();
        JumpMeasure { atoms, total_intensity }
    }

    pub fn none() -> Self {
        JumpMeasure::default()
    }

    pub fn single(zeta: f64, weight: f64) -> Self {
        JumpMeasure::new(vec![JumpAtom { zeta, weight }])
    }

    pub fn atoms(&self) -> &[JumpAtom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_intensity(&self) -> f64 {
        self.total_intensity
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, a) in self.atoms.iter().enumerate() {
            if a.zeta == 0.0 {
                out.push(format!("atom at zero (index {i})"));
            }
            if !a.zeta.is_finite() {
                out.push(format!("atom {i} has non-finite location"));
            }
            if !a.weight.is_finite() || a.weight < 0.0 {
                out.push(format!("atom {i} has invalid weight {}", a.weight));
            }
        }
        out
    }
}

/// Exact finite sum `Σ weight_i · f(ζ_i)` over the atoms.
pub fn levy_integral<F: Fn(f64) -> f64>(measure: &JumpMeasure, integrand: F) -> Result<f64> {
    levy_integral_indexed(measure, |_, zeta| integrand(zeta))
}

/// Like [`levy_integral`] but the integrand also receives the atom index,
/// which is how per-atom layers (the `k` field) are looked up.
pub fn levy_integral_indexed<F: Fn(usize, f64) -> f64>(
    measure: &JumpMeasure,
    integrand: F,
) -> Result<f64> {
    let mut acc = 0.0;
    for (index, atom) in measure.atoms.iter().enumerate() {
        let value = integrand(index, atom.zeta);
        if !value.is_finite() {
            return Err(Error::NonFiniteIntegrand { index, zeta: atom.zeta, value });
        }
        acc += atom.weight * value;
    }
    Ok(acc)
}

/// Admissible control values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlSet {
    Interval { lo: f64, hi: f64, resolution: f64 },
    List(Vec<f64>),
}

impl ControlSet {
    pub fn interval(lo: f64, hi: f64, resolution: f64) -> Self {
        ControlSet::Interval { lo, hi, resolution }
    }

    pub fn violations(&self) -> Vec<String> {
        match self {
            ControlSet::Interval { lo, hi, resolution } => {
                let mut out = Vec::new();
                if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                    out.push(format!("control interval empty or non-finite [{lo}, {hi}]"));
                }
                if !(*resolution > 0.0) || !resolution.is_finite() {
                    out.push(format!("control resolution must be positive, got {resolution}"));
                }
                out
            }
            ControlSet::List(values) => {
                let mut out = Vec::new();
                if values.is_empty() {
                    out.push("control list is empty".to_string());
                }
                if values.iter().any(|v| !v.is_finite()) {
                    out.push("control list has non-finite entries".to_string());
                }
                out
            }
        }
    }

    /// Smallest and largest admissible value.
    pub fn bounds(&self) -> (f64, f64) {
        match self {
            ControlSet::Interval { lo, hi, .. } => (*lo, *hi),
            ControlSet::List(v) => v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &u| {
                (a.min(u), b.max(u))
            }),
        }
    }

    pub fn contains(&self, u: f64) -> bool {
        match self {
            ControlSet::Interval { lo, hi, .. } => u >= *lo && u <= *hi,
            ControlSet::List(v) => v.contains(&u),
        }
    }

    /// Nearest admissible value (ties toward the smaller one).
    pub fn project(&self, u: f64) -> f64 {
        match self {
            ControlSet::Interval { lo, hi, .. } => u.clamp(*lo, *hi),
            ControlSet::List(v) => {
                let mut best = v[0];
                for &c in v {
                    let (d, db) = ((c - u).abs(), (best - u).abs());
                    if d < db || (d == db && c < best) {
                        best = c;
                    }
                }
                best
            }
        }
    }

    /// Search points: the resolution lattice (always including `hi`) or the list itself.
    pub fn search_points(&self) -> Vec<f64> {
        match self {
            ControlSet::Interval { lo, hi, resolution } => {
                let n = ((hi - lo) / resolution).floor() as usize;
                let mut pts: Vec<f64> = (0..=n).map(|i| lo + i as f64 * resolution).collect();
                if pts.last().is_some_and(|&last| last < *hi) {
                    pts.push(*hi);
                }
                pts
            }
            ControlSet::List(v) => v.clone(),
        }
    }

    /// A handful of representative values for probing coefficients.
    pub fn probe_points(&self) -> Vec<f64> {
        match self {
            ControlSet::Interval { lo, hi, .. } => (0..5).map(|i| lo + (hi - lo) * i as f64 / 4.0).collect(),
            ControlSet::List(v) => v.clone(),
        }
    }
}

/// Tensor grid on `[0, T] × [x_min, x_max]` with uniform spatial spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeGrid {
    t_nodes: Vec<f64>,
    x_nodes: Vec<f64>,
    dx: f64,
}

pub const MIN_SPATIAL_NODES: usize = 5;

impl SpaceTimeGrid {
    pub fn new(t_nodes: Vec<f64>, x_nodes: Vec<f64>) -> Result<Self> {
        if t_nodes.len() < 2 {
            return Err(Error::InvalidGrid("need at least one time step".into()));
        }
        if t_nodes[0] != 0.0 {
            return Err(Error::InvalidGrid("time grid must start at 0".into()));
        }
        if t_nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidGrid("time nodes must be strictly increasing".into()));
        }
        if x_nodes.len() < MIN_SPATIAL_NODES {
            return Err(Error::TooFewNodes { needed: MIN_SPATIAL_NODES, got: x_nodes.len() });
        }
        if x_nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidGrid("space nodes must be strictly increasing".into()));
        }
        let n = x_nodes.len();
        let dx = (x_nodes[n - 1] - x_nodes[0]) / (n - 1) as f64;
        // relative 1e-12 plus a few ulps of the coordinate magnitude
        let max_abs = x_nodes[0].abs().max(x_nodes[n - 1].abs());
        let tol = 1e-12 * dx + 8.0 * f64::EPSILON * max_abs;
        for (i, w) in x_nodes.windows(2).enumerate() {
            if ((w[1] - w[0]) - dx).abs() > tol {
                return Err(Error::InvalidGrid(format!("non-uniform spacing at node {i}")));
            }
        }
        Ok(SpaceTimeGrid { t_nodes, x_nodes, dx })
    }

    /// `nt` equal time steps on `[0, horizon]`, `nx` nodes on `[x_min, x_max]`.
    pub fn uniform(horizon: f64, nt: usize, x_min: f64, x_max: f64, nx: usize) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(Error::InvalidGrid("horizon nonpositive".into()));
        }
        if nt == 0 {
            return Err(Error::InvalidGrid("need at least one time step".into()));
        }
        if !(x_max > x_min) {
            return Err(Error::InvalidGrid("x_max must exceed x_min".into()));
        }
        let t_nodes = (0..=nt)
            .map(|i| if i == nt { horizon } else { horizon * i as f64 / nt as f64 })
            .collect();
        let x_nodes = (0..nx.max(1))
            .map(|i| {
                if i + 1 == nx {
                    x_max
                } else {
                    x_min + (x_max - x_min) * i as f64 / (nx - 1).max(1) as f64
                }
            })
            .collect();
        SpaceTimeGrid::new(t_nodes, x_nodes)
    }

    pub fn t_nodes(&self) -> &[f64] {
        &self.t_nodes
    }

    pub fn x_nodes(&self) -> &[f64] {
        &self.x_nodes
    }

    pub fn nt(&self) -> usize {
        self.t_nodes.len() - 1
    }

    pub fn nx(&self) -> usize {
        self.x_nodes.len()
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn horizon(&self) -> f64 {
        self.t_nodes[self.t_nodes.len() - 1]
    }

    pub fn x_min(&self) -> f64 {
        self.x_nodes[0]
    }

    pub fn x_max(&self) -> f64 {
        self.x_nodes[self.x_nodes.len() - 1]
    }

    /// Largest time step.
    pub fn max_dt(&self) -> f64 {
        self.t_nodes.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Cell index `i` and weight `w ∈ [0, 1]` with `t = (1-w) t_i + w t_{i+1}`.
    pub fn locate_time(&self, t: f64) -> Result<(usize, f64)> {
        let horizon = self.horizon();
        if !(t >= 0.0 && t <= horizon) {
            return Err(Error::TimeOutOfRange { t, horizon });
        }
        let n = self.t_nodes.len();
        let i = match self.t_nodes.binary_search_by(|p| p.partial_cmp(&t).unwrap()) {
            Ok(i) => return Ok((i.min(n - 2), if i == n - 1 { 1.0 } else { 0.0 })),
            Err(i) => i - 1,
        };
        let w = (t - self.t_nodes[i]) / (self.t_nodes[i + 1] - self.t_nodes[i]);
        Ok((i, w))
    }

    /// Cell index and (possibly out-of-[0,1]) weight for `x`; outside the box
    /// the boundary cell is returned so callers extrapolate linearly.
    pub fn locate_space(&self, x: f64) -> (usize, f64, bool) {
        let n = self.x_nodes.len();
        let s = (x - self.x_nodes[0]) / self.dx;
        let outside = x < self.x_nodes[0] || x > self.x_nodes[n - 1];
        let i = if s.is_nan() { 0 } else { (s.floor().max(0.0) as usize).min(n - 2) };
        let w = (x - self.x_nodes[i]) / self.dx;
        (i, w, outside)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    #[default]
    Maximize,
    Minimize,
}

impl Sense {
    /// `+1` for maximize, `-1` for minimize; multiplying by it turns every
    /// comparison into a maximization.
    pub fn sign(self) -> f64 {
        match self {
            Sense::Maximize => 1.0,
            Sense::Minimize => -1.0,
        }
    }
}

/// The controlled FBSDE.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub coefficients: CoefficientSet,
    pub jumps: JumpMeasure,
    pub controls: ControlSet,
    pub horizon: f64,
    pub x0: f64,
    pub sense: Sense,
    pub deterministic_coefficients: bool,
    /// State box on which coefficients are promised to be total.
    pub domain: (f64, f64),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn contains(&self, needle: &str) -> bool {
        self.violations.iter().any(|v| v.contains(needle))
    }
}

/// Checks structural invariants and probes every coefficient on a fixed
/// lattice inside the declared domain. Never fails; problems are report entries.
pub fn validate_problem(spec: &ProblemSpec) -> ValidationReport {
    let mut violations = Vec::new();
    if !(spec.horizon > 0.0) || !spec.horizon.is_finite() {
        violations.push(format!("horizon nonpositive ({})", spec.horizon));
    }
    if !spec.x0.is_finite() {
        violations.push("initial state non-finite".to_string());
    }
    let (lo, hi) = spec.domain;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        violations.push(format!("domain box empty or non-finite [{lo}, {hi}]"));
    }
    violations.extend(spec.jumps.violations());
    let sum: f64 = spec.jumps.atoms().iter().map(|a| a.weight).sum();
    if spec.jumps.total_intensity() != sum {
        violations.push("total intensity differs from sum of weights".to_string());
    }
    let control_violations = spec.controls.violations();
    let controls_ok = control_violations.is_empty();
    violations.extend(control_violations);

    if violations.is_empty() || (controls_ok && lo < hi && lo.is_finite() && hi.is_finite()) {
        probe_coefficients(spec, &mut violations);
    }
    ValidationReport { violations }
}

fn probe_coefficients(spec: &ProblemSpec, violations: &mut Vec<String>) {
    let horizon = if spec.horizon > 0.0 && spec.horizon.is_finite() { spec.horizon } else { 1.0 };
    let (lo, hi) = spec.domain;
    let ts = [0.0, 0.5 * horizon, horizon];
    let xs: Vec<f64> = (0..5).map(|i| lo + (hi - lo) * i as f64 / 4.0).collect();
    let us = spec.controls.probe_points();
    let na = spec.jumps.len();
    let k_layers = [vec![0.0; na], vec![1.0; na]];
    let c = &spec.coefficients;
    let mut bad: [Option<String>; 5] = Default::default();
    let names = ["alpha", "beta", "gamma", "g_driver", "h_terminal"];

    for &x in &xs {
        let h = (c.h_terminal)(x);
        if !h.is_finite() && bad[4].is_none() {
            bad[4] = Some(format!("x = {x}"));
        }
        for &t in &ts {
            for &y in &[-1.0, 0.0, 1.0] {
                for &z in &[-1.0, 0.0, 1.0] {
                    for k in &k_layers {
                        for &u in &us {
                            let args = CoeffArgs::new(t, x, y, z, k, u);
                            let vals = [(c.alpha)(&args), (c.beta)(&args), 0.0, (c.g_driver)(&args)];
                            for (j, v) in vals.iter().enumerate() {
                                if !v.is_finite() && bad[j].is_none() {
                                    bad[j] = Some(format!("t = {t}, x = {x}, y = {y}, z = {z}, u = {u}"));
                                }
                            }
                            for atom in spec.jumps.atoms() {
                                let g = (c.gamma)(&args, atom.zeta);
                                if !g.is_finite() && bad[2].is_none() {
                                    bad[2] = Some(format!("t = {t}, x = {x}, u = {u}, zeta = {}", atom.zeta));
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    for (name, at) in names.iter().zip(bad) {
        if let Some(at) = at {
            violations.push(format!("coefficient {name} non-finite at {at}"));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn null_spec() -> ProblemSpec {
        ProblemSpec {
            name: "null".into(),
            coefficients: CoefficientSet::zero(),
            jumps: JumpMeasure::none(),
            controls: ControlSet::interval(-1.0, 1.0, 0.1),
            horizon: 1.0,
            x0: 0.0,
            sense: Sense::Maximize,
            deterministic_coefficients: true,
            domain: (-1.0, 1.0),
        }
    }

    #[test]
    fn levy_integral_examples() {
        let m = JumpMeasure::single(1.0, 0.5);
        assert_eq!(levy_integral(&m, |z| z * z).unwrap(), 0.5);
        assert_eq!(levy_integral(&JumpMeasure::none(), |z| z + 100.0).unwrap(), 0.0);
        let m = JumpMeasure::new(vec![
            JumpAtom { zeta: -1.0, weight: 0.3 },
            JumpAtom { zeta: 2.0, weight: 0.1 },
        ]);
        assert!((levy_integral(&m, |z| z).unwrap() - (-0.1)).abs() < 1e-15);
    }

    #[test]
    fn levy_integral_names_bad_atom() {
        let m = JumpMeasure::new(vec![
            JumpAtom { zeta: 1.0, weight: 0.3 },
            JumpAtom { zeta: 2.0, weight: 0.1 },
        ]);
        let err = levy_integral(&m, |z| if z > 1.5 { f64::NAN } else { z }).unwrap_err();
        assert!(matches!(err, Error::NonFiniteIntegrand { index: 1, .. }));
    }

    #[test]
    fn validation_flags_breaches() {
        assert!(validate_problem(&null_spec()).is_valid());

        let mut s = null_spec();
        s.horizon = 0.0;
        assert!(validate_problem(&s).contains("horizon nonpositive"));

        let mut s = null_spec();
        s.jumps = JumpMeasure::single(0.0, 1.0);
        assert!(validate_problem(&s).contains("atom at zero"));

        let mut s = null_spec();
        s.coefficients = CoefficientSet::zero().with_beta(|a| 1.0 / a.x);
        s.domain = (0.0, 1.0);
        assert!(validate_problem(&s).contains("coefficient beta non-finite"));
    }

    #[test]
    fn grid_rules() {
        assert!(matches!(
            SpaceTimeGrid::uniform(1.0, 10, 0.0, 1.0, 4),
            Err(Error::TooFewNodes { .. })
        ));
        assert!(SpaceTimeGrid::new(vec![0.0, 1.0], vec![0.0, 0.1, 0.2, 0.35, 0.4]).is_err());
        let g = SpaceTimeGrid::uniform(2.0, 4, -1.0, 1.0, 5).unwrap();
        assert_eq!(g.t_nodes(), &[0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(g.locate_time(2.0).unwrap(), (3, 1.0));
        assert_eq!(g.locate_time(0.75).unwrap(), (1, 0.5));
        assert!(g.locate_time(2.1).is_err());
    }

    #[test]
    fn control_set_lattice_includes_hi() {
        let c = ControlSet::interval(0.0, 1.0, 0.3);
        let pts = c.search_points();
        assert_eq!(pts.len(), 5);
        assert_eq!(*pts.last().unwrap(), 1.0);
        assert_eq!(ControlSet::List(vec![0.0, 1.0, 2.5]).project(1.75), 1.0);
    }
}
