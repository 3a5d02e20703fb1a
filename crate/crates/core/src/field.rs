//! Grid-sampled decoupling field `y(t, x)` with its `z` and per-atom `k` layers.
//!
//! Storage is row-major by time. The `k` layers are laid out as
//! `[time][atom][space]` so a single atom's spatial row is a contiguous slice.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{SpaceTimeGrid, MIN_SPATIAL_NODES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldMode {
    /// `z` and `k` identically zero.
    Deterministic,
    StochasticReadonly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecouplingField {
    grid: SpaceTimeGrid,
    n_atoms: usize,
    y: Vec<f64>,
    z: Vec<f64>,
    k: Vec<f64>,
    mode: FieldMode,
}

/// Spatial derivatives at one time index.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeLayer {
    pub y_prime: Vec<f64>,
    pub y_double_prime: Vec<f64>,
    pub z_prime: Vec<f64>,
}

/// Field values at an arbitrary `(t, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    pub y: f64,
    pub z: f64,
    pub k: Vec<f64>,
    pub extrapolated: bool,
}

impl DecouplingField {
    pub fn new(
        grid: SpaceTimeGrid,
        n_atoms: usize,
        y: Vec<f64>,
        z: Vec<f64>,
        k: Vec<f64>,
        mode: FieldMode,
    ) -> Result<Self> {
        let cells = (grid.nt() + 1) * grid.nx();
        if y.len() != cells || z.len() != cells || k.len() != cells * n_atoms {
            return Err(Error::Dimension(format!(
                "field layers ({}, {}, {}) do not match grid {}x{} with {} atoms",
                y.len(),
                z.len(),
                k.len(),
                grid.nt() + 1,
                grid.nx(),
                n_atoms
            )));
        }
        if let Some(i) = y.iter().chain(&z).chain(&k).position(|v| !v.is_finite()) {
            let node = i % grid.nx();
            return Err(Error::NonFiniteLayer { layer: (i / grid.nx()) % (grid.nt() + 1), node });
        }
        if mode == FieldMode::Deterministic && (z.iter().any(|&v| v != 0.0) || k.iter().any(|&v| v != 0.0)) {
            return Err(Error::Dimension("deterministic field must have zero z and k layers".into()));
        }
        Ok(DecouplingField { grid, n_atoms, y, z, k, mode })
    }

    /// Deterministic field from row-major `y` values.
    pub fn deterministic(grid: SpaceTimeGrid, n_atoms: usize, y: Vec<f64>) -> Result<Self> {
        let cells = (grid.nt() + 1) * grid.nx();
        DecouplingField::new(grid, n_atoms, y, vec![0.0; cells], vec![0.0; cells * n_atoms], FieldMode::Deterministic)
    }

    /// Deterministic field sampled from a closed form.
    pub fn from_fn(grid: SpaceTimeGrid, n_atoms: usize, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut y = Vec::with_capacity((grid.nt() + 1) * grid.nx());
        for &t in grid.t_nodes() {
            for &x in grid.x_nodes() {
                y.push(f(t, x));
            }
        }
        DecouplingField::deterministic(grid, n_atoms, y)
    }

    pub fn grid(&self) -> &SpaceTimeGrid {
        &self.grid
    }

    pub fn mode(&self) -> FieldMode {
        self.mode
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn y_row(&self, n: usize) -> &[f64] {
        let nx = self.grid.nx();
        &self.y[n * nx..(n + 1) * nx]
    }

    pub fn z_row(&self, n: usize) -> &[f64] {
        let nx = self.grid.nx();
        &self.z[n * nx..(n + 1) * nx]
    }

    pub fn k_row(&self, n: usize, atom: usize) -> &[f64] {
        let nx = self.grid.nx();
        let start = (n * self.n_atoms + atom) * nx;
        &self.k[start..start + nx]
    }

    pub fn y_values(&self) -> &[f64] {
        &self.y
    }

    /// Spatial derivatives of layer `n`: 2nd-order central differences inside,
    /// 2nd-order one-sided stencils at the two boundary nodes.
    pub fn estimate_derivatives(&self, n: usize) -> Result<DerivativeLayer> {
        if n > self.grid.nt() {
            return Err(Error::IndexOutOfRange { index: n, len: self.grid.nt() + 1 });
        }
        let h = self.grid.dx();
        let y_prime = first_derivative(self.y_row(n), h)?;
        let y_double_prime = second_derivative(self.y_row(n), h)?;
        let z_prime = first_derivative(self.z_row(n), h)?;
        Ok(DerivativeLayer { y_prime, y_double_prime, z_prime })
    }

    /// Derivative layers for every time index.
    pub fn all_derivatives(&self) -> Result<Vec<DerivativeLayer>> {
        (0..=self.grid.nt()).map(|n| self.estimate_derivatives(n)).collect()
    }

    /// Bilinear interpolation inside the box, linear extrapolation in `x` outside it.
    pub fn eval(&self, t: f64, x: f64) -> Result<FieldSample> {
        let (ti, wt) = self.grid.locate_time(t)?;
        let (xi, wx, extrapolated) = locate(&self.grid, x);
        let lerp2 = |row0: &[f64], row1: &[f64]| {
            let a = (1.0 - wx) * row0[xi] + wx * row0[xi + 1];
            if wt == 0.0 {
                return a;
            }
            let b = (1.0 - wx) * row1[xi] + wx * row1[xi + 1];
            (1.0 - wt) * a + wt * b
        };
        let t1 = (ti + 1).min(self.grid.nt());
        let y = lerp2(self.y_row(ti), self.y_row(t1));
        let z = lerp2(self.z_row(ti), self.z_row(t1));
        let k = (0..self.n_atoms).map(|a| lerp2(self.k_row(ti, a), self.k_row(t1, a))).collect();
        Ok(FieldSample { y, z, k, extrapolated })
    }

    /// `y` only; cheaper than [`DecouplingField::eval`].
    pub fn y_at(&self, t: f64, x: f64) -> Result<f64> {
        let (ti, wt) = self.grid.locate_time(t)?;
        let t1 = (ti + 1).min(self.grid.nt());
        Ok(interp_time(&self.grid, self.y_row(ti), self.y_row(t1), wt, x))
    }

    /// `k` for one atom at `(t, x)`.
    pub fn k_at(&self, t: f64, x: f64, atom: usize) -> Result<f64> {
        if atom >= self.n_atoms {
            return Err(Error::IndexOutOfRange { index: atom, len: self.n_atoms });
        }
        let (ti, wt) = self.grid.locate_time(t)?;
        let t1 = (ti + 1).min(self.grid.nt());
        Ok(interp_time(&self.grid, self.k_row(ti, atom), self.k_row(t1, atom), wt, x))
    }

    /// Derivatives at `(t, x)` interpolated from precomputed layers.
    pub fn derivatives_at(&self, layers: &[DerivativeLayer], t: f64, x: f64) -> Result<(f64, f64, f64)> {
        let (ti, wt) = self.grid.locate_time(t)?;
        let t1 = (ti + 1).min(self.grid.nt());
        let (l0, l1) = (&layers[ti], &layers[t1]);
        Ok((
            interp_time(&self.grid, &l0.y_prime, &l1.y_prime, wt, x),
            interp_time(&self.grid, &l0.y_double_prime, &l1.y_double_prime, wt, x),
            interp_time(&self.grid, &l0.z_prime, &l1.z_prime, wt, x),
        ))
    }

    /// CSV dump: `t,x,y,z,k_1..k_A,u_hat`, one row per grid node, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W, controls: Option<&[f64]>) -> std::io::Result<()> {
        let mut header = String::from("t,x,y,z");
        for a in 1..=self.n_atoms {
            header.push_str(&format!(",k_{a}"));
        }
        header.push_str(",u_hat");
        writeln!(w, "{header}")?;
        let nx = self.grid.nx();
        for (n, &t) in self.grid.t_nodes().iter().enumerate() {
            for (i, &x) in self.grid.x_nodes().iter().enumerate() {
                let mut line = format!("{t:.16e},{x:.16e},{:.16e},{:.16e}", self.y[n * nx + i], self.z[n * nx + i]);
                for a in 0..self.n_atoms {
                    line.push_str(&format!(",{:.16e}", self.k_row(n, a)[i]));
                }
                match controls {
                    Some(c) => line.push_str(&format!(",{:.16e}", c[n * nx + i])),
                    None => line.push_str(",nan"),
                }
                writeln!(w, "{line}")?;
            }
        }
        Ok(())
    }
}

/// Spatial cell and weight; exact node hits give weight 0 or 1 exactly.
pub(crate) fn locate(grid: &SpaceTimeGrid, x: f64) -> (usize, f64, bool) {
    let xs = grid.x_nodes();
    let n = xs.len();
    let (mut i, _, outside) = grid.locate_space(x);
    if !outside {
        while i + 2 < n && x >= xs[i + 1] {
            i += 1;
        }
        while i > 0 && x < xs[i] {
            i -= 1;
        }
    }
    let w = if x == xs[i] {
        0.0
    } else if x == xs[i + 1] {
        1.0
    } else {
        (x - xs[i]) / grid.dx()
    };
    (i, w, outside)
}

/// Linear interpolation (extrapolation outside the box) of one spatial row.
pub fn interp_row(grid: &SpaceTimeGrid, row: &[f64], x: f64) -> f64 {
    let (i, w, _) = locate(grid, x);
    (1.0 - w) * row[i] + w * row[i + 1]
}

fn interp_time(grid: &SpaceTimeGrid, row0: &[f64], row1: &[f64], wt: f64, x: f64) -> f64 {
    let a = interp_row(grid, row0, x);
    if wt == 0.0 {
        return a;
    }
    (1.0 - wt) * a + wt * interp_row(grid, row1, x)
}

pub fn first_derivative(row: &[f64], h: f64) -> Result<Vec<f64>> {
    let n = row.len();
    if n < MIN_SPATIAL_NODES {
        return Err(Error::TooFewNodes { needed: MIN_SPATIAL_NODES, got: n });
    }
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        out[i] = (row[i + 1] - row[i - 1]) / (2.0 * h);
    }
    // -3, 4, -1 written as differences so constants give exact zeros
    out[0] = (3.0 * (row[1] - row[0]) - (row[2] - row[1])) / (2.0 * h);
    out[n - 1] = (3.0 * (row[n - 1] - row[n - 2]) - (row[n - 2] - row[n - 3])) / (2.0 * h);
    Ok(out)
}

pub fn second_derivative(row: &[f64], h: f64) -> Result<Vec<f64>> {
    let n = row.len();
    if n < MIN_SPATIAL_NODES {
        return Err(Error::TooFewNodes { needed: MIN_SPATIAL_NODES, got: n });
    }
    let d2 = |i: usize| (row[i - 1] - row[i]) + (row[i + 1] - row[i]);
    let h2 = h * h;
    let mut out = vec![0.0; n];
    for (i, o) in out.iter_mut().enumerate().take(n - 1).skip(1) {
        *o = d2(i) / h2;
    }
    // 2, -5, 4, -1: linear extrapolation of the interior second differences
    out[0] = (2.0 * d2(1) - d2(2)) / h2;
    out[n - 1] = (2.0 * d2(n - 2) - d2(n - 3)) / h2;
    Ok(out)
}

/// `Z = z + y' β`.
pub fn lift_z(z: f64, y_prime: f64, beta: f64) -> f64 {
    z + y_prime * beta
}

/// `K(ζ) = y(t, x+γ) − y(t, x) + k(t, x+γ, ζ)` for one atom.
pub fn lift_k(field: &DecouplingField, t: f64, x: f64, gamma_at_atom: f64, atom_index: usize) -> Result<f64> {
    let shifted = x + gamma_at_atom;
    Ok(field.y_at(t, shifted)? - field.y_at(t, x)? + field.k_at(t, shifted, atom_index)?)
}
