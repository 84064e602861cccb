//! Phase-space grid, vectorization maps and discrete calculus.
//!
//! All public index arguments are 1-based: `i ∈ 1..=N_x` for position,
//! `j ∈ 1..=N_v` for velocity, `n ∈ 1..=N` for the vectorized state. The
//! distribution `f_ij` is stored row-major, so the backing slice of a
//! [`DistributionMatrix`] *is* the state vector `u = vec(f)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform `(x, v)` grid with periodic `x` and zero-padded `v` boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    nx: usize,
    nv: usize,
    x_max: f64,
    v_max: f64,
    dx: f64,
    dv: f64,
}

impl GridSpec {
    /// `dx = x_max / N_x`, `dv = 2 v_max / (N_v − 1)`; `N_v` must be even.
    pub fn new(nx: usize, nv: usize, x_max: f64, v_max: f64) -> Result<Self> {
        let mut problems = Vec::new();
        if nx == 0 {
            problems.push("N_x must be positive".to_string());
        }
        if nv < 2 || !nv.is_multiple_of(2) {
            problems.push(format!("N_v must be even and at least 2 (got {nv})"));
        }
        if !(x_max.is_finite() && x_max > 0.0) {
            problems.push(format!("x_max must be positive (got {x_max})"));
        }
        if !(v_max.is_finite() && v_max > 0.0) {
            problems.push(format!("v_max must be positive (got {v_max})"));
        }
        if !problems.is_empty() {
            return Err(Error::InvalidGrid(problems.join("; ")));
        }
        Ok(Self { nx, nv, x_max, v_max, dx: x_max / nx as f64, dv: 2.0 * v_max / (nv as f64 - 1.0) })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn nv(&self) -> usize {
        self.nv
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dv(&self) -> f64 {
        self.dv
    }

    /// Number of phase-space points `N = N_x N_v`.
    pub fn n_points(&self) -> usize {
        self.nx * self.nv
    }

    fn check_i(&self, i: usize, context: &'static str) -> Result<()> {
        if i == 0 || i > self.nx {
            return Err(Error::IndexOutOfRange { context, index: i, max: self.nx });
        }
        Ok(())
    }

    fn check_j(&self, j: usize, context: &'static str) -> Result<()> {
        if j == 0 || j > self.nv {
            return Err(Error::IndexOutOfRange { context, index: j, max: self.nv });
        }
        Ok(())
    }

    /// `x_i = (i − 1) Δx`.
    pub fn x_coord(&self, i: usize) -> Result<f64> {
        self.check_i(i, "grid.x_coord")?;
        Ok((i - 1) as f64 * self.dx)
    }

    /// `v_j = −v_max + (j − 1) Δv`.
    pub fn v_coord(&self, j: usize) -> Result<f64> {
        self.check_j(j, "grid.v_coord")?;
        Ok(self.v_at(j - 1))
    }

    /// Velocity at a 0-based column. The upper half mirrors the lower half
    /// so that `v_j = −v_{N_v+1−j}` holds bit for bit.
    pub(crate) fn v_at(&self, j0: usize) -> f64 {
        if 2 * j0 >= self.nv {
            -(-self.v_max + (self.nv - 1 - j0) as f64 * self.dv)
        } else {
            -self.v_max + j0 as f64 * self.dv
        }
    }

    /// All velocity nodes, 0-based.
    pub fn velocities(&self) -> Vec<f64> {
        (0..self.nv).map(|j| self.v_at(j)).collect()
    }

    /// Row-major position of `f_ij` in `u`: `n = (i − 1) N_v + j`.
    pub fn flatten(&self, i: usize, j: usize) -> Result<usize> {
        self.check_i(i, "grid.flatten")?;
        self.check_j(j, "grid.flatten")?;
        Ok((i - 1) * self.nv + j)
    }

    /// Inverse of [`flatten`](Self::flatten): `i = ⌈n/N_v⌉`, `j = n ⫽ N_v`.
    pub fn unflatten(&self, n: usize) -> Result<(usize, usize)> {
        let max = self.n_points();
        if n == 0 || n > max {
            return Err(Error::IndexOutOfRange { context: "grid.unflatten", index: n, max });
        }
        Ok((n.div_ceil(self.nv), wrap_index(n, self.nv)))
    }

    /// Slot of `u_a u_b` inside `u ⊗ u`: `N (a − 1) + b`.
    pub fn pair_index(&self, a: usize, b: usize) -> Result<usize> {
        pair_index(self.n_points(), a, b)
    }

    /// Slot of `f_ab f_cd` inside `u ⊗ u`.
    pub fn grid_pair_index(&self, a: usize, b: usize, c: usize, d: usize) -> Result<usize> {
        let first = self.flatten(a, b)?;
        let second = self.flatten(c, d)?;
        self.pair_index(first, second)
    }

    /// Central `∂f/∂x` at `(i, j)` with periodic wrap in `x`.
    pub fn ddx(&self, f: &DistributionMatrix, i: usize, j: usize) -> Result<f64> {
        self.check_shape(f, "grid.ddx")?;
        self.check_i(i, "grid.ddx")?;
        self.check_j(j, "grid.ddx")?;
        Ok(self.ddx0(f.as_slice(), i - 1, j - 1))
    }

    /// Central `∂f/∂v` at `(i, j)`; values beyond `±v_max` are zero, so the
    /// first and last columns keep only one leg of the stencil.
    pub fn ddv(&self, f: &DistributionMatrix, i: usize, j: usize) -> Result<f64> {
        self.check_shape(f, "grid.ddv")?;
        self.check_i(i, "grid.ddv")?;
        self.check_j(j, "grid.ddv")?;
        Ok(self.ddv0(f.as_slice(), i - 1, j - 1))
    }

    pub(crate) fn ddx0(&self, u: &[f64], i0: usize, j0: usize) -> f64 {
        let nx = self.nx;
        let next = (i0 + 1) % nx;
        let prev = (i0 + nx - 1) % nx;
        (u[next * self.nv + j0] - u[prev * self.nv + j0]) / (2.0 * self.dx)
    }

    pub(crate) fn ddv0(&self, u: &[f64], i0: usize, j0: usize) -> f64 {
        let row = &u[i0 * self.nv..(i0 + 1) * self.nv];
        let up = if j0 + 1 < self.nv { row[j0 + 1] } else { 0.0 };
        let down = if j0 > 0 { row[j0 - 1] } else { 0.0 };
        (up - down) / (2.0 * self.dv)
    }

    /// Cumulative trapezoidal double integral `∬^{x_i} f dx dv`.
    ///
    /// `i = N_x + 1` closes the periodic domain (`f_{N_x+1,·} = f_{1,·}`),
    /// giving the full-grid integral.
    pub fn cumulative_trapz(&self, f: &DistributionMatrix, i: usize) -> Result<f64> {
        self.check_shape(f, "grid.cumulative_trapz")?;
        if i == 0 || i > self.nx + 1 {
            return Err(Error::IndexOutOfRange { context: "grid.cumulative_trapz", index: i, max: self.nx + 1 });
        }
        if i == 1 {
            return Ok(0.0);
        }
        let row_sum = |i1: usize| -> f64 {
            let i0 = (i1 - 1) % self.nx;
            f.row(i0 + 1).iter().sum()
        };
        let interior: f64 = (2..i).map(row_sum).sum();
        Ok(0.5 * self.dx * self.dv * (row_sum(1) + row_sum(i) + 2.0 * interior))
    }

    /// All cumulative integrals for `i = 1..=N_x` in one `O(N)` sweep.
    pub(crate) fn cumulative_trapz_all(&self, u: &[f64]) -> Vec<f64> {
        let rows: Vec<f64> = u.chunks(self.nv).map(|r| r.iter().sum()).collect();
        let mut out = vec![0.0; self.nx];
        let mut interior = 0.0;
        for i0 in 1..self.nx {
            out[i0] = 0.5 * self.dx * self.dv * (rows[0] + rows[i0] + 2.0 * interior);
            interior += rows[i0];
        }
        out
    }

    /// `Δv Σ_J v_J f_iJ`.
    pub fn velocity_moment(&self, f: &DistributionMatrix, i: usize) -> Result<f64> {
        self.check_shape(f, "grid.velocity_moment")?;
        self.check_i(i, "grid.velocity_moment")?;
        // pair mirrored columns: v_J f_J + v_{J'} f_{J'} = v_J (f_J − f_{J'})
        let row = f.row(i);
        let half = self.nv / 2;
        Ok(self.dv * (0..half).map(|j0| self.v_at(j0) * (row[j0] - row[self.nv - 1 - j0])).sum::<f64>())
    }

    fn check_shape(&self, f: &DistributionMatrix, context: &'static str) -> Result<()> {
        if f.nx != self.nx || f.nv != self.nv {
            return Err(Error::DimensionMismatch { context, expected: self.n_points(), got: f.data.len() });
        }
        Ok(())
    }
}

/// `x ⫽ y = x − y(⌈x/y⌉ − 1)`, the 1-based remainder.
pub fn wrap_index(x: usize, y: usize) -> usize {
    x - y * (x.div_ceil(y) - 1)
}

/// `N (a − 1) + b` for a state of dimension `n`.
pub fn pair_index(n: usize, a: usize, b: usize) -> Result<usize> {
    for idx in [a, b] {
        if idx == 0 || idx > n {
            return Err(Error::IndexOutOfRange { context: "grid.pair_index", index: idx, max: n });
        }
    }
    Ok(n * (a - 1) + b)
}

/// Row-major `N_x × N_v` array of distribution values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionMatrix {
    nx: usize,
    nv: usize,
    data: Vec<f64>,
}

impl DistributionMatrix {
    pub fn zeros(g: &GridSpec) -> Self {
        Self { nx: g.nx, nv: g.nv, data: vec![0.0; g.n_points()] }
    }

    /// Fill from `f(x_i, v_j)`.
    pub fn from_fn(g: &GridSpec, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut data = Vec::with_capacity(g.n_points());
        for i0 in 0..g.nx {
            let x = i0 as f64 * g.dx;
            for j0 in 0..g.nv {
                data.push(f(x, g.v_at(j0)));
            }
        }
        Self { nx: g.nx, nv: g.nv, data }
    }

    /// Reshape a vectorized state (`u = vec(f)`).
    pub fn from_state(g: &GridSpec, u: &[f64]) -> Result<Self> {
        if u.len() != g.n_points() {
            return Err(Error::DimensionMismatch { context: "grid.from_state", expected: g.n_points(), got: u.len() });
        }
        Ok(Self { nx: g.nx, nv: g.nv, data: u.to_vec() })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn nv(&self) -> usize {
        self.nv
    }

    /// 1-based element access.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[(i - 1) * self.nv + (j - 1)]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[(i - 1) * self.nv + (j - 1)] = value;
    }

    /// 1-based row `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[(i - 1) * self.nv..i * self.nv]
    }

    /// `vec(f)` in row-major order.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_state(self) -> Vec<f64> {
        self.data
    }

    /// Column-major vectorization, used by the invariance checks.
    pub fn column_major(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.data.len());
        for j0 in 0..self.nv {
            for i0 in 0..self.nx {
                out.push(self.data[i0 * self.nv + j0]);
            }
        }
        out
    }
}
