//! Truncated Carleman embedding `dz/dt = A z + b` of a quadratic ODE.
//!
//! Level `j` of `z` holds `u^{⊗j}`. Row block `j` of `A` carries the
//! Kronecker sums of `F0` (sub-diagonal), `F1` (diagonal) and `F2`
//! (super-diagonal); the level-1 `F0` contribution is the constant `b`.

use log::warn;
use serde::Serialize;

use crate::analysis::diagnostics::carleman_dimension;
use crate::error::{Error, Result};
use crate::qode::QuadraticOde;
use crate::sparse::SparseMatrix;

/// Default cap on `d_A`.
pub const DEFAULT_MAX_D_A: usize = 1_000_000;
/// Default cap on assembled nonzeros of `A` (about 500 MB of triplets).
pub const DEFAULT_NNZ_BUDGET: usize = 20_000_000;
/// Cap on the length of a dense Carleman state.
pub const MAX_STATE_LEN: u64 = 50_000_000;

/// Size guards applied before assembly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CarlemanLimits {
    pub max_d_a: usize,
    pub max_nnz: usize,
}

impl Default for CarlemanLimits {
    fn default() -> Self {
        Self { max_d_a: DEFAULT_MAX_D_A, max_nnz: DEFAULT_NNZ_BUDGET }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BlockKind {
    /// `F0`-type block, `d^j × d^{j−1}`.
    Sub,
    /// `F1`-type block, `d^j × d^j`.
    Diag,
    /// `F2`-type block, `d^j × d^{j+1}`.
    Super,
}

impl BlockKind {
    fn input_cols(&self, d: usize) -> usize {
        match self {
            BlockKind::Sub => 1,
            BlockKind::Diag => d,
            BlockKind::Super => d * d,
        }
    }
}

/// Pushes the entries of `Σ_pos I^{⊗(pos−1)} ⊗ M ⊗ I^{⊗(j−pos)}` shifted by
/// `(row_off, col_off)`.
fn push_kron_sum(
    m: &SparseMatrix,
    d: usize,
    j: usize,
    row_off: usize,
    col_off: usize,
    out: &mut Vec<(usize, usize, f64)>,
) {
    let c = m.n_cols();
    let entries: Vec<(usize, usize, f64)> = m.triplets().collect();
    for pos in 1..=j {
        let left = d.pow(pos as u32 - 1);
        let right = d.pow((j - pos) as u32);
        for a in 0..left {
            for &(r, col, v) in &entries {
                let row_base = (a * d + r) * right;
                let col_base = (a * c + col) * right;
                for b in 0..right {
                    out.push((row_off + row_base + b, col_off + col_base + b, v));
                }
            }
        }
    }
}

/// Kronecker sum of `m` over `j` positions with identity factors of size `d`.
pub fn kron_sum_block(m: &SparseMatrix, j: usize, kind: BlockKind) -> Result<SparseMatrix> {
    if j == 0 {
        return Err(Error::InvalidParameter("carleman.kron_sum_block: level must be at least 1".into()));
    }
    let d = m.n_rows();
    if m.n_cols() != kind.input_cols(d) {
        return Err(Error::DimensionMismatch {
            context: "carleman.kron_sum_block",
            expected: kind.input_cols(d),
            got: m.n_cols(),
        });
    }
    let rows = d.pow(j as u32);
    let cols = d.pow(j as u32 - 1) * m.n_cols();
    let mut t = Vec::with_capacity(j * m.nnz() * d.pow(j as u32 - 1));
    push_kron_sum(m, d, j, 0, 0, &mut t);
    SparseMatrix::from_triplets(rows, cols, t)
}

#[derive(Debug, Clone)]
pub struct CarlemanSystem {
    pub a: SparseMatrix,
    /// `[F̄0; 0; …]`.
    pub b: Vec<f64>,
    pub nc: usize,
    pub d: usize,
    pub d_a: usize,
    /// Start of each level; `offsets[nc] = d_a`.
    pub offsets: Vec<usize>,
}

impl CarlemanSystem {
    pub fn level<'a>(&self, z: &'a [f64], j: usize) -> &'a [f64] {
        &z[self.offsets[j - 1]..self.offsets[j]]
    }

    /// `A z + b`.
    pub fn rhs(&self, z: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.a.matvec(z)?;
        for (o, b) in out.iter_mut().zip(&self.b) {
            *o += b;
        }
        Ok(out)
    }

    pub fn max_row_nnz(&self) -> usize {
        self.a.max_row_nnz()
    }
}

fn level_offsets(d: usize, nc: usize) -> Vec<usize> {
    let mut off = vec![0usize; nc + 1];
    let mut p = 1usize;
    for j in 1..=nc {
        p *= d;
        off[j] = off[j - 1] + p;
    }
    off
}

/// Nonzeros generated before duplicate merging; an upper bound on `nnz(A)`.
pub fn carleman_nnz_estimate(ode: &QuadraticOde, nc: usize) -> Option<u128> {
    let d = ode.dim as u128;
    let f0 = ode.f0.as_ref().map_or(0, |f| f.iter().filter(|x| **x != 0.0).count()) as u128;
    let f1 = ode.f1.nnz() as u128;
    let f2 = ode.f2.as_ref().map_or(0, |m| m.nnz()) as u128;
    let mut total: u128 = 0;
    for j in 1..=nc as u32 {
        let rep = (j as u128).checked_mul(d.checked_pow(j - 1)?)?;
        let mut per = f1;
        if j > 1 {
            per += f0;
        }
        if (j as usize) < nc {
            per += f2;
        }
        total = total.checked_add(rep.checked_mul(per)?)?;
    }
    Some(total)
}

/// Assembles `A` and `b` from a (rescaled) Gauss-coupled system.
pub fn build_carleman(ode: &QuadraticOde, nc: usize) -> Result<CarlemanSystem> {
    build_carleman_with_limits(ode, nc, CarlemanLimits::default())
}

pub fn build_carleman_with_limits(ode: &QuadraticOde, nc: usize, limits: CarlemanLimits) -> Result<CarlemanSystem> {
    if nc == 0 {
        return Err(Error::InvalidParameter("carleman.build: N_C must be at least 1".into()));
    }
    let f2 = ode.f2()?;
    let f0 = ode.f0()?;
    let d = ode.dim;
    let cap = (limits.max_d_a as u64).min(MAX_STATE_LEN);
    let d_a_full = carleman_dimension(d, nc).unwrap_or(u64::MAX);
    if d_a_full > cap {
        return Err(Error::BudgetExceeded {
            context: "carleman.d_A",
            size: d_a_full.min(usize::MAX as u64) as usize,
            budget: cap as usize,
        });
    }
    let d_a = d_a_full as usize;
    let estimate = carleman_nnz_estimate(ode, nc).unwrap_or(u128::MAX);
    if estimate > limits.max_nnz as u128 {
        return Err(Error::BudgetExceeded {
            context: "carleman.nnz",
            size: estimate.min(usize::MAX as u128) as usize,
            budget: limits.max_nnz,
        });
    }
    let offsets = level_offsets(d, nc);
    let f0_col = SparseMatrix::from_triplets(d, 1, f0.iter().enumerate().map(|(r, &v)| (r, 0, v)).collect())?;
    let mut t = Vec::with_capacity(estimate as usize);
    for j in 1..=nc {
        let row_off = offsets[j - 1];
        if j > 1 {
            push_kron_sum(&f0_col, d, j, row_off, offsets[j - 2], &mut t);
        }
        push_kron_sum(&ode.f1, d, j, row_off, offsets[j - 1], &mut t);
        if j < nc {
            push_kron_sum(f2, d, j, row_off, offsets[j], &mut t);
        }
    }
    let a = SparseMatrix::from_triplets(d_a, d_a, t)?;
    let mut b = vec![0.0; d_a];
    b[..d].copy_from_slice(f0);
    Ok(CarlemanSystem { a, b, nc, d, d_a, offsets })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CarlemanState {
    pub z: Vec<f64>,
    pub d: usize,
    pub offsets: Vec<usize>,
}

impl CarlemanState {
    pub fn level(&self, j: usize) -> &[f64] {
        &self.z[self.offsets[j - 1]..self.offsets[j]]
    }

    pub fn nc(&self) -> usize {
        self.offsets.len() - 1
    }
}

/// `z(0) = [ū, ū⊗ū, …, ū^{⊗N_C}]`.
pub fn build_z0(u: &[f64], nc: usize) -> Result<CarlemanState> {
    if nc == 0 {
        return Err(Error::InvalidParameter("carleman.build_z0: N_C must be at least 1".into()));
    }
    let d = u.len();
    let len = carleman_dimension(d, nc).filter(|&n| n <= MAX_STATE_LEN).ok_or(Error::BudgetExceeded {
        context: "carleman.z0",
        size: usize::MAX,
        budget: MAX_STATE_LEN as usize,
    })?;
    let norm = crate::norm2(u);
    if norm >= 1.0 {
        warn!("carleman.build_z0: ‖ū_in‖ = {norm} is not below 1");
    }
    let offsets = level_offsets(d, nc);
    let mut z = Vec::with_capacity(len as usize);
    z.extend_from_slice(u);
    for j in 2..=nc {
        let (prev_start, prev_end) = (offsets[j - 2], offsets[j - 1]);
        for p in prev_start..prev_end {
            let a = z[p];
            for &b in u {
                z.push(a * b);
            }
        }
    }
    Ok(CarlemanState { z, d, offsets })
}
