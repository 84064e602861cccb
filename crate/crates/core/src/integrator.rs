//! Truncated-Taylor stepping of `dz/dt = A z + b`, the block linear system
//! `L y = ψ_in` that encodes the same recursion, and solution extraction.

use log::{info, warn};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::analysis::truncation::TruncationPlan;
use crate::carleman::CarlemanSystem;
use crate::error::{Error, Result};
use crate::grid::{DistributionMatrix, GridSpec};
use crate::sparse::SparseMatrix;

/// Largest dimension handled by dense oracles.
pub const DENSE_LIMIT: usize = 2000;
/// Above this many unknowns the encoding is solved iteratively.
pub const DIRECT_SOLVE_LIMIT: usize = 50_000;
/// Default cap on the nonzeros of `L`.
pub const DEFAULT_ENCODING_NNZ_BUDGET: usize = 20_000_000;

/// Time step `τ`, step count `m`, padding `p` and Taylor order `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepParams {
    pub tau: f64,
    pub m: usize,
    pub p: usize,
    pub k: usize,
}

impl From<&TruncationPlan> for StepParams {
    fn from(plan: &TruncationPlan) -> Self {
        Self { tau: plan.tau, m: plan.m, p: plan.p, k: plan.k }
    }
}

impl StepParams {
    fn validate(&self) -> Result<()> {
        if self.k == 0 || self.m == 0 || self.p == 0 {
            return Err(Error::InvalidParameter(format!("integrator: m, p, k must be positive (got {self:?})")));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::InvalidParameter(format!("integrator: τ must be positive (got {})", self.tau)));
        }
        Ok(())
    }
}

fn check_step_norm(a: &SparseMatrix, tau: f64) {
    let bound = (a.norm_one() * a.norm_inf()).sqrt() * tau;
    if bound > 1.0 {
        // √(‖A‖₁‖A‖∞) overestimates ‖A‖₂, so this is only a hint
        info!("integrator: √(‖A‖₁‖A‖∞)·τ = {bound:.3} exceeds 1; ‖Aτ‖₂ ≤ 1 is not confirmed");
    }
}

fn s_k(a: &SparseMatrix, tau: f64, v: &[f64], k: usize) -> Result<Vec<f64>> {
    // 1 + x/2 (1 + x/3 (… (1 + x/k)))
    let mut w = v.to_vec();
    let mut tmp = vec![0.0; v.len()];
    for j in (2..=k).rev() {
        a.matvec_into(&w, &mut tmp)?;
        let c = tau / j as f64;
        for ((wi, ti), vi) in w.iter_mut().zip(&tmp).zip(v) {
            *wi = vi + c * ti;
        }
    }
    Ok(w)
}

fn taylor_pair(a: &SparseMatrix, tau: f64, v: &[f64], k: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let s = s_k(a, tau, v, k)?;
    let mut t = a.matvec(&s)?;
    for (ti, vi) in t.iter_mut().zip(v) {
        *ti = vi + tau * *ti;
    }
    Ok((t, s))
}

/// `(T_k(Aτ) v, S_k(Aτ) v)` with `T_k = Σ_{j≤k} x^j/j!` and
/// `S_k = Σ_{1≤j≤k} x^{j−1}/j!`, without forming powers of `A`.
pub fn taylor_apply(a: &SparseMatrix, tau: f64, v: &[f64], k: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if k == 0 {
        return Err(Error::InvalidParameter("integrator.taylor_apply: k must be at least 1".into()));
    }
    if a.n_cols() != v.len() || a.n_rows() != v.len() {
        return Err(Error::DimensionMismatch {
            context: "integrator.taylor_apply",
            expected: a.n_cols(),
            got: v.len(),
        });
    }
    check_step_norm(a, tau);
    taylor_pair(a, tau, v, k)
}

#[derive(Debug, Clone, Serialize)]
pub struct EvolveResult {
    /// `y_0 … y_m`.
    pub y_blocks: Vec<Vec<f64>>,
    pub step_norms: Vec<f64>,
    /// Largest relative distance of a padding block from `y_m`.
    pub padding_deviation: Option<f64>,
    /// Relative residual of the linear solve.
    pub residual: Option<f64>,
}

impl EvolveResult {
    pub fn final_state(&self) -> &[f64] {
        self.y_blocks.last().expect("at least one block")
    }
}

/// `y_{l+1} = T_k(Aτ) y_l + τ S_k(Aτ) b` for `l < m`.
pub fn evolve_iterative(sys: &CarlemanSystem, z0: &[f64], sp: &StepParams) -> Result<EvolveResult> {
    sp.validate()?;
    if z0.len() != sys.d_a {
        return Err(Error::DimensionMismatch {
            context: "integrator.evolve_iterative",
            expected: sys.d_a,
            got: z0.len(),
        });
    }
    check_step_norm(&sys.a, sp.tau);
    let (_, sb) = taylor_pair(&sys.a, sp.tau, &sys.b, sp.k)?;
    let mut y_blocks = Vec::with_capacity(sp.m + 1);
    let mut step_norms = Vec::with_capacity(sp.m + 1);
    y_blocks.push(z0.to_vec());
    step_norms.push(crate::norm2(z0));
    for step in 1..=sp.m {
        let (mut y, _) = taylor_pair(&sys.a, sp.tau, y_blocks.last().unwrap(), sp.k)?;
        for (yi, si) in y.iter_mut().zip(&sb) {
            *yi += sp.tau * si;
        }
        let n = crate::norm2(&y);
        if !n.is_finite() {
            return Err(Error::NonFinite { context: "integrator.evolve_iterative", step });
        }
        step_norms.push(n);
        y_blocks.push(y);
    }
    Ok(EvolveResult { y_blocks, step_norms, padding_deviation: None, residual: None })
}

/// `exp(AT) z0 + T φ₁(AT) b`, read off the exponential of the augmented
/// matrix `[[A, b], [0, 0]]`.
pub fn exact_linear_solution(sys: &CarlemanSystem, z0: &[f64], t: f64) -> Result<Vec<f64>> {
    let n = sys.d_a;
    if n > DENSE_LIMIT {
        return Err(Error::BudgetExceeded {
            context: "integrator.exact_linear_solution",
            size: n,
            budget: DENSE_LIMIT,
        });
    }
    if z0.len() != n {
        return Err(Error::DimensionMismatch {
            context: "integrator.exact_linear_solution",
            expected: n,
            got: z0.len(),
        });
    }
    let mut aug = DMatrix::<f64>::zeros(n + 1, n + 1);
    for (r, c, v) in sys.a.triplets() {
        aug[(r, c)] = v * t;
    }
    for (r, &v) in sys.b.iter().enumerate() {
        aug[(r, n)] = v * t;
    }
    let e = aug.exp();
    let mut z = vec![0.0; n];
    for (r, zr) in z.iter_mut().enumerate() {
        let mut acc = e[(r, n)];
        for c in 0..n {
            acc += e[(r, c)] * z0[c];
        }
        *zr = acc;
    }
    Ok(z)
}

/// `L = I − N` over registers (time `i < m+p`, Taylor slot `j ≤ k`, state).
#[derive(Debug, Clone)]
pub struct LinearEncoding {
    pub l: SparseMatrix,
    pub psi_in: Vec<f64>,
    /// `√(‖z0‖² + m τ² ‖b‖²)`, removed again on extraction.
    pub normalizer: f64,
    pub m: usize,
    pub p: usize,
    pub k: usize,
    pub tau: f64,
    pub block_dim: usize,
    pub total_dim: usize,
}

impl LinearEncoding {
    pub fn index(&self, i: usize, j: usize, s: usize) -> usize {
        (i * (self.k + 1) + j) * self.block_dim + s
    }

    pub fn time_blocks(&self) -> usize {
        self.m + self.p
    }
}

/// `M₁ = Σ_{j<k} |j+1⟩⟨j| ⊗ Aτ/(j+1)`.
pub fn build_m1(a: &SparseMatrix, tau: f64, k: usize) -> Result<SparseMatrix> {
    let n = a.n_rows();
    let mut t = Vec::with_capacity(k * a.nnz());
    for j in 0..k {
        let c = tau / (j + 1) as f64;
        for (r, col, v) in a.triplets() {
            t.push(((j + 1) * n + r, j * n + col, c * v));
        }
    }
    SparseMatrix::from_triplets((k + 1) * n, (k + 1) * n, t)
}

/// `M₂ = Σ_{j≤k} |0⟩⟨j| ⊗ I`.
pub fn build_m2(n: usize, k: usize) -> Result<SparseMatrix> {
    let t = (0..=k).flat_map(|j| (0..n).map(move |s| (s, j * n + s, 1.0))).collect();
    SparseMatrix::from_triplets((k + 1) * n, (k + 1) * n, t)
}

/// `M₂ (I − M₁)⁻¹` with the inverse as the finite series `Σ_{j≤k} M₁^j`.
pub fn step_block(a: &SparseMatrix, tau: f64, k: usize, nnz_budget: usize) -> Result<SparseMatrix> {
    let n = a.n_rows();
    let m1 = build_m1(a, tau, k)?;
    let mut power = SparseMatrix::identity((k + 1) * n);
    let mut sum = power.clone();
    for _ in 0..k {
        power = power.matmul(&m1)?;
        sum = sum.add(&power)?;
        if sum.nnz() > nnz_budget {
            return Err(Error::BudgetExceeded {
                context: "integrator.step_block",
                size: sum.nnz(),
                budget: nnz_budget,
            });
        }
    }
    build_m2(n, k)?.matmul(&sum)
}

pub fn build_linear_encoding(sys: &CarlemanSystem, z0: &[f64], sp: &StepParams) -> Result<LinearEncoding> {
    build_linear_encoding_with_budget(sys, z0, sp, DEFAULT_ENCODING_NNZ_BUDGET)
}

pub fn build_linear_encoding_with_budget(
    sys: &CarlemanSystem,
    z0: &[f64],
    sp: &StepParams,
    nnz_budget: usize,
) -> Result<LinearEncoding> {
    sp.validate()?;
    let n = sys.d_a;
    if z0.len() != n {
        return Err(Error::DimensionMismatch {
            context: "integrator.build_linear_encoding",
            expected: n,
            got: z0.len(),
        });
    }
    let (m, p, k, tau) = (sp.m, sp.p, sp.k, sp.tau);
    let block = (k + 1) * n;
    let blocks = m + p;
    let total_dim = blocks * block;
    let step = step_block(&sys.a, tau, k, nnz_budget)?;
    let estimate = total_dim + m * step.nnz() + (p - 1) * block;
    if estimate > nnz_budget {
        return Err(Error::BudgetExceeded {
            context: "integrator.build_linear_encoding",
            size: estimate,
            budget: nnz_budget,
        });
    }
    let mut t = Vec::with_capacity(estimate);
    for r in 0..total_dim {
        t.push((r, r, 1.0));
    }
    for i in 0..m {
        let (ro, co) = ((i + 1) * block, i * block);
        for (r, c, v) in step.triplets() {
            t.push((ro + r, co + c, -v));
        }
    }
    for i in m..blocks - 1 {
        let (ro, co) = ((i + 1) * block, i * block);
        for r in 0..block {
            t.push((ro + r, co + r, -1.0));
        }
    }
    let l = SparseMatrix::from_triplets(total_dim, total_dim, t)?;

    let norm_z0 = crate::norm2(z0);
    let norm_b = crate::norm2(&sys.b);
    let normalizer = (norm_z0 * norm_z0 + m as f64 * tau * tau * norm_b * norm_b).sqrt();
    if normalizer == 0.0 {
        return Err(Error::InvalidParameter("integrator.build_linear_encoding: z0 and b are both zero".into()));
    }
    let mut psi_in = vec![0.0; total_dim];
    psi_in[..n].iter_mut().zip(z0).for_each(|(x, z)| *x = z / normalizer);
    for i in 0..m {
        let off = i * block + n;
        for (s, &b) in sys.b.iter().enumerate() {
            psi_in[off + s] = tau * b / normalizer;
        }
    }
    Ok(LinearEncoding { l, psi_in, normalizer, m, p, k, tau, block_dim: n, total_dim })
}

/// Forward substitution for a unit lower-triangular CSR matrix.
fn forward_substitution(l: &SparseMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    let mut x = vec![0.0; rhs.len()];
    for r in 0..l.n_rows() {
        let (cols, vals) = l.row(r);
        let mut acc = rhs[r];
        let mut diag = 0.0;
        for (&c, &v) in cols.iter().zip(vals) {
            if c < r {
                acc -= v * x[c];
            } else if c == r {
                diag = v;
            } else {
                return Err(Error::Precondition(format!("encoding matrix is not lower triangular at ({r}, {c})")));
            }
        }
        if diag == 0.0 {
            return Err(Error::Precondition(format!("zero pivot in row {r}")));
        }
        x[r] = acc / diag;
    }
    Ok(x)
}

/// Restarted GMRES with Jacobi preconditioning.
pub fn gmres(a: &SparseMatrix, rhs: &[f64], tol: f64, restart: usize, max_iter: usize) -> Result<Vec<f64>> {
    let n = rhs.len();
    let inv_diag: Vec<f64> = (0..n)
        .map(|r| {
            let d = a.get(r, r);
            if d != 0.0 {
                1.0 / d
            } else {
                1.0
            }
        })
        .collect();
    let apply = |x: &[f64]| -> Result<Vec<f64>> {
        let mut y = a.matvec(x)?;
        for (yi, di) in y.iter_mut().zip(&inv_diag) {
            *yi *= di;
        }
        Ok(y)
    };
    let b: Vec<f64> = rhs.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let target = tol * crate::norm2(rhs);
    let mut x = vec![0.0; n];
    let restart = restart.clamp(1, n.max(1));
    let mut iterations = 0;
    loop {
        let ax = a.matvec(&x)?;
        let true_res: Vec<f64> = rhs.iter().zip(&ax).map(|(r, y)| r - y).collect();
        if crate::norm2(&true_res) <= target {
            return Ok(x);
        }
        if iterations >= max_iter {
            return Err(Error::NoConvergence { what: "gmres", iterations });
        }
        let ax_pre = apply(&x)?;
        let mut v0: Vec<f64> = b.iter().zip(&ax_pre).map(|(r, y)| r - y).collect();
        let beta = crate::norm2(&v0);
        if beta == 0.0 {
            return Ok(x);
        }
        v0.iter_mut().for_each(|v| *v /= beta);
        let mut basis = vec![v0];
        let mut h = vec![vec![0.0; restart]; restart + 1];
        let (mut cs, mut sn) = (vec![0.0; restart], vec![0.0; restart]);
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut used = 0;
        for j in 0..restart {
            iterations += 1;
            let mut w = apply(&basis[j])?;
            for (i, q) in basis.iter().enumerate() {
                let c: f64 = w.iter().zip(q).map(|(a, b)| a * b).sum();
                h[i][j] = c;
                w.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
            }
            let hn = crate::norm2(&w);
            h[j + 1][j] = hn;
            for i in 0..j {
                let tmp = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = tmp;
            }
            let r = h[j][j].hypot(h[j + 1][j]);
            cs[j] = h[j][j] / r;
            sn[j] = h[j + 1][j] / r;
            h[j][j] = r;
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            used = j + 1;
            if g[j + 1].abs() <= 0.1 * target || hn == 0.0 || iterations >= max_iter {
                break;
            }
            basis.push(w.iter().map(|x| x / hn).collect());
        }
        let mut yv = vec![0.0; used];
        for i in (0..used).rev() {
            let mut acc = g[i];
            for c in i + 1..used {
                acc -= h[i][c] * yv[c];
            }
            yv[i] = acc / h[i][i];
        }
        for (c, q) in yv.iter().zip(&basis) {
            x.iter_mut().zip(q).for_each(|(xi, qi)| *xi += c * qi);
        }
    }
}

/// Solves `L y = ψ_in`, returning `y_0 … y_m` rescaled by the normalizer.
pub fn solve_encoding(enc: &LinearEncoding) -> Result<EvolveResult> {
    let y = if enc.total_dim <= DIRECT_SOLVE_LIMIT {
        forward_substitution(&enc.l, &enc.psi_in)?
    } else {
        gmres(&enc.l, &enc.psi_in, 1e-12, 200, 100_000)?
    };
    let ly = enc.l.matvec(&y)?;
    let residual = crate::dist2(&ly, &enc.psi_in) / crate::norm2(&enc.psi_in);
    let n = enc.block_dim;
    let block = |i: usize| -> Vec<f64> {
        let s = enc.index(i, 0, 0);
        y[s..s + n].iter().map(|v| v * enc.normalizer).collect()
    };
    let y_blocks: Vec<Vec<f64>> = (0..=enc.m).map(block).collect();
    let y_m = &y_blocks[enc.m];
    let scale = crate::norm2(y_m).max(f64::MIN_POSITIVE);
    let padding_deviation =
        (enc.m + 1..enc.time_blocks()).map(|i| crate::dist2(&block(i), y_m) / scale).fold(0.0, f64::max);
    let step_norms = y_blocks.iter().map(|v| crate::norm2(v)).collect();
    Ok(EvolveResult { y_blocks, step_norms, padding_deviation: Some(padding_deviation), residual: Some(residual) })
}

/// 2-norm condition number of `L` from a dense SVD.
pub fn encoding_condition_number(enc: &LinearEncoding) -> Result<f64> {
    if enc.total_dim > DENSE_LIMIT {
        return Err(Error::BudgetExceeded {
            context: "integrator.condition_number",
            size: enc.total_dim,
            budget: DENSE_LIMIT,
        });
    }
    let sv = enc.l.to_dense().singular_values();
    Ok(sv.max() / sv.min())
}

/// `f(T)` read from the first `d` entries of `y_m`, scaled back by `γ`.
#[derive(Debug, Clone, Serialize)]
pub struct ExtractedSolution {
    pub y1m: Vec<f64>,
    pub f_t: DistributionMatrix,
    pub negative_entries: usize,
    pub min_entry: f64,
}

pub fn extract_solution(result: &EvolveResult, gamma: f64, g: &GridSpec) -> Result<ExtractedSolution> {
    let d = g.n_points();
    let y_m = result.final_state();
    if y_m.len() < d {
        return Err(Error::DimensionMismatch { context: "integrator.extract_solution", expected: d, got: y_m.len() });
    }
    let y1m: Vec<f64> = y_m[..d].iter().map(|v| v * gamma).collect();
    let f_t = DistributionMatrix::from_state(g, &y1m)?;
    let negative_entries = y1m.iter().filter(|&&v| v < 0.0).count();
    if negative_entries > 0 {
        warn!("integrator.extract_solution: {negative_entries} negative entries in f(T)");
    }
    let min_entry = y1m.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(ExtractedSolution { y1m, f_t, negative_entries, min_entry })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::truncation::{choose_k, taylor_omega};
    use crate::carleman::{build_carleman, build_z0};
    use crate::physics::{PhysicalConstants, PlasmaParams};
    use crate::qode::QuadraticOde;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn system(a: SparseMatrix, b: Vec<f64>) -> CarlemanSystem {
        let n = a.n_rows();
        CarlemanSystem { a, b, nc: 1, d: n, d_a: n, offsets: vec![0, n] }
    }

    fn random_dissipative(rng: &mut ChaCha8Rng, n: usize) -> SparseMatrix {
        // skew part plus a negative diagonal keeps μ(A) < 0
        let mut t = Vec::new();
        for r in 0..n {
            t.push((r, r, -rng.gen_range(0.2..1.5)));
            for c in r + 1..n {
                if rng.gen::<f64>() < 0.3 {
                    let v = rng.gen_range(-1.0..1.0);
                    t.push((r, c, v));
                    t.push((c, r, -v + rng.gen_range(-0.1..0.1)));
                }
            }
        }
        SparseMatrix::from_triplets(n, n, t).unwrap()
    }

    #[test]
    fn taylor_examples() {
        let v = vec![1.0, -2.0, 0.5];
        let (t, s) = taylor_apply(&SparseMatrix::zeros(3, 3), 0.3, &v, 5).unwrap();
        assert_eq!((t, s), (v.clone(), v.clone()));
        let a = SparseMatrix::from_diagonal(&[0.5, -1.0, 2.0]);
        let (t, s) = taylor_apply(&a, 0.1, &v, 1).unwrap();
        assert_eq!(s, v);
        let av = a.matvec(&v).unwrap();
        for i in 0..3 {
            assert!((t[i] - (v[i] + 0.1 * av[i])).abs() < 1e-15);
        }
        let diag = [0.9, -0.7, 0.1, -1.0];
        let a = SparseMatrix::from_diagonal(&diag);
        let v = vec![1.0, 2.0, -1.0, 0.5];
        let (t, s) = taylor_apply(&a, 1.0, &v, 20).unwrap();
        for i in 0..4 {
            assert!((t[i] - diag[i].exp() * v[i]).abs() < 1e-12);
            assert!((s[i] - diag[i].exp_m1() / diag[i] * v[i]).abs() < 1e-12);
        }
        assert!(taylor_apply(&a, 1.0, &v, 0).is_err());
    }

    #[test]
    fn frozen_and_pure_source_dynamics() {
        let z0 = vec![0.3, -0.1];
        let sp = StepParams { tau: 0.25, m: 4, p: 4, k: 3 };
        let frozen = evolve_iterative(&system(SparseMatrix::zeros(2, 2), vec![0.0; 2]), &z0, &sp).unwrap();
        assert!(frozen.y_blocks.iter().all(|y| y == &z0));
        let b = vec![1.0, 2.0];
        let drift = evolve_iterative(&system(SparseMatrix::zeros(2, 2), b.clone()), &z0, &sp).unwrap();
        for i in 0..2 {
            assert!((drift.final_state()[i] - (z0[i] + 4.0 * 0.25 * b[i])).abs() < 1e-15);
        }
    }

    #[test]
    fn exact_solution_examples() {
        let z0 = vec![0.3, -0.1, 2.0];
        let b = vec![1.0, 0.0, -0.5];
        let z = exact_linear_solution(&system(SparseMatrix::zeros(3, 3), b.clone()), &z0, 1.5).unwrap();
        for i in 0..3 {
            assert!((z[i] - (z0[i] + 1.5 * b[i])).abs() < 1e-14);
        }
        let diag = [-0.5, 0.2, -3.0];
        let z = exact_linear_solution(&system(SparseMatrix::from_diagonal(&diag), vec![0.0; 3]), &z0, 2.0).unwrap();
        for i in 0..3 {
            assert!((z[i] - (diag[i] * 2.0).exp() * z0[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn iterative_converges_to_exact_as_k_grows() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_dissipative(&mut rng, 12);
        let b: Vec<f64> = (0..12).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let z0: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let sys = system(a, b);
        let exact = exact_linear_solution(&sys, &z0, 2.0).unwrap();
        let mut last = f64::INFINITY;
        for k in 1..=8 {
            let y = evolve_iterative(&sys, &z0, &StepParams { tau: 0.5, m: 4, p: 4, k }).unwrap();
            let err = crate::dist2(y.final_state(), &exact);
            assert!(err < last, "k={k}");
            last = err;
        }
        assert!(last < 1e-5);
    }

    #[test]
    fn taylor_error_within_delta_prime() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for trial in 0..10 {
            let n = 6 + trial * 3;
            let a = random_dissipative(&mut rng, n);
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.3..0.3)).collect();
            let z0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let sys = system(a, b);
            let t = 1.5;
            let norm_a = crate::analysis::linalg::spectral_norm(&sys.a, &Default::default()).unwrap();
            let (m, tau) = crate::analysis::truncation::step_parameters(t, norm_a);
            let exact = exact_linear_solution(&sys, &z0, t).unwrap();
            let delta_prime = 1e-4;
            let omega = taylor_omega(t * norm_a, t, delta_prime, crate::norm2(&sys.b), crate::norm2(&exact));
            let k = choose_k(omega);
            let y = evolve_iterative(&sys, &z0, &StepParams { tau, m, p: m, k }).unwrap();
            let err = crate::dist2(y.final_state(), &exact);
            assert!(err <= delta_prime * crate::norm2(&exact), "trial {trial}: {err}");
        }
    }

    #[test]
    fn tiny_encoding_reproduces_one_step() {
        let z0 = vec![0.4, -0.2];
        let b = vec![1.0, 3.0];
        let sys = system(SparseMatrix::zeros(2, 2), b.clone());
        let sp = StepParams { tau: 0.1, m: 1, p: 1, k: 1 };
        let enc = build_linear_encoding(&sys, &z0, &sp).unwrap();
        assert_eq!(enc.total_dim, 2 * 2 * 2);
        assert!((crate::norm2(&enc.psi_in) - 1.0).abs() < 1e-15);
        let res = solve_encoding(&enc).unwrap();
        for i in 0..2 {
            assert!((res.final_state()[i] - (z0[i] + 0.1 * b[i])).abs() < 1e-15);
        }
    }

    #[test]
    fn m1_is_nilpotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_dissipative(&mut rng, 5);
        for k in 1..5 {
            let m1 = build_m1(&a, 0.3, k).unwrap();
            let mut p = m1.clone();
            for _ in 0..k {
                assert!(p.nnz() > 0);
                p = p.matmul(&m1).unwrap();
            }
            assert_eq!(p.max_abs(), 0.0);
        }
    }

    fn carleman_instance(nc: usize) -> (CarlemanSystem, Vec<f64>) {
        let p = PlasmaParams::new(PhysicalConstants::normalized(), 1.0, 0.5, 4.0).unwrap();
        let g = GridSpec::new(2, 2, 1.0, 1.0).unwrap();
        let ode = QuadraticOde::gauss(&p, &g).unwrap();
        let u: Vec<f64> = vec![0.2, 0.1, -0.1, 0.15];
        let sys = build_carleman(&ode, nc).unwrap();
        let z0 = build_z0(&u, nc).unwrap().z;
        (sys, z0)
    }

    #[test]
    fn encoding_matches_iteration_and_pads() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut cases: Vec<(CarlemanSystem, Vec<f64>)> = vec![carleman_instance(1), carleman_instance(2)];
        for n in [3, 8] {
            let a = random_dissipative(&mut rng, n);
            let b = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
            cases.push((system(a, b), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()));
        }
        for (sys, z0) in &cases {
            for (m, p, k) in [(1, 1, 1), (3, 3, 4), (5, 2, 6)] {
                let sp = StepParams { tau: 0.15, m, p, k };
                let it = evolve_iterative(sys, z0, &sp).unwrap();
                let enc = build_linear_encoding(sys, z0, &sp).unwrap();
                let sol = solve_encoding(&enc).unwrap();
                let scale = crate::norm2(it.final_state());
                for (a, b) in it.y_blocks.iter().zip(&sol.y_blocks) {
                    assert!(crate::dist2(a, b) <= 1e-10 * scale);
                }
                assert!(sol.padding_deviation.unwrap() <= 1e-12);
                assert!(sol.residual.unwrap() <= 1e-12);
            }
        }
    }

    #[test]
    fn gmres_matches_forward_substitution() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let a = random_dissipative(&mut rng, 10);
        let b = (0..10).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let z0: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let sys = system(a, b);
        let enc = build_linear_encoding(&sys, &z0, &StepParams { tau: 0.2, m: 6, p: 6, k: 5 }).unwrap();
        let direct = forward_substitution(&enc.l, &enc.psi_in).unwrap();
        let iterative = gmres(&enc.l, &enc.psi_in, 1e-13, 30, 10_000).unwrap();
        assert!(crate::dist2(&direct, &iterative) <= 1e-11 * crate::norm2(&direct));
    }

    #[test]
    fn extraction_round_trip() {
        let g = GridSpec::new(2, 2, 1.0, 1.0).unwrap();
        let res = EvolveResult {
            y_blocks: vec![vec![0.0; 6], vec![0.1, -0.2, 0.3, 0.4, 9.0, 9.0]],
            step_norms: vec![],
            padding_deviation: None,
            residual: None,
        };
        let ex = extract_solution(&res, 2.0, &g).unwrap();
        assert_eq!(ex.y1m, vec![0.2, -0.4, 0.6, 0.8]);
        assert_eq!(ex.f_t.get(1, 2), -0.4);
        assert_eq!(ex.f_t.get(2, 1), 0.6);
        assert_eq!(ex.negative_entries, 1);
        assert_eq!(ex.f_t.into_state(), ex.y1m);
    }
}
