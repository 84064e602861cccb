//! Extremal eigenvalues of symmetric operators by Lanczos iteration with
//! full reorthogonalization, and the log-norm / spectral norm built on it.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Iteration controls shared by every eigen-solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    /// Relative Ritz-residual tolerance.
    pub tol: f64,
    /// Cap on operator applications.
    pub max_iter: usize,
    /// Krylov dimension before an explicit restart.
    pub krylov: usize,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 100_000, krylov: 200, seed: 0x5eed }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
    n
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    // two passes keep the basis orthogonal to working precision
    for _ in 0..2 {
        for q in basis {
            let c = dot(v, q);
            for (x, y) in v.iter_mut().zip(q) {
                *x -= c * y;
            }
        }
    }
}

fn random_unit(rng: &mut ChaCha8Rng, n: usize, basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    for _ in 0..8 {
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
        orthogonalize(&mut v, basis);
        if normalize(&mut v) > 1e-8 {
            return Some(v);
        }
    }
    None
}

/// Largest algebraic eigenvalue of the symmetric operator `apply` on `R^n`.
pub fn max_eigenvalue<F>(n: usize, mut apply: F, opts: &EigenOptions) -> Result<f64>
where
    F: FnMut(&[f64], &mut [f64]),
{
    if n == 0 {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut start = random_unit(&mut rng, n, &[]).expect("nonzero dimension");
    let krylov = opts.krylov.clamp(1, n);
    let mut applications = 0usize;
    let mut w = vec![0.0; n];

    loop {
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(krylov);
        let mut alphas: Vec<f64> = Vec::with_capacity(krylov);
        let mut betas: Vec<f64> = Vec::with_capacity(krylov);
        basis.push(start.clone());
        let mut best = (f64::NEG_INFINITY, Vec::new());
        for step in 0..krylov {
            apply(&basis[step], &mut w);
            applications += 1;
            let alpha = dot(&w, &basis[step]);
            alphas.push(alpha);
            orthogonalize(&mut w, &basis);
            let beta = dot(&w, &w).sqrt();

            let m = alphas.len();
            let exhausted = basis.len() == n;
            let last = step + 1 == krylov || applications >= opts.max_iter;
            let tiny = beta <= 1e-10 * (alpha.abs() + betas.last().copied().unwrap_or(0.0));
            if !(m <= 20 || m.is_multiple_of(10) || last || exhausted || tiny) {
                betas.push(beta);
                basis.push(w.iter().map(|x| x / beta).collect());
                continue;
            }
            let mut t = DMatrix::zeros(m, m);
            for i in 0..m {
                t[(i, i)] = alphas[i];
                if i + 1 < m {
                    t[(i, i + 1)] = betas[i];
                    t[(i + 1, i)] = betas[i];
                }
            }
            let eig = SymmetricEigen::new(t);
            let (top, _) =
                eig.eigenvalues
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
            let theta = eig.eigenvalues[top];
            let scale = eig.eigenvalues.iter().fold(0.0f64, |s, v| s.max(v.abs()));
            let residual = beta * eig.eigenvectors[(m - 1, top)].abs();
            let coeffs: Vec<f64> = (0..m).map(|i| eig.eigenvectors[(i, top)]).collect();
            best = (theta, coeffs);

            if residual <= opts.tol * scale.max(f64::MIN_POSITIVE) || (exhausted && beta <= opts.tol * scale) {
                return Ok(theta);
            }
            if applications >= opts.max_iter {
                return Err(Error::NoConvergence { what: "lanczos", iterations: applications });
            }
            if step + 1 == krylov {
                break;
            }
            if beta <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
                // invariant subspace: continue in a fresh direction
                match random_unit(&mut rng, n, &basis) {
                    Some(v) => {
                        betas.push(0.0);
                        basis.push(v);
                    }
                    None => return Ok(theta),
                }
            } else {
                betas.push(beta);
                basis.push(w.iter().map(|x| x / beta).collect());
            }
        }
        // restart from the current Ritz vector
        let (_, coeffs) = best;
        let mut ritz = vec![0.0; n];
        for (c, q) in coeffs.iter().zip(&basis) {
            for (r, x) in ritz.iter_mut().zip(q) {
                *r += c * x;
            }
        }
        if normalize(&mut ritz) == 0.0 {
            ritz = random_unit(&mut rng, n, &[]).expect("nonzero dimension");
        }
        start = ritz;
    }
}

/// Log-norm `μ(M) = λ_max((M + Mᵀ)/2)`.
pub fn lognorm(m: &SparseMatrix, opts: &EigenOptions) -> Result<f64> {
    if m.n_rows() != m.n_cols() {
        return Err(Error::DimensionMismatch { context: "analysis.lognorm", expected: m.n_rows(), got: m.n_cols() });
    }
    let mt = m.transpose();
    max_eigenvalue(
        m.n_rows(),
        |x, y| {
            m.matvec_into(x, y).expect("square operator");
            let z = mt.matvec(x).expect("square operator");
            for (a, b) in y.iter_mut().zip(z) {
                *a = 0.5 * (*a + b);
            }
        },
        opts,
    )
}

/// Spectral norm `√λ_max(MᵀM)`, iterating on the smaller Gram matrix.
pub fn spectral_norm(m: &SparseMatrix, opts: &EigenOptions) -> Result<f64> {
    if m.nnz() == 0 {
        return Ok(0.0);
    }
    let lambda = if m.n_rows() <= m.n_cols() {
        let mt = m.transpose();
        max_eigenvalue(
            m.n_rows(),
            |x, y| {
                let t = mt.matvec(x).expect("shape");
                m.matvec_into(&t, y).expect("shape");
            },
            opts,
        )?
    } else {
        let mt = m.transpose();
        max_eigenvalue(
            m.n_cols(),
            |x, y| {
                let t = m.matvec(x).expect("shape");
                mt.matvec_into(&t, y).expect("shape");
            },
            opts,
        )?
    };
    Ok(lambda.max(0.0).sqrt())
}

/// Eigenvalues `(re, im)` of a general dense matrix.
pub fn eigenvalues_dense(m: &DMatrix<f64>) -> Result<Vec<(f64, f64)>> {
    let (r, c) = m.shape();
    if r != c {
        return Err(Error::DimensionMismatch { context: "analysis.eigenvalues_dense", expected: r, got: c });
    }
    let f = faer::Mat::<f64>::from_fn(r, c, |i, j| m[(i, j)]);
    let ev = f.eigenvalues().map_err(|_| Error::NoConvergence { what: "dense eigenvalues", iterations: 0 })?;
    Ok(ev.iter().map(|z| (z.re, z.im)).collect())
}

/// Spectral abscissa `max Re λ(M)` from a dense eigen-solve.
pub fn spectral_abscissa_dense(m: &SparseMatrix) -> Result<f64> {
    Ok(eigenvalues_dense(&m.to_dense())?.iter().map(|z| z.0).fold(f64::NEG_INFINITY, f64::max))
}
