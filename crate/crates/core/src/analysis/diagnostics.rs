//! Ampère non-convergence diagnosis, vectorization invariance and
//! complexity accounting.

use serde::Serialize;

use crate::analysis::linalg::{eigenvalues_dense, lognorm, spectral_abscissa_dense, spectral_norm, EigenOptions};
use crate::analysis::truncation::TruncationPlan;
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::qode::{Coupling, QuadraticOde};
use crate::sparse::SparseMatrix;

/// Largest dimension for which dense eigenvalues are computed.
pub const DENSE_EIGEN_LIMIT: usize = 2000;

#[derive(Debug, Clone, Serialize)]
pub struct AmpereDiagnosis {
    pub dim: usize,
    pub nx: usize,
    pub zero_columns: usize,
    pub mu_f1: f64,
    pub norm_f1: f64,
    /// Spectral abscissa, when the dimension allows a dense solve.
    pub alpha_f1: Option<f64>,
    /// `zero_columns ≥ N_x` and `μ ≥ 0` (to rounding).
    pub structure_confirmed: bool,
    pub converges: bool,
    pub verdict: String,
}

pub fn ampere_diagnosis(ode: &QuadraticOde, opts: &EigenOptions) -> Result<AmpereDiagnosis> {
    if ode.coupling != Coupling::Ampere {
        return Err(Error::WrongCoupling { context: "analysis.ampere_diagnosis", expected: "ampere" });
    }
    let nx = ode.grid.nx();
    let zero_columns = ode.f1.zero_column_count();
    let mu = lognorm(&ode.f1, opts)?;
    let norm_f1 = spectral_norm(&ode.f1, opts)?;
    let alpha = if ode.dim <= DENSE_EIGEN_LIMIT { Some(spectral_abscissa_dense(&ode.f1)?) } else { None };
    let slack = 1e-12 * norm_f1.max(1.0);
    let structure_confirmed = zero_columns >= nx && mu >= -slack;
    let verdict = format!(
        "F1 has {zero_columns} zero columns (field components never enter the linear evolution); \
         mu(F1) = {mu:.6e} >= 0, so R is unbounded and the Carleman series does not converge"
    );
    Ok(AmpereDiagnosis {
        dim: ode.dim,
        nx,
        zero_columns,
        mu_f1: mu,
        norm_f1,
        alpha_f1: alpha,
        structure_confirmed,
        converges: false,
        verdict,
    })
}

/// `π` (0-based) taking column-major position `k = j·N_x + i` to the
/// row-major index `i·N_v + j`.
pub fn column_major_permutation(g: &GridSpec) -> Vec<usize> {
    let (nx, nv) = (g.nx(), g.nv());
    let mut pi = vec![0; nx * nv];
    for j in 0..nv {
        for i in 0..nx {
            pi[j * nx + i] = i * nv + j;
        }
    }
    pi
}

fn inverse_permutation(pi: &[usize]) -> Result<Vec<usize>> {
    let n = pi.len();
    let mut inv = vec![usize::MAX; n];
    for (k, &p) in pi.iter().enumerate() {
        if p >= n || inv[p] != usize::MAX {
            return Err(Error::InvalidPermutation(format!("entry {p} at position {k} breaks bijectivity on 0..{n}")));
        }
        inv[p] = k;
    }
    Ok(inv)
}

/// Permuted operators `F̃2 = PᵀF2(P⊗P)`, `F̃1 = PᵀF1P`, `F̃0 = PᵀF0`.
#[derive(Debug, Clone)]
pub struct PermutedSystem {
    pub f2: Option<SparseMatrix>,
    pub f1: SparseMatrix,
    pub f0: Option<Vec<f64>>,
}

/// Applies `pi` (new position `k` holds old index `pi[k]`) to every operator.
pub fn permute_system(ode: &QuadraticOde, pi: &[usize]) -> Result<PermutedSystem> {
    let d = ode.dim;
    if pi.len() != d {
        return Err(Error::InvalidPermutation(format!("length {} does not match dimension {d}", pi.len())));
    }
    let inv = inverse_permutation(pi)?;
    let f1 = SparseMatrix::from_triplets(d, d, ode.f1.triplets().map(|(r, c, v)| (inv[r], inv[c], v)).collect())?;
    let f2 = match &ode.f2 {
        Some(f2) => Some(SparseMatrix::from_triplets(
            d,
            d * d,
            f2.triplets().map(|(r, c, v)| (inv[r], d * inv[c / d] + inv[c % d], v)).collect(),
        )?),
        None => None,
    };
    let f0 = ode.f0.as_ref().map(|f0| pi.iter().map(|&p| f0[p]).collect());
    Ok(PermutedSystem { f2, f1, f0 })
}

#[derive(Debug, Clone, Serialize)]
pub struct InvarianceReport {
    pub norm_f2: Option<(f64, f64)>,
    pub norm_f1: (f64, f64),
    pub norm_f0: Option<(f64, f64)>,
    pub mu_f1: (f64, f64),
    /// Largest nearest-match distance between the two F1 spectra.
    pub eigenvalue_deviation: Option<f64>,
    pub max_relative_deviation: f64,
    pub unchanged: bool,
    pub tolerance: f64,
    pub passed: bool,
}

fn rel(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

/// Greedy nearest matching between two complex spectra, normalized by the
/// spectral radius.
pub fn spectrum_deviation(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let scale = a.iter().chain(b).map(|z| z.0.hypot(z.1)).fold(1.0f64, f64::max);
    let mut used = vec![false; b.len()];
    let mut worst = 0.0f64;
    for za in a {
        let mut best = (usize::MAX, f64::INFINITY);
        for (k, zb) in b.iter().enumerate() {
            if used[k] {
                continue;
            }
            let dist = (za.0 - zb.0).hypot(za.1 - zb.1);
            if dist < best.1 {
                best = (k, dist);
            }
        }
        used[best.0] = true;
        worst = worst.max(best.1);
    }
    worst / scale
}

pub fn vectorization_invariance_check(
    ode: &QuadraticOde,
    pi: &[usize],
    opts: &EigenOptions,
) -> Result<InvarianceReport> {
    let tolerance = 1e-10;
    let perm = permute_system(ode, pi)?;
    let tight = EigenOptions { tol: opts.tol.min(1e-13), ..*opts };
    let unchanged = perm.f1.same_entries(&ode.f1)
        && match (&perm.f2, &ode.f2) {
            (Some(a), Some(b)) => a.same_entries(b),
            _ => true,
        }
        && perm.f0 == ode.f0;

    let norm_f1 = (spectral_norm(&ode.f1, &tight)?, spectral_norm(&perm.f1, &tight)?);
    let mu_f1 = (lognorm(&ode.f1, &tight)?, lognorm(&perm.f1, &tight)?);
    let norm_f2 = match (&ode.f2, &perm.f2) {
        (Some(a), Some(b)) => Some((spectral_norm(a, &tight)?, spectral_norm(b, &tight)?)),
        _ => None,
    };
    let norm_f0 = match (&ode.f0, &perm.f0) {
        (Some(a), Some(b)) => Some((crate::norm2(a), crate::norm2(b))),
        _ => None,
    };
    let eigenvalue_deviation = if ode.dim <= DENSE_EIGEN_LIMIT {
        Some(spectrum_deviation(&eigenvalues_dense(&ode.f1.to_dense())?, &eigenvalues_dense(&perm.f1.to_dense())?))
    } else {
        None
    };

    // μ can sit at zero, so compare it against the F1 scale
    let mu_dev = (mu_f1.0 - mu_f1.1).abs() / norm_f1.0.max(f64::MIN_POSITIVE);
    let mut worst = rel(norm_f1.0, norm_f1.1).max(mu_dev);
    for pair in [norm_f2, norm_f0].into_iter().flatten() {
        worst = worst.max(rel(pair.0, pair.1));
    }
    if let Some(e) = eigenvalue_deviation {
        worst = worst.max(e);
    }
    Ok(InvarianceReport {
        norm_f2,
        norm_f1,
        norm_f0,
        mu_f1,
        eigenvalue_deviation,
        max_relative_deviation: worst,
        unchanged,
        tolerance,
        passed: worst <= tolerance,
    })
}

/// `Σ_{j=1}^{N_C} d^j`, or `None` past `2^63`.
pub fn carleman_dimension(d: usize, nc: usize) -> Option<u64> {
    const CAP: u128 = 1u128 << 63;
    let mut total: u128 = 0;
    let mut power: u128 = 1;
    for _ in 0..nc {
        power = power.checked_mul(d as u128)?;
        if power > CAP {
            return None;
        }
        total += power;
        if total > CAP {
            return None;
        }
    }
    Some(total as u64)
}

#[derive(Debug, Clone, Serialize)]
pub struct ComplexityReport {
    pub d: usize,
    pub nc: usize,
    pub s: usize,
    pub s_a: usize,
    /// `None` when `d_A` exceeds `2^63`.
    pub d_a: Option<u64>,
    pub d_a_saturated: bool,
    pub m: usize,
    pub p: usize,
    pub k: usize,
    pub omega: f64,
    pub kappa_bound: f64,
    /// Classical operation count `k·m·N`.
    pub classical_ops: u128,
}

/// `κ(L) ≤ (m+p)(1+δ) e (1+e)` with `C(A) ≤ 1` after rescaling.
pub fn kappa_bound(m: usize, p: usize, delta: f64) -> f64 {
    let e = std::f64::consts::E;
    (m + p) as f64 * (1.0 + delta) * e * (1.0 + e)
}

pub fn classical_ops(k: usize, m: usize, n: usize) -> u128 {
    k as u128 * m as u128 * n as u128
}

pub fn complexity_accounting(plan: &TruncationPlan, ode: &QuadraticOde, nc: usize) -> ComplexityReport {
    let s = ode.sparsity().s;
    let d_a = carleman_dimension(ode.dim, nc);
    ComplexityReport {
        d: ode.dim,
        nc,
        s,
        s_a: 3 * s * nc,
        d_a,
        d_a_saturated: d_a.is_none(),
        m: plan.m,
        p: plan.p,
        k: plan.k,
        omega: plan.omega,
        kappa_bound: kappa_bound(plan.m, plan.p, plan.delta),
        classical_ops: classical_ops(plan.k, plan.m, ode.grid.n_points()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::truncation::{plan_truncation, PlanInputs, PlanOverrides};
    use crate::physics::{PhysicalConstants, PlasmaParams};
    use proptest::prelude::*;

    fn params() -> PlasmaParams {
        PlasmaParams::new(PhysicalConstants::normalized(), 1.0, 0.5, 2.0).unwrap()
    }

    #[test]
    fn ampere_zero_columns_and_mu() {
        for (nx, nv) in [(4, 4), (2, 4), (3, 6), (5, 8)] {
            let g = GridSpec::new(nx, nv, 1.0, 3.0).unwrap();
            let ode = QuadraticOde::ampere(&params(), &g).unwrap();
            let rep = ampere_diagnosis(&ode, &EigenOptions::default()).unwrap();
            if (nx, nv) == (4, 4) {
                assert_eq!(rep.zero_columns, 4);
            }
            assert!(rep.zero_columns >= nx);
            assert!(rep.structure_confirmed);
            let alpha = rep.alpha_f1.unwrap();
            assert!(alpha >= -1e-12);
            assert!(alpha <= rep.mu_f1 + 1e-10 * rep.norm_f1);
            assert!(!rep.converges);
        }
        let g = GridSpec::new(3, 4, 1.0, 3.0).unwrap();
        let gauss = QuadraticOde::gauss(&params(), &g).unwrap();
        assert!(matches!(ampere_diagnosis(&gauss, &EigenOptions::default()), Err(Error::WrongCoupling { .. })));
    }

    #[test]
    fn column_major_permutation_matches_grid() {
        let g = GridSpec::new(3, 4, 1.0, 1.0).unwrap();
        let pi = column_major_permutation(&g);
        let f = crate::grid::DistributionMatrix::from_fn(&g, |x, v| x + 10.0 * v);
        let permuted: Vec<f64> = pi.iter().map(|&p| f.as_slice()[p]).collect();
        assert_eq!(permuted, f.column_major());
    }

    #[test]
    fn identity_permutation_leaves_matrices_unchanged() {
        let g = GridSpec::new(3, 4, 1.0, 3.0).unwrap();
        let ode = QuadraticOde::gauss(&params(), &g).unwrap();
        let id: Vec<usize> = (0..ode.dim).collect();
        let rep = vectorization_invariance_check(&ode, &id, &EigenOptions::default()).unwrap();
        assert!(rep.unchanged && rep.passed);
    }

    #[test]
    fn invalid_permutations_rejected() {
        let g = GridSpec::new(2, 4, 1.0, 3.0).unwrap();
        let ode = QuadraticOde::gauss(&params(), &g).unwrap();
        let mut bad: Vec<usize> = (0..ode.dim).collect();
        bad[3] = 0;
        assert!(matches!(permute_system(&ode, &bad), Err(Error::InvalidPermutation(_))));
        assert!(permute_system(&ode, &[0, 1]).is_err());
        let mut out_of_range: Vec<usize> = (0..ode.dim).collect();
        out_of_range[0] = ode.dim;
        assert!(permute_system(&ode, &out_of_range).is_err());
    }

    #[test]
    fn permuted_rhs_is_permuted_rhs() {
        // F̃(Pᵀu) = Pᵀ F(u): the permuted system is the same ODE in new coordinates
        let g = GridSpec::new(3, 4, 1.0, 3.0).unwrap();
        let ode = QuadraticOde::gauss(&params(), &g).unwrap();
        let pi = column_major_permutation(&g);
        let perm = permute_system(&ode, &pi).unwrap();
        let u: Vec<f64> = (0..ode.dim).map(|k| ((k * 7 % 5) as f64 - 2.0) * 0.1).collect();
        let fu = ode.rhs(&u).unwrap();
        let ut: Vec<f64> = pi.iter().map(|&p| u[p]).collect();
        let uu: Vec<f64> = ut.iter().flat_map(|a| ut.iter().map(move |b| a * b)).collect();
        let mut ft = perm.f2.unwrap().matvec(&uu).unwrap();
        let lin = perm.f1.matvec(&ut).unwrap();
        for (k, y) in ft.iter_mut().enumerate() {
            *y += lin[k] + perm.f0.as_ref().unwrap()[k];
        }
        for (k, &p) in pi.iter().enumerate() {
            assert!((ft[k] - fu[p]).abs() < 1e-12 * (1.0 + fu[p].abs()));
        }
    }

    #[test]
    fn spectrum_matching() {
        let a = [(1.0, 0.0), (0.0, 2.0), (0.0, -2.0)];
        let b = [(0.0, -2.0), (1.0, 0.0), (0.0, 2.0)];
        assert_eq!(spectrum_deviation(&a, &b), 0.0);
        assert!(spectrum_deviation(&a, &[(1.0, 0.0)]).is_infinite());
        assert!(spectrum_deviation(&a, &[(1.0, 0.0), (0.0, 2.0), (0.5, -2.0)]) > 0.1);
    }

    #[test]
    fn carleman_dimension_examples() {
        assert_eq!(carleman_dimension(4, 3), Some(84));
        assert_eq!(carleman_dimension(4, 1), Some(4));
        assert_eq!(carleman_dimension(2, 62), Some((1u64 << 63) - 2));
        assert_eq!(carleman_dimension(2, 63), None);
        assert_eq!(carleman_dimension(1000, 10), None);
    }

    proptest! {
        #[test]
        fn carleman_dimension_matches_geometric_series(d in 2usize..40, nc in 1usize..8) {
            let expected = ((d as u128).pow(nc as u32 + 1) - d as u128) / (d as u128 - 1);
            prop_assert_eq!(carleman_dimension(d, nc).map(u128::from), Some(expected));
        }
    }

    #[test]
    fn complexity_counts() {
        let g = GridSpec::new(3, 4, 1.0, 3.0).unwrap();
        let ode = QuadraticOde::gauss(&params(), &g).unwrap();
        let plan = plan_truncation(
            &PlanInputs {
                t: 1.0,
                eps_q: 0.1,
                eps_c: 0.1,
                norm_f0_bar: 0.5,
                norm_f1: 3.0,
                norm_f2_bar: 0.5,
                norm_u_bar_in: 0.3,
                norm_u_bar_t: 0.3,
            },
            &PlanOverrides::default(),
        )
        .unwrap();
        let rep = complexity_accounting(&plan, &ode, 2);
        assert_eq!(rep.s, 24);
        assert_eq!(rep.s_a, 3 * 24 * 2);
        assert_eq!(rep.d_a, Some(12 + 144));
        assert_eq!(classical_ops(4, 100, 16), 6400);
        let e = std::f64::consts::E;
        assert!((kappa_bound(3, 3, 0.0) - 6.0 * e * (1.0 + e)).abs() < 1e-12);
    }
}
