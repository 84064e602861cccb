//! Quadratic ODE `du/dt = F2 (u⊗u) + F1 u + F0` for the discretized
//! Vlasov-Krook system, and the direct finite-difference right-hand side.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DistributionMatrix, GridSpec};
use crate::physics::{self, PlasmaParams};
use crate::sparse::{SparseMatrix, SparsityReport};

/// How the electric field is coupled to the distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    Gauss,
    Ampere,
}

impl Coupling {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Gauss => "gauss",
            Self::Ampere => "ampere",
        }
    }

    pub fn state_dim(&self, g: &GridSpec) -> usize {
        match self {
            Self::Gauss => g.n_points(),
            Self::Ampere => g.nx() * (g.nv() + 1),
        }
    }
}

/// Anything that can evaluate `du/dt` for an autonomous system.
pub trait RhsOracle: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, u: &[f64], out: &mut [f64]) -> Result<()>;
}

/// Assembled quadratic ODE.
#[derive(Debug, Clone)]
pub struct QuadraticOde {
    pub coupling: Coupling,
    pub dim: usize,
    pub grid: GridSpec,
    /// `d × d²`; absent for Ampère coupling.
    pub f2: Option<SparseMatrix>,
    pub f1a: SparseMatrix,
    pub f1b: SparseMatrix,
    pub f1: SparseMatrix,
    /// Absent for Ampère coupling.
    pub f0: Option<Vec<f64>>,
}

/// Per-matrix sparsity, with `s = max(row nnz)` over the three terms.
#[derive(Debug, Clone, Serialize)]
pub struct QodeSparsity {
    pub coupling: Coupling,
    pub dim: usize,
    pub f2: Option<SparsityReport>,
    pub f1: SparsityReport,
    pub f0_nnz: Option<usize>,
    pub s: usize,
}

impl QuadraticOde {
    /// Gauss-coupled system with `F2` built through the block direct sum.
    pub fn gauss(p: &PlasmaParams, g: &GridSpec) -> Result<Self> {
        p.validate()?;
        let (f1a, f1b) = build_f1_gauss(p, g);
        let f1 = f1a.add(&f1b)?;
        Ok(Self {
            coupling: Coupling::Gauss,
            dim: g.n_points(),
            grid: *g,
            f2: Some(build_f2_gauss(p, g)),
            f1a,
            f1b,
            f1,
            f0: Some(build_f0_gauss(p, g)),
        })
    }

    /// Ampère-coupled system; only the linear part is assembled.
    pub fn ampere(p: &PlasmaParams, g: &GridSpec) -> Result<Self> {
        p.validate()?;
        let (f1a, f1b) = build_f1_ampere(p, g);
        let f1 = f1a.add(&f1b)?;
        Ok(Self {
            coupling: Coupling::Ampere,
            dim: Coupling::Ampere.state_dim(g),
            grid: *g,
            f2: None,
            f1a,
            f1b,
            f1,
            f0: None,
        })
    }

    pub fn build(p: &PlasmaParams, g: &GridSpec, coupling: Coupling) -> Result<Self> {
        match coupling {
            Coupling::Gauss => Self::gauss(p, g),
            Coupling::Ampere => Self::ampere(p, g),
        }
    }

    pub fn f2(&self) -> Result<&SparseMatrix> {
        self.f2.as_ref().ok_or(Error::WrongCoupling { context: "qode.f2", expected: "gauss" })
    }

    pub fn f0(&self) -> Result<&[f64]> {
        self.f0.as_deref().ok_or(Error::WrongCoupling { context: "qode.f0", expected: "gauss" })
    }

    /// Same system with every matrix multiplied in place: `F2 ← a F2`,
    /// `F0 ← c F0`. Used for rescaling.
    pub fn scaled(&self, a: f64, c: f64) -> Result<Self> {
        let mut out = self.clone();
        out.f2 = Some(self.f2()?.scale(a));
        out.f0 = Some(self.f0()?.iter().map(|v| v * c).collect());
        Ok(out)
    }

    pub fn sparsity(&self) -> QodeSparsity {
        let f2 = self.f2.as_ref().map(|m| m.sparsity());
        let f0_nnz = self.f0.as_ref().map(|v| v.iter().filter(|x| **x != 0.0).count());
        let s = [f2.as_ref().map_or(0, |r| r.max_row_nnz), self.f1.max_row_nnz(), f0_nnz.unwrap_or(0)]
            .into_iter()
            .max()
            .unwrap_or(0);
        QodeSparsity { coupling: self.coupling, dim: self.dim, f2, f1: self.f1.sparsity(), f0_nnz, s }
    }

    /// `F2 (u⊗u) + F1 u + F0`.
    pub fn rhs(&self, u: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.rhs_into(u, &mut out)?;
        Ok(out)
    }

    pub fn rhs_into(&self, u: &[f64], out: &mut [f64]) -> Result<()> {
        if u.len() != self.dim {
            return Err(Error::DimensionMismatch { context: "qode.rhs", expected: self.dim, got: u.len() });
        }
        self.f1.matvec_into(u, out)?;
        if let Some(f2) = &self.f2 {
            let d = self.dim;
            for (r, o) in out.iter_mut().enumerate() {
                let (cols, vals) = f2.row(r);
                let mut acc = 0.0;
                for (&k, &v) in cols.iter().zip(vals) {
                    acc += v * u[k / d] * u[k % d];
                }
                *o += acc;
            }
        }
        if let Some(f0) = &self.f0 {
            for (o, f) in out.iter_mut().zip(f0) {
                *o += f;
            }
        }
        Ok(())
    }
}

impl RhsOracle for QuadraticOde {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, u: &[f64], out: &mut [f64]) -> Result<()> {
        self.rhs_into(u, out)
    }
}

/// `F2 (u⊗u) + F1 u + F0` for an assembled system.
pub fn rhs_matrix(ode: &QuadraticOde, u: &[f64]) -> Result<Vec<f64>> {
    ode.rhs(u)
}

/// `[F0]_n = ν(v_j) f^M_j` with `j = n ⫽ N_v`.
pub fn build_f0_gauss(p: &PlasmaParams, g: &GridSpec) -> Vec<f64> {
    let fm = physics::maxwellian_vector(p, g);
    let nus = physics::nu_on_grid(p, g);
    let row: Vec<f64> = fm.iter().zip(&nus).map(|(f, n)| n * f).collect();
    row.iter().copied().cycle().take(g.n_points()).collect()
}

fn streaming_triplets(g: &GridSpec, t: &mut Vec<(usize, usize, f64)>) {
    let (nx, nv) = (g.nx(), g.nv());
    for i0 in 0..nx {
        let next = (i0 + 1) % nx;
        let prev = (i0 + nx - 1) % nx;
        for j0 in 0..nv {
            let n = i0 * nv + j0;
            let coef = -g.v_at(j0) / (2.0 * g.dx());
            t.push((n, next * nv + j0, coef));
            t.push((n, prev * nv + j0, -coef));
        }
    }
}

/// Collision diagonal `F1a` and the streaming plus background-field part `F1b`.
pub fn build_f1_gauss(p: &PlasmaParams, g: &GridSpec) -> (SparseMatrix, SparseMatrix) {
    let (nx, nv) = (g.nx(), g.nv());
    let nus = physics::nu_on_grid(p, g);
    let diag: Vec<f64> = (0..g.n_points()).map(|n| -nus[n % nv]).collect();
    let f1a = SparseMatrix::from_diagonal(&diag);

    let mut t = Vec::with_capacity(4 * g.n_points());
    streaming_triplets(g, &mut t);
    let base = p.constants.field_factor() * p.ncal / (2.0 * g.dv() * nx as f64);
    for i0 in 1..nx {
        let coef = base * i0 as f64;
        for j0 in 0..nv {
            let n = i0 * nv + j0;
            if j0 + 1 < nv {
                t.push((n, n + 1, coef));
            }
            if j0 > 0 {
                t.push((n, n - 1, -coef));
            }
        }
    }
    let f1b = SparseMatrix::from_triplets(g.n_points(), g.n_points(), t).expect("F1b indices are in range");
    (f1a, f1b)
}

/// Trapezoid weight row `𝕋^[i]` (length `N`), so that the cumulative
/// integral up to `x_i` is `(Δx Δv / 4) 𝕋^[i] u`.
pub fn build_t_row(g: &GridSpec, i: usize) -> Result<Vec<f64>> {
    if i == 0 || i > g.nx() {
        return Err(Error::IndexOutOfRange { context: "qode.build_t_row", index: i, max: g.nx() });
    }
    let nv = g.nv();
    let mut row = vec![0.0; g.n_points()];
    if i > 1 {
        for v in &mut row[..nv] {
            *v = 2.0;
        }
        for v in &mut row[nv..(i - 1) * nv] {
            *v = 4.0;
        }
        for v in &mut row[(i - 1) * nv..i * nv] {
            *v = 2.0;
        }
    }
    Ok(row)
}

fn f2_base(p: &PlasmaParams, g: &GridSpec) -> f64 {
    p.constants.field_factor() * g.dx()
}

/// `F2 = −[q² Δx / (8 m_e ε₀)] ⊕_i B^[i]` with `B^[i] = tridiag(−1, 0, 1) ⊗ 𝕋^[i]`.
pub fn build_f2_gauss(p: &PlasmaParams, g: &GridSpec) -> SparseMatrix {
    let nv = g.nv();
    let mut stencil = Vec::new();
    for j in 0..nv {
        if j + 1 < nv {
            stencil.push((j, j + 1, 1.0));
        }
        if j > 0 {
            stencil.push((j, j - 1, -1.0));
        }
    }
    let stencil = SparseMatrix::from_triplets(nv, nv, stencil).expect("stencil indices are in range");
    let blocks: Vec<SparseMatrix> = (1..=g.nx())
        .map(|i| {
            let row = build_t_row(g, i).expect("block index is in range");
            let t = SparseMatrix::from_triplets(
                1,
                row.len(),
                row.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(c, &v)| (0, c, v)).collect(),
            )
            .expect("T row indices are in range");
            stencil.kron(&t)
        })
        .collect();
    SparseMatrix::direct_sum(&blocks).scale(-f2_base(p, g) / 8.0)
}

/// Same `F2` assembled from the per-entry map: prefactor `−q²Δx/(4 m_e ε₀)`,
/// trapezoid weights `1, 2, …, 2, 1`, `+` leg against `u_{n+1}` and `−` leg
/// against `u_{n−1}`.
pub fn build_f2_gauss_elementwise(p: &PlasmaParams, g: &GridSpec) -> SparseMatrix {
    let (nv, n_pts) = (g.nv(), g.n_points());
    let pre = -f2_base(p, g) / 4.0;
    let mut t = Vec::new();
    for n in (nv + 1)..=n_pts {
        let (i, j) = g.unflatten(n).expect("row index is in range");
        // 1-based column offsets and weights of the trapezoid up to x_i
        let mut weights: Vec<(usize, f64)> = Vec::new();
        for jj in 1..=nv {
            weights.push((jj, 1.0));
            weights.push(((i - 1) * nv + jj, 1.0));
        }
        for ii in 2..i {
            for jj in 1..=nv {
                weights.push(((ii - 1) * nv + jj, 2.0));
            }
        }
        if j != nv {
            for &(c, w) in &weights {
                t.push((n - 1, n_pts * n + c - 1, pre * w));
            }
        }
        if j != 1 {
            for &(c, w) in &weights {
                t.push((n - 1, n_pts * (n - 2) + c - 1, -pre * w));
            }
        }
    }
    SparseMatrix::from_triplets(n_pts, n_pts * n_pts, t).expect("F2 indices are in range")
}

/// Ampère-coupled `F1a`, `F1b` on the extended state `[vec(f); E]`.
pub fn build_f1_ampere(p: &PlasmaParams, g: &GridSpec) -> (SparseMatrix, SparseMatrix) {
    let (nx, nv) = (g.nx(), g.nv());
    let n_f = g.n_points();
    let d = Coupling::Ampere.state_dim(g);
    let nus = physics::nu_on_grid(p, g);
    let mut diag = vec![0.0; d];
    for (n, v) in diag.iter_mut().enumerate().take(n_f) {
        *v = -nus[n % nv];
    }
    let f1a = SparseMatrix::from_diagonal(&diag);

    let mut t = Vec::new();
    streaming_triplets(g, &mut t);
    let c = g.dv() * p.constants.q / p.constants.eps0;
    for i0 in 0..nx {
        for j0 in 0..nv {
            t.push((n_f + i0, i0 * nv + j0, c * g.v_at(j0)));
        }
    }
    let f1b = SparseMatrix::from_triplets(d, d, t).expect("Ampère F1b indices are in range");
    (f1a, f1b)
}

/// Literal evaluation of the four finite-difference terms:
/// nonlinear field, streaming plus background field, Krook loss, Krook gain.
pub fn rhs_direct(p: &PlasmaParams, g: &GridSpec, f: &DistributionMatrix) -> Result<DistributionMatrix> {
    if f.nx() != g.nx() || f.nv() != g.nv() {
        return Err(Error::DimensionMismatch {
            context: "qode.rhs_direct",
            expected: g.n_points(),
            got: f.nx() * f.nv(),
        });
    }
    let mut out = vec![0.0; g.n_points()];
    DirectRhs::new(p, g).eval_into(f.as_slice(), &mut out);
    DistributionMatrix::from_state(g, &out)
}

/// Matrix-free Gauss right-hand side built on the grid calculus.
#[derive(Debug, Clone)]
pub struct DirectRhs {
    grid: GridSpec,
    k: f64,
    nus: Vec<f64>,
    gain: Vec<f64>,
    background: Vec<f64>,
    velocities: Vec<f64>,
}

impl DirectRhs {
    pub fn new(p: &PlasmaParams, g: &GridSpec) -> Self {
        let nus = physics::nu_on_grid(p, g);
        let fm = physics::maxwellian_vector(p, g);
        let gain = nus.iter().zip(&fm).map(|(n, f)| n * f).collect();
        let background = (1..=g.nx()).map(|i| physics::background_integral(p, g, i).expect("i in range")).collect();
        Self { grid: *g, k: p.constants.field_factor(), nus, gain, background, velocities: g.velocities() }
    }

    fn eval_into(&self, u: &[f64], out: &mut [f64]) {
        let g = &self.grid;
        let integrals = g.cumulative_trapz_all(u);
        let nv = g.nv();
        for (i0, (&integral, &background)) in integrals.iter().zip(&self.background).enumerate() {
            for j0 in 0..nv {
                let n = i0 * nv + j0;
                let dfdv = g.ddv0(u, i0, j0);
                let dfdx = g.ddx0(u, i0, j0);
                let v = self.velocities[j0];
                out[n] = -self.k * dfdv * integral - v * dfdx + self.k * dfdv * background - self.nus[j0] * u[n]
                    + self.gain[j0];
            }
        }
    }
}

impl RhsOracle for DirectRhs {
    fn dim(&self) -> usize {
        self.grid.n_points()
    }

    fn eval(&self, u: &[f64], out: &mut [f64]) -> Result<()> {
        if u.len() != self.dim() || out.len() != self.dim() {
            return Err(Error::DimensionMismatch { context: "qode.direct_rhs", expected: self.dim(), got: u.len() });
        }
        self.eval_into(u, out);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::{CollisionProfile, PhysicalConstants};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> PlasmaParams {
        PlasmaParams::new(PhysicalConstants::normalized(), 1.0, 0.3, 2.0)
            .unwrap()
            .with_collision(CollisionProfile::Quadratic { coefficient: 0.01 })
            .unwrap()
    }

    fn grid(nx: usize, nv: usize) -> GridSpec {
        GridSpec::new(nx, nv, 1.0, 1.5).unwrap()
    }

    #[test]
    fn f0_examples() {
        let g = grid(3, 4);
        let p = PlasmaParams::new(PhysicalConstants::normalized(), 1.0, 0.3, 2.0).unwrap();
        let f0 = build_f0_gauss(&p, &g);
        let fm = physics::maxwellian_vector(&p, &g);
        for n in 0..12 {
            assert_eq!(f0[n], f0[n % 4]);
            assert!((f0[n] - p.nu0 * fm[n % 4]).abs() < 1e-15);
        }
    }

    #[test]
    fn f1_gauss_structure() {
        for (nx, nv) in [(1, 2), (2, 4), (3, 4), (5, 6)] {
            let g = grid(nx, nv);
            let (f1a, f1b) = build_f1_gauss(&params(), &g);
            assert!(f1a.is_diagonal());
            assert!(f1b.is_antisymmetric());
            assert!(f1b.max_row_nnz() <= 4);
            assert!(f1a.add(&f1b).unwrap().max_row_nnz() <= 5);
        }
        // the first x row carries no background-field legs
        let g = grid(3, 4);
        let (_, f1b) = build_f1_gauss(&params(), &g);
        for r in 0..4 {
            let (cols, _) = f1b.row(r);
            assert!(cols.iter().all(|c| c % 4 == r % 4), "row {r}: {cols:?}");
        }
    }

    #[test]
    fn t_row_examples() {
        let g = grid(3, 4);
        assert_eq!(build_t_row(&g, 1).unwrap(), vec![0.0; 12]);
        assert_eq!(build_t_row(&g, 2).unwrap(), [[2.0; 8].as_slice(), &[0.0; 4]].concat());
        assert_eq!(build_t_row(&g, 3).unwrap(), [[2.0; 4], [4.0; 4], [2.0; 4]].concat());
        assert!(build_t_row(&g, 4).is_err());
    }

    #[test]
    fn t_row_reproduces_trapezoid() {
        let g = grid(4, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u: Vec<f64> = (0..24).map(|_| rng.gen::<f64>()).collect();
        let f = DistributionMatrix::from_state(&g, &u).unwrap();
        for i in 1..=4 {
            let t = build_t_row(&g, i).unwrap();
            let dot: f64 = t.iter().zip(&u).map(|(a, b)| a * b).sum();
            let expected = g.cumulative_trapz(&f, i).unwrap();
            assert!((g.dx() * g.dv() / 4.0 * dot - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn f2_paths_agree_exactly() {
        for nx in [1, 2, 3, 4, 6] {
            for nv in [2, 4, 6] {
                let g = grid(nx, nv);
                let a = build_f2_gauss(&params(), &g);
                let b = build_f2_gauss_elementwise(&params(), &g);
                assert!(a.same_entries(&b), "({nx},{nv})");
            }
        }
    }

    #[test]
    fn f2_structure() {
        let g = grid(3, 4);
        let f2 = build_f2_gauss(&params(), &g);
        assert_eq!((f2.n_rows(), f2.n_cols()), (12, 144));
        for r in 0..4 {
            assert_eq!(f2.row_nnz(r), 0);
        }
        // interior rows of the last x block reach 2N entries
        assert_eq!(f2.max_row_nnz(), 2 * g.n_points());
        assert_eq!(f2.row_nnz(9), 24);
        // each block only touches its own column range
        for r in 0..12 {
            let block = r / 4;
            let (cols, _) = f2.row(r);
            for c in cols {
                assert_eq!(c / (4 * 12), block);
            }
        }
    }

    fn random_state(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen::<f64>()).collect()
    }

    #[test]
    fn matrix_and_direct_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for nx in [2, 4, 6] {
            for nv in [2, 4, 6] {
                let g = grid(nx, nv);
                let p = params();
                let ode = QuadraticOde::gauss(&p, &g).unwrap();
                for _ in 0..100 {
                    let u = random_state(&mut rng, g.n_points());
                    let f = DistributionMatrix::from_state(&g, &u).unwrap();
                    let direct = rhs_direct(&p, &g, &f).unwrap().into_state();
                    let matrix = rhs_matrix(&ode, &u).unwrap();
                    let err = crate::dist2(&direct, &matrix) / crate::norm2(&direct);
                    assert!(err <= 1e-12, "({nx},{nv}) err {err}");
                }
            }
        }
    }

    #[test]
    fn f2_matches_direct_nonlinear_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = grid(4, 6);
        let p = params();
        let ode = QuadraticOde::gauss(&p, &g).unwrap();
        let f2 = ode.f2().unwrap();
        let k = p.constants.field_factor();
        for _ in 0..100 {
            let u = random_state(&mut rng, g.n_points());
            let mut uu = Vec::with_capacity(u.len() * u.len());
            for a in &u {
                for b in &u {
                    uu.push(a * b);
                }
            }
            let quad = f2.matvec(&uu).unwrap();
            let f = DistributionMatrix::from_state(&g, &u).unwrap();
            let mut direct = vec![0.0; u.len()];
            for i in 1..=g.nx() {
                let integral = g.cumulative_trapz(&f, i).unwrap();
                for j in 1..=g.nv() {
                    direct[(i - 1) * g.nv() + j - 1] = -k * g.ddv(&f, i, j).unwrap() * integral;
                }
            }
            let err = crate::dist2(&quad, &direct) / crate::norm2(&direct);
            assert!(err <= 1e-12, "err {err}");
        }
    }

    #[test]
    fn rhs_examples() {
        let g = grid(3, 4);
        let p = params();
        let zero = DistributionMatrix::zeros(&g);
        let d = rhs_direct(&p, &g, &zero).unwrap();
        let fm = physics::maxwellian_vector(&p, &g);
        let nus = physics::nu_on_grid(&p, &g);
        for i in 1..=3 {
            for j in 1..=4 {
                assert_eq!(d.get(i, j), nus[j - 1] * fm[j - 1]);
            }
        }
        let ode = QuadraticOde::gauss(&p, &g).unwrap();
        assert_eq!(ode.rhs(&[0.0; 12]).unwrap(), ode.f0().unwrap());
        assert!(ode.rhs(&[0.0; 3]).is_err());
    }

    #[test]
    fn krook_fixed_point() {
        // one x cell: no streaming, and both cumulative integrals vanish at x_1
        let g = grid(1, 6);
        let p = PlasmaParams::new(PhysicalConstants::normalized(), 1.0, 0.3, 2.0).unwrap();
        let fm = physics::maxwellian_vector(&p, &g);
        let f = DistributionMatrix::from_state(&g, &fm).unwrap();
        let d = rhs_direct(&p, &g, &f).unwrap();
        assert!(d.as_slice().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn linear_part_scales() {
        let g = grid(2, 4);
        let p = params();
        let mut ode = QuadraticOde::gauss(&p, &g).unwrap();
        ode.f2 = Some(SparseMatrix::zeros(8, 64));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random_state(&mut rng, 8);
        let alpha = 2.5;
        let scaled: Vec<f64> = u.iter().map(|x| alpha * x).collect();
        let lhs = ode.rhs(&scaled).unwrap();
        let f1u = ode.f1.matvec(&u).unwrap();
        for n in 0..8 {
            let rhs = alpha * f1u[n] + ode.f0().unwrap()[n];
            assert!((lhs[n] - rhs).abs() < 1e-13);
        }
    }

    #[test]
    fn ampere_structure() {
        let g = grid(3, 4);
        let p = params();
        let ode = QuadraticOde::ampere(&p, &g).unwrap();
        assert_eq!(ode.dim, 15);
        assert_eq!(ode.f1.zero_column_count(), 3);
        for k in 12..15 {
            assert!((0..15).all(|r| ode.f1.get(r, k) == 0.0));
        }
        for i0 in 0..3 {
            let (cols, vals) = ode.f1.row(12 + i0);
            assert_eq!(cols.len(), 4);
            for (c, v) in cols.iter().zip(vals) {
                assert_eq!(c / 4, i0);
                assert_eq!(*v, g.dv() * g.v_at(c % 4));
            }
        }
        assert!(ode.f2().is_err());
        assert!(ode.f0().is_err());
        assert!(ode.f1a.is_diagonal());
        for r in 12..15 {
            assert_eq!(ode.f1a.get(r, r), 0.0);
        }
    }

    #[test]
    fn ampere_spectral_abscissa_nonnegative() {
        let g = grid(3, 4);
        let ode = QuadraticOde::ampere(&params(), &g).unwrap();
        let alpha = crate::analysis::linalg::spectral_abscissa_dense(&ode.f1).unwrap();
        assert!(alpha >= -1e-12, "{alpha}");
    }

    #[test]
    fn sparsity_counts() {
        let g = grid(4, 4);
        let ode = QuadraticOde::gauss(&params(), &g).unwrap();
        let s = ode.sparsity();
        assert_eq!(s.s, 2 * g.n_points());
        assert_eq!(s.f0_nnz, Some(16));
        assert!(s.f1.max_row_nnz <= 5);
    }
}
