//! Explicit fixed-step ground truth for `du/dt = F2 (u⊗u) + F1 u + F0`,
//! plus error comparison and classical cost accounting.

use serde::Serialize;

use crate::analysis::diagnostics::classical_ops;
use crate::error::{Error, Result};
use crate::grid::{DistributionMatrix, GridSpec};
use crate::qode::{QuadraticOde, RhsOracle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Order {
    Euler,
    Midpoint,
    Rk4,
}

impl Order {
    pub fn from_order(order: usize) -> Result<Self> {
        match order {
            1 => Ok(Order::Euler),
            2 => Ok(Order::Midpoint),
            4 => Ok(Order::Rk4),
            _ => Err(Error::InvalidParameter(format!("integration order must be 1, 2 or 4 (got {order})"))),
        }
    }

    pub fn order(&self) -> usize {
        match self {
            Order::Euler => 1,
            Order::Midpoint => 2,
            Order::Rk4 => 4,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub t_final: f64,
    pub steps: usize,
    pub order: Order,
    pub u_t: Vec<f64>,
    /// `(t, u(t))` every `record_every` steps, including both ends.
    pub snapshots: Vec<(f64, Vec<f64>)>,
}

fn axpy(out: &mut [f64], u: &[f64], h: f64, k: &[f64]) {
    for ((o, a), b) in out.iter_mut().zip(u).zip(k) {
        *o = a + h * b;
    }
}

/// Fixed-step explicit integration of any right-hand side.
pub fn integrate<R: RhsOracle + ?Sized>(
    rhs: &R,
    u_in: &[f64],
    t: f64,
    steps: usize,
    order: Order,
    record_every: Option<usize>,
) -> Result<Trajectory> {
    if steps == 0 {
        return Err(Error::InvalidParameter("reference: steps must be at least 1".into()));
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidParameter(format!("reference: T must be finite and non-negative (got {t})")));
    }
    let n = rhs.dim();
    if u_in.len() != n {
        return Err(Error::DimensionMismatch { context: "reference.integrate", expected: n, got: u_in.len() });
    }
    let h = t / steps as f64;
    let mut u = u_in.to_vec();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut snapshots = Vec::new();
    if record_every.is_some() {
        snapshots.push((0.0, u.clone()));
    }
    for step in 1..=steps {
        match order {
            Order::Euler => {
                rhs.eval(&u, &mut k1)?;
                u.iter_mut().zip(&k1).for_each(|(x, k)| *x += h * k);
            }
            Order::Midpoint => {
                rhs.eval(&u, &mut k1)?;
                axpy(&mut tmp, &u, 0.5 * h, &k1);
                rhs.eval(&tmp, &mut k2)?;
                u.iter_mut().zip(&k2).for_each(|(x, k)| *x += h * k);
            }
            Order::Rk4 => {
                rhs.eval(&u, &mut k1)?;
                axpy(&mut tmp, &u, 0.5 * h, &k1);
                rhs.eval(&tmp, &mut k2)?;
                axpy(&mut tmp, &u, 0.5 * h, &k2);
                rhs.eval(&tmp, &mut k3)?;
                axpy(&mut tmp, &u, h, &k3);
                rhs.eval(&tmp, &mut k4)?;
                for i in 0..n {
                    u[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
        }
        if u.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { context: "reference.integrate", step });
        }
        if let Some(every) = record_every {
            if step % every.max(1) == 0 || step == steps {
                snapshots.push((step as f64 * h, u.clone()));
            }
        }
    }
    Ok(Trajectory { t_final: t, steps, order, u_t: u, snapshots })
}

/// Matrix-path integration of an assembled system.
pub fn integrate_nonlinear(ode: &QuadraticOde, u_in: &[f64], t: f64, steps: usize, order: Order) -> Result<Trajectory> {
    integrate(ode, u_in, t, steps, order, None)
}

/// Richardson estimate `‖u_h − u_{h/2}‖ / (2^p − 1)` of the error in `u_{h/2}`.
pub fn richardson_error<R: RhsOracle + ?Sized>(
    rhs: &R,
    u_in: &[f64],
    t: f64,
    steps: usize,
    order: Order,
) -> Result<(f64, Trajectory)> {
    let coarse = integrate(rhs, u_in, t, steps, order, None)?;
    let fine = integrate(rhs, u_in, t, 2 * steps, order, None)?;
    let est = crate::dist2(&coarse.u_t, &fine.u_t) / ((1usize << order.order()) as f64 - 1.0);
    Ok((est, fine))
}

/// Doubles the step count from `start` until the Richardson estimate is at
/// most `target`, returning the finer trajectory and its estimate.
pub fn integrate_to_tolerance<R: RhsOracle + ?Sized>(
    rhs: &R,
    u_in: &[f64],
    t: f64,
    order: Order,
    target: f64,
    start: usize,
    max_steps: usize,
) -> Result<(Trajectory, f64)> {
    let mut steps = start.max(1);
    loop {
        let (est, fine) = richardson_error(rhs, u_in, t, steps, order)?;
        if est <= target {
            return Ok((fine, est));
        }
        if 2 * steps >= max_steps {
            return Err(Error::NoConvergence { what: "reference step refinement", iterations: 2 * steps });
        }
        steps *= 2;
    }
}

/// Full-grid trapezoidal integral `∬ f dx dv`.
pub fn particle_number(g: &GridSpec, u: &[f64]) -> Result<f64> {
    g.cumulative_trapz(&DistributionMatrix::from_state(g, u)?, g.nx() + 1)
}

/// `k·m·N` elementary operations.
pub fn classical_cost(k: usize, m: usize, n: usize) -> u128 {
    classical_ops(k, m, n)
}

/// Cost on a grid with `N_x² = N = N_v²` refined until `ε_c = T/N`, with
/// `m = ⌈rate·T⌉` steps; grows like `T²/ε_c`.
pub fn classical_cost_fixed_ratio(t: f64, eps_c: f64, k: usize, rate: f64) -> f64 {
    let n = (t / eps_c).ceil();
    let m = (rate * t).ceil().max(1.0);
    k as f64 * m * n
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorReport {
    /// `‖u − v‖ / ‖u‖`.
    pub relative_l2: f64,
    pub max_abs_cell: f64,
    /// Distance between the normalized states `u/‖u‖` and `v/‖v‖`.
    pub normalized_state_error: f64,
    pub reference_norm: f64,
}

pub fn compare_solutions(reference: &[f64], candidate: &[f64]) -> Result<ErrorReport> {
    if reference.len() != candidate.len() {
        return Err(Error::DimensionMismatch {
            context: "reference.compare_solutions",
            expected: reference.len(),
            got: candidate.len(),
        });
    }
    let nr = crate::norm2(reference);
    let nc = crate::norm2(candidate);
    let diff = crate::dist2(reference, candidate);
    let max_abs_cell = reference.iter().zip(candidate).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let normalized_state_error = if nr > 0.0 && nc > 0.0 {
        reference.iter().zip(candidate).map(|(a, b)| (a / nr - b / nc).powi(2)).sum::<f64>().sqrt()
    } else {
        f64::NAN
    };
    Ok(ErrorReport {
        relative_l2: if nr > 0.0 {
            diff / nr
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        },
        max_abs_cell,
        normalized_state_error,
        reference_norm: nr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::{self, BeamSpec, CollisionProfile, MaxwellianNormalization, PhysicalConstants, PlasmaParams};
    use crate::qode::DirectRhs;
    use crate::sparse::SparseMatrix;

    struct Diagonal(Vec<f64>);

    impl RhsOracle for Diagonal {
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn eval(&self, u: &[f64], out: &mut [f64]) -> Result<()> {
            for ((o, a), x) in out.iter_mut().zip(&self.0).zip(u) {
                *o = a * x;
            }
            Ok(())
        }
    }

    fn params(nu0: f64) -> PlasmaParams {
        PlasmaParams::new(PhysicalConstants::normalized(), 1.0, 1.0, nu0).unwrap()
    }

    fn two_beam(p: &PlasmaParams, g: &GridSpec) -> Vec<f64> {
        // perturb the uniform beams so streaming and the field are active
        let mut u = physics::two_beam_initial(p, g, BeamSpec { j: 1 }).unwrap();
        for (n, x) in u.iter_mut().enumerate() {
            let i = n / g.nv();
            *x *= 1.0 + 0.1 * (2.0 * std::f64::consts::PI * i as f64 / g.nx() as f64).cos();
        }
        u
    }

    #[test]
    fn linear_decay_matches_exponential() {
        let rates = vec![-1.0, -0.3, 0.2];
        let u0 = vec![1.0, -2.0, 0.5];
        for (order, steps, tol) in
            [(Order::Euler, 20_000, 1e-4), (Order::Midpoint, 2_000, 1e-6), (Order::Rk4, 200, 1e-9)]
        {
            let tr = integrate(&Diagonal(rates.clone()), &u0, 2.0, steps, order, None).unwrap();
            for i in 0..3 {
                let exact = u0[i] * (rates[i] * 2.0).exp();
                assert!((tr.u_t[i] - exact).abs() < tol, "{order:?}");
            }
        }
    }

    #[test]
    fn temporal_self_convergence_slopes() {
        let g = GridSpec::new(4, 6, 1.0, 2.0).unwrap();
        let p = params(2.0);
        let ode = QuadraticOde::gauss(&p, &g).unwrap();
        let u0 = two_beam(&p, &g);
        let t = 0.5;
        let truth = integrate(&ode, &u0, t, 4096, Order::Rk4, None).unwrap().u_t;
        for (order, base) in [(Order::Euler, 64), (Order::Midpoint, 32), (Order::Rk4, 8)] {
            let err = |s: usize| crate::dist2(&integrate(&ode, &u0, t, s, order, None).unwrap().u_t, &truth);
            let slope = (err(base) / err(2 * base)).log2();
            assert!((slope - order.order() as f64).abs() < 0.3, "{order:?}: slope {slope}");
        }
    }

    #[test]
    fn krook_relaxation_reaches_fixed_point() {
        let g = GridSpec::new(3, 4, 1.0, 2.0).unwrap();
        let p = params(3.0).with_collision(CollisionProfile::Quadratic { coefficient: 0.2 }).unwrap();
        let mut ode = QuadraticOde::gauss(&p, &g).unwrap();
        ode.f1 = ode.f1a.clone();
        ode.f2 = Some(SparseMatrix::zeros(ode.dim, ode.dim * ode.dim));
        let u0 = two_beam(&p, &g);
        let tr = integrate(&ode, &u0, 10.0, 2000, Order::Rk4, None).unwrap();
        let f0 = ode.f0.as_ref().unwrap();
        for (n, &x) in tr.u_t.iter().enumerate() {
            let nu = -ode.f1a.get(n, n);
            assert!((x - f0[n] / nu).abs() < 1e-10 * (f0[n] / nu));
        }
    }

    #[test]
    fn matrix_and_direct_paths_agree_every_step() {
        let g = GridSpec::new(4, 6, 1.0, 2.0).unwrap();
        let p = params(2.0);
        let ode = QuadraticOde::gauss(&p, &g).unwrap();
        let direct = DirectRhs::new(&p, &g);
        let u0 = two_beam(&p, &g);
        let a = integrate(&ode, &u0, 0.5, 50, Order::Rk4, Some(1)).unwrap();
        let b = integrate(&direct, &u0, 0.5, 50, Order::Rk4, Some(1)).unwrap();
        assert_eq!(a.snapshots.len(), 51);
        for ((_, x), (_, y)) in a.snapshots.iter().zip(&b.snapshots) {
            assert!(crate::dist2(x, y) <= 1e-12 * crate::norm2(x));
        }
    }

    #[test]
    fn particle_number_drift_is_small_when_collisions_dominate() {
        let g = GridSpec::new(4, 8, 1.0, 3.0).unwrap();
        let nu0 = 5.0;
        let p = params(nu0).with_normalization(MaxwellianNormalization::UnitMass);
        let ode = QuadraticOde::gauss(&p, &g).unwrap();
        let u0 = two_beam(&p, &g);
        let n0 = particle_number(&g, &u0).unwrap();
        let tr = integrate(&ode, &u0, 5.0 / nu0, 400, Order::Rk4, Some(20)).unwrap();
        for (_, u) in &tr.snapshots {
            let n = particle_number(&g, u).unwrap();
            assert!(((n - n0) / n0).abs() < 0.01, "{n} vs {n0}");
        }
    }

    #[test]
    fn richardson_refinement() {
        let g = GridSpec::new(2, 4, 1.0, 2.0).unwrap();
        let p = params(2.0);
        let ode = QuadraticOde::gauss(&p, &g).unwrap();
        let u0 = two_beam(&p, &g);
        let (tr, est) = integrate_to_tolerance(&ode, &u0, 0.5, Order::Rk4, 1e-12, 4, 1 << 16).unwrap();
        let truth = integrate(&ode, &u0, 0.5, 4 * tr.steps, Order::Rk4, None).unwrap().u_t;
        let actual = crate::dist2(&tr.u_t, &truth);
        assert!(est <= 1e-12);
        assert!(actual <= 2.0 * est + 1e-15, "{actual} vs {est}");
        assert!(integrate_to_tolerance(&ode, &u0, 0.5, Order::Euler, 1e-14, 4, 64).is_err());
    }

    #[test]
    fn input_validation() {
        let d = Diagonal(vec![1.0]);
        assert!(integrate(&d, &[1.0], 1.0, 0, Order::Rk4, None).is_err());
        assert!(integrate(&d, &[1.0, 2.0], 1.0, 1, Order::Rk4, None).is_err());
        assert!(Order::from_order(3).is_err());
        assert_eq!(Order::from_order(4).unwrap(), Order::Rk4);
        let blow = Diagonal(vec![1e300]);
        assert!(matches!(integrate(&blow, &[1e10], 1.0, 2, Order::Euler, None), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn cost_examples() {
        assert_eq!(classical_cost(4, 10, 16), 640);
        assert_eq!(classical_cost(4, 20, 16), 2 * classical_cost(4, 10, 16));
        // doubling T at fixed ε_c quadruples the count
        let a = classical_cost_fixed_ratio(4.0, 0.01, 5, 2.0);
        let b = classical_cost_fixed_ratio(8.0, 0.01, 5, 2.0);
        assert!((b / a - 4.0).abs() < 1e-12);
        // halving ε_c doubles it
        let c = classical_cost_fixed_ratio(4.0, 0.005, 5, 2.0);
        assert!((c / a - 2.0).abs() < 1e-12);
    }

    #[test]
    fn comparison_examples() {
        let u = vec![3.0, 4.0, 0.0];
        let same = compare_solutions(&u, &u).unwrap();
        assert_eq!((same.relative_l2, same.max_abs_cell), (0.0, 0.0));
        assert!(same.normalized_state_error.abs() < 1e-16);
        let eps = 1e-3;
        let v = vec![3.0 + eps, 4.0, 0.0];
        let r = compare_solutions(&u, &v).unwrap();
        assert!((r.relative_l2 - eps / 5.0).abs() < 1e-15);
        assert!((r.max_abs_cell - eps).abs() < 1e-15);
        assert!(compare_solutions(&u, &[1.0]).is_err());
    }
}
