//! Carleman level `N_C`, Taylor order `k`, error budget and step parameters.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::physics::{self, PlasmaParams};

/// Error split `δ = ε_q/4`, `δ′ = ε_q / ((4 + ε_q) √N_C)`, which makes
/// `δ + (1+δ) δ′ √N_C = ε_q/2` exactly.
pub fn error_budget(eps_q: f64, nc: usize) -> (f64, f64) {
    let delta = eps_q / 4.0;
    let delta_prime = eps_q / (4.0 + eps_q) / (nc as f64).sqrt();
    (delta, delta_prime)
}

/// `N_C = ⌈2 ln(T‖F̄2‖/(δ‖ū(T)‖)) / ln(1/‖ū_in‖)⌉`, at least 1.
pub fn choose_nc(t: f64, norm_f2_bar: f64, delta: f64, norm_u_t: f64, norm_u_bar_in: f64) -> Result<usize> {
    if norm_u_bar_in.is_nan() || norm_u_bar_in >= 1.0 {
        return Err(Error::Precondition(format!("‖ū_in‖ = {norm_u_bar_in} must be below 1")));
    }
    if !(t > 0.0 && delta > 0.0 && norm_u_t > 0.0) {
        return Err(Error::InvalidParameter("T, δ and ‖ū(T)‖ must be positive".into()));
    }
    if norm_f2_bar == 0.0 || norm_u_bar_in == 0.0 {
        return Ok(1);
    }
    let raw = 2.0 * (t * norm_f2_bar / (delta * norm_u_t)).ln() / (1.0 / norm_u_bar_in).ln();
    if !raw.is_finite() {
        return Err(Error::Precondition(format!("N_C is unbounded ({raw})")));
    }
    Ok((raw.ceil().max(1.0)) as usize)
}

/// Smallest `δ` that a given `N_C` satisfies.
pub fn implied_delta(nc: usize, t: f64, norm_f2_bar: f64, norm_u_t: f64, norm_u_bar_in: f64) -> f64 {
    t * norm_f2_bar / norm_u_t * norm_u_bar_in.powf(nc as f64 / 2.0)
}

/// `Ω = e³ s / δ′ · (1 + T e² β / σ)` where `s` is the step-count scale
/// (`T‖A‖` or `m`), `β` the source norm and `σ` the state norm.
pub fn taylor_omega(scale: f64, t: f64, delta_prime: f64, norm_source: f64, norm_state: f64) -> f64 {
    let e = std::f64::consts::E;
    e.powi(3) * scale / delta_prime * (1.0 + t * e * e * norm_source / norm_state)
}

fn factorial_at_least(n: usize, omega: f64) -> bool {
    let mut f = 1.0f64;
    for i in 2..=n {
        f *= i as f64;
        if f >= omega {
            return true;
        }
    }
    f >= omega
}

/// `k = ⌈2 ln Ω / ln ln Ω⌉` (1 when `ln ln Ω ≤ 1`), raised until `(k+1)! ≥ Ω`.
pub fn choose_k(omega: f64) -> usize {
    let mut k = 1usize;
    if omega > std::f64::consts::E {
        let l = omega.ln();
        let ll = l.ln();
        if ll > 1.0 {
            k = (2.0 * l / ll).ceil() as usize;
        }
    }
    while !factorial_at_least(k + 1, omega) {
        k += 1;
    }
    k
}

/// `‖A‖ ≤ N_C (‖F̄0‖ + ‖F1‖ + ‖F̄2‖)`.
pub fn a_norm_bound(nc: usize, norm_f0_bar: f64, norm_f1: f64, norm_f2_bar: f64) -> f64 {
    nc as f64 * (norm_f0_bar + norm_f1 + norm_f2_bar)
}

/// Analytic bound on `‖F1‖₁` for Gauss coupling:
/// `ν(v_max) + 2 q²𝒩(N_x−1)/(2 m_e ε₀ Δv N_x) + 2 v_max/(2Δx)`.
pub fn f1_one_norm_bound(p: &PlasmaParams, g: &GridSpec) -> f64 {
    let nx = g.nx() as f64;
    physics::nu(p, g.v_max())
        + p.constants.field_factor() * p.ncal / (2.0 * g.dv()) * (nx - 1.0) / nx * 2.0
        + g.v_max() / (2.0 * g.dx()) * 2.0
}

/// `m = ⌈T‖A‖⌉` (at least 1) and `τ = T/m`, so `‖A‖τ ≤ 1`.
pub fn step_parameters(t: f64, norm_a: f64) -> (usize, f64) {
    let m = ((t * norm_a).ceil() as usize).max(1);
    (m, t / m as f64)
}

/// Second-order scaling estimate `(N_x + N_v^{1/3}) ln(T N_v² / δ)`.
/// Documentation only; the operational level comes from [`choose_nc`].
pub fn nc_second_order_estimate(g: &GridSpec, t: f64, delta: f64) -> f64 {
    let nv = g.nv() as f64;
    (g.nx() as f64 + nv.cbrt()) * (t * nv * nv / delta).ln()
}

/// Inputs to [`plan_truncation`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanInputs {
    pub t: f64,
    pub eps_q: f64,
    pub eps_c: f64,
    pub norm_f0_bar: f64,
    pub norm_f1: f64,
    pub norm_f2_bar: f64,
    pub norm_u_bar_in: f64,
    pub norm_u_bar_t: f64,
}

/// Explicit overrides for the automatically chosen parameters.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PlanOverrides {
    pub nc: Option<usize>,
    pub k: Option<usize>,
    pub tau: Option<f64>,
    /// Replace the `‖A‖` bound by a computed value.
    pub norm_a: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncationPlan {
    pub t: f64,
    pub nc: usize,
    pub k: usize,
    pub omega: f64,
    pub delta: f64,
    pub delta_prime: f64,
    pub eps_q: f64,
    pub eps_c: f64,
    pub tau: f64,
    pub m: usize,
    pub p: usize,
    pub norm_a_bound: f64,
    /// `δ` actually met by `N_C` (differs from `delta` under an override).
    pub delta_implied: f64,
}

/// Chooses `N_C`, then `δ′`, `‖A‖`, `m = p`, `τ`, `Ω` and `k` in that order.
pub fn plan_truncation(inp: &PlanInputs, ov: &PlanOverrides) -> Result<TruncationPlan> {
    if !(inp.t > 0.0 && inp.eps_q > 0.0) {
        return Err(Error::InvalidParameter("T and ε_q must be positive".into()));
    }
    let delta = inp.eps_q / 4.0;
    let nc = match ov.nc {
        Some(0) => return Err(Error::InvalidParameter("N_C must be at least 1".into())),
        Some(nc) => nc,
        None => choose_nc(inp.t, inp.norm_f2_bar, delta, inp.norm_u_bar_t, inp.norm_u_bar_in)?,
    };
    let (_, delta_prime) = error_budget(inp.eps_q, nc);
    let norm_a_bound = a_norm_bound(nc, inp.norm_f0_bar, inp.norm_f1, inp.norm_f2_bar);
    let norm_a = ov.norm_a.unwrap_or(norm_a_bound);
    let (m, tau) = match ov.tau {
        Some(tau) if tau > 0.0 => {
            let m = ((inp.t / tau).ceil() as usize).max(1);
            (m, inp.t / m as f64)
        }
        Some(tau) => return Err(Error::InvalidParameter(format!("τ must be positive (got {tau})"))),
        None => step_parameters(inp.t, norm_a),
    };
    let omega = taylor_omega(inp.t * norm_a, inp.t, delta_prime, inp.norm_f0_bar, inp.norm_u_bar_t);
    let k = match ov.k {
        Some(0) => return Err(Error::InvalidParameter("k must be at least 1".into())),
        Some(k) => k,
        None => choose_k(omega),
    };
    Ok(TruncationPlan {
        t: inp.t,
        nc,
        k,
        omega,
        delta,
        delta_prime,
        eps_q: inp.eps_q,
        eps_c: inp.eps_c,
        tau,
        m,
        p: m,
        norm_a_bound,
        delta_implied: implied_delta(nc, inp.t, inp.norm_f2_bar, inp.norm_u_bar_t, inp.norm_u_bar_in),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::linalg::{spectral_norm, EigenOptions};
    use crate::physics::{CollisionProfile, PhysicalConstants};
    use crate::qode::QuadraticOde;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn budget_sums_to_half_eps() {
        for eps in [0.01, 0.1, 0.5, 1.0] {
            for nc in 1..6 {
                let (d, dp) = error_budget(eps, nc);
                let total = d + (1.0 + d) * dp * (nc as f64).sqrt();
                assert!((total - eps / 2.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn k_examples() {
        assert_eq!(choose_k(1e3), 8);
        assert_eq!(choose_k(2.0), 1);
        assert_eq!(choose_k(0.5), 1);
        // floor applies below e^e, then the factorial check lifts k
        assert_eq!(choose_k(10.0), 3);
    }

    #[test]
    fn k_satisfies_factorial_on_random_omegas() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..1000 {
            let omega = 10f64.powf(rng.gen_range(1.0..12.0));
            let k = choose_k(omega);
            let fact: f64 = (1..=k + 1).map(|i| i as f64).product();
            assert!(fact >= omega, "Ω={omega} k={k}");
        }
    }

    #[test]
    fn nc_examples() {
        let nc = |delta: f64| choose_nc(1.0, 2.0, delta, 0.5, 0.4).unwrap();
        assert!(nc(0.1) >= nc(0.2));
        assert!(nc(1e-6) > nc(1e-2));
        assert!(choose_nc(1.0, 2.0, 0.1, 0.5, 1.0).is_err());
        let near = choose_nc(1.0, 2.0, 0.1, 0.5, 1.0 - 1e-9).unwrap();
        assert!(near > 1_000_000);
        assert_eq!(choose_nc(1e-9, 1.0, 0.5, 1.0, 0.1).unwrap(), 1);
    }

    #[test]
    fn nc_satisfies_implied_delta() {
        for (t, f2, d, ut, ub) in [(1.0, 2.0, 0.1, 0.5, 0.4), (3.0, 0.7, 0.01, 0.2, 0.9), (0.5, 10.0, 0.3, 1.0, 0.2)] {
            let nc = choose_nc(t, f2, d, ut, ub).unwrap();
            assert!(implied_delta(nc, t, f2, ut, ub) <= d * (1.0 + 1e-12));
            if nc > 1 {
                assert!(implied_delta(nc - 1, t, f2, ut, ub) > d);
            }
        }
    }

    proptest! {
        #[test]
        fn doubling_t_adds_bounded_levels(t in 0.1f64..10.0, f2 in 0.1f64..10.0, d in 1e-4f64..0.5, ut in 0.05f64..1.0, ub in 0.05f64..0.95) {
            let a = choose_nc(t, f2, d, ut, ub).unwrap();
            let b = choose_nc(2.0 * t, f2, d, ut, ub).unwrap();
            let extra = (2.0 * 2f64.ln() / (1.0 / ub).ln()).ceil() as usize;
            prop_assert!(b >= a);
            prop_assert!(b <= a + extra);
        }

        #[test]
        fn larger_delta_never_raises_nc(t in 0.1f64..10.0, f2 in 0.1f64..10.0, d in 1e-4f64..0.5, s in 1.0f64..10.0, ub in 0.05f64..0.95) {
            prop_assert!(choose_nc(t, f2, d * s, 0.5, ub).unwrap() <= choose_nc(t, f2, d, 0.5, ub).unwrap());
        }
    }

    #[test]
    fn step_parameters_keep_a_tau_below_one() {
        for (t, a) in [(1.0, 0.3), (2.5, 7.1), (0.1, 100.0), (1.0, 0.0)] {
            let (m, tau) = step_parameters(t, a);
            assert!(m >= 1);
            assert!(a * tau <= 1.0 + 1e-15);
            assert!((tau * m as f64 - t).abs() < 1e-14);
        }
    }

    #[test]
    fn a_norm_bound_with_one_level_is_plain_sum() {
        assert_eq!(a_norm_bound(1, 1.0, 2.0, 3.5), 6.5);
        assert_eq!(a_norm_bound(3, 1.0, 2.0, 3.5), 19.5);
    }

    #[test]
    fn f1_norm_chain() {
        let p = PlasmaParams::new(PhysicalConstants::normalized(), 1.3, 0.2, 3.0)
            .unwrap()
            .with_collision(CollisionProfile::Quadratic { coefficient: 0.05 })
            .unwrap();
        for (nx, nv) in [(2, 4), (3, 6), (5, 8)] {
            let g = GridSpec::new(nx, nv, 1.0, 2.0).unwrap();
            let ode = QuadraticOde::gauss(&p, &g).unwrap();
            let spec = spectral_norm(&ode.f1, &EigenOptions::default()).unwrap();
            let one = ode.f1.norm_one();
            let inf = ode.f1.norm_inf();
            assert!(spec <= (one * inf).sqrt() * (1.0 + 1e-12));
            assert!((one - inf).abs() < 1e-12 * one);
            assert!(one <= f1_one_norm_bound(&p, &g) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn plan_respects_invariants() {
        let inp = PlanInputs {
            t: 0.5,
            eps_q: 0.2,
            eps_c: 0.1,
            norm_f0_bar: 0.8,
            norm_f1: 6.0,
            norm_f2_bar: 1.5,
            norm_u_bar_in: 0.35,
            norm_u_bar_t: 0.3,
        };
        let plan = plan_truncation(&inp, &PlanOverrides::default()).unwrap();
        assert_eq!(plan.m, plan.p);
        assert!((plan.tau - plan.t / plan.m as f64).abs() < 1e-15);
        assert_eq!(plan.m, (plan.t * plan.norm_a_bound).ceil() as usize);
        let budget = plan.delta + (1.0 + plan.delta) * plan.delta_prime * (plan.nc as f64).sqrt();
        assert!(budget <= plan.eps_q / 2.0 + 1e-15);
        let fact: f64 = (1..=plan.k + 1).map(|i| i as f64).product();
        assert!(fact >= plan.omega);
        assert!(plan.delta_implied <= plan.delta * (1.0 + 1e-12));

        let forced =
            plan_truncation(&inp, &PlanOverrides { nc: Some(2), k: Some(5), tau: Some(0.1), norm_a: None }).unwrap();
        assert_eq!((forced.nc, forced.k, forced.m), (2, 5, 5));
        assert!(plan_truncation(&inp, &PlanOverrides { nc: Some(0), ..Default::default() }).is_err());
    }

    #[test]
    fn second_order_estimate_grows_with_grid() {
        let a = nc_second_order_estimate(&GridSpec::new(2, 4, 1.0, 1.0).unwrap(), 1.0, 0.1);
        let b = nc_second_order_estimate(&GridSpec::new(4, 8, 1.0, 1.0).unwrap(), 1.0, 0.1);
        assert!(b > a && a > 0.0);
    }
}
