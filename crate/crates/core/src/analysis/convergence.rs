//! Convergence parameter `R`, closed-form norms and the `γ` rescaling.

use serde::Serialize;

use super::linalg::{lognorm, spectral_norm, EigenOptions};
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::physics::{self, PlasmaParams};
use crate::qode::{Coupling, QuadraticOde};

/// Norms and log-norm of an assembled system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SystemNorms {
    pub mu_f1: f64,
    pub norm_f1: f64,
    /// `None` for Ampère coupling.
    pub norm_f2: Option<f64>,
    pub norm_f0: Option<f64>,
}

pub fn system_norms(ode: &QuadraticOde, opts: &EigenOptions) -> Result<SystemNorms> {
    Ok(SystemNorms {
        mu_f1: lognorm(&ode.f1, opts)?,
        norm_f1: spectral_norm(&ode.f1, opts)?,
        norm_f2: ode.f2.as_ref().map(|m| spectral_norm(m, opts)).transpose()?,
        norm_f0: ode.f0.as_deref().map(crate::norm2),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub coupling: Coupling,
    pub mu_f1: f64,
    pub norm_f1: f64,
    pub norm_f2: Option<f64>,
    pub norm_f0: Option<f64>,
    pub norm_uin: f64,
    /// `+∞` when `μ ≥ 0`.
    pub r: f64,
    pub r_asymptotic: Option<f64>,
    pub gamma: Option<f64>,
    pub r_plus: Option<f64>,
    pub feasible: bool,
    pub g_u: Option<f64>,
    pub eta: Option<f64>,
}

/// `R = (‖F2‖‖u‖ + ‖F0‖/‖u‖) / |μ(F1)|`.
pub fn r_from_norms(mu: f64, norm_f2: f64, norm_f0: f64, norm_u: f64) -> f64 {
    if mu >= 0.0 {
        return f64::INFINITY;
    }
    (norm_f2 * norm_u + norm_f0 / norm_u) / mu.abs()
}

/// Larger root `r₊` of `‖F2‖ r² + μ r + ‖F0‖ = 0`.
pub fn r_plus(mu: f64, norm_f2: f64, norm_f0: f64) -> Result<f64> {
    if mu >= 0.0 {
        return Err(Error::NotDissipative { mu });
    }
    if norm_f2 <= 0.0 {
        return Err(Error::InfeasibleRescaling("‖F2‖ = 0 leaves r₊ undefined".into()));
    }
    let disc = mu * mu - 4.0 * norm_f2 * norm_f0;
    if disc < 0.0 {
        return Err(Error::InfeasibleRescaling(format!("negative discriminant {disc:e}")));
    }
    Ok((-mu + disc.sqrt()) / (2.0 * norm_f2))
}

/// Full convergence report for a system and initial state.
pub fn convergence_r(ode: &QuadraticOde, u_in: &[f64], opts: &EigenOptions) -> Result<ConvergenceReport> {
    let norms = system_norms(ode, opts)?;
    convergence_r_with_norms(ode.coupling, &norms, u_in)
}

pub fn convergence_r_with_norms(coupling: Coupling, norms: &SystemNorms, u_in: &[f64]) -> Result<ConvergenceReport> {
    let norm_uin = crate::norm2(u_in);
    if norm_uin == 0.0 {
        return Err(Error::InvalidParameter("‖u_in‖ = 0".into()));
    }
    let mu = norms.mu_f1;
    let r = match (norms.norm_f2, norms.norm_f0) {
        (Some(f2), Some(f0)) => r_from_norms(mu, f2, f0, norm_uin),
        _ => f64::INFINITY,
    };
    let (gamma, rp) = match (norms.norm_f2, norms.norm_f0) {
        (Some(f2), Some(f0)) => match r_plus(mu, f2, f0) {
            Ok(rp) => (Some((norm_uin * rp).sqrt()), Some(rp)),
            Err(_) => (None, None),
        },
        _ => (None, None),
    };
    Ok(ConvergenceReport {
        coupling,
        mu_f1: mu,
        norm_f1: norms.norm_f1,
        norm_f2: norms.norm_f2,
        norm_f0: norms.norm_f0,
        norm_uin,
        r,
        r_asymptotic: None,
        gamma,
        r_plus: rp,
        feasible: mu < 0.0 && r < 1.0,
        g_u: None,
        eta: None,
    })
}

/// Large-grid limit `q² 𝒩 N_v^{3/2} / (2√2 m_e ε₀ v_max ν₀)`.
pub fn asymptotic_r(p: &PlasmaParams, g: &GridSpec) -> f64 {
    let c = &p.constants;
    c.q * c.q * p.ncal * (g.nv() as f64).powf(1.5)
        / (2.0 * std::f64::consts::SQRT_2 * c.m_e * c.eps0 * g.v_max() * p.nu0)
}

/// `(q² x_max / (√2 m_e ε₀)) cos(π/(N_v+1)) √(N_v (2N_x − 3)) / N_x`.
pub fn f2_norm_closed_form(p: &PlasmaParams, g: &GridSpec) -> Result<f64> {
    if g.nx() < 2 {
        return Err(Error::Precondition(format!("closed-form ‖F2‖ needs N_x ≥ 2 (got {})", g.nx())));
    }
    let c = &p.constants;
    let (nx, nv) = (g.nx() as f64, g.nv() as f64);
    Ok(c.q * c.q * g.x_max() / (std::f64::consts::SQRT_2 * c.m_e * c.eps0)
        * (std::f64::consts::PI / (1.0 + nv)).cos()
        * (nv * (2.0 * nx - 3.0)).sqrt()
        / nx)
}

/// `‖F0‖` from the half-grid sums, valid for any even `ν(v)`.
pub fn f0_norm_exact(p: &PlasmaParams, g: &GridSpec) -> Result<f64> {
    let nv = g.nv();
    if !nv.is_multiple_of(2) {
        return Err(Error::InvalidGrid(format!("N_v must be even (got {nv})")));
    }
    let vs = g.velocities();
    // same shift as the Maxwellian; it cancels between numerator and normalizer
    let v2_min = vs.iter().map(|v| v * v).fold(f64::INFINITY, f64::min);
    let upper = &vs[nv / 2..];
    let denom: f64 = 2.0 * upper.iter().map(|v| (-p.b * (v * v - v2_min)).exp()).sum::<f64>();
    let inner: f64 = upper
        .iter()
        .map(|&v| {
            let nu = physics::nu(p, v);
            nu * nu * (-2.0 * p.b * (v * v - v2_min)).exp()
        })
        .sum();
    let mut prefactor = physics::beam_prefactor(p, g);
    if p.normalization == physics::MaxwellianNormalization::UnitMass {
        prefactor *= 2.0;
    }
    Ok(prefactor / denom * (2.0 * g.nx() as f64 * inner).sqrt())
}

/// `μ(F1) = −min_j ν(v_j)` for Gauss coupling.
pub fn mu_closed_form(p: &PlasmaParams, g: &GridSpec) -> f64 {
    -physics::nu_on_grid(p, g).into_iter().fold(f64::INFINITY, f64::min)
}

/// `R` from closed-form norms only (no eigen-solves).
pub fn r_closed_form(p: &PlasmaParams, g: &GridSpec) -> Result<f64> {
    Ok(r_from_norms(
        mu_closed_form(p, g),
        f2_norm_closed_form(p, g)?,
        f0_norm_exact(p, g)?,
        physics::two_beam_norm(p, g),
    ))
}

/// Result of the `γ` rescaling.
#[derive(Debug, Clone)]
pub struct Rescaled {
    pub ode: QuadraticOde,
    pub u_bar: Vec<f64>,
    pub gamma: f64,
    pub r_plus: f64,
    pub norm_u_bar: f64,
    /// `‖F̄2‖`, `‖F1‖`, `‖F̄0‖` and `μ` of the rescaled system.
    pub norms: SystemNorms,
    /// `‖ū_in‖ < 1`.
    pub unit_ball: bool,
    /// `|μ| > ‖F̄2‖ + ‖F̄0‖`.
    pub dissipation_margin: bool,
}

/// `u → u/γ`, `F2 → γ F2`, `F0 → F0/γ` with `γ = √(‖u_in‖ r₊)`.
pub fn rescale(ode: &QuadraticOde, u_in: &[f64], opts: &EigenOptions) -> Result<Rescaled> {
    let norms = system_norms(ode, opts)?;
    rescale_with_norms(ode, u_in, &norms)
}

pub fn rescale_with_norms(ode: &QuadraticOde, u_in: &[f64], norms: &SystemNorms) -> Result<Rescaled> {
    let (f2, f0) = match (norms.norm_f2, norms.norm_f0) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::WrongCoupling { context: "analysis.rescale", expected: "gauss" }),
    };
    let norm_u = crate::norm2(u_in);
    if norm_u == 0.0 {
        return Err(Error::InvalidParameter("‖u_in‖ = 0".into()));
    }
    let rp = r_plus(norms.mu_f1, f2, f0)?;
    let gamma = (norm_u * rp).sqrt();
    let scaled = ode.scaled(gamma, 1.0 / gamma)?;
    let u_bar: Vec<f64> = u_in.iter().map(|x| x / gamma).collect();
    let norm_u_bar = crate::norm2(&u_bar);
    let new_norms = SystemNorms {
        mu_f1: norms.mu_f1,
        norm_f1: norms.norm_f1,
        norm_f2: Some(gamma * f2),
        norm_f0: Some(f0 / gamma),
    };
    Ok(Rescaled {
        ode: scaled,
        u_bar,
        gamma,
        r_plus: rp,
        norm_u_bar,
        norms: new_norms,
        unit_ball: norm_u_bar < 1.0,
        dissipation_margin: norms.mu_f1.abs() > gamma * f2 + f0 / gamma,
    })
}

/// `g_u = ‖u_in‖ / ‖u(T)‖`.
pub fn g_u(norm_u_in: f64, norm_u_t: f64) -> f64 {
    norm_u_in / norm_u_t
}

/// `η = T / (ε_q ε_c)`.
pub fn eta(t: f64, eps_q: f64, eps_c: f64) -> f64 {
    t / (eps_q * eps_c)
}

/// `‖u(T)‖` under the relaxed-Maxwellian estimate: `√N_x ‖f^M‖`.
pub fn maxwellian_state_norm(p: &PlasmaParams, g: &GridSpec) -> f64 {
    (g.nx() as f64).sqrt() * crate::norm2(&physics::maxwellian_vector(p, g))
}
