//! Plasma parameters, Krook collision model, Maxwellian target and
//! initial states, plus the plasma-feasibility bounds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpec;

/// Physical constants used by every matrix build.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// Elementary charge magnitude (C).
    pub q: f64,
    /// Electron mass (kg).
    pub m_e: f64,
    /// Vacuum permittivity (F/m).
    pub eps0: f64,
    /// Boltzmann constant (J/K).
    pub k_b: f64,
}

impl PhysicalConstants {
    /// CODATA 2018 SI values.
    pub const SI: Self =
        Self { q: 1.602_176_634e-19, m_e: 9.109_383_701_5e-31, eps0: 8.854_187_812_8e-12, k_b: 1.380_649e-23 };

    /// Every constant set to 1.
    pub const fn normalized() -> Self {
        Self { q: 1.0, m_e: 1.0, eps0: 1.0, k_b: 1.0 }
    }

    /// `q² / (m_e ε₀)`, the plasma-frequency factor shared by the field terms.
    pub fn field_factor(&self) -> f64 {
        self.q * self.q / (self.m_e * self.eps0)
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::SI
    }
}

/// Velocity-dependent part `h(v)` of the Krook frequency `ν = ν₀ + h(v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CollisionProfile {
    Zero,
    /// `h(v) = coefficient · v²`.
    Quadratic {
        coefficient: f64,
    },
}

impl CollisionProfile {
    /// `h(v) = ε_h ν₀ (v / v_max)²` with `ε_h = 10⁻³`.
    pub fn default_for(nu0: f64, v_max: f64) -> Self {
        Self::Quadratic { coefficient: 1e-3 * nu0 / (v_max * v_max) }
    }

    pub fn eval(&self, v: f64) -> f64 {
        match *self {
            Self::Zero => 0.0,
            Self::Quadratic { coefficient } => coefficient * v * v,
        }
    }
}

/// How the Maxwellian target is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxwellianNormalization {
    /// Prefactor `𝒩 / (2 x_max Δv)` as written; integrates to `𝒩/2`.
    #[default]
    HalfMass,
    /// Prefactor doubled so the full-grid integral is `𝒩`.
    UnitMass,
}

/// Plasma and collision parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlasmaParams {
    pub constants: PhysicalConstants,
    /// Areal electron number density `𝒩` (1/m²).
    pub ncal: f64,
    /// Maxwellian decay factor `b = m_e / (2 k_B 𝒯)` (s²/m²).
    pub b: f64,
    /// Base collision frequency `ν₀` (1/s).
    pub nu0: f64,
    pub collision: CollisionProfile,
    pub log_lambda: f64,
    /// Volumetric density for the `ν₀` model (1/m³).
    pub nbar: Option<f64>,
    pub normalization: MaxwellianNormalization,
}

impl PlasmaParams {
    /// Parameters with `h ≡ 0`, `log Λ = 10` and half-mass Maxwellian normalization.
    pub fn new(constants: PhysicalConstants, ncal: f64, b: f64, nu0: f64) -> Result<Self> {
        let p = Self {
            constants,
            ncal,
            b,
            nu0,
            collision: CollisionProfile::Zero,
            log_lambda: 10.0,
            nbar: None,
            normalization: MaxwellianNormalization::HalfMass,
        };
        p.validate()?;
        Ok(p)
    }

    /// Builder-style collision profile.
    pub fn with_collision(mut self, collision: CollisionProfile) -> Result<Self> {
        self.collision = collision;
        self.validate()?;
        Ok(self)
    }

    pub fn with_normalization(mut self, normalization: MaxwellianNormalization) -> Self {
        self.normalization = normalization;
        self
    }

    /// Checks `b, ν₀, 𝒩 > 0` and `h ≥ 0`.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for (name, value) in [("b", self.b), ("nu0", self.nu0), ("Ncal", self.ncal)] {
            if !(value.is_finite() && value > 0.0) {
                problems.push(format!("{name} must be positive (got {value})"));
            }
        }
        let c = &self.constants;
        for (name, value) in [("q", c.q), ("m_e", c.m_e), ("eps0", c.eps0), ("k_B", c.k_b)] {
            if !(value.is_finite() && value > 0.0) {
                problems.push(format!("{name} must be positive (got {value})"));
            }
        }
        if let CollisionProfile::Quadratic { coefficient } = self.collision {
            if !(coefficient.is_finite() && coefficient >= 0.0) {
                problems.push(format!("collision coefficient must be nonnegative (got {coefficient})"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(problems.join("; ")))
        }
    }

    /// Temperature implied by `b`.
    pub fn temperature(&self) -> f64 {
        self.constants.m_e / (2.0 * self.constants.k_b * self.b)
    }

    /// `max_j h(v_j) / ν₀`, reported rather than enforced.
    pub fn h_ratio(&self, g: &GridSpec) -> f64 {
        g.velocities().iter().map(|&v| self.collision.eval(v)).fold(0.0, f64::max) / self.nu0
    }
}

/// Decay factor `b = m_e / (2 k_B 𝒯)`.
pub fn decay_factor(c: &PhysicalConstants, temperature: f64) -> Result<f64> {
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::InvalidParameter(format!("temperature must be positive (got {temperature})")));
    }
    Ok(c.m_e / (2.0 * c.k_b * temperature))
}

/// `v_max = 10 v_p` with `v_p = 1/√b`.
pub fn thermal_v_max(b: f64) -> f64 {
    10.0 / b.sqrt()
}

/// Two beams in velocity columns `J` and `N_v − J + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeamSpec {
    pub j: usize,
}

impl BeamSpec {
    pub fn new(g: &GridSpec, j: usize) -> Result<Self> {
        if j == 0 || j > g.nv() / 2 {
            return Err(Error::IndexOutOfRange { context: "physics.beam", index: j, max: g.nv() / 2 });
        }
        Ok(Self { j })
    }

    /// The mirror column `N_v − J + 1`.
    pub fn mirror(&self, g: &GridSpec) -> usize {
        g.nv() - self.j + 1
    }
}

/// `ν(v) = ν₀ + h(v)`.
pub fn nu(p: &PlasmaParams, v: f64) -> f64 {
    p.nu0 + p.collision.eval(v)
}

/// `ν` on every velocity node (0-based).
pub fn nu_on_grid(p: &PlasmaParams, g: &GridSpec) -> Vec<f64> {
    g.velocities().into_iter().map(|v| nu(p, v)).collect()
}

/// Base prefactor `𝒩 / (2 x_max Δv)`.
pub fn beam_prefactor(p: &PlasmaParams, g: &GridSpec) -> f64 {
    p.ncal / (2.0 * g.x_max() * g.dv())
}

/// Discretized Maxwellian target `f^M_j`, `j = 1..N_v` (stored 0-based).
pub fn maxwellian_vector(p: &PlasmaParams, g: &GridSpec) -> Vec<f64> {
    // shift by the smallest v² so the normalizer cannot underflow to zero
    let vs = g.velocities();
    let v2_min = vs.iter().map(|v| v * v).fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = vs.iter().map(|v| (-p.b * (v * v - v2_min)).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut prefactor = beam_prefactor(p, g);
    if p.normalization == MaxwellianNormalization::UnitMass {
        prefactor *= 2.0;
    }
    weights.into_iter().map(|w| prefactor * w / total).collect()
}

/// Two spatially uniform beams normalized so that `∬ f = 𝒩`.
pub fn two_beam_initial(p: &PlasmaParams, g: &GridSpec, beams: BeamSpec) -> Result<Vec<f64>> {
    let beams = BeamSpec::new(g, beams.j)?;
    let value = beam_prefactor(p, g);
    let (a, b) = (beams.j - 1, beams.mirror(g) - 1);
    let mut u = vec![0.0; g.n_points()];
    for row in u.chunks_mut(g.nv()) {
        row[a] = value;
        row[b] = value;
    }
    Ok(u)
}

/// Closed-form `‖u_in‖ = 𝒩 √N_x / (√2 x_max Δv)`.
pub fn two_beam_norm(p: &PlasmaParams, g: &GridSpec) -> f64 {
    p.ncal * (g.nx() as f64).sqrt() / (std::f64::consts::SQRT_2 * g.x_max() * g.dv())
}

/// Collision-frequency model `q⁴ n̄ log Λ / [(4πε₀)² m_e^{1/2} (𝒯 k_B)^{3/2}]`.
pub fn collision_frequency_model(c: &PhysicalConstants, nbar: f64, temperature: f64, log_lambda: f64) -> Result<f64> {
    if !(nbar.is_finite() && nbar > 0.0) {
        return Err(Error::InvalidParameter(format!("density must be positive (got {nbar})")));
    }
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::InvalidParameter(format!("temperature must be positive (got {temperature})")));
    }
    let four_pi_eps = 4.0 * std::f64::consts::PI * c.eps0;
    Ok(c.q.powi(4) * nbar * log_lambda / (four_pi_eps * four_pi_eps * c.m_e.sqrt() * (temperature * c.k_b).powf(1.5)))
}

fn feasibility_constant(c: &PhysicalConstants) -> f64 {
    25.0 / (std::f64::consts::PI * std::f64::consts::PI) * c.q * c.q / (c.eps0 * c.k_b)
}

/// Upper bound on `N_v` for which the asymptotic convergence parameter stays
/// below one with the `ν₀` model, `log Λ = 10` and `v_max = 10 v_p`.
pub fn nv_feasibility_bound(c: &PhysicalConstants, x_max: f64, temperature: f64) -> Result<f64> {
    if !(x_max.is_finite() && x_max > 0.0 && temperature.is_finite() && temperature > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "x_max and temperature must be positive (got {x_max}, {temperature})"
        )));
    }
    Ok((feasibility_constant(c) / (x_max * temperature)).powf(2.0 / 3.0))
}

/// Largest `x_max 𝒯` admitted by [`nv_feasibility_bound`] for a given `N_v`.
pub fn feasibility_product_bound(c: &PhysicalConstants, nv: f64) -> Result<f64> {
    if !(nv.is_finite() && nv > 0.0) {
        return Err(Error::InvalidParameter(format!("N_v must be positive (got {nv})")));
    }
    Ok(feasibility_constant(c) / nv.powf(1.5))
}

/// Neutralizing ion background `∬^{x_i} f_ion = (i − 1) 𝒩 / N_x`.
pub fn background_integral(p: &PlasmaParams, g: &GridSpec, i: usize) -> Result<f64> {
    if i == 0 || i > g.nx() {
        return Err(Error::IndexOutOfRange { context: "physics.background_integral", index: i, max: g.nx() });
    }
    Ok((i - 1) as f64 * p.ncal / g.nx() as f64)
}
