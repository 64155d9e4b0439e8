//! KKS phase-field corrosion model in non-dimensional form.
//!
//! φ is the order parameter (1 solid, 0 liquid) and c the normalised metal
//! concentration. Both equations are written as residuals so that the same
//! functions serve the network losses and the finite-difference solver.

mod scenario;

pub use scenario::{BcKind, Face, FaceKind, Pit, Scenario, ScenarioError, BUILTIN_SCENARIOS};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhysicsError {
    #[error("characteristic scales must be positive (l_c = {l_c}, t_c = {t_c})")]
    NonPositiveScale { l_c: f64, t_c: f64 },
    #[error("invalid physical parameters: {0}")]
    InvalidParams(String),
}

/// SI material constants of the corrosion model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Gradient energy coefficient, J/m.
    pub alpha_phi: f64,
    /// Double-well barrier height, J/m³.
    pub w_phi: f64,
    /// Interface thickness, m.
    pub ell: f64,
    /// Interface kinetics parameter, m³/(J·s).
    pub l_mob: f64,
    /// Diffusion mobility, m⁵/(J·s).
    pub m_diff: f64,
    /// Free-energy curvature, J/m³.
    pub curvature_a: f64,
    pub c_se: f64,
    pub c_le: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self {
            alpha_phi: 1.03e-4,
            w_phi: 1.76e7,
            ell: 1.0e-5,
            l_mob: 2.0,
            m_diff: 7.94e-18,
            curvature_a: 5.35e7,
            c_se: 1.0,
            c_le: 0.036,
        }
    }
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<(), PhysicsError> {
        let fields = [
            ("alpha_phi", self.alpha_phi),
            ("w_phi", self.w_phi),
            ("ell", self.ell),
            ("l_mob", self.l_mob),
            ("m_diff", self.m_diff),
            ("curvature_a", self.curvature_a),
            ("c_se", self.c_se),
            ("c_le", self.c_le),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PhysicsError::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.c_le < self.c_se && self.c_se <= 1.0) {
            return Err(PhysicsError::InvalidParams(format!(
                "need 0 < c_le < c_se <= 1, got c_le = {}, c_se = {}",
                self.c_le, self.c_se
            )));
        }
        Ok(())
    }

    /// Steepness of the equilibrium tanh profile, 1/m.
    pub fn profile_steepness(&self) -> f64 {
        self.w_phi.sqrt() / (2.0 * self.alpha_phi).sqrt()
    }
}

/// Dimensionless groups of the non-dimensional system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NondimParams {
    pub n_ch: f64,
    pub n_ac1: f64,
    pub n_ac2: f64,
    pub n_ac3: f64,
    pub c_se: f64,
    pub c_le: f64,
    /// Characteristic length, m.
    pub l_c: f64,
    /// Characteristic time, s.
    pub t_c: f64,
}

impl NondimParams {
    pub fn delta_c(&self) -> f64 {
        self.c_se - self.c_le
    }
}

impl Default for NondimParams {
    fn default() -> Self {
        nondimensionalize(&PhysicalParams::default(), DEFAULT_L_C, DEFAULT_T_C)
            .expect("default scales are positive")
    }
}

/// Default characteristic length, m.
pub const DEFAULT_L_C: f64 = 1.0e-4;
/// Default characteristic time, s.
pub const DEFAULT_T_C: f64 = 10.0;

pub fn nondimensionalize(p: &PhysicalParams, l_c: f64, t_c: f64) -> Result<NondimParams, PhysicsError> {
    if !(l_c > 0.0 && t_c > 0.0) {
        return Err(PhysicsError::NonPositiveScale { l_c, t_c });
    }
    Ok(NondimParams {
        n_ch: 2.0 * p.curvature_a * p.m_diff * t_c / (l_c * l_c),
        n_ac1: 2.0 * p.curvature_a * p.l_mob * t_c,
        n_ac2: p.l_mob * p.w_phi * t_c,
        n_ac3: p.l_mob * p.alpha_phi * t_c / (l_c * l_c),
        c_se: p.c_se,
        c_le: p.c_le,
        l_c,
        t_c,
    })
}

/// Interpolation function h(φ) = −2φ³ + 3φ².
#[inline]
pub fn interp_h<T: Real>(phi: T) -> T {
    phi * phi * (phi * -2.0 + 3.0)
}

/// h′(φ) = −6φ² + 6φ.
#[inline]
pub fn interp_h_prime<T: Real>(phi: T) -> T {
    phi * (phi * -6.0 + 6.0)
}

/// Double well g(φ) = φ²(1 − φ)².
#[inline]
pub fn well_g<T: Real>(phi: T) -> T {
    let q = phi * (-phi + 1.0);
    q * q
}

/// g′(φ) = 2φ(1 − φ)(1 − 2φ).
#[inline]
pub fn well_g_prime<T: Real>(phi: T) -> T {
    phi * (-phi + 1.0) * (phi * -2.0 + 1.0) * 2.0
}

/// Cahn-Hilliard residual ∂c/∂t − N_CH Δc + N_CH (c_se − c_le) Δh(φ).
#[inline]
pub fn residual_ch<T: Real>(c_t: T, lap_c: T, lap_h: T, p: &NondimParams) -> T {
    c_t - lap_c * p.n_ch + lap_h * (p.n_ch * p.delta_c())
}

/// Allen-Cahn residual
/// ∂φ/∂t − N_AC1 [c − h(φ)(c_se − c_le) − c_le](c_se − c_le) h′(φ)
/// + N_AC2 g′(φ) − N_AC3 Δφ.
#[inline]
pub fn residual_ac<T: Real>(phi_t: T, phi: T, c: T, lap_phi: T, p: &NondimParams) -> T {
    let dc = p.delta_c();
    let bracket = c - interp_h(phi) * dc - p.c_le;
    phi_t - bracket * interp_h_prime(phi) * (p.n_ac1 * dc) + well_g_prime(phi) * p.n_ac2
        - lap_phi * p.n_ac3
}

/// Equilibrium profile φ₀ for a signed distance in metres (positive = liquid).
pub fn initial_phi_si(x_d: f64, p: &PhysicalParams) -> f64 {
    0.5 * (1.0 - (p.profile_steepness() * x_d).tanh())
}

/// c₀ = h(φ₀)·c_se for a signed distance in metres.
pub fn initial_c_si(x_d: f64, p: &PhysicalParams) -> f64 {
    interp_h(initial_phi_si(x_d, p)) * p.c_se
}

/// φ₀ for a non-dimensional signed distance; `l_c` converts to metres.
pub fn initial_phi(x_d: f64, p: &PhysicalParams, l_c: f64) -> f64 {
    initial_phi_si(x_d * l_c, p)
}

/// c₀ for a non-dimensional signed distance.
pub fn initial_c(x_d: f64, p: &PhysicalParams, l_c: f64) -> f64 {
    initial_c_si(x_d * l_c, p)
}

/// Signed distance to the initial interface: max over pits of r − |x − centre|.
/// Positive inside a pit. Without pits the whole domain is solid and the
/// result is −∞.
pub fn signed_interface_distance(point: &[f64], scenario: &Scenario) -> f64 {
    scenario
        .pits
        .iter()
        .map(|pit| {
            let d2: f64 = pit
                .center
                .iter()
                .zip(point)
                .map(|(c, x)| (x - c) * (x - c))
                .sum();
            pit.radius - d2.sqrt()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_values() {
        assert_eq!(interp_h(0.0), 0.0);
        assert_eq!(interp_h(1.0), 1.0);
        assert_eq!(interp_h(0.5), 0.5);
        assert_eq!(interp_h(0.25), 0.15625);
        assert_eq!(interp_h_prime(0.5), 1.5);
        assert_eq!(well_g(0.5), 0.0625);
        assert_eq!(well_g_prime(0.5), 0.0);
    }

    #[test]
    fn scales_must_be_positive() {
        let p = PhysicalParams::default();
        assert!(matches!(
            nondimensionalize(&p, 0.0, 10.0),
            Err(PhysicsError::NonPositiveScale { .. })
        ));
        assert!(nondimensionalize(&p, 1e-4, -1.0).is_err());
    }

    #[test]
    fn invalid_params() {
        let mut p = PhysicalParams::default();
        p.c_le = 1.5;
        assert!(p.validate().is_err());
        assert!(PhysicalParams::default().validate().is_ok());
    }
}
