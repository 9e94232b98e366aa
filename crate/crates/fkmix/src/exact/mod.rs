//! Exact continuum quantities: the odd/even loop-law density ratio, annulus
//! partition functions in both channels, special functions, modulus
//! densities, boundary-length moments, and the quadrature cross-check that
//! ties them together.
//!
//! Everything is parametrized by κ ∈ (8/3, 8) through [`CleParams`]:
//! g = 4/κ, χ = π(1-g), central charge c = 1 - 6(1-g)²/g, and the predicted
//! mixing-rate exponent 3κ/8 - 1 with asymptotic amplitude 4cos((κ-4)π/4).

pub mod dd;
mod eta;
mod gamma;
mod moments;
mod quad;
mod series;

pub use eta::dedekind_eta;
pub use gamma::complex_gamma;
pub use moments::{qa_moment, MomentKind};
pub use quad::{modulus_density, verify_laplace};
pub use series::{
    rn_ratio, rn_ratio_asymptotic, z_closed, z_even_closed, z_even_open, z_odd_closed,
    z_odd_open, z_open, Parity,
};

use crate::error::{FkError, Result};

/// κ and every derived continuum constant.
#[derive(Clone, Copy, Debug)]
pub struct CleParams {
    pub kappa: f64,
    /// g = 4/κ ∈ (1/2, 3/2)
    pub g: f64,
    /// χ = π(1-g)
    pub chi: f64,
    /// central charge 1 - 6(1-g)²/g
    pub central_charge: f64,
    /// the quantum-gravity coupling: 4/√κ on the non-simple side κ ∈ (4,8),
    /// √κ on the simple side κ ∈ (8/3,4), both 2 at κ = 4
    pub gamma_lqg: f64,
    /// predicted mixing-rate exponent 3κ/8 - 1
    pub predicted_iota: f64,
    /// leading asymptotic amplitude 4cos((κ-4)π/4)
    pub amplitude: f64,
}

impl CleParams {
    pub fn new(kappa: f64) -> Result<CleParams> {
        if !(kappa > 8.0 / 3.0 && kappa < 8.0) {
            return Err(FkError::Domain(format!(
                "kappa must lie in (8/3, 8), got {kappa}"
            )));
        }
        let g = 4.0 / kappa;
        let chi = std::f64::consts::PI * (1.0 - g);
        Ok(CleParams {
            kappa,
            g,
            chi,
            central_charge: 1.0 - 6.0 * (1.0 - g) * (1.0 - g) / g,
            gamma_lqg: if kappa >= 4.0 { 4.0 / kappa.sqrt() } else { kappa.sqrt() },
            predicted_iota: 3.0 * kappa / 8.0 - 1.0,
            amplitude: 4.0 * ((kappa - 4.0) * std::f64::consts::FRAC_PI_4).cos(),
        })
    }

    /// Via the lattice map κ(q) = 4π/arccos(-√q/2).
    pub fn from_q(q: f64) -> Result<CleParams> {
        CleParams::new(crate::rcm::kappa_of_q(q)?)
    }
}

/// Predicted mixing-rate exponent 3κ/8 - 1.
///
/// At κ = 6 the mixing rate vanishes identically, so the exponent is vacuous
/// there; the value is still returned for table-building.
pub fn predicted_iota(kappa: f64) -> Result<f64> {
    Ok(CleParams::new(kappa)?.predicted_iota)
}

/// Leading asymptotic amplitude 4cos((κ-4)π/4); zero exactly at κ = 6.
pub fn predicted_amplitude(kappa: f64) -> Result<f64> {
    Ok(CleParams::new(kappa)?.amplitude)
}

/// Truncation control for the series and products.
#[derive(Clone, Copy, Debug)]
pub struct SeriesAccuracy {
    pub tol: f64,
    pub max_terms: u32,
}

impl SeriesAccuracy {
    pub fn new(tol: f64, max_terms: u32) -> Result<SeriesAccuracy> {
        if !(tol >= 1e-15) {
            return Err(FkError::Domain(format!("tolerance floor is 1e-15, got {tol}")));
        }
        Ok(SeriesAccuracy { tol, max_terms })
    }
}

impl Default for SeriesAccuracy {
    fn default() -> Self {
        SeriesAccuracy { tol: 1e-13, max_terms: 100_000 }
    }
}

/// One annulus modulus in its three equivalent coordinates.
#[derive(Clone, Copy, Debug)]
pub struct ModulusPoint {
    pub tau: f64,
    /// r = e^{-2πτ}, the closed-channel variable
    pub r: f64,
    /// q = e^{-π/τ}, the open-channel variable
    pub q_open: f64,
}

impl ModulusPoint {
    pub fn from_tau(tau: f64) -> Result<ModulusPoint> {
        if !(tau > 0.0) {
            return Err(FkError::Domain(format!("modulus must be positive, got {tau}")));
        }
        Ok(ModulusPoint {
            tau,
            r: (-2.0 * std::f64::consts::PI * tau).exp(),
            q_open: (-std::f64::consts::PI / tau).exp(),
        })
    }

    /// From the annulus inner radius r ∈ (0,1): τ = log(1/r) / 2π.
    pub fn from_r(r: f64) -> Result<ModulusPoint> {
        if !(r > 0.0 && r < 1.0) {
            return Err(FkError::Domain(format!("radius must be in (0,1), got {r}")));
        }
        ModulusPoint::from_tau((1.0 / r).ln() / (2.0 * std::f64::consts::PI))
    }
}
