//! Modulus densities and the Laplace-transform cross-check.
//!
//! The odd/even modulus densities are
//!     m(τ) = Z_parity(τ) · (2cosχ / (√2 π)) · η(2iτ),
//! and their Laplace transforms ∫ e^{-πγ²x²τ/4} m(τ) dτ have closed
//! hyperbolic forms coming from the boundary-length moments. Verifying the
//! two against each other exercises the series, the eta function, the
//! modular transform and the Poisson summation in one shot.

use crate::error::{FkError, Result};
use crate::exact::series::{z_closed, z_open, z_open_log};
use crate::exact::{dedekind_eta, CleParams, ModulusPoint, Parity, SeriesAccuracy};
use std::f64::consts::PI;

/// Below this modulus the open channel converges fastest; above it the
/// closed channel does.
const CHANNEL_SWITCH: f64 = 0.2;
/// Below this modulus the prefactors are assembled in log space to dodge
/// intermediate overflow.
const LOG_SPACE_BELOW: f64 = 0.05;

/// Density of the annulus-modulus law for odd/even loop levels.
pub fn modulus_density(
    parity: Parity,
    tau: f64,
    params: &CleParams,
    acc: SeriesAccuracy,
) -> Result<f64> {
    let pt = ModulusPoint::from_tau(tau)?;
    let front = 2.0 * params.chi.cos() / (2.0f64.sqrt() * PI);
    if tau < LOG_SPACE_BELOW {
        // η(2iτ) = (2τ)^{-1/2} η(i/(2τ)) in logs, joined with the log-space
        // partition function: separately both factors overflow long before
        // their product does
        let (sign, ln_z) = z_open_log(parity, pt, params, acc)?;
        let mut ln_eta = -0.5 * (2.0 * tau).ln() - PI / (24.0 * tau);
        let mut qk = (-PI / tau).exp();
        let mut k = 0;
        while qk > acc.tol && k < acc.max_terms {
            ln_eta += (1.0 - qk).ln();
            qk *= (-PI / tau).exp();
            k += 1;
        }
        let v = sign * front.signum() * (ln_z + ln_eta + front.abs().ln()).exp();
        return Ok(v);
    }
    let z = if tau < CHANNEL_SWITCH {
        z_open(parity, pt, params, acc)?
    } else {
        z_closed(parity, pt, params, acc)?
    };
    Ok(z * front * dedekind_eta(2.0 * tau, acc)?)
}

/// Closed hyperbolic form of ∫ e^{-πγ²x²τ/4} m_parity(τ) dτ for the
/// non-simple side (γ = 4/√κ, so γ²/4 = g).
fn laplace_closed_form(parity: Parity, x: f64, params: &CleParams) -> f64 {
    let (g, chi) = (params.g, params.chi);
    let gamma = params.gamma_lqg;
    let cos_chi = chi.cos();
    let front = 4.0 * cos_chi * (PI * x).sinh() / (PI * gamma * x);
    let ch = 2.0 * (g * PI * x).cosh();
    match parity {
        Parity::Odd => front
            * (ch / (ch * ch - 4.0 * cos_chi * cos_chi)
                - ((1.0 - g) * PI * x).sinh() / (PI * x).sinh()),
        Parity::Even => front * (2.0 * cos_chi / (ch * ch - 4.0 * cos_chi * cos_chi)),
    }
}

/// Relative residual |quadrature - closed form| / |closed form| of the
/// Laplace identity at frequency x > 0. Non-simple side only (κ ∈ (4,8)).
pub fn verify_laplace(
    parity: Parity,
    x: f64,
    params: &CleParams,
    quad_tol: f64,
) -> Result<f64> {
    if !(params.kappa > 4.0 && params.kappa < 8.0) {
        return Err(FkError::Domain(format!(
            "Laplace check needs kappa in (4,8), got {}",
            params.kappa
        )));
    }
    if !(x > 0.0) {
        return Err(FkError::Domain(format!("frequency must be positive, got {x}")));
    }
    let acc = SeriesAccuracy::default();
    let decay = PI * params.gamma_lqg * params.gamma_lqg * x * x / 4.0;
    let f = |tau: f64| -> Result<f64> {
        Ok((-decay * tau).exp() * modulus_density(parity, tau, params, acc)?)
    };

    // the integrand vanishes to double precision below this point
    let tau_floor = 3e-4;
    let mut total = integrate_adaptive(&f, tau_floor, CHANNEL_SWITCH, quad_tol * 1e-2)?;
    let mut lo = CHANNEL_SWITCH;
    let mut width = CHANNEL_SWITCH;
    let mut quiet = 0;
    for _ in 0..60 {
        let part = integrate_adaptive(&f, lo, lo + width, quad_tol * 1e-2)?;
        total += part;
        lo += width;
        width *= 2.0;
        if part.abs() < quad_tol * 0.01 * total.abs() {
            quiet += 1;
            if quiet >= 2 {
                break;
            }
        } else {
            quiet = 0;
        }
    }
    let rhs = laplace_closed_form(parity, x, params);
    Ok((total - rhs).abs() / rhs.abs())
}

// ---- Gauss–Kronrod 15(7) with adaptive bisection ------------------------------

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_33,
    0.949_107_912_342_758_524_526_189_684_047_85,
    0.864_864_423_359_769_072_789_712_788_640_93,
    0.741_531_185_599_394_439_863_864_773_280_79,
    0.586_087_235_467_691_130_294_144_838_258_73,
    0.405_845_151_377_397_166_906_606_412_076_96,
    0.207_784_955_007_898_467_600_689_403_773_24,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_97,
    0.063_092_092_629_978_553_290_700_663_189_2,
    0.104_790_010_322_250_183_839_876_322_541_52,
    0.140_653_259_715_525_918_745_189_590_510_24,
    0.169_004_726_639_267_902_826_583_426_598_55,
    0.190_350_578_064_785_409_913_256_402_421_01,
    0.204_432_940_075_298_892_414_161_999_234_65,
    0.209_482_141_084_727_828_012_999_174_891_71,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_08,
    0.279_705_391_489_276_667_901_467_771_423_78,
    0.381_830_050_505_118_944_950_369_775_488_98,
    0.417_959_183_673_469_387_755_102_040_816_33,
];

/// One 15-point Kronrod panel with its embedded 7-point Gauss estimate.
fn gk15<F: Fn(f64) -> Result<f64>>(f: &F, a: f64, b: f64) -> Result<(f64, f64)> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center)?;
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let dx = half * XGK[i];
        let f1 = f(center - dx)?;
        let f2 = f(center + dx)?;
        kronrod += WGK[i] * (f1 + f2);
        if i % 2 == 1 {
            gauss += WG[i / 2] * (f1 + f2);
        }
    }
    Ok((kronrod * half, (kronrod - gauss).abs() * half))
}

fn integrate_adaptive<F: Fn(f64) -> Result<f64>>(
    f: &F,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<f64> {
    fn recurse<F: Fn(f64) -> Result<f64>>(
        f: &F,
        a: f64,
        b: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64> {
        let (value, err) = gk15(f, a, b)?;
        if err <= tol * value.abs().max(1e-12) || b - a < 1e-12 {
            return Ok(value);
        }
        if depth == 0 {
            return Err(FkError::Accuracy(format!(
                "quadrature did not converge on [{a}, {b}] (err {err:.3e})"
            )));
        }
        let mid = 0.5 * (a + b);
        Ok(recurse(f, a, mid, tol, depth - 1)? + recurse(f, mid, b, tol, depth - 1)?)
    }
    recurse(f, a, b, tol, 24)
}
