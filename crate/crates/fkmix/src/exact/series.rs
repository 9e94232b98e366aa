//! The odd/even loop-law density ratio and the annulus partition functions in
//! both channels.
//!
//! Open channel (variable q = e^{-π/τ}):
//!     Z_parity(τ) = q^{-c/24} ∏_{k>=1}(1-q^k)^{-1}
//!                   Σ_{p ≡ parity} [sin((p+1)χ)/sin χ] q^{g p²/4 - (1-g)p/2},
//! where the odd-level function sums over even p and vice versa.
//!
//! Closed channel (variable r = e^{-2πτ}), obtained by Poisson summation and
//! the eta modular transform:
//!     Z_parity(τ) = (2g)^{-1/2} r^{-c/12} ∏_{k>=1}(1-r^{2k})^{-1}
//!                   Σ_m [±1]^m [sin((χ+πm)/g)/sin χ] r^{((χ+πm)²-χ²)/(2π²g)},
//! with (-1)^m present in the odd-level function only.
//!
//! The density ratio of odd- vs even-level loop laws is the closed-channel
//! ratio, which telescopes to
//!     [Σ_m (-1)^m sin(κ(m+1)π/4) r^{κm²/8+(κ/4-1)m}] / [Σ_m sin(...) r^...]
//!     = 1 + 4cos((κ-4)π/4) r^{3κ/8-1} + O(r^{2(3κ/8-1)})   as r -> 0.

use crate::error::{FkError, Result};
use crate::exact::{CleParams, ModulusPoint, SeriesAccuracy};
use std::f64::consts::PI;

/// Which loop-level parity a partition function describes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parity {
    Odd,
    Even,
}

/// The density ratio of odd- vs even-level loop laws at modulus radius r.
///
/// Terms are added shell by shell in |m| (smallest exponents first) until the
/// next shell is below `acc.tol` relative to the largest magnitude seen.
pub fn rn_ratio(kappa: f64, r: f64, acc: SeriesAccuracy) -> Result<f64> {
    CleParams::new(kappa)?;
    if !(r > 0.0 && r < 1.0) {
        return Err(FkError::Domain(format!("radius must be in (0,1), got {r}")));
    }
    let ln_r = r.ln();
    let exponent = |m: f64| kappa * m * m / 8.0 + (kappa / 4.0 - 1.0) * m;
    let weight = |m: f64| (kappa * (m + 1.0) * PI / 4.0).sin();

    let mut num = 0.0;
    let mut den = 0.0;
    let mut magnitude: f64 = 0.0;
    let mut converged = false;
    let mut shell = 0i64;
    while (shell as u32) < acc.max_terms {
        let mut shell_max: f64 = 0.0;
        for m in [shell, -shell] {
            let mf = m as f64;
            let term = weight(mf) * (exponent(mf) * ln_r).exp();
            let sign = if m.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            num += sign * term;
            den += term;
            shell_max = shell_max.max(term.abs());
            if shell == 0 {
                break;
            }
        }
        magnitude = magnitude.max(shell_max);
        // exponents grow monotonically in |m| beyond the first shell
        if shell >= 2 && shell_max < acc.tol * magnitude {
            converged = true;
            break;
        }
        shell += 1;
    }
    if !converged {
        return Err(FkError::Accuracy(format!(
            "ratio series did not converge within {} shells at r={r}",
            acc.max_terms
        )));
    }
    if den.abs() < 1e-300 {
        return Err(FkError::Degenerate(format!(
            "ratio denominator underflowed at kappa={kappa}, r={r}"
        )));
    }
    Ok(num / den)
}

/// The two-term small-r law 1 + 4cos((κ-4)π/4) r^{3κ/8-1}.
pub fn rn_ratio_asymptotic(kappa: f64, r: f64) -> Result<f64> {
    let params = CleParams::new(kappa)?;
    if !(r > 0.0 && r < 1.0) {
        return Err(FkError::Domain(format!("radius must be in (0,1), got {r}")));
    }
    Ok(1.0 + params.amplitude * r.powf(params.predicted_iota))
}

/// sin((p+1)χ)/sin χ with its κ -> 4 (χ -> 0) limit p+1.
fn open_weight(p: f64, chi: f64) -> f64 {
    if chi.abs() < 1e-9 {
        p + 1.0
    } else {
        ((p + 1.0) * chi).sin() / chi.sin()
    }
}

/// ∏_{k>=1} (1 - base^k)^{-1}
fn inverse_q_product(base: f64, acc: SeriesAccuracy) -> Result<f64> {
    let mut product = 1.0;
    let mut bk = base;
    let mut k = 0u32;
    while bk > acc.tol {
        product *= 1.0 - bk;
        bk *= base;
        k += 1;
        if k > acc.max_terms {
            return Err(FkError::Accuracy("q-product did not converge".into()));
        }
    }
    Ok(1.0 / product)
}

fn finite_or_err(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(FkError::Accuracy(format!("{what} overflowed; modulus out of range")))
    }
}

/// Open-channel partition function; `Parity::Odd` sums over even p.
pub fn z_open(parity: Parity, pt: ModulusPoint, params: &CleParams, acc: SeriesAccuracy) -> Result<f64> {
    let (g, chi, c) = (params.g, params.chi, params.central_charge);
    let ln_q = -PI / pt.tau;
    let alpha = |p: f64| g * p * p / 4.0 - (1.0 - g) * p / 2.0;
    let start: i64 = match parity {
        Parity::Odd => 0,
        Parity::Even => 1,
    };
    let mut sum = 0.0;
    let mut magnitude: f64 = 0.0;
    let mut converged = false;
    let mut p = start;
    while (p as u32) < acc.max_terms {
        let mut shell_max: f64 = 0.0;
        for q in [p, -p] {
            let qf = q as f64;
            let term = open_weight(qf, chi) * (alpha(qf) * ln_q).exp();
            sum += term;
            shell_max = shell_max.max(term.abs());
            if q == 0 {
                break;
            }
        }
        magnitude = magnitude.max(shell_max);
        if p >= start + 4 && shell_max < acc.tol * magnitude.max(1e-300) {
            converged = true;
            break;
        }
        p += 2;
    }
    if !converged {
        return Err(FkError::Accuracy("open-channel sum did not converge".into()));
    }
    let prefactor = (-c / 24.0 * ln_q).exp() * inverse_q_product(pt.q_open, acc)?;
    finite_or_err(prefactor * sum, "open-channel partition function")
}

/// Closed-channel partition function; the alternating sign enters the
/// odd-level function only.
///
/// At small modulus this expansion represents an exponentially small value
/// as an alternating sum of O(1) terms, so the sum and prefactor are carried
/// in double-double arithmetic and rounded once at the end; `acc` still caps
/// the term count.
pub fn z_closed(
    parity: Parity,
    pt: ModulusPoint,
    params: &CleParams,
    acc: SeriesAccuracy,
) -> Result<f64> {
    use crate::exact::dd::{Dd, DD_PI};
    const DD_EPS: f64 = 1e-31;

    let g = Dd::from(4.0).div(Dd::from(params.kappa));
    let chi = DD_PI.mul(Dd::from(1.0).sub(g));
    let chi_limit = params.chi.abs() < 1e-9;
    let sin_chi = chi.sin();
    let ln_r = DD_PI.scale(-2.0 * pt.tau);
    let chi_sq = chi.mul(chi);
    let denom = DD_PI.mul(DD_PI).mul(g).scale(2.0);

    let mut sum = Dd::from(0.0);
    let mut magnitude: f64 = 0.0;
    let mut converged = false;
    let mut shell = 0i64;
    while (shell as u32) < acc.max_terms {
        let mut shell_max: f64 = 0.0;
        for m in [shell, -shell] {
            let mf = m as f64;
            let sign = match parity {
                Parity::Odd if m.rem_euclid(2) == 1 => -1.0,
                _ => 1.0,
            };
            let weight = if chi_limit {
                let alt = if m.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                Dd::from(alt * (mf + 1.0))
            } else {
                let arg = chi.add(DD_PI.scale(mf)).div(g);
                arg.sin().div(sin_chi)
            };
            let shifted = chi.add(DD_PI.scale(mf));
            let beta = shifted.mul(shifted).sub(chi_sq).div(denom);
            let term = weight.mul(beta.mul(ln_r).exp()).scale(sign);
            sum = sum.add(term);
            shell_max = shell_max.max(term.hi.abs());
            if m == 0 {
                break;
            }
        }
        magnitude = magnitude.max(shell_max);
        if shell >= 2 && shell_max < DD_EPS * magnitude.max(1e-300) {
            converged = true;
            break;
        }
        shell += 1;
    }
    if !converged {
        return Err(FkError::Accuracy("closed-channel sum did not converge".into()));
    }

    let c = Dd::from(1.0).sub(
        Dd::from(6.0).mul(Dd::from(1.0).sub(g)).mul(Dd::from(1.0).sub(g)).div(g),
    );
    let mut prefactor = g.scale(2.0).sqrt().recip();
    prefactor = prefactor.mul(c.scale(-1.0 / 12.0).mul(ln_r).exp());
    // ∏ (1 - r^{2k})^{-1}
    let r2 = ln_r.scale(2.0).exp();
    let mut product = Dd::from(1.0);
    let mut r2k = r2;
    let mut k = 0u32;
    while r2k.hi > DD_EPS {
        product = product.mul(Dd::from(1.0).sub(r2k));
        r2k = r2k.mul(r2);
        k += 1;
        if k > acc.max_terms {
            return Err(FkError::Accuracy("closed-channel product did not converge".into()));
        }
    }
    prefactor = prefactor.div(product);
    finite_or_err(prefactor.mul(sum).to_f64(), "closed-channel partition function")
}

pub fn z_odd_open(pt: ModulusPoint, params: &CleParams, acc: SeriesAccuracy) -> Result<f64> {
    z_open(Parity::Odd, pt, params, acc)
}

pub fn z_even_open(pt: ModulusPoint, params: &CleParams, acc: SeriesAccuracy) -> Result<f64> {
    z_open(Parity::Even, pt, params, acc)
}

pub fn z_odd_closed(pt: ModulusPoint, params: &CleParams, acc: SeriesAccuracy) -> Result<f64> {
    z_closed(Parity::Odd, pt, params, acc)
}

pub fn z_even_closed(pt: ModulusPoint, params: &CleParams, acc: SeriesAccuracy) -> Result<f64> {
    z_closed(Parity::Even, pt, params, acc)
}

/// Log-space open-channel evaluation for very small τ, where the prefactor
/// q^{-c/24} and the eta factor overflow separately but not jointly; returns
/// (sign, ln |Z|).
pub(crate) fn z_open_log(
    parity: Parity,
    pt: ModulusPoint,
    params: &CleParams,
    acc: SeriesAccuracy,
) -> Result<(f64, f64)> {
    let (g, chi, c) = (params.g, params.chi, params.central_charge);
    let ln_q = -PI / pt.tau;
    let alpha = |p: f64| g * p * p / 4.0 - (1.0 - g) * p / 2.0;
    // factor out the dominant exponent so the scaled sum stays O(1)
    let (p_lead, others): (i64, Vec<i64>) = match parity {
        Parity::Odd => (0, vec![2, -2, 4, -4, 6, -6]),
        Parity::Even => (1, vec![-1, 3, -3, 5, -5]),
    };
    let a0 = alpha(p_lead as f64);
    let w0 = open_weight(p_lead as f64, chi);
    let mut scaled = w0;
    for &p in &others {
        scaled += open_weight(p as f64, chi) * ((alpha(p as f64) - a0) * ln_q).exp();
    }
    if scaled == 0.0 {
        return Err(FkError::Degenerate("log-space sum vanished".into()));
    }
    let ln_product = -{
        // Σ ln(1 - q^k), negligible at the small τ this path serves
        let mut s = 0.0;
        let mut qk = pt.q_open;
        let mut k = 0;
        while qk > acc.tol && k < acc.max_terms {
            s += (1.0 - qk).ln();
            qk *= pt.q_open;
            k += 1;
        }
        s
    };
    let ln_abs = -c / 24.0 * ln_q + a0 * ln_q + scaled.abs().ln() + ln_product;
    Ok((scaled.signum(), ln_abs))
}
