//! Boundary-length moment formulas for the annulus measures behind the odd-
//! and even-level loop laws: each is the closed form of M[L₁ e^{-t L₁} L₂^{ix}]
//! for the corresponding quantum-annulus measure, printed here verbatim with
//! the removable x = 0 singularities filled by their limits.

use crate::error::{FkError, Result};
use crate::exact::{complex_gamma, CleParams};
use num_complex::Complex64;
use std::f64::consts::PI;

/// Which annulus measure the moment refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MomentKind {
    /// boundary-touching forested annulus (non-simple side)
    Touching,
    /// chain of k forested annuli (non-simple side)
    Chain(u32),
    /// odd-level annulus, non-simple side κ ∈ (4,8)
    OddDense,
    /// even-level annulus, non-simple side κ ∈ (4,8)
    EvenDense,
    /// odd-level annulus, simple side κ ∈ (8/3,4)
    OddSimple,
    /// even-level annulus, simple side κ ∈ (8/3,4)
    EvenSimple,
}

impl MomentKind {
    fn requires_dense(&self) -> bool {
        matches!(
            self,
            MomentKind::Touching | MomentKind::Chain(_) | MomentKind::OddDense | MomentKind::EvenDense
        )
    }
}

/// The x-dependent real body of the moment (everything except
/// t^{-ix-1} Γ(1+ix)).
pub(crate) fn moment_body(kind: MomentKind, x: f64, params: &CleParams) -> Result<f64> {
    let (g, chi) = (params.g, params.chi);
    let cos_chi = chi.cos();
    let small = x.abs() < 1e-8;
    Ok(match kind {
        MomentKind::Touching => {
            // 2cosχ sinh((1/g - 1)πx) / sinh(πx/g)
            if small {
                2.0 * cos_chi * (1.0 - g)
            } else {
                2.0 * cos_chi * ((1.0 / g - 1.0) * PI * x).sinh() / (PI * x / g).sinh()
            }
        }
        MomentKind::Chain(k) => {
            let rho = cos_chi / (PI * x).cosh();
            rho.powi(k as i32)
        }
        MomentKind::OddDense => {
            if small {
                cos_chi / (g * chi.sin() * chi.sin()) - 2.0 * cos_chi * (1.0 - g) / g
            } else {
                let front = 2.0 * cos_chi * (PI * x).sinh() / (g * PI * x).sinh();
                let ch = 2.0 * (g * PI * x).cosh();
                front
                    * (ch / (ch * ch - 4.0 * cos_chi * cos_chi)
                        - ((1.0 - g) * PI * x).sinh() / (PI * x).sinh())
            }
        }
        MomentKind::EvenDense => {
            if small {
                cos_chi * cos_chi / (g * chi.sin() * chi.sin())
            } else {
                let front = 2.0 * cos_chi * (PI * x).sinh() / (g * PI * x).sinh();
                let ch = 2.0 * (g * PI * x).cosh();
                front * 2.0 * cos_chi / (ch * ch - 4.0 * cos_chi * cos_chi)
            }
        }
        MomentKind::OddSimple => {
            let ch = 2.0 * (PI * x).cosh();
            2.0 * cos_chi * ch / (ch * ch - 4.0 * cos_chi * cos_chi)
        }
        MomentKind::EvenSimple => {
            let ch = 2.0 * (PI * x).cosh();
            4.0 * cos_chi * cos_chi / (ch * ch - 4.0 * cos_chi * cos_chi)
        }
    })
}

/// M[L₁ e^{-t L₁} L₂^{ix}] = t^{-ix-1} Γ(1+ix) · body(kind, x).
pub fn qa_moment(kind: MomentKind, t: f64, x: f64, params: &CleParams) -> Result<Complex64> {
    if !(t > 0.0) {
        return Err(FkError::Domain(format!("Laplace variable must be positive, got {t}")));
    }
    if kind.requires_dense() {
        if !(params.kappa > 4.0 && params.kappa < 8.0) {
            return Err(FkError::Domain(format!(
                "{kind:?} needs kappa in (4,8), got {}",
                params.kappa
            )));
        }
    } else if !(params.kappa > 8.0 / 3.0 && params.kappa < 4.0) {
        return Err(FkError::Domain(format!(
            "{kind:?} needs kappa in (8/3,4), got {}",
            params.kappa
        )));
    }
    let body = moment_body(kind, x, params)?;
    let t_pow = Complex64::from_polar(1.0 / t, -x * t.ln());
    let gamma = complex_gamma(Complex64::new(1.0, x))?;
    Ok(t_pow * gamma * body)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense() -> CleParams {
        CleParams::new(5.0).unwrap()
    }

    fn simple() -> CleParams {
        CleParams::new(3.0).unwrap()
    }

    #[test]
    fn chain_at_zero_is_cos_chi_power() {
        let p = dense();
        for k in 1..=5u32 {
            let v = qa_moment(MomentKind::Chain(k), 2.0, 0.0, &p).unwrap();
            let expect = p.chi.cos().powi(k as i32) / 2.0;
            assert!((v.re - expect).abs() < 1e-13, "k={k}");
            assert!(v.im.abs() < 1e-13);
        }
    }

    /// the x = 0 values equal the numerical x -> 0 limits from both sides
    #[test]
    fn zero_limits_match() {
        let dense_kinds = [
            MomentKind::Touching,
            MomentKind::Chain(2),
            MomentKind::OddDense,
            MomentKind::EvenDense,
        ];
        for kind in dense_kinds {
            let p = dense();
            let at0 = moment_body(kind, 0.0, &p).unwrap();
            for &x in &[1e-6, -1e-6] {
                let near = moment_body(kind, x, &p).unwrap();
                assert!((near - at0).abs() < 1e-10, "{kind:?}: {near} vs {at0}");
            }
        }
        for kind in [MomentKind::OddSimple, MomentKind::EvenSimple] {
            let p = simple();
            let at0 = moment_body(kind, 0.0, &p).unwrap();
            for &x in &[1e-6, -1e-6] {
                let near = moment_body(kind, x, &p).unwrap();
                assert!((near - at0).abs() < 1e-10, "{kind:?}");
            }
        }
    }

    /// the even-level chain resums geometrically to the printed
    /// (2cosχ)²/((2cosh πx)² - (2cosχ)²) form
    #[test]
    fn even_chain_resums() {
        let p = dense();
        for &x in &[0.0, 0.3, 1.0, 2.5] {
            let mut sum = 0.0;
            let mut k = 2;
            loop {
                let term = moment_body(MomentKind::Chain(k), x, &p).unwrap();
                sum += term;
                if term.abs() < 1e-16 {
                    break;
                }
                k += 2;
            }
            let ch = 2.0 * (PI * x).cosh();
            let c = 2.0 * p.chi.cos();
            let closed = c * c / (ch * ch - c * c);
            assert!((sum - closed).abs() < 1e-12, "x={x}: {sum} vs {closed}");
        }
    }

    #[test]
    fn kind_domains_enforced() {
        assert!(qa_moment(MomentKind::OddDense, 1.0, 0.5, &simple()).is_err());
        assert!(qa_moment(MomentKind::OddSimple, 1.0, 0.5, &dense()).is_err());
        assert!(qa_moment(MomentKind::Touching, 0.0, 0.5, &dense()).is_err());
    }

    /// full moments carry the t^{-ix-1} Γ(1+ix) prefactor
    #[test]
    fn prefactor_shape() {
        let p = dense();
        let t = 3.0;
        let x = 0.7;
        let v = qa_moment(MomentKind::EvenDense, t, x, &p).unwrap();
        let body = moment_body(MomentKind::EvenDense, x, &p).unwrap();
        let expected = Complex64::from_polar(1.0 / t, -x * t.ln())
            * complex_gamma(Complex64::new(1.0, x)).unwrap()
            * body;
        assert!((v - expected).norm() < 1e-14);
        // |Γ(1+ix)| decays in x, so the moment must too
        let v2 = qa_moment(MomentKind::EvenDense, t, 6.0, &p).unwrap();
        assert!(v2.norm() < v.norm());
    }
}
