//! Quadrature of the modulus densities against their closed hyperbolic
//! Laplace transforms: the cross-check that ties the partition functions to
//! the boundary-length moment formulas.

use fkmix::exact::{qa_moment, verify_laplace, CleParams, MomentKind, Parity};

fn main() {
    for &kappa in &[5.0, 16.0 / 3.0, 7.0] {
        let params = CleParams::new(kappa).unwrap();
        println!("kappa = {kappa:.6} (gamma = {:.6})", params.gamma_lqg);
        for &x in &[0.25, 0.5, 1.0, 2.0] {
            let odd = verify_laplace(Parity::Odd, x, &params, 1e-8).unwrap();
            let even = verify_laplace(Parity::Even, x, &params, 1e-8).unwrap();
            println!("  x = {x:<5}  odd residual {odd:.2e}   even residual {even:.2e}");
        }
        // the boundary-length moments behind the right-hand sides
        let m1 = qa_moment(MomentKind::OddDense, 1.0, 0.5, &params).unwrap();
        let m2 = qa_moment(MomentKind::EvenDense, 1.0, 0.5, &params).unwrap();
        println!("  moment odd (t=1, x=0.5)  = {m1:.6}");
        println!("  moment even (t=1, x=0.5) = {m2:.6}");
        println!();
    }
}
