//! The brute-force oracle: exact random-cluster measure on the 3x3 box by
//! enumerating all 2^12 configurations. Everything statistical in this crate
//! is gated against these numbers.

use fkmix::cli::enumerate_fixture;
use fkmix::lattice::BoxLattice;
use fkmix::rcm::{enumerate_measure, BoundaryCondition, RcmParams};

fn main() {
    let lat = BoxLattice::build(1).unwrap();
    for &q in &[1.0, 1.5, 2.0] {
        let params = RcmParams::critical(q).unwrap();
        let free = enumerate_measure(&lat, &BoundaryCondition::Free, &params).unwrap();
        let wired = enumerate_measure(&lat, &BoundaryCondition::Wired, &params).unwrap();
        let e = lat.h_edge(0, 0);
        println!(
            "q={q:<4} p_c={:.6}  Z_free={:.6e}  Z_wired={:.6e}  delta(1)={:.12}",
            params.p,
            free.z,
            wired.z,
            wired.edge_marginal(e) - free.edge_marginal(e)
        );
    }
    println!();
    println!("full fixture at q=2:");
    let params = RcmParams::critical(2.0).unwrap();
    print!("{}", enumerate_fixture(&lat, &params).unwrap());
}
