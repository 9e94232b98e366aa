//! A small-scale mixing-rate run: coupled free/wired chains, the 0/1
//! per-sample statistic, and the power-law fit. The acceptance suite runs
//! the full R in {8,...,64} version; this one finishes in about a minute.

use fkmix::estimators::{estimate_delta_r, fit_exponent, McConfig};
use fkmix::lattice::BoxLattice;
use fkmix::rcm::RcmParams;

fn main() {
    let params = RcmParams::critical(2.0).unwrap();
    let mut points = Vec::new();
    println!("coupled mixing-rate estimates at q=2 criticality:");
    for &size in &[4, 8, 16] {
        let lat = BoxLattice::build(size).unwrap();
        let mut mc = McConfig::new(31415);
        mc.chains = 2;
        mc.samples_per_chain = 2000;
        mc.max_rounds = 10;
        mc.rel_err_target = Some(0.08);
        mc.burn_in = Some(64);
        mc.stride = Some(1);
        let est = estimate_delta_r(&lat, params, &mc).unwrap();
        println!(
            "  R={size:<3} delta = {:.5} ± {:.5}   (n={}, tau_int={:.2} sweeps)",
            est.mean, est.stderr, est.n_raw, est.tau_int
        );
        points.push((size as f64, est));
    }
    let fit = fit_exponent(&points).unwrap();
    println!(
        "fitted exponent {:.3} ± {:.3}, 95% CI [{:.3}, {:.3}] (continuum prediction at q=2: 1)",
        fit.exponent, fit.stderr, fit.ci95.0, fit.ci95.1
    );
    println!("note: these sizes are far from the scaling regime; expect drift.");
}
