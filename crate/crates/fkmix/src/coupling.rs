//! The increasing coupling of free- and wired-boundary chains.
//!
//! Both chains see the same uniform at each edge; since the heat-bath
//! conditional is monotone in the configuration and in the boundary-condition
//! order for q >= 1, the edgewise order lower <= upper is preserved forever.
//! Every mixing-rate estimator in this crate rides on this coupling: for an
//! increasing event the per-sample statistic 1{upper ∈ A} - 1{lower ∈ A} is
//! 0/1 with variance Δ(1-Δ) instead of O(1).

use crate::error::{FkError, Result};
use crate::estimators::{EstimateResult, SeriesAccumulator};
use crate::lattice::{BoxLattice, EdgeConfig};
use crate::rcm::{BoundaryCondition, ChainState, RcmParams};
use crate::rng;
use rand_pcg::Pcg64;

/// A free chain and a wired chain driven by shared uniforms.
#[derive(Debug)]
pub struct CoupledState {
    pub lower: ChainState,
    pub upper: ChainState,
    pub sweeps: u64,
}

impl CoupledState {
    /// Start from the extreme pair (all-closed free, all-open wired).
    pub fn new(lat: &BoxLattice, params: RcmParams, stream_id: u64) -> Result<CoupledState> {
        if params.q < 1.0 {
            return Err(FkError::Unsupported(format!(
                "monotone coupling needs q >= 1, got {}",
                params.q
            )));
        }
        Ok(CoupledState {
            lower: ChainState::new(
                lat,
                EdgeConfig::all_closed(lat.edge_count()),
                BoundaryCondition::Free,
                params,
                stream_id,
            ),
            upper: ChainState::new(
                lat,
                EdgeConfig::all_open(lat.edge_count()),
                BoundaryCondition::Wired,
                params,
                stream_id,
            ),
            sweeps: 0,
        })
    }

    /// Panics if the edgewise order is violated (a monotonicity bug).
    pub fn assert_ordered(&self) {
        assert!(
            self.lower.config.le(&self.upper.config),
            "coupled chains lost the edgewise order"
        );
    }
}

/// One coupled sweep: for each edge in index order draw a single uniform and
/// update both chains against it. Each chain's update equals the comparison
/// of the shared uniform with its own heat-bath conditional, so the order is
/// preserved (the lower conditional never exceeds the upper's).
pub fn coupled_sweep(lat: &BoxLattice, cs: &mut CoupledState, rng: &mut Pcg64) {
    for e in 0..lat.edge_count() as u32 {
        let u = rng::uniform(rng);
        let lo = cs.lower.update_edge(lat, e, u);
        let up = cs.upper.update_edge(lat, e, u);
        debug_assert!(up || !lo, "coupled order violated at edge {e}");
    }
    cs.lower.sweeps += 1;
    cs.upper.sweeps += 1;
    cs.sweeps += 1;
    // cheap wordwise order check, kept on in release builds
    cs.assert_ordered();
}

/// Mean and error of 1{event(upper)} − 1{event(lower)} over n coupled
/// subsamples taken every `stride` sweeps. The per-sample value lies in
/// {-1, 0, 1}; for increasing events order preservation pins it to {0, 1}.
pub fn coupled_event_difference<F>(
    lat: &BoxLattice,
    cs: &mut CoupledState,
    event: F,
    n: u64,
    stride: u64,
    rng: &mut Pcg64,
) -> Result<EstimateResult>
where
    F: Fn(&EdgeConfig) -> bool,
{
    if n == 0 {
        return Err(FkError::Domain("sample count must be positive".into()));
    }
    let mut acc = SeriesAccumulator::new();
    for _ in 0..n {
        for _ in 0..stride.max(1) {
            coupled_sweep(lat, cs, rng);
        }
        let d = event(&cs.upper.config) as i64 - event(&cs.lower.config) as i64;
        acc.push(d as f64);
    }
    Ok(acc.finish(stride.max(1)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rcm::enumerate_measure;

    #[test]
    fn q1_coalesces_after_one_sweep() {
        let lat = BoxLattice::build(2).unwrap();
        let params = RcmParams::new(0.5, 1.0).unwrap();
        let mut cs = CoupledState::new(&lat, params, 0).unwrap();
        let mut rng = rng::stream(3, 10, 0);
        coupled_sweep(&lat, &mut cs, &mut rng);
        assert_eq!(cs.lower.config, cs.upper.config);
    }

    #[test]
    fn order_preserved_many_sweeps() {
        let lat = BoxLattice::build(2).unwrap();
        let params = RcmParams::critical(2.0).unwrap();
        let mut cs = CoupledState::new(&lat, params, 0).unwrap();
        let mut rng = rng::stream(4, 11, 0);
        for _ in 0..2000 {
            coupled_sweep(&lat, &mut cs, &mut rng);
            assert!(cs.lower.config.le(&cs.upper.config));
        }
    }

    #[test]
    fn rejects_q_below_one() {
        let lat = BoxLattice::build(1).unwrap();
        let params = RcmParams::new(0.5, 0.9).unwrap();
        assert!(CoupledState::new(&lat, params, 0).is_err());
    }

    #[test]
    fn constant_event_gives_zero() {
        let lat = BoxLattice::build(1).unwrap();
        let params = RcmParams::critical(2.0).unwrap();
        let mut cs = CoupledState::new(&lat, params, 0).unwrap();
        let mut rng = rng::stream(5, 12, 0);
        let res =
            coupled_event_difference(&lat, &mut cs, |_| true, 200, 1, &mut rng).unwrap();
        assert_eq!(res.mean, 0.0);
        assert_eq!(res.stderr, 0.0);
    }

    /// The coupled estimator agrees with independent free/wired chains and
    /// carries strictly smaller variance.
    #[test]
    fn coupled_vs_independent_chains() {
        use crate::estimators::SeriesAccumulator;
        use crate::rcm::glauber_sweep;

        let lat = BoxLattice::build(4).unwrap();
        let params = RcmParams::critical(2.0).unwrap();
        let e = lat.h_edge(0, 0);
        let n = 30_000u64;

        let mut cs = CoupledState::new(&lat, params, 0).unwrap();
        let mut rng = rng::stream(55, 14, 0);
        for _ in 0..200 {
            coupled_sweep(&lat, &mut cs, &mut rng);
        }
        let coupled =
            coupled_event_difference(&lat, &mut cs, |c| c.is_open(e), n, 1, &mut rng).unwrap();

        // independent chains with their own streams
        let mut acc_free = SeriesAccumulator::new();
        let mut acc_wired = SeriesAccumulator::new();
        for (bc, acc, stream) in [
            (BoundaryCondition::Free, &mut acc_free, 1u64),
            (BoundaryCondition::Wired, &mut acc_wired, 2u64),
        ] {
            let mut st = ChainState::new(
                &lat,
                EdgeConfig::all_closed(lat.edge_count()),
                bc,
                params,
                stream,
            );
            let mut rng = rng::stream(56, 14, stream);
            for _ in 0..200 {
                glauber_sweep(&lat, &mut st, &mut rng);
            }
            for _ in 0..n {
                glauber_sweep(&lat, &mut st, &mut rng);
                acc.push(st.config.is_open(e) as u8 as f64);
            }
        }
        let f = acc_free.finish(1);
        let w = acc_wired.finish(1);
        let indep_mean = w.mean - f.mean;
        let indep_err = (f.stderr * f.stderr + w.stderr * w.stderr).sqrt();
        let combined = (indep_err * indep_err + coupled.stderr * coupled.stderr).sqrt();
        assert!(
            (coupled.mean - indep_mean).abs() <= 3.0 * combined,
            "coupled {} ± {} vs independent {} ± {}",
            coupled.mean,
            coupled.stderr,
            indep_mean,
            indep_err
        );
        assert!(
            coupled.stderr < indep_err / 2.0,
            "coupling should slash the error: {} vs {}",
            coupled.stderr,
            indep_err
        );
    }

    /// E[upper_e − lower_e] over stationary coupled samples equals the
    /// wired-minus-free marginal difference from exact enumeration.
    #[test]
    fn coupled_difference_matches_enumeration() {
        let lat = BoxLattice::build(1).unwrap();
        let params = RcmParams::critical(2.0).unwrap();
        let free = enumerate_measure(&lat, &BoundaryCondition::Free, &params).unwrap();
        let wired = enumerate_measure(&lat, &BoundaryCondition::Wired, &params).unwrap();
        let e = lat.h_edge(0, 0);
        let delta = wired.edge_marginal(e) - free.edge_marginal(e);

        let mut cs = CoupledState::new(&lat, params, 0).unwrap();
        let mut rng = rng::stream(6, 13, 0);
        for _ in 0..200 {
            coupled_sweep(&lat, &mut cs, &mut rng);
        }
        let res = coupled_event_difference(
            &lat,
            &mut cs,
            |cfg| cfg.is_open(e),
            30_000,
            2,
            &mut rng,
        )
        .unwrap();
        // increasing event: every sample is 0 or 1, so mean >= 0 exactly
        assert!(res.mean >= 0.0);
        assert!(
            (res.mean - delta).abs() < 4.0 * res.stderr,
            "mean {} exact {} stderr {}",
            res.mean,
            delta,
            res.stderr
        );
    }
}
