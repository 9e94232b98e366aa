use fkmix::coupling::{coupled_event_difference, coupled_sweep, CoupledState};
use fkmix::lattice::BoxLattice;
use fkmix::rcm::RcmParams;
use fkmix::rng;
use std::time::Instant;

fn main() {
    let params = RcmParams::critical(2.0).unwrap();
    for &size in &[8, 16, 32, 64] {
        let lat = BoxLattice::build(size).unwrap();
        let mut cs = CoupledState::new(&lat, params, 0).unwrap();
        let mut stream = rng::stream(7, 99, size as u64);
        // quick warm-up + timing of raw coupled sweeps
        let t0 = Instant::now();
        let warm = 64;
        for _ in 0..warm {
            coupled_sweep(&lat, &mut cs, &mut stream);
        }
        let per_sweep = t0.elapsed().as_secs_f64() / warm as f64;
        // delta estimate and its autocorrelation from a single long unit
        let e = lat.h_edge(0, 0);
        let n = (20_000 / size.max(8)) as u64 * 4;
        let t1 = Instant::now();
        let est =
            coupled_event_difference(&lat, &mut cs, |c| c.is_open(e), n, 1, &mut stream)
                .unwrap();
        let dt = t1.elapsed().as_secs_f64();
        println!(
            "R={size:<3} sweep={:.3}ms  delta~{:.5} stderr={:.5} tau_int(sweeps)={:.2} [{} samples in {:.1}s]",
            per_sweep * 1e3,
            est.mean,
            est.stderr,
            est.tau_int,
            n,
            dt
        );
    }
}
