//! Deterministic RNG streams.
//!
//! Every unit of Monte Carlo work (a chain, a coupled pair, a bootstrap run)
//! owns a PCG-64 stream keyed by `(seed, label, unit id)`. Streams for distinct
//! keys use distinct PCG increments, so results never depend on how units are
//! scheduled across workers.

use rand_core::Rng as _;
use rand_pcg::Pcg64;

/// SplitMix64 step, used only to whiten the stream key.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A PCG-64 generator for the work unit `(seed, label, id)`.
///
/// `label` separates estimator families (so e.g. pilot chains and production
/// chains of the same run never share a stream).
pub fn stream(seed: u64, label: u64, id: u64) -> Pcg64 {
    let mut s = seed ^ 0x243f_6a88_85a3_08d3;
    let a = splitmix64(&mut s);
    let mut t = label.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ id.rotate_left(17);
    let b = splitmix64(&mut t);
    let mut u = id ^ seed.rotate_left(32) ^ label.rotate_left(48);
    let c = splitmix64(&mut u);
    let d = splitmix64(&mut u);
    let state = ((a as u128) << 64) | b as u128;
    // PCG streams must be odd; distinct (c,d) give distinct sequences.
    let incr = (((c as u128) << 64) | d as u128) | 1;
    Pcg64::new(state, incr)
}

/// Uniform draw in [0, 1) with 53 random bits.
#[inline]
pub fn uniform(rng: &mut Pcg64) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform draw in 0..n.
#[inline]
pub fn below(rng: &mut Pcg64, n: u64) -> u64 {
    // Lemire-style rejection; n is tiny here (cluster colors), bias matters anyway.
    debug_assert!(n > 0);
    let zone = u64::MAX - (u64::MAX - n + 1) % n;
    loop {
        let v = rng.next_u64();
        if v <= zone {
            return v % n;
        }
    }
}

/// Standard normal via Box–Muller (used by the bootstrap and coverage tests).
pub fn normal(rng: &mut Pcg64) -> f64 {
    let u1 = loop {
        let u = uniform(rng);
        if u > 0.0 {
            break u;
        }
    };
    let u2 = uniform(rng);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let mut a = stream(7, 1, 0);
        let mut b = stream(7, 1, 0);
        let mut c = stream(7, 1, 1);
        let va: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let vb: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        let vc: Vec<u64> = (0..8).map(|_| c.next_u64()).collect();
        assert_eq!(va, vb);
        assert_ne!(va, vc);
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut rng = stream(1, 2, 3);
        for _ in 0..10_000 {
            let u = uniform(&mut rng);
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn below_is_uniform_enough() {
        let mut rng = stream(9, 9, 9);
        let mut counts = [0u32; 3];
        for _ in 0..30_000 {
            counts[below(&mut rng, 3) as usize] += 1;
        }
        for c in counts {
            assert!((c as i64 - 10_000).abs() < 500, "counts {counts:?}");
        }
    }
}
