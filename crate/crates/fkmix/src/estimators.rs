//! Monte Carlo estimators for the mixing-rate observables, and the power-law
//! exponent fit.
//!
//! Work is split into chain units; each unit owns a PCG stream keyed by
//! (seed, estimator label, unit id) and reports plain sums, so merged results
//! are bit-identical no matter how many workers ran them or in what order
//! they finished.

use crate::coupling::{coupled_sweep, CoupledState};
use crate::error::{FkError, Result};
use crate::events::{
    event_a, has_horizontal_crossing, loops_around_origin, LatticeRect, Loop, LoopTracer,
};
use crate::lattice::{AnnulusSpec, BoxLattice, EdgeConfig};
use crate::rcm::{glauber_sweep, swendsen_wang_step, BoundaryCondition, ChainState, RcmParams};
use crate::rng;
use rand_pcg::Pcg64;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

const MAX_LAG: usize = 32;

/// Streaming mean/variance plus within-chain autocovariance up to lag 32,
/// accumulated as plain sums so chains merge deterministically.
#[derive(Clone, Debug)]
pub struct SeriesAccumulator {
    n: u64,
    sum: f64,
    sumsq: f64,
    ring: [f64; MAX_LAG],
    lag_sum: [f64; MAX_LAG],
    lag_n: [u64; MAX_LAG],
}

impl Default for SeriesAccumulator {
    fn default() -> Self {
        Self::new()
    }
}

impl SeriesAccumulator {
    pub fn new() -> SeriesAccumulator {
        SeriesAccumulator {
            n: 0,
            sum: 0.0,
            sumsq: 0.0,
            ring: [0.0; MAX_LAG],
            lag_sum: [0.0; MAX_LAG],
            lag_n: [0; MAX_LAG],
        }
    }

    pub fn push(&mut self, x: f64) {
        let lags = (self.n as usize).min(MAX_LAG);
        for lag in 1..=lags {
            let prev = self.ring[((self.n - lag as u64) % MAX_LAG as u64) as usize];
            self.lag_sum[lag - 1] += x * prev;
            self.lag_n[lag - 1] += 1;
        }
        self.ring[(self.n % MAX_LAG as u64) as usize] = x;
        self.n += 1;
        self.sum += x;
        self.sumsq += x * x;
    }

    /// Merge another chain's sums (cross-chain lag pairs are not formed).
    pub fn merge(&mut self, other: &SeriesAccumulator) {
        self.n += other.n;
        self.sum += other.sum;
        self.sumsq += other.sumsq;
        for i in 0..MAX_LAG {
            self.lag_sum[i] += other.lag_sum[i];
            self.lag_n[i] += other.lag_n[i];
        }
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            return f64::NAN;
        }
        self.sum / self.n as f64
    }

    pub fn variance(&self) -> f64 {
        if self.n == 0 {
            return f64::NAN;
        }
        let m = self.mean();
        (self.sumsq / self.n as f64 - m * m).max(0.0)
    }

    /// Integrated autocorrelation time in sample units (>= 1/2), with a
    /// self-consistent window: sum rho(lag) until it turns non-positive or
    /// the lag passes six times the running estimate.
    pub fn tau_int_samples(&self) -> f64 {
        let var = self.variance();
        if !(var > 0.0) {
            return 0.5;
        }
        let m = self.mean();
        let mut tau = 0.5;
        for lag in 1..=MAX_LAG {
            if self.lag_n[lag - 1] == 0 {
                break;
            }
            let cov = self.lag_sum[lag - 1] / self.lag_n[lag - 1] as f64 - m * m;
            let rho = cov / var;
            if rho <= 0.0 || lag as f64 >= 6.0 * tau {
                break;
            }
            tau += rho;
        }
        tau
    }

    /// Package as an estimate; `stride` converts the autocorrelation time to
    /// sweep units.
    pub fn finish(&self, stride: u64) -> EstimateResult {
        let tau_s = self.tau_int_samples();
        let n_eff = if self.n == 0 { 0.0 } else { self.n as f64 / (2.0 * tau_s) };
        let stderr = if self.n == 0 || self.variance() == 0.0 {
            0.0
        } else {
            (self.variance() / n_eff).sqrt()
        };
        EstimateResult {
            mean: self.mean(),
            stderr,
            n_effective: n_eff.min(self.n as f64),
            tau_int: tau_s * stride as f64,
            n_raw: self.n,
            seed: 0,
            params: None,
        }
    }
}

/// A Monte Carlo estimate with its uncertainty and sample accounting.
#[derive(Clone, Debug)]
pub struct EstimateResult {
    pub mean: f64,
    pub stderr: f64,
    pub n_effective: f64,
    /// integrated autocorrelation time, in sweeps
    pub tau_int: f64,
    pub n_raw: u64,
    pub seed: u64,
    pub params: Option<RcmParams>,
}

/// Knobs shared by every estimator.
#[derive(Clone, Debug)]
pub struct McConfig {
    pub seed: u64,
    /// worker threads; 0 = all available
    pub workers: usize,
    /// parallel chain units
    pub chains: u32,
    /// subsamples each unit contributes per round
    pub samples_per_chain: u64,
    /// adaptive rounds cap
    pub max_rounds: u32,
    /// stop once stderr/|mean| drops below this
    pub rel_err_target: Option<f64>,
    /// burn-in sweeps override (default: 100x the pilot autocorrelation time)
    pub burn_in: Option<u64>,
    /// subsampling stride override (default: 2x the pilot autocorrelation time)
    pub stride: Option<u64>,
}

impl McConfig {
    pub fn new(seed: u64) -> McConfig {
        McConfig {
            seed,
            workers: 0,
            chains: 16,
            samples_per_chain: 256,
            max_rounds: 64,
            rel_err_target: None,
            burn_in: None,
            stride: None,
        }
    }

    fn worker_count(&self) -> usize {
        if self.workers > 0 {
            self.workers
        } else {
            std::thread::available_parallelism().map_or(1, |p| p.get())
        }
    }
}

// estimator labels, part of the stream key
const LABEL_DELTA_R: u64 = 1;
const LABEL_DELTA_RR: u64 = 2;
const LABEL_RATIO_A: u64 = 3;
const LABEL_NESTED: u64 = 4;
const PILOT_BIT: u64 = 1 << 32;

/// Pilot run: integrated autocorrelation of the half-box crossing indicator
/// sets the burn-in and subsampling stride unless overridden.
fn coupled_schedule(
    lat: &BoxLattice,
    params: RcmParams,
    label: u64,
    mc: &McConfig,
) -> Result<(u64, u64)> {
    if let (Some(b), Some(s)) = (mc.burn_in, mc.stride) {
        return Ok((b, s.max(1)));
    }
    let r = lat.half_side();
    let rect = LatticeRect::centered_box((r + 1) / 2)?;
    let mut cs = CoupledState::new(lat, params, 0)?;
    let mut rng = rng::stream(mc.seed, label | PILOT_BIT, 0);
    let mut acc = SeriesAccumulator::new();
    let pilot_sweeps = 512;
    for sweep in 0..pilot_sweeps {
        coupled_sweep(lat, &mut cs, &mut rng);
        if sweep >= pilot_sweeps / 4 {
            let c = has_horizontal_crossing(lat, &cs.lower.config, rect)?;
            acc.push(c as u8 as f64);
        }
    }
    let tau = acc.tau_int_samples();
    let burn = mc.burn_in.unwrap_or(((100.0 * tau).ceil() as u64).clamp(50, 20_000));
    let stride = mc.stride.unwrap_or(((2.0 * tau).ceil() as u64).clamp(1, 128));
    Ok((burn, stride))
}

/// Joint accumulator for (difference, auxiliary) pairs; the cross sum feeds
/// the delta-method error of the ratio estimator.
#[derive(Clone, Debug, Default)]
pub struct PairSums {
    pub d: SeriesAccumulator,
    pub aux_sum: f64,
    pub aux_sumsq: f64,
    pub cross_sum: f64,
}

impl PairSums {
    pub fn new() -> PairSums {
        PairSums { d: SeriesAccumulator::new(), aux_sum: 0.0, aux_sumsq: 0.0, cross_sum: 0.0 }
    }

    pub fn push(&mut self, d: f64, aux: f64) {
        self.d.push(d);
        self.aux_sum += aux;
        self.aux_sumsq += aux * aux;
        self.cross_sum += d * aux;
    }

    pub fn merge(&mut self, other: &PairSums) {
        self.d.merge(&other.d);
        self.aux_sum += other.aux_sum;
        self.aux_sumsq += other.aux_sumsq;
        self.cross_sum += other.cross_sum;
    }

    /// Flat integer encoding for checkpoints: counts as themselves, floating
    /// sums as their bit patterns, exact either way.
    pub fn to_words(&self) -> Vec<u64> {
        let mut w = vec![
            self.d.n,
            self.d.sum.to_bits(),
            self.d.sumsq.to_bits(),
            self.aux_sum.to_bits(),
            self.aux_sumsq.to_bits(),
            self.cross_sum.to_bits(),
        ];
        w.extend(self.d.lag_sum.iter().map(|x| x.to_bits()));
        w.extend(self.d.lag_n.iter());
        w
    }

    pub fn from_words(words: &[u64]) -> Option<PairSums> {
        if words.len() != 6 + 2 * MAX_LAG {
            return None;
        }
        let mut s = PairSums::new();
        s.d.n = words[0];
        s.d.sum = f64::from_bits(words[1]);
        s.d.sumsq = f64::from_bits(words[2]);
        s.aux_sum = f64::from_bits(words[3]);
        s.aux_sumsq = f64::from_bits(words[4]);
        s.cross_sum = f64::from_bits(words[5]);
        for i in 0..MAX_LAG {
            s.d.lag_sum[i] = f64::from_bits(words[6 + i]);
            s.d.lag_n[i] = words[6 + MAX_LAG + i];
        }
        Some(s)
    }
}

/// What one chain unit does: burn in, then take `samples` subsamples every
/// `stride` sweeps.
#[derive(Clone, Copy, Debug)]
pub struct UnitSpec {
    pub burn: u64,
    pub stride: u64,
    pub samples: u64,
}

/// Pre-computed results for resumption, keyed by unit id, plus an optional
/// sink invoked as fresh units complete (checkpoint writing).
pub struct ResumeHooks<'a> {
    pub completed: std::collections::HashMap<u64, PairSums>,
    pub on_unit: Option<&'a (dyn Fn(u64, &PairSums) + Sync)>,
}

impl Default for ResumeHooks<'_> {
    fn default() -> Self {
        ResumeHooks { completed: std::collections::HashMap::new(), on_unit: None }
    }
}

/// Run one independent coupled chain unit. The unit's entire trajectory is a
/// function of (seed, label, unit id) alone.
pub fn run_coupled_unit<F>(
    lat: &BoxLattice,
    params: RcmParams,
    seed: u64,
    label: u64,
    unit_id: u64,
    spec: UnitSpec,
    tracer: Option<&LoopTracer>,
    sample: F,
) -> Result<PairSums>
where
    F: Fn(&mut CoupledState, Option<&LoopTracer>, &BoxLattice) -> Result<(f64, f64)>,
{
    let mut cs = CoupledState::new(lat, params, unit_id)?;
    let mut rng = rng::stream(seed, label, unit_id);
    let mut sums = PairSums::new();
    for _ in 0..spec.burn {
        coupled_sweep(lat, &mut cs, &mut rng);
    }
    for _ in 0..spec.samples {
        for _ in 0..spec.stride.max(1) {
            coupled_sweep(lat, &mut cs, &mut rng);
        }
        let (d, aux) = sample(&mut cs, tracer, lat)?;
        sums.push(d, aux);
    }
    Ok(sums)
}

/// Fan independent units across workers, round by round, until `stop` says
/// the merged sums suffice. Units are independent chains, so results are
/// bit-identical for any worker count, and completed units can be replayed
/// from a checkpoint for exact resumption.
fn run_coupled_units<F>(
    lat: &BoxLattice,
    params: RcmParams,
    label: u64,
    mc: &McConfig,
    needs_tracer: bool,
    hooks: &ResumeHooks<'_>,
    sample: F,
    stop: impl Fn(&PairSums) -> bool,
) -> Result<(PairSums, u64, u64)>
where
    F: Fn(&mut CoupledState, Option<&LoopTracer>, &BoxLattice) -> Result<(f64, f64)> + Sync,
{
    let (burn, stride) = coupled_schedule(lat, params, label, mc)?;
    let spec = UnitSpec { burn, stride, samples: mc.samples_per_chain };
    let mut results: Vec<Option<PairSums>> = Vec::new();
    let failure: Mutex<Option<FkError>> = Mutex::new(None);
    let sample = &sample;

    for round in 0..mc.max_rounds as u64 {
        let base = round * mc.chains as u64;
        results.resize((base + mc.chains as u64) as usize, None);
        let slots: Vec<Mutex<Option<PairSums>>> =
            (0..mc.chains).map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let workers = mc.worker_count().min(mc.chains as usize).max(1);
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| {
                    let tracer = needs_tracer.then(|| LoopTracer::new(lat));
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= slots.len() || failure.lock().unwrap().is_some() {
                            return;
                        }
                        let unit_id = base + i as u64;
                        let sums = if let Some(done) = hooks.completed.get(&unit_id) {
                            done.clone()
                        } else {
                            match run_coupled_unit(
                                lat,
                                params,
                                mc.seed,
                                label,
                                unit_id,
                                spec,
                                tracer.as_ref(),
                                sample,
                            ) {
                                Ok(s) => {
                                    if let Some(sink) = hooks.on_unit {
                                        sink(unit_id, &s);
                                    }
                                    s
                                }
                                Err(e) => {
                                    *failure.lock().unwrap() = Some(e);
                                    return;
                                }
                            }
                        };
                        *slots[i].lock().unwrap() = Some(sums);
                    }
                });
            }
        });
        if let Some(e) = failure.lock().unwrap().take() {
            return Err(e);
        }
        for (i, slot) in slots.into_iter().enumerate() {
            results[base as usize + i] = slot.into_inner().unwrap();
        }
        let mut merged = PairSums::new();
        for sums in results.iter().flatten() {
            merged.merge(sums);
        }
        if stop(&merged) {
            return Ok((merged, burn, stride));
        }
    }
    let mut merged = PairSums::new();
    for sums in results.iter().flatten() {
        merged.merge(sums);
    }
    Ok((merged, burn, stride))
}

fn rel_err_reached(sums: &PairSums, target: Option<f64>) -> bool {
    let Some(t) = target else { return true };
    let n = sums.d.count();
    if n == 0 {
        return false;
    }
    if sums.d.variance() == 0.0 {
        // exactly coalesced chains (q = 1): no more information coming
        return true;
    }
    let est = sums.d.finish(1);
    est.mean != 0.0 && est.stderr / est.mean.abs() <= t
}

/// Δ(R): the wired-minus-free probability that the edge {(0,0),(1,0)} is
/// open, from the monotone coupling. The per-sample statistic is 0/1.
pub fn estimate_delta_r(
    lat: &BoxLattice,
    params: RcmParams,
    mc: &McConfig,
) -> Result<EstimateResult> {
    estimate_delta_r_with(lat, params, mc, &ResumeHooks::default())
}

pub fn estimate_delta_r_with(
    lat: &BoxLattice,
    params: RcmParams,
    mc: &McConfig,
    hooks: &ResumeHooks<'_>,
) -> Result<EstimateResult> {
    let e = lat.h_edge(0, 0);
    let (sums, _, stride) = run_coupled_units(
        lat,
        params,
        LABEL_DELTA_R,
        mc,
        false,
        hooks,
        move |cs, _, _| {
            let d = cs.upper.config.is_open(e) as i64 - cs.lower.config.is_open(e) as i64;
            assert!(d == 0 || d == 1, "increasing event produced sample {d}");
            Ok((d as f64, 0.0))
        },
        |s| rel_err_reached(s, mc.rel_err_target),
    )?;
    let mut res = sums.d.finish(stride);
    res.seed = mc.seed;
    res.params = Some(params);
    Ok(res)
}

/// Δ(r,R): wired-minus-free probability of a horizontal open crossing of the
/// centered box of half-side r.
pub fn estimate_delta_rr(
    lat: &BoxLattice,
    params: RcmParams,
    r: i32,
    mc: &McConfig,
) -> Result<EstimateResult> {
    estimate_delta_rr_with(lat, params, r, mc, &ResumeHooks::default())
}

pub fn estimate_delta_rr_with(
    lat: &BoxLattice,
    params: RcmParams,
    r: i32,
    mc: &McConfig,
    hooks: &ResumeHooks<'_>,
) -> Result<EstimateResult> {
    if r < 1 || r >= lat.half_side() {
        return Err(FkError::Domain(format!(
            "crossing scale must satisfy 1 <= r < R, got r={r}, R={}",
            lat.half_side()
        )));
    }
    let rect = LatticeRect::centered_box(r)?;
    let (sums, _, stride) = run_coupled_units(
        lat,
        params,
        LABEL_DELTA_RR,
        mc,
        false,
        hooks,
        move |cs, _, lat| {
            let up = has_horizontal_crossing(lat, &cs.upper.config, rect)?;
            let lo = has_horizontal_crossing(lat, &cs.lower.config, rect)?;
            let d = up as i64 - lo as i64;
            assert!(d == 0 || d == 1, "increasing event produced sample {d}");
            Ok((d as f64, 0.0))
        },
        |s| rel_err_reached(s, mc.rel_err_target),
    )?;
    let mut res = sums.d.finish(stride);
    res.seed = mc.seed;
    res.params = Some(params);
    Ok(res)
}

/// Parity form of the A-event computed with a caller-owned tracer, including
/// the per-loop nesting level of candidate loops only.
fn event_a_parity(
    tracer: &LoopTracer,
    lat: &BoxLattice,
    config: &EdgeConfig,
    bc: &BoundaryCondition,
    ann: AnnulusSpec,
) -> Result<bool> {
    let wired = matches!(bc, BoundaryCondition::Wired);
    let set = tracer.extract(lat, config, bc)?;
    let lo = 2 * ann.r_inner + 1;
    let hi = 2 * ann.r_outer;
    for (i, lp) in set.loops.iter().enumerate() {
        if !lp.winds_origin {
            continue;
        }
        let inside = lp.vertices.iter().all(|&(x, y)| {
            let m = x.abs().max(y.abs());
            m >= lo && m <= hi
        });
        if !inside {
            continue;
        }
        let probe = loop_probe(lp);
        let mut level = 1u32;
        for (j, other) in set.loops.iter().enumerate() {
            if j != i && other.contains8(probe) {
                level += 1;
            }
        }
        if (level % 2 == 1) == wired {
            return Ok(true);
        }
    }
    Ok(false)
}

fn loop_probe(lp: &Loop) -> (i64, i64) {
    let p = lp.vertices[0];
    let q = lp.vertices[1];
    (2 * (p.0 + q.0) as i64, 2 * (p.1 + q.1) as i64)
}

/// The normalized A-event difference (φ¹[A] − φ⁰[A]) / φ⁰[A].
///
/// The numerator comes from coupled pairs (per-sample in {-1,0,1}), the
/// denominator from the free chain; both detectors (circuit-based and loop
/// parity) run on every sample and must agree exactly.
pub fn estimate_ratio_a(
    lat: &BoxLattice,
    params: RcmParams,
    ann: AnnulusSpec,
    mc: &McConfig,
) -> Result<EstimateResult> {
    estimate_ratio_a_with(lat, params, ann, mc, &ResumeHooks::default())
}

pub fn estimate_ratio_a_with(
    lat: &BoxLattice,
    params: RcmParams,
    ann: AnnulusSpec,
    mc: &McConfig,
    hooks: &ResumeHooks<'_>,
) -> Result<EstimateResult> {
    if !ann.fits_in(lat) {
        return Err(FkError::Domain("annulus does not fit in the box".into()));
    }
    let (sums, _, stride) = run_coupled_units(
        lat,
        params,
        LABEL_RATIO_A,
        mc,
        true,
        hooks,
        move |cs, tracer, lat| {
            let tracer = tracer.expect("tracer requested");
            let up = event_a(lat, &cs.upper.config, ann)?;
            let lo = event_a(lat, &cs.lower.config, ann)?;
            let up_loops =
                event_a_parity(tracer, lat, &cs.upper.config, &BoundaryCondition::Wired, ann)?;
            let lo_loops =
                event_a_parity(tracer, lat, &cs.lower.config, &BoundaryCondition::Free, ann)?;
            assert_eq!(up, up_loops, "A-event detectors disagree on the wired chain");
            assert_eq!(lo, lo_loops, "A-event detectors disagree on the free chain");
            let d = up as i64 - lo as i64;
            assert!((-1..=1).contains(&d));
            Ok((d as f64, lo as u8 as f64))
        },
        |s| {
            if s.d.count() == 0 {
                return false;
            }
            if s.d.variance() == 0.0 {
                return true;
            }
            match mc.rel_err_target {
                None => true,
                Some(t) => {
                    let (ratio, err) = ratio_with_error(s);
                    ratio != 0.0 && err / ratio.abs() <= t
                }
            }
        },
    )?;
    let n = sums.d.count();
    let p0 = sums.aux_sum / n as f64;
    if p0 == 0.0 {
        return Err(FkError::Degenerate(
            "free-chain A-event probability estimated 0; increase samples or the annulus width"
                .into(),
        ));
    }
    let (ratio, err) = ratio_with_error(&sums);
    let tau_s = sums.d.tau_int_samples();
    let mut res = sums.d.finish(stride);
    res.mean = ratio;
    res.stderr = err;
    res.n_effective = (n as f64 / (2.0 * tau_s)).min(n as f64);
    res.seed = mc.seed;
    res.params = Some(params);
    Ok(res)
}

/// Delta-method error of mean(d)/mean(aux), with the d-series correlation
/// factor applied to both components.
fn ratio_with_error(s: &PairSums) -> (f64, f64) {
    let n = s.d.count() as f64;
    let md = s.d.mean();
    let mp = s.aux_sum / n;
    if mp == 0.0 {
        return (f64::NAN, f64::NAN);
    }
    let var_d = s.d.variance();
    let var_p = (s.aux_sumsq / n - mp * mp).max(0.0);
    let cov = s.cross_sum / n - md * mp;
    let corr = 2.0 * s.d.tau_int_samples();
    let var_ratio = (var_d / (mp * mp) + md * md * var_p / (mp * mp * mp * mp)
        - 2.0 * md * cov / (mp * mp * mp))
        .max(0.0)
        * corr
        / n;
    (md / mp, var_ratio.sqrt())
}

/// One independent wired chain unit for the nested-loop observable.
pub fn run_nested_unit(
    lat: &BoxLattice,
    params: RcmParams,
    a: f64,
    seed: u64,
    unit_id: u64,
    spec: UnitSpec,
    use_sw: bool,
    tracer: &LoopTracer,
) -> Result<PairSums> {
    let mut st = ChainState::new(
        lat,
        EdgeConfig::all_open(lat.edge_count()),
        BoundaryCondition::Wired,
        params,
        unit_id,
    );
    let mut rng = rng::stream(seed, LABEL_NESTED, unit_id);
    let mut sums = PairSums::new();
    for _ in 0..spec.burn {
        step_chain(lat, &mut st, &mut rng, use_sw)?;
    }
    for _ in 0..spec.samples {
        for _ in 0..spec.stride.max(1) {
            step_chain(lat, &mut st, &mut rng, use_sw)?;
        }
        let set = tracer.extract(lat, &st.config, &BoundaryCondition::Wired)?;
        let l = loops_around_origin(&set);
        sums.push(a.powi(l as i32), 0.0);
    }
    Ok(sums)
}

/// φ¹[a^{ℓ_R}]: the nested-loop observable under wired boundary conditions.
/// Uses Swendsen–Wang when q is an integer in {2,3,4}, heat bath otherwise.
pub fn estimate_nested_sign(
    lat: &BoxLattice,
    params: RcmParams,
    a: f64,
    mc: &McConfig,
) -> Result<EstimateResult> {
    estimate_nested_sign_with(lat, params, a, mc, &ResumeHooks::default())
}

pub fn estimate_nested_sign_with(
    lat: &BoxLattice,
    params: RcmParams,
    a: f64,
    mc: &McConfig,
    hooks: &ResumeHooks<'_>,
) -> Result<EstimateResult> {
    let q_int = params.q.round();
    let use_sw = (params.q - q_int).abs() < 1e-12 && (2.0..=4.0).contains(&q_int);
    if params.q < 1.0 {
        return Err(FkError::Unsupported("nested-loop estimator needs q >= 1".into()));
    }
    let (burn, stride) = if use_sw {
        (mc.burn_in.unwrap_or(128), mc.stride.unwrap_or(2))
    } else {
        coupled_schedule(lat, params, LABEL_NESTED, mc)?
    };
    let spec = UnitSpec { burn, stride, samples: mc.samples_per_chain };

    let mut results: Vec<Option<PairSums>> = Vec::new();
    let failure: Mutex<Option<FkError>> = Mutex::new(None);
    let mut merged = PairSums::new();
    for round in 0..mc.max_rounds as u64 {
        let base = round * mc.chains as u64;
        results.resize((base + mc.chains as u64) as usize, None);
        let slots: Vec<Mutex<Option<PairSums>>> =
            (0..mc.chains).map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let workers = mc.worker_count().min(mc.chains as usize).max(1);
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| {
                    let tracer = LoopTracer::new(lat);
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= slots.len() || failure.lock().unwrap().is_some() {
                            return;
                        }
                        let unit_id = base + i as u64;
                        let sums = if let Some(done) = hooks.completed.get(&unit_id) {
                            done.clone()
                        } else {
                            match run_nested_unit(
                                lat, params, a, mc.seed, unit_id, spec, use_sw, &tracer,
                            ) {
                                Ok(s) => {
                                    if let Some(sink) = hooks.on_unit {
                                        sink(unit_id, &s);
                                    }
                                    s
                                }
                                Err(e) => {
                                    *failure.lock().unwrap() = Some(e);
                                    return;
                                }
                            }
                        };
                        *slots[i].lock().unwrap() = Some(sums);
                    }
                });
            }
        });
        if let Some(e) = failure.lock().unwrap().take() {
            return Err(e);
        }
        for (i, slot) in slots.into_iter().enumerate() {
            results[base as usize + i] = slot.into_inner().unwrap();
        }
        merged = PairSums::new();
        for sums in results.iter().flatten() {
            merged.merge(&sums.clone());
        }
        let done = match mc.rel_err_target {
            None => true,
            Some(t) => {
                let est = merged.d.finish(1);
                merged.d.variance() == 0.0
                    || (est.mean != 0.0 && est.stderr / est.mean.abs() <= t)
            }
        };
        if done {
            break;
        }
    }
    let mut res = merged.d.finish(stride);
    res.seed = mc.seed;
    res.params = Some(params);
    Ok(res)
}

fn step_chain(
    lat: &BoxLattice,
    st: &mut ChainState,
    rng: &mut Pcg64,
    use_sw: bool,
) -> Result<()> {
    if use_sw {
        swendsen_wang_step(lat, st, rng)
    } else {
        glauber_sweep(lat, st, rng);
        Ok(())
    }
}

// ---- exponent fitting --------------------------------------------------------

/// Result of the log-log power-law fit Δ(R) = c · R^{-exponent}.
#[derive(Clone, Debug)]
pub struct ExponentFit {
    pub exponent: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub ci95: (f64, f64),
    /// (scale, estimate, stderr) triples that entered the fit
    pub points: Vec<(f64, f64, f64)>,
}

/// Weighted least squares on (log scale, log mean) with weights from the
/// relative errors; the 95% interval comes from 10^4 bootstrap replicas that
/// redraw each point's log-mean from its own error bar.
pub fn fit_exponent(points: &[(f64, EstimateResult)]) -> Result<ExponentFit> {
    if points.len() < 3 {
        return Err(FkError::Fit(format!("need at least 3 points, got {}", points.len())));
    }
    for (scale, est) in points {
        if !(est.mean > 0.0) {
            return Err(FkError::Fit(format!(
                "nonpositive mean {} at scale {scale}; cannot take logs",
                est.mean
            )));
        }
    }
    let xs: Vec<f64> = points.iter().map(|(s, _)| s.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, e)| e.mean.ln()).collect();
    let sigmas: Vec<f64> = points
        .iter()
        .map(|(_, e)| (e.stderr / e.mean).max(1e-12))
        .collect();

    let (slope, intercept, slope_err) = wls(&xs, &ys, &sigmas);

    const BOOT: usize = 10_000;
    let mut rng = rng::stream(0x0bad_5eed_f17e_d001, 0, 0);
    let mut reps: Vec<f64> = Vec::with_capacity(BOOT);
    let mut y_star = vec![0.0; ys.len()];
    for _ in 0..BOOT {
        for i in 0..ys.len() {
            y_star[i] = ys[i] + sigmas[i] * rng::normal(&mut rng);
        }
        let (b, _, _) = wls(&xs, &y_star, &sigmas);
        reps.push(-b);
    }
    reps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lo = reps[(BOOT as f64 * 0.025) as usize];
    let hi = reps[(BOOT as f64 * 0.975) as usize - 1];
    let exponent = -slope;
    Ok(ExponentFit {
        exponent,
        stderr: slope_err,
        intercept,
        ci95: (lo.min(exponent), hi.max(exponent)),
        points: points.iter().map(|(s, e)| (*s, e.mean, e.stderr)).collect(),
    })
}

fn wls(xs: &[f64], ys: &[f64], sigmas: &[f64]) -> (f64, f64, f64) {
    let mut sw = 0.0;
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for i in 0..xs.len() {
        let w = 1.0 / (sigmas[i] * sigmas[i]);
        sw += w;
        sx += w * xs[i];
        sy += w * ys[i];
        sxx += w * xs[i] * xs[i];
        sxy += w * xs[i] * ys[i];
    }
    let det = sw * sxx - sx * sx;
    let slope = (sw * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    let slope_err = (sw / det).sqrt();
    (slope, intercept, slope_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rcm::enumerate_measure;

    fn synthetic(mean: f64, stderr: f64) -> EstimateResult {
        EstimateResult {
            mean,
            stderr,
            n_effective: 1e6,
            tau_int: 1.0,
            n_raw: 1_000_000,
            seed: 0,
            params: None,
        }
    }

    #[test]
    fn fit_recovers_exact_power_laws() {
        let pts: Vec<(f64, EstimateResult)> = [8.0, 16.0, 32.0, 64.0]
            .iter()
            .map(|&r| (r, synthetic(1.0 / r, 1e-9)))
            .collect();
        let fit = fit_exponent(&pts).unwrap();
        assert!((fit.exponent - 1.0).abs() < 1e-9);
        assert!(fit.stderr < 1e-6);
        assert!(fit.ci95.0 <= fit.exponent && fit.exponent <= fit.ci95.1);

        let pts: Vec<(f64, EstimateResult)> = [4.0, 8.0, 16.0]
            .iter()
            .map(|&r: &f64| (r, synthetic(3.0 / r.sqrt(), 1e-9)))
            .collect();
        let fit = fit_exponent(&pts).unwrap();
        assert!((fit.exponent - 0.5).abs() < 1e-9);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-8);
    }

    #[test]
    fn fit_rejects_bad_input() {
        let pts = vec![(8.0, synthetic(0.1, 0.01)), (16.0, synthetic(0.05, 0.01))];
        assert!(matches!(fit_exponent(&pts), Err(FkError::Fit(_))));
        let pts = vec![
            (8.0, synthetic(0.1, 0.01)),
            (16.0, synthetic(-0.05, 0.01)),
            (32.0, synthetic(0.02, 0.01)),
        ];
        let err = fit_exponent(&pts).unwrap_err();
        match err {
            FkError::Fit(msg) => assert!(msg.contains("16"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    /// Known-slope synthetic data: the bootstrap interval covers the truth
    /// in at least 90 of 100 trials.
    #[test]
    fn fit_ci_coverage() {
        let mut rng = rng::stream(2024, 55, 0);
        let scales = [8.0, 16.0, 32.0, 64.0];
        let noise = 0.05;
        let mut covered = 0;
        for _ in 0..100 {
            let pts: Vec<(f64, EstimateResult)> = scales
                .iter()
                .map(|&r| {
                    let exact: f64 = 2.0 / r;
                    let sampled = exact * (1.0 + noise * rng::normal(&mut rng));
                    (r, synthetic(sampled.max(1e-6), exact * noise))
                })
                .collect();
            let fit = fit_exponent(&pts).unwrap();
            if fit.ci95.0 <= 1.0 && 1.0 <= fit.ci95.1 {
                covered += 1;
            }
        }
        assert!(covered >= 90, "covered {covered}/100");
    }

    #[test]
    fn accumulator_tau_of_iid_is_half() {
        let mut acc = SeriesAccumulator::new();
        let mut rng = rng::stream(7, 77, 0);
        for _ in 0..20_000 {
            acc.push((rng::uniform(&mut rng) < 0.3) as u8 as f64);
        }
        let tau = acc.tau_int_samples();
        assert!((tau - 0.5).abs() < 0.1, "tau {tau}");
        let est = acc.finish(1);
        assert!((est.mean - 0.3).abs() < 5.0 * est.stderr);
        assert!(est.n_effective <= est.n_raw as f64);
    }

    #[test]
    fn delta_r_matches_enumeration_on_small_box() {
        let lat = BoxLattice::build(1).unwrap();
        let params = RcmParams::critical(2.0).unwrap();
        let free = enumerate_measure(&lat, &BoundaryCondition::Free, &params).unwrap();
        let wired = enumerate_measure(&lat, &BoundaryCondition::Wired, &params).unwrap();
        let e = lat.h_edge(0, 0);
        let exact = wired.edge_marginal(e) - free.edge_marginal(e);
        let mut mc = McConfig::new(11);
        mc.chains = 4;
        mc.samples_per_chain = 6000;
        mc.max_rounds = 1;
        mc.burn_in = Some(100);
        mc.stride = Some(2);
        let est = estimate_delta_r(&lat, params, &mc).unwrap();
        assert!(
            (est.mean - exact).abs() < 3.0 * est.stderr,
            "est {} exact {} err {}",
            est.mean,
            exact,
            est.stderr
        );
    }

    #[test]
    fn delta_r_is_exactly_zero_at_q1() {
        let lat = BoxLattice::build(3).unwrap();
        let params = RcmParams::new(0.5, 1.0).unwrap();
        let mut mc = McConfig::new(5);
        mc.chains = 2;
        mc.samples_per_chain = 50;
        mc.max_rounds = 1;
        mc.burn_in = Some(10);
        mc.stride = Some(1);
        let est = estimate_delta_r(&lat, params, &mc).unwrap();
        assert_eq!(est.mean, 0.0);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn delta_rr_rejects_bad_scale() {
        let lat = BoxLattice::build(4).unwrap();
        let params = RcmParams::critical(2.0).unwrap();
        let mc = McConfig::new(1);
        assert!(estimate_delta_rr(&lat, params, 4, &mc).is_err());
        assert!(estimate_delta_rr(&lat, params, 0, &mc).is_err());
    }

    /// worker count must not change results, bit for bit
    #[test]
    fn results_independent_of_worker_count() {
        let lat = BoxLattice::build(3).unwrap();
        let params = RcmParams::critical(2.0).unwrap();
        let run = |workers: usize| {
            let mut mc = McConfig::new(99);
            mc.workers = workers;
            mc.chains = 6;
            mc.samples_per_chain = 100;
            mc.max_rounds = 1;
            mc.burn_in = Some(30);
            mc.stride = Some(1);
            estimate_delta_r(&lat, params, &mc).unwrap()
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
        assert_eq!(a.n_raw, b.n_raw);
    }

    /// doubling the sample count shrinks the error like 1/sqrt(n)
    #[test]
    fn stderr_scales_with_n() {
        let lat = BoxLattice::build(2).unwrap();
        let params = RcmParams::critical(2.0).unwrap();
        let run = |n: u64, seed: u64| {
            let mut mc = McConfig::new(seed);
            mc.chains = 4;
            mc.samples_per_chain = n;
            mc.max_rounds = 1;
            mc.burn_in = Some(60);
            mc.stride = Some(2);
            estimate_delta_r(&lat, params, &mc).unwrap()
        };
        // average the ratio over a few independent repetitions
        let mut ratio_sum = 0.0;
        let reps = 3;
        for s in 0..reps {
            let small = run(1500, 100 + s);
            let large = run(6000, 200 + s);
            ratio_sum += small.stderr / large.stderr;
        }
        let ratio = ratio_sum / reps as f64;
        assert!((ratio - 2.0).abs() < 0.4, "stderr ratio {ratio}");
    }

    /// the boundary influence shrinks with the box within error bars
    #[test]
    fn delta_r_decreases_with_size() {
        let params = RcmParams::critical(2.0).unwrap();
        let mut estimates = Vec::new();
        for &size in &[2, 4, 8] {
            let lat = BoxLattice::build(size).unwrap();
            let mut mc = McConfig::new(271828);
            mc.chains = 2;
            mc.samples_per_chain = 8000;
            mc.max_rounds = 1;
            mc.burn_in = Some(64);
            mc.stride = Some(1);
            estimates.push(estimate_delta_r(&lat, params, &mc).unwrap());
        }
        for pair in estimates.windows(2) {
            let (big, small) = (&pair[0], &pair[1]);
            let slack = 2.0 * (big.stderr * big.stderr + small.stderr * small.stderr).sqrt();
            assert!(
                small.mean <= big.mean + slack,
                "delta should not grow with R: {} -> {}",
                big.mean,
                small.mean
            );
        }
    }

    #[test]
    fn nested_sign_trivial_values() {
        let lat = BoxLattice::build(2).unwrap();
        let params = RcmParams::critical(2.0).unwrap();
        let mut mc = McConfig::new(3);
        mc.chains = 2;
        mc.samples_per_chain = 40;
        mc.max_rounds = 1;
        let est = estimate_nested_sign(&lat, params, 1.0, &mc).unwrap();
        assert_eq!(est.mean, 1.0);
        assert_eq!(est.stderr, 0.0);
        // a = 0: the probability that no loop surrounds the origin
        let est0 = estimate_nested_sign(&lat, params, 0.0, &mc).unwrap();
        assert!((0.0..=1.0).contains(&est0.mean));
    }
}
