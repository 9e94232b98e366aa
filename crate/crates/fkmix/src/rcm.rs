//! The random-cluster measure and its samplers.
//!
//! The measure on a box G with edge weight p, cluster weight q and boundary
//! conditions ξ puts mass p^|o(ω)| (1-p)^|E∖o(ω)| q^k(ω^ξ) on each edge
//! configuration ω, where k counts clusters after identifying boundary
//! vertices per ξ. Single-bond heat bath is the baseline sampler (valid for
//! any q > 0 and any ξ); Swendsen–Wang (integer q) and coupling-from-the-past
//! are layered on top and gated by the exact enumeration oracle in tests.

use crate::error::{FkError, Result};
use crate::lattice::{
    cluster_count, connected_excluding, BoxLattice, EdgeConfig, SearchScratch,
};
use crate::rng;
use crate::unionfind::UnionFind;
use rand_pcg::Pcg64;

/// Edge and cluster weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RcmParams {
    pub p: f64,
    pub q: f64,
}

impl RcmParams {
    pub fn new(p: f64, q: f64) -> Result<RcmParams> {
        if !(p > 0.0 && p < 1.0) {
            return Err(FkError::Domain(format!("edge weight p must be in (0,1), got {p}")));
        }
        if !(q > 0.0) {
            return Err(FkError::Domain(format!("cluster weight q must be > 0, got {q}")));
        }
        Ok(RcmParams { p, q })
    }

    /// Self-dual parameters p = √q/(1+√q).
    pub fn critical(q: f64) -> Result<RcmParams> {
        Ok(RcmParams { p: critical_p(q)?, q })
    }
}

/// The self-dual point p_c(q) = √q / (1 + √q).
pub fn critical_p(q: f64) -> Result<f64> {
    if !(q > 0.0) {
        return Err(FkError::Domain(format!("q must be > 0, got {q}")));
    }
    let s = q.sqrt();
    Ok(s / (1.0 + s))
}

/// κ(q) = 4π / arccos(-√q/2), mapping q ∈ (0,4] onto [4,8).
pub fn kappa_of_q(q: f64) -> Result<f64> {
    if !(q > 0.0 && q <= 4.0) {
        return Err(FkError::Domain(format!("q must be in (0,4], got {q}")));
    }
    Ok(4.0 * std::f64::consts::PI / (-q.sqrt() / 2.0).acos())
}

/// Inverse of [`kappa_of_q`]: q = (2 cos(4π/κ − π))² for κ ∈ [4,8).
pub fn q_of_kappa(kappa: f64) -> Result<f64> {
    if !(kappa >= 4.0 && kappa < 8.0) {
        return Err(FkError::Domain(format!("kappa must be in [4,8), got {kappa}")));
    }
    let c = (4.0 * std::f64::consts::PI / kappa - std::f64::consts::PI).cos();
    Ok((2.0 * c) * (2.0 * c))
}

/// Boundary conditions ξ: a partition of the boundary vertices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BoundaryCondition {
    /// All singletons (the finest partition).
    Free,
    /// One class containing the whole boundary (the coarsest partition).
    Wired,
    /// Explicit disjoint classes of boundary vertices; vertices not listed
    /// are singletons.
    Partition(Vec<Vec<u32>>),
}

impl BoundaryCondition {
    /// Validate a partition against the lattice: classes must be disjoint
    /// subsets of the boundary.
    pub fn validate(&self, lat: &BoxLattice) -> Result<()> {
        if let BoundaryCondition::Partition(classes) = self {
            let mut seen = std::collections::HashSet::new();
            for class in classes {
                for &v in class {
                    if (v as usize) >= lat.vertex_count() || !lat.is_boundary_vertex(v) {
                        return Err(FkError::Domain(format!(
                            "partition class contains non-boundary vertex {v}"
                        )));
                    }
                    if !seen.insert(v) {
                        return Err(FkError::Domain(format!(
                            "partition classes are not disjoint at vertex {v}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// One Markov chain: a configuration plus everything needed to advance it.
#[derive(Debug)]
pub struct ChainState {
    pub config: EdgeConfig,
    pub bc: BoundaryCondition,
    pub params: RcmParams,
    pub stream_id: u64,
    pub sweeps: u64,
    scratch: SearchScratch,
}

impl ChainState {
    pub fn new(
        lat: &BoxLattice,
        config: EdgeConfig,
        bc: BoundaryCondition,
        params: RcmParams,
        stream_id: u64,
    ) -> ChainState {
        assert_eq!(config.len(), lat.edge_count());
        ChainState {
            config,
            bc,
            params,
            stream_id,
            sweeps: 0,
            scratch: SearchScratch::for_lattice(lat),
        }
    }

    /// This chain's heat-bath conditional for edge `e`.
    pub fn conditional_at(&mut self, lat: &BoxLattice, e: u32) -> f64 {
        let ChainState { config, bc, params, scratch, .. } = self;
        heat_bath_prob(lat, config, e, bc, params, scratch)
    }

    /// Resample edge `e` from the heat-bath conditional driven by `u`.
    pub fn update_edge(&mut self, lat: &BoxLattice, e: u32, u: f64) -> bool {
        let ChainState { config, bc, params, scratch, .. } = self;
        let open = heat_bath_update(lat, config, e, bc, params, u, scratch);
        config.set(e, open);
        open
    }
}

/// log of the unnormalized weight p^|o| (1-p)^|E∖o| q^k(ω^ξ).
pub fn log_weight(
    lat: &BoxLattice,
    config: &EdgeConfig,
    bc: &BoundaryCondition,
    params: &RcmParams,
) -> f64 {
    let o = config.open_count() as f64;
    let m = lat.edge_count() as f64 - o;
    let k = cluster_count(lat, config, bc) as f64;
    o * params.p.ln() + m * (1.0 - params.p).ln() + k * params.q.ln()
}

/// Exact conditional probability that edge e is open given all other edges:
/// p when the endpoints are already connected in ω∖{e} (under ξ), else
/// p / (p + (1-p) q).
pub fn heat_bath_prob(
    lat: &BoxLattice,
    config: &EdgeConfig,
    e: u32,
    bc: &BoundaryCondition,
    params: &RcmParams,
    scratch: &mut SearchScratch,
) -> f64 {
    if connected_excluding(lat, config, bc, e, scratch) {
        params.p
    } else {
        params.p / (params.p + (1.0 - params.p) * params.q)
    }
}

/// Resample edge e from its heat-bath conditional using the uniform `u`.
/// Decides exactly as `u <= heat_bath_prob(..)` would, but consults the
/// connectivity search only when `u` falls between the two candidate
/// conditionals (at the q=2 self-dual point that skips ~83% of searches).
#[inline]
pub fn heat_bath_update(
    lat: &BoxLattice,
    config: &EdgeConfig,
    e: u32,
    bc: &BoundaryCondition,
    params: &RcmParams,
    u: f64,
    scratch: &mut SearchScratch,
) -> bool {
    let p = params.p;
    let p_merge = p / (p + (1.0 - p) * params.q);
    let (lo, hi) = if p_merge <= p { (p_merge, p) } else { (p, p_merge) };
    if u <= lo {
        true
    } else if u > hi {
        false
    } else if connected_excluding(lat, config, bc, e, scratch) {
        u <= p
    } else {
        u <= p_merge
    }
}

/// One heat-bath sweep: every edge visited once in index order, each
/// resampled from its exact conditional with one uniform draw.
pub fn glauber_sweep(lat: &BoxLattice, state: &mut ChainState, rng: &mut Pcg64) {
    for e in 0..lat.edge_count() as u32 {
        let u = rng::uniform(rng);
        let open =
            heat_bath_update(lat, &state.config, e, &state.bc, &state.params, u, &mut state.scratch);
        state.config.set(e, open);
    }
    state.sweeps += 1;
}

/// The same sweep driven by a caller-supplied uniform block (one value per
/// edge); this is the monotone map reused by coupling-from-the-past.
pub fn sweep_with_uniforms(
    lat: &BoxLattice,
    config: &mut EdgeConfig,
    bc: &BoundaryCondition,
    params: &RcmParams,
    uniforms: &[f64],
    scratch: &mut SearchScratch,
) {
    debug_assert_eq!(uniforms.len(), lat.edge_count());
    for e in 0..lat.edge_count() as u32 {
        let open = heat_bath_update(lat, config, e, bc, params, uniforms[e as usize], scratch);
        config.set(e, open);
    }
}

/// One Swendsen–Wang step (Edwards–Sokal dynamics): label the open clusters
/// under ξ identification, color each uniformly in {1..q}, then reopen each
/// edge with probability p iff its endpoint colors agree.
///
/// Valid for integer q ∈ {2,3,4} and free or wired boundary conditions; the
/// wired super-cluster receives a single color draw.
pub fn swendsen_wang_step(lat: &BoxLattice, state: &mut ChainState, rng: &mut Pcg64) -> Result<()> {
    let q_int = state.params.q.round();
    if (state.params.q - q_int).abs() > 1e-12 || !(2.0..=4.0).contains(&q_int) {
        return Err(FkError::Unsupported(format!(
            "Swendsen–Wang needs integer q in {{2,3,4}}, got {}",
            state.params.q
        )));
    }
    if matches!(state.bc, BoundaryCondition::Partition(_)) {
        return Err(FkError::Unsupported(
            "Swendsen–Wang supports free or wired boundary conditions only".into(),
        ));
    }
    let q_colors = q_int as u64;

    let mut uf = UnionFind::new(lat.vertex_count());
    if state.bc == BoundaryCondition::Wired {
        let b = lat.boundary_vertices();
        for w in &b[1..] {
            uf.union(b[0], *w);
        }
    }
    for e in 0..lat.edge_count() as u32 {
        if state.config.is_open(e) {
            let (a, b) = lat.edge_endpoints(e);
            uf.union(a, b);
        }
    }

    // lazy color per root, assigned in vertex order for determinism
    let mut color = vec![u8::MAX; lat.vertex_count()];
    let mut color_of = |v: u32, uf: &mut UnionFind, rng: &mut Pcg64| -> u8 {
        let root = uf.find(v) as usize;
        if color[root] == u8::MAX {
            color[root] = rng::below(rng, q_colors) as u8;
        }
        color[root]
    };

    for e in 0..lat.edge_count() as u32 {
        let (a, b) = lat.edge_endpoints(e);
        let open = if color_of(a, &mut uf, rng) == color_of(b, &mut uf, rng) {
            rng::uniform(rng) < state.params.p
        } else {
            false
        };
        state.config.set(e, open);
    }
    state.sweeps += 1;
    Ok(())
}

/// Exact sampling by monotone coupling-from-the-past over the heat-bath sweep.
///
/// Sandwich chains start from all-open and all-closed at time -T; T doubles
/// until the chains coalesce at time 0, reusing the same uniform blocks across
/// restarts. Requires q >= 1 (monotonicity), intended for small boxes.
pub fn cftp_sample(
    lat: &BoxLattice,
    bc: &BoundaryCondition,
    params: &RcmParams,
    rng: &mut Pcg64,
) -> Result<EdgeConfig> {
    if params.q < 1.0 {
        return Err(FkError::Unsupported(format!(
            "coupling-from-the-past needs q >= 1, got {}",
            params.q
        )));
    }
    const MAX_SWEEPS: usize = 1 << 16;
    let n = lat.edge_count();
    // blocks[t] drives the sweep at time -(t+1)
    let mut blocks: Vec<Vec<f64>> = Vec::new();
    let mut scratch_hi = SearchScratch::for_lattice(lat);
    let mut scratch_lo = SearchScratch::for_lattice(lat);
    let mut t_back = 1usize;
    loop {
        while blocks.len() < t_back {
            let mut block = Vec::with_capacity(n);
            for _ in 0..n {
                block.push(rng::uniform(rng));
            }
            blocks.push(block);
        }
        let mut hi = EdgeConfig::all_open(n);
        let mut lo = EdgeConfig::all_closed(n);
        for t in (0..t_back).rev() {
            sweep_with_uniforms(lat, &mut hi, bc, params, &blocks[t], &mut scratch_hi);
            sweep_with_uniforms(lat, &mut lo, bc, params, &blocks[t], &mut scratch_lo);
            debug_assert!(lo.le(&hi), "sandwich order violated");
        }
        if hi == lo {
            return Ok(hi);
        }
        t_back *= 2;
        if t_back > MAX_SWEEPS {
            return Err(FkError::ResourceLimit(format!(
                "coupling-from-the-past did not coalesce within {MAX_SWEEPS} sweeps"
            )));
        }
    }
}

/// The exact distribution over all 2^|E| configurations.
#[derive(Clone, Debug)]
pub struct ExactMeasure {
    /// probability of the configuration with bitmask m, indexed by m
    pub probs: Vec<f64>,
    /// the partition function Z^ξ
    pub z: f64,
    pub n_edges: usize,
}

impl ExactMeasure {
    pub fn edge_marginal(&self, e: u32) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .filter(|(m, _)| m >> e & 1 == 1)
            .map(|(_, p)| p)
            .sum()
    }

    pub fn expect<F: Fn(&EdgeConfig) -> f64>(&self, f: F) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(m, p)| p * f(&EdgeConfig::from_mask(m as u64, self.n_edges)))
            .sum()
    }
}

/// Brute-force oracle: enumerate every configuration of a small box.
pub fn enumerate_measure(
    lat: &BoxLattice,
    bc: &BoundaryCondition,
    params: &RcmParams,
) -> Result<ExactMeasure> {
    let n = lat.edge_count();
    if n > 24 {
        return Err(FkError::ResourceLimit(format!(
            "enumeration capped at 24 edges, lattice has {n}"
        )));
    }
    let total = 1usize << n;
    let mut weights = vec![0.0; total];
    let mut z = 0.0;
    for m in 0..total {
        let config = EdgeConfig::from_mask(m as u64, n);
        let o = (m as u64).count_ones() as i32;
        let k = cluster_count(lat, &config, bc) as i32;
        let w = params.p.powi(o) * (1.0 - params.p).powi(n as i32 - o) * params.q.powi(k);
        weights[m] = w;
        z += w;
    }
    for w in &mut weights {
        *w /= z;
    }
    Ok(ExactMeasure { probs: weights, z, n_edges: n })
}
