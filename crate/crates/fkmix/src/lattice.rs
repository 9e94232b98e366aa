//! Square-lattice boxes, their duals, and connectivity queries.
//!
//! The box of half-side R is the vertex set [-R,R]^2 ∩ Z^2 with nearest-neighbor
//! edges. Edge indexing is fixed and documented so fixtures stay stable:
//! horizontal edges come first, row-major ((y, x) ascending, x is the left
//! endpoint), then vertical edges row-major ((y, x) ascending, y is the lower
//! endpoint). The dual lattice lives on Z^2 + (1/2, 1/2); the dual edge crossing
//! a primal edge gets the mirrored index in the dual's own edge list, which
//! makes the primal->dual index map the involution `e <-> e ± n_h`.

use crate::error::{FkError, Result};
use crate::rcm::BoundaryCondition;
use crate::unionfind::UnionFind;

/// Immutable square-lattice box Λ_R of half-side `r`.
#[derive(Clone, Debug)]
pub struct BoxLattice {
    r: i32,
    side: i32,
    n_vertices: usize,
    n_h: usize,
    n_edges: usize,
    /// (neighbor, edge) pairs per vertex, `adj_len` valid entries.
    adj: Vec<[(u32, u32); 4]>,
    adj_len: Vec<u8>,
    endpoints: Vec<(u32, u32)>,
    is_boundary: Vec<bool>,
    boundary: Vec<u32>,
    /// (crossing edge, interior face) pairs incident to the outer face.
    outer_face_links: Vec<(u32, u32)>,
}

impl BoxLattice {
    /// Build Λ_R. Errors for R < 1.
    pub fn build(r: i32) -> Result<BoxLattice> {
        if r < 1 {
            return Err(FkError::Domain(format!("box half-side must be >= 1, got {r}")));
        }
        let side = 2 * r + 1;
        let n_vertices = (side * side) as usize;
        let n_h = (side * (side - 1)) as usize;
        let n_edges = 2 * n_h;

        let mut lat = BoxLattice {
            r,
            side,
            n_vertices,
            n_h,
            n_edges,
            adj: vec![[(0, 0); 4]; n_vertices],
            adj_len: vec![0; n_vertices],
            endpoints: Vec::with_capacity(n_edges),
            is_boundary: vec![false; n_vertices],
            boundary: Vec::new(),
            outer_face_links: Vec::new(),
        };

        // horizontal edges: {(x,y),(x+1,y)}
        for y in -r..=r {
            for x in -r..r {
                let u = lat.vertex_id(x, y);
                let v = lat.vertex_id(x + 1, y);
                lat.endpoints.push((u, v));
            }
        }
        // vertical edges: {(x,y),(x,y+1)}
        for y in -r..r {
            for x in -r..=r {
                let u = lat.vertex_id(x, y);
                let v = lat.vertex_id(x, y + 1);
                lat.endpoints.push((u, v));
            }
        }
        debug_assert_eq!(lat.endpoints.len(), n_edges);

        for (e, &(u, v)) in lat.endpoints.iter().enumerate() {
            for &(a, b) in &[(u, v), (v, u)] {
                let k = lat.adj_len[a as usize] as usize;
                lat.adj[a as usize][k] = (b, e as u32);
                lat.adj_len[a as usize] += 1;
            }
        }

        for y in -r..=r {
            for x in -r..=r {
                if x.abs() == r || y.abs() == r {
                    let v = lat.vertex_id(x, y);
                    lat.is_boundary[v as usize] = true;
                    lat.boundary.push(v);
                }
            }
        }

        // outer-face incidences: the crossing edge sits on the box's outer ring
        for b in -r..r {
            lat.outer_face_links.push((lat.v_edge(r, b), lat.face_id(r - 1, b)));
            lat.outer_face_links.push((lat.v_edge(-r, b), lat.face_id(-r, b)));
        }
        for a in -r..r {
            lat.outer_face_links.push((lat.h_edge(a, r), lat.face_id(a, r - 1)));
            lat.outer_face_links.push((lat.h_edge(a, -r), lat.face_id(a, -r)));
        }

        Ok(lat)
    }

    pub fn half_side(&self) -> i32 {
        self.r
    }

    pub fn vertex_count(&self) -> usize {
        self.n_vertices
    }

    pub fn edge_count(&self) -> usize {
        self.n_edges
    }

    pub fn horizontal_count(&self) -> usize {
        self.n_h
    }

    #[inline]
    pub fn vertex_id(&self, x: i32, y: i32) -> u32 {
        debug_assert!(x.abs() <= self.r && y.abs() <= self.r);
        ((y + self.r) * self.side + (x + self.r)) as u32
    }

    #[inline]
    pub fn vertex_coords(&self, v: u32) -> (i32, i32) {
        let x = v as i32 % self.side - self.r;
        let y = v as i32 / self.side - self.r;
        (x, y)
    }

    /// Index of the horizontal edge {(x,y),(x+1,y)}.
    #[inline]
    pub fn h_edge(&self, x: i32, y: i32) -> u32 {
        debug_assert!(x >= -self.r && x < self.r && y.abs() <= self.r);
        ((y + self.r) * (self.side - 1) + (x + self.r)) as u32
    }

    /// Index of the vertical edge {(x,y),(x,y+1)}.
    #[inline]
    pub fn v_edge(&self, x: i32, y: i32) -> u32 {
        debug_assert!(x.abs() <= self.r && y >= -self.r && y < self.r);
        (self.n_h + ((y + self.r) * self.side + (x + self.r)) as usize) as u32
    }

    #[inline]
    pub fn edge_endpoints(&self, e: u32) -> (u32, u32) {
        self.endpoints[e as usize]
    }

    pub fn is_horizontal(&self, e: u32) -> bool {
        (e as usize) < self.n_h
    }

    /// Midpoint of edge `e` in doubled coordinates (exact half-integers).
    pub fn edge_midpoint_doubled(&self, e: u32) -> (i32, i32) {
        let (u, v) = self.edge_endpoints(e);
        let (ux, uy) = self.vertex_coords(u);
        let (vx, vy) = self.vertex_coords(v);
        (ux + vx, uy + vy)
    }

    pub fn is_boundary_vertex(&self, v: u32) -> bool {
        self.is_boundary[v as usize]
    }

    pub fn boundary_vertices(&self) -> &[u32] {
        &self.boundary
    }

    pub fn degree(&self, v: u32) -> usize {
        self.adj_len[v as usize] as usize
    }

    pub fn neighbors(&self, v: u32) -> &[(u32, u32)] {
        &self.adj[v as usize][..self.adj_len[v as usize] as usize]
    }

    /// Index of the dual edge crossing primal edge `e` (an involution).
    ///
    /// A horizontal primal edge is crossed by a vertical dual edge and vice
    /// versa; with mirrored row-major indexing on the dual grid the map is a
    /// plain block swap. `dual_edge_endpoints_doubled` exposes the geometry the
    /// formula encodes, and the tests check the two against each other.
    pub fn dual_edge(&self, e: u32) -> Result<u32> {
        if e as usize >= self.n_edges {
            return Err(FkError::Domain(format!(
                "edge index {e} out of range (edge count {})",
                self.n_edges
            )));
        }
        Ok(if (e as usize) < self.n_h {
            e + self.n_h as u32
        } else {
            e - self.n_h as u32
        })
    }

    /// Endpoints of dual edge `d` in doubled coordinates.
    ///
    /// Dual-horizontal edges occupy indices [0, n_h) (they cross primal
    /// verticals), dual-vertical edges [n_h, 2 n_h).
    pub fn dual_edge_endpoints_doubled(&self, d: u32) -> Result<((i32, i32), (i32, i32))> {
        if d as usize >= self.n_edges {
            return Err(FkError::Domain(format!("dual edge index {d} out of range")));
        }
        let r = self.r;
        if (d as usize) < self.n_h {
            // crosses primal vertical (x, y): endpoints (x∓1/2, y+1/2)
            let k = d as i32;
            let y = k / self.side - r;
            let x = k % self.side - r;
            Ok(((2 * x - 1, 2 * y + 1), (2 * x + 1, 2 * y + 1)))
        } else {
            // crosses primal horizontal (x, y): endpoints (x+1/2, y∓1/2)
            let k = d as i32 - self.n_h as i32;
            let y = k / (self.side - 1) - r;
            let x = k % (self.side - 1) - r;
            Ok(((2 * x + 1, 2 * y - 1), (2 * x + 1, 2 * y + 1)))
        }
    }

    // ---- faces (dual vertices), used by the dual-side searches ----

    /// Interior face with lower-left primal corner (a, b), i.e. center
    /// (a+1/2, b+1/2); a, b ∈ [-R, R-1].
    #[inline]
    pub fn face_id(&self, a: i32, b: i32) -> u32 {
        debug_assert!(a >= -self.r && a < self.r && b >= -self.r && b < self.r);
        ((b + self.r) * (self.side - 1) + (a + self.r)) as u32
    }

    pub fn face_count(&self) -> usize {
        ((self.side - 1) * (self.side - 1)) as usize
    }

    /// Sentinel id for the outer face.
    pub fn outer_face(&self) -> u32 {
        self.face_count() as u32
    }

    #[inline]
    pub fn face_coords(&self, f: u32) -> (i32, i32) {
        let a = f as i32 % (self.side - 1) - self.r;
        let b = f as i32 / (self.side - 1) - self.r;
        (a, b)
    }

    /// The two faces flanking edge `e` (either may be the outer face).
    pub fn edge_flanking_faces(&self, e: u32) -> (u32, u32) {
        let r = self.r;
        if self.is_horizontal(e) {
            let k = e as i32;
            let y = k / (self.side - 1) - r;
            let x = k % (self.side - 1) - r;
            let north = if y < r { self.face_id(x, y) } else { self.outer_face() };
            let south = if y > -r { self.face_id(x, y - 1) } else { self.outer_face() };
            (north, south)
        } else {
            let k = e as i32 - self.n_h as i32;
            let y = k / self.side - r;
            let x = k % self.side - r;
            let east = if x < r { self.face_id(x, y) } else { self.outer_face() };
            let west = if x > -r { self.face_id(x - 1, y) } else { self.outer_face() };
            (east, west)
        }
    }

    /// Neighbors of an interior face: (crossing primal edge, neighbor face).
    pub fn face_neighbors(&self, f: u32, out: &mut [(u32, u32); 4]) -> usize {
        let (a, b) = self.face_coords(f);
        let r = self.r;
        let outer = self.outer_face();
        out[0] = (self.v_edge(a + 1, b), if a + 1 < r { self.face_id(a + 1, b) } else { outer });
        out[1] = (self.v_edge(a, b), if a > -r { self.face_id(a - 1, b) } else { outer });
        out[2] = (self.h_edge(a, b + 1), if b + 1 < r { self.face_id(a, b + 1) } else { outer });
        out[3] = (self.h_edge(a, b), if b > -r { self.face_id(a, b - 1) } else { outer });
        4
    }

    pub fn outer_face_links(&self) -> &[(u32, u32)] {
        &self.outer_face_links
    }
}

/// One open/closed bit per edge of a `BoxLattice`.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct EdgeConfig {
    words: Vec<u64>,
    len: usize,
}

impl EdgeConfig {
    pub fn all_closed(n_edges: usize) -> EdgeConfig {
        EdgeConfig { words: vec![0; n_edges.div_ceil(64)], len: n_edges }
    }

    pub fn all_open(n_edges: usize) -> EdgeConfig {
        let mut c = EdgeConfig { words: vec![u64::MAX; n_edges.div_ceil(64)], len: n_edges };
        c.clear_tail();
        c
    }

    fn clear_tail(&mut self) {
        let tail = self.len % 64;
        if tail != 0 {
            if let Some(w) = self.words.last_mut() {
                *w &= (1u64 << tail) - 1;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn is_open(&self, e: u32) -> bool {
        debug_assert!((e as usize) < self.len);
        self.words[e as usize >> 6] >> (e & 63) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, e: u32, open: bool) {
        debug_assert!((e as usize) < self.len);
        let w = &mut self.words[e as usize >> 6];
        if open {
            *w |= 1 << (e & 63);
        } else {
            *w &= !(1 << (e & 63));
        }
    }

    pub fn open_count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Edgewise partial order: self ≤ other.
    pub fn le(&self, other: &EdgeConfig) -> bool {
        debug_assert_eq!(self.len, other.len);
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    /// From a u64 bitmask (for enumeration; requires ≤ 64 edges).
    pub fn from_mask(mask: u64, n_edges: usize) -> EdgeConfig {
        assert!(n_edges <= 64);
        let mut c = EdgeConfig::all_closed(n_edges);
        c.words[0] = mask & if n_edges == 64 { u64::MAX } else { (1 << n_edges) - 1 };
        c
    }

    /// The dual configuration: dual edge of e is open iff e is closed.
    pub fn dual(&self, lat: &BoxLattice) -> EdgeConfig {
        let mut d = EdgeConfig::all_closed(self.len);
        for e in 0..self.len as u32 {
            if !self.is_open(e) {
                d.set(lat.dual_edge(e).expect("in-range"), true);
            }
        }
        d
    }
}

/// Discrete annulus: vertices with sup-norm in (r_inner, r_outer].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AnnulusSpec {
    pub r_inner: i32,
    pub r_outer: i32,
}

impl AnnulusSpec {
    pub fn new(r_inner: i32, r_outer: i32) -> Result<AnnulusSpec> {
        if r_inner < 1 || r_inner >= r_outer {
            return Err(FkError::Domain(format!(
                "annulus requires 1 <= r_inner < r_outer, got ({r_inner}, {r_outer})"
            )));
        }
        Ok(AnnulusSpec { r_inner, r_outer })
    }

    /// The annulus between r and ⌊(1+δ)r⌋. The outer radius must clear the
    /// inner one by at least 2 so a dual ring fits strictly inside.
    pub fn from_delta(r: i32, delta: f64) -> Result<AnnulusSpec> {
        if !(delta > 0.0) {
            return Err(FkError::Domain(format!("delta must be > 0, got {delta}")));
        }
        let r_outer = ((1.0 + delta) * r as f64).floor() as i32;
        if r_outer < r + 2 {
            return Err(FkError::Domain(format!(
                "annulus too thin: floor((1+{delta})*{r}) = {r_outer} < r+2"
            )));
        }
        AnnulusSpec::new(r, r_outer)
    }

    pub fn contains_vertex(&self, x: i32, y: i32) -> bool {
        let n = x.abs().max(y.abs());
        n > self.r_inner && n <= self.r_outer
    }

    pub fn fits_in(&self, lat: &BoxLattice) -> bool {
        self.r_outer <= lat.half_side()
    }
}

// ---- connectivity -----------------------------------------------------------

/// Reusable buffers for the breadth-first searches.
#[derive(Clone, Debug)]
pub struct SearchScratch {
    vmark: Vec<u32>,
    fmark: Vec<u32>,
    epoch: u32,
    queue_a: Vec<u32>,
    queue_b: Vec<u32>,
    fqueue_a: Vec<u32>,
    fqueue_b: Vec<u32>,
}

impl SearchScratch {
    pub fn for_lattice(lat: &BoxLattice) -> SearchScratch {
        SearchScratch {
            vmark: vec![0; lat.vertex_count()],
            fmark: vec![0; lat.face_count() + 1],
            epoch: 0,
            queue_a: Vec::new(),
            queue_b: Vec::new(),
            fqueue_a: Vec::new(),
            fqueue_b: Vec::new(),
        }
    }
}

fn check_vertex(lat: &BoxLattice, v: u32) -> Result<()> {
    if (v as usize) < lat.vertex_count() {
        Ok(())
    } else {
        Err(FkError::Domain(format!("vertex index {v} out of range")))
    }
}

/// Plain BFS connectivity of u and v in the open subgraph with `bc`
/// identification applied; `excluding` is treated as closed.
pub fn connected(
    lat: &BoxLattice,
    config: &EdgeConfig,
    bc: &BoundaryCondition,
    u: u32,
    v: u32,
    excluding: Option<u32>,
) -> Result<bool> {
    check_vertex(lat, u)?;
    check_vertex(lat, v)?;
    if let Some(e) = excluding {
        if e as usize >= lat.edge_count() {
            return Err(FkError::Domain(format!("edge index {e} out of range")));
        }
    }
    if u == v {
        return Ok(true);
    }
    // class id per boundary vertex, for identification
    let class_of = |w: u32| -> Option<usize> {
        match bc {
            BoundaryCondition::Free => None,
            BoundaryCondition::Wired => lat.is_boundary_vertex(w).then_some(0),
            BoundaryCondition::Partition(classes) => classes
                .iter()
                .position(|c| c.contains(&w)),
        }
    };
    let n_classes = match bc {
        BoundaryCondition::Free => 0,
        BoundaryCondition::Wired => 1,
        BoundaryCondition::Partition(classes) => classes.len(),
    };
    let target_class = class_of(v);

    let mut seen = vec![false; lat.vertex_count()];
    let mut class_seen = vec![false; n_classes];
    let mut queue = vec![u];
    seen[u as usize] = true;
    while let Some(w) = queue.pop() {
        if w == v {
            return Ok(true);
        }
        if let Some(c) = class_of(w) {
            if target_class == Some(c) {
                return Ok(true);
            }
            if !class_seen[c] {
                class_seen[c] = true;
                let members: Vec<u32> = match bc {
                    BoundaryCondition::Wired => lat.boundary_vertices().to_vec(),
                    BoundaryCondition::Partition(classes) => classes[c].clone(),
                    BoundaryCondition::Free => unreachable!(),
                };
                for m in members {
                    if !seen[m as usize] {
                        seen[m as usize] = true;
                        queue.push(m);
                    }
                }
            }
        }
        for &(nbr, edge) in lat.neighbors(w) {
            if Some(edge) == excluding || !config.is_open(edge) {
                continue;
            }
            if !seen[nbr as usize] {
                seen[nbr as usize] = true;
                queue.push(nbr);
            }
        }
    }
    Ok(false)
}

/// k(ω^ξ): open-cluster count with boundary identification applied first.
pub fn cluster_count(lat: &BoxLattice, config: &EdgeConfig, bc: &BoundaryCondition) -> u32 {
    let mut uf = UnionFind::new(lat.vertex_count());
    match bc {
        BoundaryCondition::Free => {}
        BoundaryCondition::Wired => {
            let b = lat.boundary_vertices();
            for w in &b[1..] {
                uf.union(b[0], *w);
            }
        }
        BoundaryCondition::Partition(classes) => {
            for class in classes {
                for w in &class[1..] {
                    uf.union(class[0], *w);
                }
            }
        }
    }
    for e in 0..lat.edge_count() as u32 {
        if config.is_open(e) {
            let (a, b) = lat.edge_endpoints(e);
            uf.union(a, b);
        }
    }
    uf.component_count()
}

/// The three other edges of a unit square containing e, all open, connect
/// e's endpoints without e.
fn flanking_plaquette_open(lat: &BoxLattice, config: &EdgeConfig, e: u32) -> bool {
    let r = lat.r;
    if lat.is_horizontal(e) {
        let k = e as i32;
        let y = k / (lat.side - 1) - r;
        let x = k % (lat.side - 1) - r;
        if y < r
            && config.is_open(lat.v_edge(x, y))
            && config.is_open(lat.v_edge(x + 1, y))
            && config.is_open(lat.h_edge(x, y + 1))
        {
            return true;
        }
        if y > -r
            && config.is_open(lat.v_edge(x, y - 1))
            && config.is_open(lat.v_edge(x + 1, y - 1))
            && config.is_open(lat.h_edge(x, y - 1))
        {
            return true;
        }
        false
    } else {
        let k = e as i32 - lat.n_h as i32;
        let y = k / lat.side - r;
        let x = k % lat.side - r;
        if x < r
            && config.is_open(lat.h_edge(x, y))
            && config.is_open(lat.h_edge(x, y + 1))
            && config.is_open(lat.v_edge(x + 1, y))
        {
            return true;
        }
        if x > -r
            && config.is_open(lat.h_edge(x - 1, y))
            && config.is_open(lat.h_edge(x - 1, y + 1))
            && config.is_open(lat.v_edge(x - 1, y))
        {
            return true;
        }
        false
    }
}

/// Fast "are the endpoints of `e` connected in ω∖{e}?" for the heat-bath
/// conditional. Races a bidirectional primal search (connection certificate)
/// against a bidirectional dual search (disconnection certificate); the two
/// are exact complements by planar duality, so whichever finishes first
/// decides. Falls back to [`connected`] for partition boundary conditions.
pub fn connected_excluding(
    lat: &BoxLattice,
    config: &EdgeConfig,
    bc: &BoundaryCondition,
    e: u32,
    scratch: &mut SearchScratch,
) -> bool {
    let (u, v) = lat.edge_endpoints(e);
    let wired = match bc {
        BoundaryCondition::Free => false,
        BoundaryCondition::Wired => true,
        BoundaryCondition::Partition(_) => {
            return connected(lat, config, bc, u, v, Some(e)).expect("valid indices");
        }
    };
    if wired && lat.is_boundary_vertex(u) && lat.is_boundary_vertex(v) {
        return true;
    }
    // cheap win: an open plaquette flanking e already connects its endpoints
    if flanking_plaquette_open(lat, config, e) {
        return true;
    }

    // marks: epoch*2 + side
    scratch.epoch += 2;
    if scratch.epoch >= u32::MAX - 4 {
        scratch.vmark.iter_mut().for_each(|m| *m = 0);
        scratch.fmark.iter_mut().for_each(|m| *m = 0);
        scratch.epoch = 2;
    }
    let ep = scratch.epoch;
    let (mark_a, mark_b) = (ep, ep + 1);

    scratch.queue_a.clear();
    scratch.queue_b.clear();
    scratch.fqueue_a.clear();
    scratch.fqueue_b.clear();
    scratch.vmark[u as usize] = mark_a;
    scratch.vmark[v as usize] = mark_b;
    scratch.queue_a.push(u);
    scratch.queue_b.push(v);
    let mut boundary_hit = [wired && lat.is_boundary_vertex(u), wired && lat.is_boundary_vertex(v)];

    let (f1, f2) = lat.edge_flanking_faces(e);
    let outer = lat.outer_face();
    debug_assert!(!(wired && (f1 == outer && f2 == outer)));
    scratch.fmark[f1 as usize] = mark_a;
    scratch.fmark[f2 as usize] = mark_b;
    if f1 == f2 {
        // both flanks the outer face cannot happen for R >= 1
        return false;
    }
    scratch.fqueue_a.push(f1);
    scratch.fqueue_b.push(f2);

    let mut pa = 0usize;
    let mut pb = 0usize;
    let mut fa = 0usize;
    let mut fb = 0usize;
    let mut nbrs = [(0u32, 0u32); 4];

    loop {
        // primal expansions, one node per side
        for side in 0..2 {
            let (queue, head, my_mark, other_mark) = if side == 0 {
                (&mut scratch.queue_a, &mut pa, mark_a, mark_b)
            } else {
                (&mut scratch.queue_b, &mut pb, mark_b, mark_a)
            };
            if *head < queue.len() {
                let w = queue[*head];
                *head += 1;
                for &(nbr, edge) in lat.neighbors(w) {
                    if edge == e || !config.is_open(edge) {
                        continue;
                    }
                    let m = scratch.vmark[nbr as usize];
                    if m == other_mark {
                        return true;
                    }
                    if m != my_mark {
                        scratch.vmark[nbr as usize] = my_mark;
                        if wired && lat.is_boundary_vertex(nbr) {
                            boundary_hit[side] = true;
                            if boundary_hit[0] && boundary_hit[1] {
                                return true;
                            }
                        }
                        queue.push(nbr);
                    }
                }
            } else if queue.len() == *head {
                // side's open cluster fully explored without meeting
                if !wired || !boundary_hit[side] {
                    return false;
                }
                // wired and this cluster touches the boundary: connection now
                // hinges on the other side reaching the boundary; keep going.
            }
        }

        // dual expansions, one face per side
        let mut dual_done = true;
        for side in 0..2 {
            let (fqueue, head, my_mark, other_mark) = if side == 0 {
                (&mut scratch.fqueue_a, &mut fa, mark_a, mark_b)
            } else {
                (&mut scratch.fqueue_b, &mut fb, mark_b, mark_a)
            };
            if *head >= fqueue.len() {
                continue;
            }
            dual_done = false;
            let f = fqueue[*head];
            *head += 1;
            let push = |face: u32,
                        fmark: &mut Vec<u32>,
                        fqueue: &mut Vec<u32>|
             -> bool {
                let m = fmark[face as usize];
                if m == other_mark {
                    return true;
                }
                if m != my_mark {
                    fmark[face as usize] = my_mark;
                    fqueue.push(face);
                }
                false
            };
            if f == outer {
                debug_assert!(!wired);
                for &(edge, nbr) in lat.outer_face_links() {
                    if edge == e || config.is_open(edge) {
                        continue;
                    }
                    if push(nbr, &mut scratch.fmark, fqueue) {
                        return false; // dual certificate: disconnected
                    }
                }
            } else {
                let n = lat.face_neighbors(f, &mut nbrs);
                for &(edge, nbr) in &nbrs[..n] {
                    if edge == e || config.is_open(edge) {
                        continue;
                    }
                    if nbr == outer && wired {
                        continue;
                    }
                    if push(nbr, &mut scratch.fmark, fqueue) {
                        return false;
                    }
                }
            }
        }
        if dual_done {
            // no dual path can separate the endpoints: they are connected
            return true;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rcm::BoundaryCondition as Bc;
    use crate::rng;

    #[test]
    fn counts_match_closed_forms() {
        for r in 1..=32 {
            let lat = BoxLattice::build(r).unwrap();
            let side = (2 * r + 1) as usize;
            assert_eq!(lat.vertex_count(), side * side);
            assert_eq!(lat.edge_count(), 2 * side * (side - 1));
        }
        let lat = BoxLattice::build(64).unwrap();
        assert_eq!(lat.vertex_count(), 129 * 129);
        assert_eq!(lat.edge_count(), 2 * 129 * 128);
        assert!(BoxLattice::build(0).is_err());
    }

    #[test]
    fn boundary_degrees() {
        let lat = BoxLattice::build(3).unwrap();
        for v in 0..lat.vertex_count() as u32 {
            if lat.is_boundary_vertex(v) {
                assert!(lat.degree(v) < 4);
            } else {
                assert_eq!(lat.degree(v), 4);
            }
        }
        assert_eq!(lat.boundary_vertices().len(), 4 * 2 * 3);
    }

    #[test]
    fn dual_edge_is_involution_and_perpendicular() {
        let lat = BoxLattice::build(3).unwrap();
        for e in 0..lat.edge_count() as u32 {
            let d = lat.dual_edge(e).unwrap();
            assert_eq!(lat.dual_edge(d).unwrap(), e);
            // the dual edge's midpoint is the primal edge's midpoint
            let (p, q) = lat.dual_edge_endpoints_doubled(d).unwrap();
            let mid = ((p.0 + q.0) / 2, (p.1 + q.1) / 2);
            assert_eq!(mid, lat.edge_midpoint_doubled(e));
            // and it runs perpendicular
            let horizontal_dual = p.1 == q.1;
            assert_eq!(horizontal_dual, !lat.is_horizontal(e));
        }
        assert!(lat.dual_edge(lat.edge_count() as u32).is_err());
    }

    #[test]
    fn dual_config_counts_and_involution() {
        let lat = BoxLattice::build(2).unwrap();
        let mut rng = rng::stream(11, 0, 0);
        for _ in 0..50 {
            let mut c = EdgeConfig::all_closed(lat.edge_count());
            for e in 0..lat.edge_count() as u32 {
                c.set(e, rng::uniform(&mut rng) < 0.5);
            }
            let d = c.dual(&lat);
            assert_eq!(d.open_count(), lat.edge_count() - c.open_count());
            assert_eq!(d.dual(&lat), c);
        }
    }

    #[test]
    fn connected_examples() {
        let lat = BoxLattice::build(1).unwrap();
        let open = EdgeConfig::all_open(lat.edge_count());
        let closed = EdgeConfig::all_closed(lat.edge_count());
        let u = lat.vertex_id(-1, -1);
        let v = lat.vertex_id(1, 1);
        let center = lat.vertex_id(0, 0);
        assert!(connected(&lat, &open, &Bc::Free, u, v, None).unwrap());
        assert!(!connected(&lat, &closed, &Bc::Free, u, v, None).unwrap());
        assert!(connected(&lat, &closed, &Bc::Wired, u, v, None).unwrap());
        assert!(!connected(&lat, &closed, &Bc::Wired, u, center, None).unwrap());
        // excluding breaks a single-edge path
        let e = lat.h_edge(0, 0);
        let mut one = EdgeConfig::all_closed(lat.edge_count());
        one.set(e, true);
        let a = lat.vertex_id(0, 0);
        let b = lat.vertex_id(1, 0);
        assert!(connected(&lat, &one, &Bc::Free, a, b, None).unwrap());
        assert!(!connected(&lat, &one, &Bc::Free, a, b, Some(e)).unwrap());
    }

    #[test]
    fn cluster_count_examples() {
        let lat = BoxLattice::build(1).unwrap();
        let open = EdgeConfig::all_open(lat.edge_count());
        let closed = EdgeConfig::all_closed(lat.edge_count());
        assert_eq!(cluster_count(&lat, &closed, &Bc::Free), 9);
        assert_eq!(cluster_count(&lat, &closed, &Bc::Wired), 2);
        assert_eq!(cluster_count(&lat, &open, &Bc::Free), 1);
        assert_eq!(cluster_count(&lat, &open, &Bc::Wired), 1);
    }

    #[test]
    fn cluster_count_bounds_vs_free() {
        let lat = BoxLattice::build(2).unwrap();
        let mut rng = rng::stream(3, 1, 0);
        for _ in 0..200 {
            let mut c = EdgeConfig::all_closed(lat.edge_count());
            for e in 0..lat.edge_count() as u32 {
                c.set(e, rng::uniform(&mut rng) < 0.4);
            }
            let kf = cluster_count(&lat, &c, &Bc::Free) as i64;
            let kw = cluster_count(&lat, &c, &Bc::Wired) as i64;
            let b = lat.boundary_vertices().len() as i64;
            assert!(kf >= kw);
            assert!(kw >= kf - b + 1);
        }
    }

    /// union-find count agrees with BFS labeling on random configs
    #[test]
    fn cluster_count_matches_bfs() {
        for r in 1..=4 {
            let lat = BoxLattice::build(r).unwrap();
            let mut rng = rng::stream(5, r as u64, 0);
            for _ in 0..250 {
                let mut c = EdgeConfig::all_closed(lat.edge_count());
                for e in 0..lat.edge_count() as u32 {
                    c.set(e, rng::uniform(&mut rng) < 0.5);
                }
                for bc in [Bc::Free, Bc::Wired] {
                    let by_uf = cluster_count(&lat, &c, &bc);
                    // BFS labeling
                    let mut label = vec![u32::MAX; lat.vertex_count()];
                    let mut next = 0;
                    for s in 0..lat.vertex_count() as u32 {
                        if label[s as usize] != u32::MAX {
                            continue;
                        }
                        label[s as usize] = next;
                        let mut stack = vec![s];
                        while let Some(w) = stack.pop() {
                            let push = |n: u32, label: &mut Vec<u32>, stack: &mut Vec<u32>| {
                                if label[n as usize] == u32::MAX {
                                    label[n as usize] = next;
                                    stack.push(n);
                                }
                            };
                            if bc == Bc::Wired && lat.is_boundary_vertex(w) {
                                for &m in lat.boundary_vertices() {
                                    push(m, &mut label, &mut stack);
                                }
                            }
                            for &(nbr, edge) in lat.neighbors(w) {
                                if c.is_open(edge) {
                                    push(nbr, &mut label, &mut stack);
                                }
                            }
                        }
                        next += 1;
                    }
                    assert_eq!(by_uf, next, "r={r} bc={bc:?}");
                }
            }
        }
    }

    #[test]
    fn fast_connectivity_matches_plain_bfs() {
        for r in [1, 2, 3] {
            let lat = BoxLattice::build(r).unwrap();
            let mut scratch = SearchScratch::for_lattice(&lat);
            let mut rng = rng::stream(17, r as u64, 0);
            for trial in 0..400 {
                let density = rng::uniform(&mut rng);
                let mut c = EdgeConfig::all_closed(lat.edge_count());
                for e in 0..lat.edge_count() as u32 {
                    c.set(e, rng::uniform(&mut rng) < density);
                }
                for bc in [Bc::Free, Bc::Wired] {
                    for e in 0..lat.edge_count() as u32 {
                        let (u, v) = lat.edge_endpoints(e);
                        let slow = connected(&lat, &c, &bc, u, v, Some(e)).unwrap();
                        let fast = connected_excluding(&lat, &c, &bc, e, &mut scratch);
                        assert_eq!(slow, fast, "r={r} trial={trial} e={e} bc={bc:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn annulus_spec_validation() {
        assert!(AnnulusSpec::new(2, 5).is_ok());
        assert!(AnnulusSpec::new(0, 5).is_err());
        assert!(AnnulusSpec::new(3, 3).is_err());
        let a = AnnulusSpec::from_delta(6, 0.5).unwrap();
        assert_eq!(a, AnnulusSpec { r_inner: 6, r_outer: 9 });
        assert!(AnnulusSpec::from_delta(2, 0.5).is_err()); // floor(3) < 4
        assert!(a.contains_vertex(7, 0));
        assert!(!a.contains_vertex(6, -6));
        assert!(a.contains_vertex(9, 9));
        assert!(!a.contains_vertex(10, 0));
    }
}
