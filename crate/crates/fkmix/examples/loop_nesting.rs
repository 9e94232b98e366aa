//! The medial loop configuration: interfaces between open clusters and dual
//! clusters, their nesting levels, and the count of loops around the origin.

use fkmix::events::{extract_loops, loops_around_origin, nesting_levels, write_loop_records};
use fkmix::lattice::{BoxLattice, EdgeConfig};
use fkmix::rcm::{swendsen_wang_step, BoundaryCondition, ChainState, RcmParams};
use fkmix::rng;

fn open_ring(lat: &BoxLattice, config: &mut EdgeConfig, rho: i32) {
    for t in -rho..rho {
        config.set(lat.h_edge(t, rho), true);
        config.set(lat.h_edge(t, -rho), true);
        config.set(lat.v_edge(rho, t), true);
        config.set(lat.v_edge(-rho, t), true);
    }
}

fn main() {
    // two concentric circuits: a fully deterministic nesting structure
    let lat = BoxLattice::build(5).unwrap();
    let mut cfg = EdgeConfig::all_closed(lat.edge_count());
    open_ring(&lat, &mut cfg, 2);
    open_ring(&lat, &mut cfg, 4);
    let mut set = extract_loops(&lat, &cfg, &BoundaryCondition::Free).unwrap();
    nesting_levels(&mut set).unwrap();
    println!(
        "two concentric circuits on the half-side-5 box: {} loops, {} around the origin",
        set.len(),
        loops_around_origin(&set)
    );
    println!("loop records (id, level, around-origin, vertices in half-units):");
    let mut buf = Vec::new();
    write_loop_records(&set, &mut buf).unwrap();
    for line in String::from_utf8(buf).unwrap().lines().take(6) {
        let short: String = line.chars().take(100).collect();
        println!("  {short}{}", if line.len() > 100 { " ..." } else { "" });
    }

    // an equilibrated critical configuration
    let params = RcmParams::critical(2.0).unwrap();
    let mut st = ChainState::new(
        &lat,
        EdgeConfig::all_closed(lat.edge_count()),
        BoundaryCondition::Wired,
        params,
        0,
    );
    let mut rng = rng::stream(99, 0, 0);
    for _ in 0..200 {
        swendsen_wang_step(&lat, &mut st, &mut rng).unwrap();
    }
    let mut histogram = [0u32; 8];
    let n = 2000;
    for _ in 0..n {
        swendsen_wang_step(&lat, &mut st, &mut rng).unwrap();
        let set = extract_loops(&lat, &st.config, &BoundaryCondition::Wired).unwrap();
        let l = loops_around_origin(&set).min(7);
        histogram[l as usize] += 1;
    }
    println!("\ndistribution of the origin loop count at q=2 criticality (wired, {n} samples):");
    for (l, count) in histogram.iter().enumerate() {
        if *count > 0 {
            println!("  l = {l}: {:.3}", *count as f64 / n as f64);
        }
    }
}
