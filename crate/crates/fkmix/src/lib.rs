//! Critical random-cluster (FK) percolation on the square lattice, and the
//! exact conformal-loop-ensemble formulas its mixing rate is checked against.
//!
//! The simulation side measures the mixing rate Δ(R) — the wired-minus-free
//! boundary influence on an edge near the origin — with a monotone coupling
//! that drives the free and wired chains with shared uniforms, so the
//! per-sample statistic is 0/1 and the exponent ι in Δ(R) ≈ c·R^{-ι} is
//! reachable at desk scale. The exact side evaluates the continuum annulus
//! partition functions, the odd/even loop-law density ratio and its
//! asymptotics 1 + 4cos((κ-4)π/4)·r^{3κ/8-1}, boundary-length moments, and a
//! quadrature cross-check tying the two channels together.
//!
//! See the `examples/` directory for one runnable entry point per capability,
//! and the `fkmix` binary for the reproducible experiment runner.

pub mod cli;
pub mod coupling;
pub mod error;
pub mod estimators;
pub mod events;
pub mod exact;
pub mod lattice;
pub mod rcm;
pub mod rng;
pub mod unionfind;

pub use error::{FkError, Result};
pub use lattice::{AnnulusSpec, BoxLattice, EdgeConfig};
pub use rcm::{BoundaryCondition, RcmParams};
