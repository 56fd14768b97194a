//! Hierarchical relatively coherent set pairs for time-dependent flows.
//!
//! The pipeline seeds test points, advects them through a time epoch, counts
//! cell-to-cell transitions into an Ulam-Galerkin estimate of the transfer
//! operator, and then recursively splits the domain by thresholding second
//! singular vectors under relative (renormalized) measures. Branches stop when
//! the best achievable coherence ratio falls below a threshold.
//!
//! Modules, bottom up:
//! - [`mesh`]: structured triangulations, point location, weighted partitions
//! - [`dynamics`]: analytic and gridded flows, RK4 advection
//! - [`transfer`]: transition-matrix assembly with outflow tracking
//! - [`spectral`]: leading and second singular triples of sparse matrices
//! - [`coherence`]: coherence ratio and the thresholding optimizer
//! - [`hierarchy`]: the tree of relatively coherent pairs
//! - [`sampling`]: Lipschitz estimates and sample-density advice
//! - [`pipeline`], [`render`], [`verify`]: configuration, runs, figures, checks

pub mod error;
pub mod indexset;
pub mod mesh;
pub mod dynamics;
pub mod transfer;
pub mod spectral;
pub mod coherence;
pub mod hierarchy;
pub mod sampling;
pub mod pipeline;
pub mod render;
pub mod verify;

pub use error::{Error, Result};

/// A point in the plane.
pub type Point = [f64; 2];
