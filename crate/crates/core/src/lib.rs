//! Design of comparison-limited vector quantizers.
//!
//! A comparison-limited quantizer maps `x` in `R^d` to the sign pattern of
//! `k` affine comparators `sign(v_j . x + t_j)` and reconstructs `x` as the
//! centroid of the cell with that pattern. This crate estimates such
//! quantizers by Monte Carlo, optimizes the comparator configuration, and
//! provides the classic LBG quantizer as a baseline.

pub mod arrangement;
pub mod arrgraph;
pub mod baselines;
pub mod error;
pub mod estimation;
pub mod initsearch;
pub mod optimizer;
pub mod source;

pub use arrangement::{Arrangement, Covector, RegionLabel};
pub use error::{ClvqError, Result};
pub use source::{SampleStream, SourceKind, SourceModel};
