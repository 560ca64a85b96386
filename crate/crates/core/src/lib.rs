//! Numerical toolkit for nonlocal isoperimetric problems on lattice tilings.
//!
//! The crate is organised bottom-up:
//!
//! - [`lattice`]: lattices of dimension 1-3, reduction, shortest vectors,
//!   Voronoi cells and the 2D moduli space of fixed-covolume lattices.
//! - [`kernel`]: radial interaction kernels, their L¹ data and assumption
//!   checks, and lattice periodization with rigorous tail bounds.
//! - [`density`]: discretized fundamental densities on a window of lattice
//!   copies, the capped-simplex projection and thresholding.
//! - [`energy`]: the self-interaction energy, the relaxed and set perimeters
//!   and the potential.
//! - [`optimizer`]: projected gradient ascent for the inner problem, with
//!   optimality diagnostics and an exhaustive ground-truth oracle.
//! - [`polygon2d`]: convex polygons, Steiner symmetrization and accurate
//!   nonlocal perimeters of tiles.
//! - [`search`]: outer search over 2D lattices of fixed covolume.

pub mod density;
pub mod energy;
pub mod error;
pub mod kernel;
pub mod lattice;
pub mod optimizer;
pub mod polygon2d;
mod quadrature;
pub mod search;

pub use error::{Error, Result};
