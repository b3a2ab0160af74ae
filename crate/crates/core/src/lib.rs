//! Monte Carlo laboratory for Brownian flights near fractal boundaries.
//!
//! A walker starts at distance ε from a boundary of Minkowski dimension `d`
//! in `R^{d_e}` and runs until it comes back. The displacement `X` of such a
//! flight has a power-law tail `P(X > r) ~ r^(d_e - d - 2)`. This crate
//! generates the boundaries (Koch prefractals, pivot self-avoiding walks,
//! analytic references), measures their box-counting dimension and Whitney
//! cube counts, runs lattice and walk-on-spheres flight campaigns, and fits
//! the resulting tails against the predicted exponents.

pub mod dimension;
pub mod error;
pub mod flights;
pub mod fractalgen;
pub mod geometry;
pub mod rng;
pub mod stats;
pub mod whitney;

pub use error::{Error, Result};
pub use geometry::{Boundary, DistanceIndex, Point, SideLabel};
