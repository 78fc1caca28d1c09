//! Numerical laboratory for the propagation of Gibbsianness under
//! interacting lattice diffusions with bounded, space-time local drifts.
//!
//! The pipeline: simulate finite-volume dynamics ([`dynamics`]), estimate
//! the finite-volume transition density by Girsanov reweighting of free
//! bridges ([`girsanov`]), expand it over space-time clusters
//! ([`clusters`], [`expansion`]) and probe the Gibbs properties of the
//! resulting two-time measure ([`gibbs`]).

pub mod clusters;
pub mod dynamics;
pub mod error;
pub mod expansion;
pub mod gibbs;
pub mod girsanov;
pub mod lattice;
pub mod mc;
pub mod rng;

pub use error::{Error, Result};
pub use mc::{Estimate, McParams};
