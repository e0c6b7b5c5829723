//! Survey-weighted pseudo-posterior inference with a replicate-resampling
//! correction of credible-set scale and shape.
//!
//! The crate is `no_std` and only needs `alloc`. Everything here is a pure
//! function of its inputs plus an explicit random stream, so callers are free
//! to fan work out across threads (the `pseudopost` crate does this with
//! rayon) and still get bit-identical results.
//!
//! Module map:
//!
//! * [`model`]: weighted logistic pseudo-likelihood, score, Hessian, weight
//!   normalization.
//! * [`sampler`]: Hamiltonian and adaptive random-walk samplers for the
//!   pseudo-posterior, plus split R-hat / ESS diagnostics.
//! * [`adjust`]: PSU half-sampling replicates, sandwich estimates, the
//!   Cholesky projection of draws, and parameter/mean design effects.
//! * [`designs`]: the six simulation populations and sampling designs.
//! * [`eval`]: interval coverage, χ² quantiles, and the per-scenario
//!   simulation loop.
#![no_std]
#![warn(missing_debug_implementations)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod adjust;
pub mod designs;
mod error;
pub mod eval;
pub mod linalg;
pub(crate) mod math;
pub mod model;
pub mod rng;
pub mod sampler;

pub use error::{Error, ErrorKind, Result};
pub use linalg::Matrix;
