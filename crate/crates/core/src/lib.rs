//! Measurement, transaction actualization and decoherence for a two-level
//! emitter coupled to a pointer.
//!
//! - [`qcore`]: state vectors, density operators, partial trace, validity checks
//! - [`coupling`]: entangling couplings, decoherence function, relative states
//! - [`transact`]: Born-weighted transaction sets, actualization, epistemic mixtures
//! - [`dynamics`]: repeated measurement events, exponential decay, recoherence
//! - [`screen`]: two-slit screen distributions, fringe visibility, hit sampling
//! - [`cli`]: scenario configs, result tables and the command runners

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod coupling;
pub mod dynamics;
pub mod error;
pub mod qcore;
pub mod rng;
pub mod screen;
pub mod stats;
pub mod transact;

pub use error::{Error, Result};
