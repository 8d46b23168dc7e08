//! Shot-level simulation and statistics for parallel measurement of individual
//! nitrogen-vacancy (NV) centers.
//!
//! The crate is `no_std` with `alloc`. Every random draw goes through an
//! explicit RNG handle, and every stochastic entry point takes a master seed
//! from which independent sub-streams are derived (see [`rng`]).
//!
//! # Modules
//!
//! - [`statmodels`]: skew-normal count models for single-shot charge readout,
//!   histogram/likelihood fitting, optimal threshold selection.
//! - [`physics`]: microwave crosstalk formulas, ESR and spin echo line shapes,
//!   projection-noise correlation formulas, the SCC crosstalk spatial model.
//! - [`simulator`]: the Monte Carlo engine (charge/spin sequences, serialized
//!   SCC with crosstalk, camera readout, conditional initialization, frame
//!   rendering).
//! - [`analysis`]: image integration, thresholding, spin-signal normalization,
//!   correlation matrices, the conditional-initialization closed form.
//! - [`planning`]: time-to-unit-SNR and scalability calculators.
//!
//! Counts are continuous reals (approximate photon numbers after ADU
//! conversion), not integers.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod analysis;
pub mod error;
pub mod optim;
pub mod physics;
pub mod planning;
pub mod rng;
pub mod simulator;
pub mod special;
pub mod statmodels;

pub use error::{Error, Result};
