//! Simulation core for federated training of spiking and dense MLPs.
//!
//! Everything in this crate is deterministic given a master seed: model
//! initialization, client data shards, batch order, attack noise, and the
//! round pipeline itself. The crate is `no_std`-compatible (with `alloc`);
//! file formats, CSV output and the CLI live in the companion `spikefed-cli`
//! crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod attacks;
pub mod compress;
pub mod data;
pub mod error;
pub mod fl;
pub mod math;
pub mod nn;
pub mod rng;

pub use error::{Error, Result};
