//! A self-contained laboratory for learning visual representations by
//! temporal straightening.
//!
//! The crate renders temporally-coherent synthetic image sequences
//! ([`datagen`]), trains a small convolutional network ([`netcore`],
//! [`trainer`]) under a straightening-plus-whitening objective or an
//! invariance baseline ([`objectives`]), and evaluates the frozen
//! representations with decoding probes ([`probes`]) and geometry /
//! robustness analyses ([`analysis`]).
//!
//! Everything is deterministic: all randomness flows from a single `u64`
//! seed through the stream-derivation scheme in [`rng`].

pub mod analysis;
pub mod cli;
pub mod config;
pub mod datagen;
pub mod error;
pub mod netcore;
pub mod objectives;
pub mod probes;
pub mod report;
pub mod rng;
pub mod run;
pub mod tensor;
pub mod trainer;
pub mod util;

pub use error::{Error, Result};
