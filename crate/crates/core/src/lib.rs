//! Conversion of ReLU perceptrons into time-to-first-spike networks, their
//! layerwise fine-tuning, and a functional model of the YOSO accelerator
//! that executes them.
//!
//! The crate is organised bottom-up:
//!
//! - [`ttfs`]: spike-time vectors, input encoding, exact continuous-time and
//!   tick-based reference simulators, decoders;
//! - [`ann`]: dense ReLU networks, an SGD trainer and the MNIST reader;
//! - [`convert`]: normalization, pruning, quantization, SNN construction;
//! - [`finetune`]: the layerwise activation/rate coupling loop;
//! - [`sim`]: PE grid, x-y NoC, SRAM banks with RAW protection, the
//!   load/compute/store core and byte-accurate access counters.

pub mod ann;
pub mod convert;
mod error;
pub mod finetune;
mod io;
pub mod sim;
mod spike;
pub mod ttfs;

pub use error::{Error, Result};
pub use spike::{SpikeTickVector, SpikeTimeVector, SpikeTimes};
