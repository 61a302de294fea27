//! Reference simulators for feedforward TTFS networks.
//!
//! Two simulators live here: an exact event-driven solver in continuous
//! time, and a tick-based one that mirrors what the accelerator computes
//! (accumulate slopes on spike arrival, integrate on end-of-timestep). They
//! share the network description, the input encoder and the decoders.

mod continuous;
mod decode;
mod discrete;
mod encoding;
mod network;
mod trace;

pub use continuous::{
    layer_forward_continuous, network_forward_continuous, ContinuousRun, LayerOutput,
};
pub use decode::{decode_first_spike, decode_softmax_membrane, instantaneous_rates, DEFAULT_RATE_CAP};
pub use discrete::{
    layer_step_discrete, network_forward_discrete, BiasMode, DiscreteLayer, DiscreteNetwork,
    DiscreteRun, Potential,
};
pub use encoding::{itl_encode_continuous, itl_encode_discrete, EncodingConfig};
pub use network::{LayerQuant, TtfsLayer, TtfsNetwork};
pub use trace::{write_tick_trace, write_time_trace};

use serde::{Deserialize, Serialize};

/// Membrane state of one neuron.
///
/// `slope` is the accumulated weight sum: the per-unit-time (or per-tick)
/// increment of `potential`. Once every causal input has arrived it equals
/// the sum of causal weights plus bias.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NeuronState<T> {
    pub potential: T,
    pub slope: T,
    pub spiked: bool,
}
