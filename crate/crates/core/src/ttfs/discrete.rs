use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use super::NeuronState;
use crate::error::{Error, Result};
use crate::spike::SpikeTickVector;

/// Numeric domain of the tick-based simulator.
pub trait Potential: Copy + PartialOrd + Default + Debug + Send + Sync {
    /// Sum of `self + rhs`, and whether it had to be clamped.
    fn accumulate(self, rhs: Self) -> (Self, bool);
}

impl Potential for f64 {
    fn accumulate(self, rhs: Self) -> (Self, bool) {
        (self + rhs, false)
    }
}

impl Potential for i16 {
    fn accumulate(self, rhs: Self) -> (Self, bool) {
        match self.checked_add(rhs) {
            Some(v) => (v, false),
            None => (self.saturating_add(rhs), true),
        }
    }
}

/// Where the bias enters the neuron state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BiasMode {
    /// Bias seeds the accumulated weight (the slope), so it is integrated
    /// every tick like a constant input current.
    #[default]
    Slope,
    /// Bias seeds the membrane potential once.
    InitialPotential,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteLayer<T> {
    pub fan_in: usize,
    pub fan_out: usize,
    /// Row-major `[fan_in × fan_out]`.
    pub weights: Vec<T>,
    pub biases: Vec<T>,
    pub threshold: T,
}

impl<T: Potential> DiscreteLayer<T> {
    pub fn row(&self, src: usize) -> &[T] {
        &self.weights[src * self.fan_out..(src + 1) * self.fan_out]
    }

    pub fn initial_states(&self, mode: BiasMode) -> Vec<NeuronState<T>> {
        self.biases
            .iter()
            .map(|&b| match mode {
                BiasMode::Slope => NeuronState {
                    potential: T::default(),
                    slope: b,
                    spiked: false,
                },
                BiasMode::InitialPotential => NeuronState {
                    potential: b,
                    slope: T::default(),
                    spiked: false,
                },
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteNetwork<T> {
    pub layers: Vec<DiscreteLayer<T>>,
    pub bias_mode: BiasMode,
}

impl<T: Potential> DiscreteNetwork<T> {
    pub fn input_len(&self) -> usize {
        self.layers[0].fan_in
    }
}

/// Advances one layer by one tick.
///
/// Arrivals are applied first (each adds its weight row to the slopes), then
/// the end-of-timestep integration adds each slope to its potential and
/// fires neurons that reached the threshold for the first time. Returns the
/// indices fired this tick, ascending, and the number of clamped additions.
pub fn layer_step_discrete<T: Potential>(
    states: &mut [NeuronState<T>],
    arrivals: &[usize],
    layer: &DiscreteLayer<T>,
) -> (Vec<usize>, u64) {
    let mut clamps = 0u64;
    for &src in arrivals {
        for (s, &w) in states.iter_mut().zip(layer.row(src)) {
            let (v, c) = s.slope.accumulate(w);
            s.slope = v;
            clamps += c as u64;
        }
    }
    let mut fired = Vec::new();
    for (i, s) in states.iter_mut().enumerate() {
        let (v, c) = s.potential.accumulate(s.slope);
        s.potential = v;
        clamps += c as u64;
        if !s.spiked && s.potential >= layer.threshold {
            s.spiked = true;
            fired.push(i);
        }
    }
    (fired, clamps)
}

#[derive(Debug, Clone)]
pub struct DiscreteRun<T> {
    pub layer_spikes: Vec<SpikeTickVector>,
    pub final_states: Vec<Vec<NeuronState<T>>>,
    /// Ticks actually simulated (fewer than requested on early stop).
    pub ticks: u32,
    /// Additions that hit the numeric range; always 0 for floats.
    pub clamps: u64,
}

impl<T: Potential> DiscreteRun<T> {
    pub fn output_times(&self) -> &SpikeTickVector {
        self.layer_spikes.last().expect("at least one layer")
    }

    pub fn output_potentials(&self) -> Vec<T> {
        self.final_states
            .last()
            .expect("at least one layer")
            .iter()
            .map(|s| s.potential)
            .collect()
    }
}

/// Runs `t_total` ticks. Within a tick every layer finishes its
/// end-of-timestep step before the next layer consumes it, so a spike
/// emitted at tick `t` is integrated downstream during the same tick.
pub fn network_forward_discrete<T: Potential>(
    net: &DiscreteNetwork<T>,
    input: &SpikeTickVector,
    t_total: u32,
    early_stop: bool,
) -> Result<DiscreteRun<T>> {
    if input.len() != net.input_len() {
        return Err(Error::Dimension(format!(
            "network expects {} inputs, got {}",
            net.input_len(),
            input.len()
        )));
    }
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); t_total as usize];
    for (i, t) in input.spikes() {
        if t < t_total {
            buckets[t as usize].push(i);
        }
    }
    let mut states: Vec<Vec<NeuronState<T>>> =
        net.layers.iter().map(|l| l.initial_states(net.bias_mode)).collect();
    let mut spikes: Vec<SpikeTickVector> =
        net.layers.iter().map(|l| SpikeTickVector::silent(l.fan_out)).collect();
    let mut clamps = 0u64;
    let mut ticks = 0;
    let last = net.layers.len() - 1;
    for tick in 0..t_total {
        ticks = tick + 1;
        let mut arrivals = std::mem::take(&mut buckets[tick as usize]);
        let mut output_fired = false;
        for (l, layer) in net.layers.iter().enumerate() {
            let (fired, c) = layer_step_discrete(&mut states[l], &arrivals, layer);
            clamps += c;
            for &i in &fired {
                spikes[l].record(i, tick);
            }
            output_fired = l == last && !fired.is_empty();
            arrivals = fired;
        }
        if early_stop && output_fired {
            break;
        }
    }
    Ok(DiscreteRun {
        layer_spikes: spikes,
        final_states: states,
        ticks,
        clamps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(w: f64, theta: f64) -> DiscreteLayer<f64> {
        DiscreteLayer {
            fan_in: 1,
            fan_out: 1,
            weights: vec![w],
            biases: vec![0.0],
            threshold: theta,
        }
    }

    #[test]
    fn threshold_crossing_emits() {
        let layer = single(0.0, 1.0);
        let mut st = vec![NeuronState { potential: 0.8, slope: 0.3, spiked: false }];
        let (fired, _) = layer_step_discrete(&mut st, &[], &layer);
        assert_eq!(fired, vec![0]);
        assert!((st[0].potential - 1.1).abs() < 1e-12);
        assert!(st[0].spiked);
    }

    #[test]
    fn spiked_neuron_keeps_integrating_but_stays_quiet() {
        let layer = single(0.0, 1.0);
        let mut st = vec![NeuronState { potential: 1.5, slope: 0.3, spiked: true }];
        let (fired, _) = layer_step_discrete(&mut st, &[], &layer);
        assert!(fired.is_empty());
        assert!((st[0].potential - 1.8).abs() < 1e-12);
    }

    #[test]
    fn single_input_within_one_tick_of_continuous() {
        // w = 2, θ = 1, ten ticks per unit time: continuous answer 0.5.
        let net = DiscreteNetwork {
            layers: vec![single(2.0, 1.0 * 10.0)],
            bias_mode: BiasMode::Slope,
        };
        let input = SpikeTickVector::from_vec(vec![Some(0)]);
        let run = network_forward_discrete(&net, &input, 50, false).unwrap();
        let tick = run.output_times().get(0).unwrap();
        // The arrival is integrated in its own tick, so V after tick k is 2(k+1).
        assert_eq!(tick, 4);
        assert!((tick as f64 / 10.0 - 0.5).abs() <= 0.1 + 1e-12);
    }

    #[test]
    fn saturation_is_counted_not_wrapped() {
        let layer = DiscreteLayer {
            fan_in: 1,
            fan_out: 1,
            weights: vec![100i16],
            biases: vec![0],
            threshold: i16::MAX,
        };
        let mut st = vec![NeuronState { potential: 32760i16, slope: 32700, spiked: false }];
        let (fired, clamps) = layer_step_discrete(&mut st, &[0], &layer);
        assert_eq!(st[0].slope, i16::MAX);
        assert_eq!(st[0].potential, i16::MAX);
        assert_eq!(clamps, 2);
        assert_eq!(fired, vec![0]);
    }

    #[test]
    fn early_stop_halts_after_first_output_spike() {
        let net = DiscreteNetwork {
            layers: vec![single(2.0, 10.0)],
            bias_mode: BiasMode::Slope,
        };
        let input = SpikeTickVector::from_vec(vec![Some(0)]);
        let run = network_forward_discrete(&net, &input, 50, true).unwrap();
        assert_eq!(run.ticks, 5);
    }

    #[test]
    fn bias_modes_differ() {
        let layer = DiscreteLayer {
            fan_in: 1,
            fan_out: 1,
            weights: vec![0.0],
            biases: vec![0.5],
            threshold: 1.0,
        };
        let slope = DiscreteNetwork { layers: vec![layer.clone()], bias_mode: BiasMode::Slope };
        let init = DiscreteNetwork { layers: vec![layer], bias_mode: BiasMode::InitialPotential };
        let input = SpikeTickVector::silent(1);
        assert_eq!(network_forward_discrete(&slope, &input, 10, false).unwrap().output_times().get(0), Some(1));
        assert_eq!(network_forward_discrete(&init, &input, 10, false).unwrap().output_times().get(0), None);
    }
}
