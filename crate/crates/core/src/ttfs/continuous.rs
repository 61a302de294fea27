use super::network::{TtfsLayer, TtfsNetwork};
use super::NeuronState;
use crate::error::{Error, Result};
use crate::spike::SpikeTimeVector;

/// Result of the exact continuous-time solve of one layer.
#[derive(Debug, Clone)]
pub struct LayerOutput {
    pub times: SpikeTimeVector,
    /// Membrane state at the end of the window (at the last input arrival if
    /// no horizon was given).
    pub states: Vec<NeuronState<f64>>,
    /// Input spikes sorted by time, ties by index.
    pub events: Vec<(usize, f64)>,
    /// For each neuron, the number of leading entries of `events` that arrived
    /// before it fired: its realized causal set. Zero for silent neurons.
    pub causal_len: Vec<usize>,
    /// Slope at the moment of firing, i.e. causal weight sum plus bias.
    pub mu: Vec<f64>,
}

impl LayerOutput {
    pub fn causal_events(&self, neuron: usize) -> &[(usize, f64)] {
        &self.events[..self.causal_len[neuron]]
    }
}

/// Solves one layer exactly.
///
/// The potential is piecewise linear: it starts at 0 with slope `b_i`, and
/// each arriving spike adds `w_ij` to the slope. Between two arrivals the
/// crossing time of `θ` has a closed form, so each neuron's first crossing is
/// found segment by segment. Spikes later than `horizon` are not emitted.
pub fn layer_forward_continuous(
    input: &SpikeTimeVector,
    layer: &TtfsLayer,
    horizon: Option<f64>,
) -> Result<LayerOutput> {
    if input.len() != layer.fan_in() {
        return Err(Error::Dimension(format!(
            "layer expects {} inputs, got {}",
            layer.fan_in(),
            input.len()
        )));
    }
    let n = layer.fan_out();
    let theta = layer.threshold;
    let end = horizon.unwrap_or(f64::INFINITY);
    let events = input.sorted_events();

    let mut v = vec![0.0f64; n];
    let mut a: Vec<f64> = layer.biases.to_vec();
    let mut out = SpikeTimeVector::silent(n);
    let mut causal_len = vec![0usize; n];
    let mut mu = vec![0.0f64; n];
    let mut pending = n;

    let mut t_prev = 0.0f64;
    let mut k = 0usize;
    loop {
        let arrival = events.get(k).filter(|e| e.1 < end);
        let t_next = arrival.map_or(end, |e| e.1);

        if pending > 0 {
            for i in 0..n {
                if out.get(i).is_none() && a[i] > 0.0 && v[i] < theta {
                    let cand = t_prev + (theta - v[i]) / a[i];
                    if cand <= t_next && cand.is_finite() {
                        out.record(i, cand);
                        causal_len[i] = k;
                        mu[i] = a[i];
                        pending -= 1;
                    }
                }
            }
        }

        if t_next.is_finite() {
            let dt = t_next - t_prev;
            for (vi, ai) in v.iter_mut().zip(&a) {
                *vi += ai * dt;
            }
        }

        let Some(&(src, t)) = arrival else { break };
        for (ai, w) in a.iter_mut().zip(layer.weights.row(src)) {
            *ai += w;
        }
        t_prev = t;
        k += 1;
    }

    let states = (0..n)
        .map(|i| NeuronState {
            potential: v[i],
            slope: a[i],
            spiked: out.get(i).is_some(),
        })
        .collect();
    Ok(LayerOutput {
        times: out,
        states,
        events,
        causal_len,
        mu,
    })
}

/// Outputs of every layer of a continuous-time inference.
#[derive(Debug, Clone)]
pub struct ContinuousRun {
    pub layers: Vec<LayerOutput>,
}

impl ContinuousRun {
    pub fn output(&self) -> &LayerOutput {
        self.layers.last().expect("network has at least one layer")
    }

    pub fn output_times(&self) -> &SpikeTimeVector {
        &self.output().times
    }

    pub fn output_potentials(&self) -> Vec<f64> {
        self.output().states.iter().map(|s| s.potential).collect()
    }

    pub fn layer_times(&self) -> Vec<&SpikeTimeVector> {
        self.layers.iter().map(|l| &l.times).collect()
    }
}

/// Propagates the input through the layers in order.
pub fn network_forward_continuous(
    net: &TtfsNetwork,
    input: &SpikeTimeVector,
    horizon: Option<f64>,
) -> Result<ContinuousRun> {
    let mut layers: Vec<LayerOutput> = Vec::with_capacity(net.layers().len());
    for layer in net.layers() {
        let src = layers.last().map_or(input, |l| &l.times);
        let out = layer_forward_continuous(src, layer, horizon)?;
        layers.push(out);
    }
    Ok(ContinuousRun { layers })
}
