//! Layerwise fine-tuning of a converted network.
//!
//! Every layer of the SNN is coupled to the same layer of the (normalized)
//! ANN: the loss `½ Σ (a_i − r_i)²` compares ReLU activations with
//! instantaneous rates `r_i = 1/t_i`, and the SNN weights of that layer move
//! down its gradient. Spike times are differentiated in closed form with the
//! causal set held fixed:
//!
//! `t_i = (θ + Σ_{j∈Γ} w_ij t_j) / μ_i`, so `∂t_i/∂w_ij = (t_j − t_i) / μ_i`
//! and `∂t_i/∂b_i = −t_i / μ_i`.

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::ann::{ann_forward, MlpParams};
use crate::convert::{normalize_weights, prune, NormalizationReport};
use crate::error::{Error, Result};
use crate::ttfs::{
    instantaneous_rates, itl_encode_continuous, network_forward_continuous, EncodingConfig, LayerOutput,
    TtfsLayer, TtfsNetwork, DEFAULT_RATE_CAP,
};

/// Below this slope a spike time is treated as non-differentiable.
pub const MIN_SLOPE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FinetuneConfig {
    /// Number of training images sampled for coupling (and normalization).
    pub samples: usize,
    /// Fraction of weights kept per layer.
    pub beta: f64,
    pub learning_rate: f64,
    /// Stop once the mean layer loss of an iteration drops below this.
    pub epsilon: f64,
    pub iterations: usize,
    pub rate_cap: f64,
    /// Multiply each update by the layer's current loss as well.
    pub alg1_literal: bool,
    /// Continuous window end used for the SNN forward passes.
    pub horizon: Option<f64>,
    /// Layers excluded from updates.
    pub skip_layers: Vec<usize>,
    /// Clamp every per-sample gradient entry to `[-c, c]` before the update.
    pub grad_clip: Option<f64>,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            samples: 100,
            beta: 0.99,
            learning_rate: 10.0,
            epsilon: 0.001,
            iterations: 100,
            rate_cap: DEFAULT_RATE_CAP,
            alg1_literal: false,
            horizon: None,
            skip_layers: Vec::new(),
            grad_clip: None,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        let clip_ok = self.grad_clip.map_or(true, |c| c > 0.0);
        if !(self.learning_rate > 0.0) || !(self.epsilon > 0.0) || !(self.beta > 0.0 && self.beta <= 1.0) || !clip_ok {
            return Err(Error::Conversion(
                "fine-tuning needs η > 0, ε > 0, 0 < β ≤ 1 and a positive clip".into(),
            ));
        }
        Ok(())
    }
}

/// `½ Σ (a_i − r_i)²`.
pub fn layer_loss(activations: &[f64], rates: &[f64]) -> f64 {
    assert_eq!(activations.len(), rates.len(), "loss over vectors of different length");
    0.5 * activations
        .iter()
        .zip(rates)
        .map(|(a, r)| (a - r) * (a - r))
        .sum::<f64>()
}

/// `∂t_i/∂w_ij` for the realized causal set; zero when `j` was not causal,
/// when `i` never fired, or when the slope is too small to differentiate.
pub fn spike_time_grad(out: &LayerOutput, neuron: usize, synapse: usize) -> f64 {
    let Some(t_i) = out.times.get(neuron) else { return 0.0 };
    let mu = out.mu[neuron];
    if mu.abs() < MIN_SLOPE {
        return 0.0;
    }
    match out.causal_events(neuron).iter().find(|e| e.0 == synapse) {
        Some(&(_, t_j)) => (t_j - t_i) / mu,
        None => 0.0,
    }
}

/// `∂t_i/∂b_i`.
pub fn spike_time_bias_grad(out: &LayerOutput, neuron: usize) -> f64 {
    match out.times.get(neuron) {
        Some(t_i) if out.mu[neuron].abs() >= MIN_SLOPE => -t_i / out.mu[neuron],
        _ => 0.0,
    }
}

/// Visits `(j, i, ∂L/∂w_ij)` for every causal synapse and `(i, ∂L/∂b_i)` for
/// every differentiable neuron.
fn for_each_gradient(
    out: &LayerOutput,
    activations: &[f64],
    rates: &[f64],
    mut weight: impl FnMut(usize, usize, f64),
    mut bias: impl FnMut(usize, f64),
) {
    for i in 0..out.times.len() {
        let Some(t_i) = out.times.get(i) else { continue };
        let mu = out.mu[i];
        if mu.abs() < MIN_SLOPE || t_i <= 0.0 {
            continue;
        }
        // ∂L/∂t_i = (a − r) / t², chained through ∂t/∂w = (t_j − t_i) / μ.
        let g = (activations[i] - rates[i]) / (t_i * t_i * mu);
        for &(j, t_j) in out.causal_events(i) {
            weight(j, i, g * (t_j - t_i));
        }
        bias(i, -g * t_i);
    }
}

/// Gradients of the layer loss with respect to the layer weights and biases.
pub fn layer_gradients(
    out: &LayerOutput,
    fan_in: usize,
    activations: &[f64],
    rates: &[f64],
) -> (Array2<f64>, Array1<f64>) {
    let n = out.times.len();
    let mut gw = Array2::<f64>::zeros((fan_in, n));
    let mut gb = Array1::<f64>::zeros(n);
    for_each_gradient(out, activations, rates, |j, i, g| gw[[j, i]] += g, |i, g| gb[i] += g);
    (gw, gb)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub iteration: usize,
    pub layer: usize,
    pub mean_l2: f64,
    pub samples: usize,
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    pub network: TtfsNetwork,
    pub log: Vec<LogRow>,
    pub iterations_run: usize,
    /// Mean per-layer loss of the last iteration, per layer.
    pub final_layer_loss: Vec<f64>,
}

impl FinetuneOutcome {
    pub fn write_log<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "iteration,layer,mean_l2,samples")?;
        for r in &self.log {
            writeln!(w, "{},{},{:.9e},{}", r.iteration, r.layer, r.mean_l2, r.samples)?;
        }
        Ok(())
    }
}

/// Per-layer mean loss of `snn` against `ann` over the images, no updates.
pub fn evaluate_layer_loss(
    ann: &MlpParams,
    snn: &TtfsNetwork,
    images: ArrayView2<f64>,
    enc: &EncodingConfig,
    cfg: &FinetuneConfig,
) -> Result<Vec<f64>> {
    let layers = snn.layers().len();
    let mut total = vec![0.0; layers];
    for x in images.outer_iter() {
        let rec = ann_forward(ann, x)?;
        let input = itl_encode_continuous(x.as_slice().expect("contiguous rows"), enc)?;
        let run = network_forward_continuous(snn, &input, cfg.horizon)?;
        for (q, out) in run.layers.iter().enumerate() {
            let rates = instantaneous_rates(&out.times, cfg.rate_cap);
            total[q] += layer_loss(rec.activations[q].as_slice().unwrap(), &rates);
        }
    }
    let n = images.nrows().max(1) as f64;
    Ok(total.into_iter().map(|t| t / n).collect())
}

/// The prune-then-normalize preamble of the fine-tuning procedure.
pub fn prepare_ann(
    ann: &MlpParams,
    normalization_samples: ArrayView2<f64>,
    beta: f64,
) -> Result<(MlpParams, NormalizationReport)> {
    let pruned = prune(ann, beta)?;
    normalize_weights(&pruned, normalization_samples)
}

/// Runs the coupling loop: while `k < K` and the loss exceeds `ε`, every
/// sample updates every non-skipped layer, front to back, using one ANN and
/// one SNN forward pass computed before that sample's updates.
///
/// `ann` must be the pruned and normalized network the SNN was built from.
pub fn train_network(
    ann: &MlpParams,
    snn: &TtfsNetwork,
    images: ArrayView2<f64>,
    enc: &EncodingConfig,
    cfg: &FinetuneConfig,
) -> Result<FinetuneOutcome> {
    cfg.validate()?;
    if snn.is_quantized() {
        return Err(Error::Conversion("fine-tuning runs on the float network; quantize afterwards".into()));
    }
    if ann.architecture().0 != {
        let mut a = vec![snn.input_len()];
        a.extend(snn.layers().iter().map(|l| l.fan_out()));
        a
    } {
        return Err(Error::Dimension("ANN and SNN architectures differ".into()));
    }
    let mut net = snn.clone();
    let layers = net.layers().len();
    let mut log = Vec::new();
    let mut error = f64::INFINITY;
    let mut final_layer_loss = vec![0.0; layers];
    let mut k = 0;
    let n = images.nrows();
    while k < cfg.iterations && error > cfg.epsilon {
        let mut sums = vec![0.0f64; layers];
        for x in images.outer_iter() {
            let rec = ann_forward(ann, x)?;
            let input = itl_encode_continuous(x.as_slice().expect("contiguous rows"), enc)?;
            let run = network_forward_continuous(&net, &input, cfg.horizon)?;
            for (q, out) in run.layers.iter().enumerate() {
                let a = rec.activations[q].as_slice().unwrap();
                let rates = instantaneous_rates(&out.times, cfg.rate_cap);
                let err = layer_loss(a, &rates);
                if !err.is_finite() {
                    return Err(Error::Divergence(format!("non-finite loss in layer {q} at iteration {k}")));
                }
                sums[q] += err;
                if cfg.skip_layers.contains(&q) {
                    continue;
                }
                let layer = &mut net.layers_mut()[q];
                let step = if cfg.alg1_literal { cfg.learning_rate * err } else { cfg.learning_rate };
                let clip = |g: f64| match cfg.grad_clip {
                    Some(c) => g.clamp(-c, c),
                    None => g,
                };
                let TtfsLayer { weights, biases, .. } = layer;
                for_each_gradient(
                    out,
                    a,
                    &rates,
                    |j, i, g| weights[[j, i]] -= step * clip(g),
                    |i, g| biases[i] -= step * clip(g),
                );
                if layer.weights.iter().any(|w| !w.is_finite()) || layer.biases.iter().any(|b| !b.is_finite()) {
                    return Err(Error::Divergence(format!("non-finite weight in layer {q} at iteration {k}")));
                }
            }
        }
        for (q, s) in sums.iter().enumerate() {
            final_layer_loss[q] = s / n.max(1) as f64;
            log.push(LogRow {
                iteration: k,
                layer: q,
                mean_l2: final_layer_loss[q],
                samples: n,
            });
        }
        error = final_layer_loss.iter().sum::<f64>() / layers as f64;
        k += 1;
    }
    Ok(FinetuneOutcome {
        network: net,
        log,
        iterations_run: k,
        final_layer_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spike::SpikeTimeVector;
    use crate::ttfs::layer_forward_continuous;
    use ndarray::array;

    #[test]
    fn loss_values() {
        assert_eq!(layer_loss(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(layer_loss(&[2.0], &[1.0]), 0.5);
        assert_eq!(layer_loss(&[1.0, 3.0], &[0.0, 1.0]), 2.5);
    }

    fn two_input_layer(w2: f64) -> TtfsLayer {
        TtfsLayer {
            weights: array![[0.5], [w2]],
            biases: array![0.0],
            threshold: 1.0,
            quant: None,
        }
    }

    #[test]
    fn causal_weight_gradient_matches_finite_difference() {
        let input = SpikeTimeVector::from_vec(vec![Some(0.0), Some(0.2)]);
        let out = layer_forward_continuous(&input, &two_input_layer(1.0), None).unwrap();
        let g = spike_time_grad(&out, 0, 1);
        assert!((g - (-0.4)).abs() < 1e-12);
        let h = 1e-5;
        let tp = layer_forward_continuous(&input, &two_input_layer(1.0 + h), None).unwrap().times.get(0).unwrap();
        let tm = layer_forward_continuous(&input, &two_input_layer(1.0 - h), None).unwrap().times.get(0).unwrap();
        assert!(((tp - tm) / (2.0 * h) - g).abs() < 1e-4);
    }

    #[test]
    fn non_causal_and_silent_neurons_have_zero_gradient() {
        let l = TtfsLayer {
            weights: array![[2.0, -1.0], [5.0, 1.0]],
            biases: array![0.0, 0.0],
            threshold: 1.0,
            quant: None,
        };
        // Neuron 0 fires at 0.5, before input 1 arrives at 0.9.
        let input = SpikeTimeVector::from_vec(vec![Some(0.0), Some(0.9)]);
        let out = layer_forward_continuous(&input, &l, Some(1.0)).unwrap();
        assert!((out.times.get(0).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(spike_time_grad(&out, 0, 1), 0.0);
        assert_eq!(out.times.get(1), None);
        assert_eq!(spike_time_grad(&out, 1, 0), 0.0);
        assert_eq!(spike_time_bias_grad(&out, 1), 0.0);
    }

    #[test]
    fn zero_iterations_is_identity() {
        let ann = MlpParams::new(vec![crate::ann::DenseLayer { weights: array![[1.0]], biases: array![0.0] }]).unwrap();
        let snn = crate::convert::build_snn(&ann, 1.0, None, None).unwrap();
        let cfg = FinetuneConfig { iterations: 0, ..FinetuneConfig::default() };
        let out = train_network(&ann, &snn, array![[0.5]].view(), &EncodingConfig::default(), &cfg).unwrap();
        assert_eq!(out.network, snn);
        assert_eq!(out.iterations_run, 0);
    }

    #[test]
    fn quantized_network_is_rejected() {
        let ann = MlpParams::new(vec![crate::ann::DenseLayer { weights: array![[1.0]], biases: array![0.0] }]).unwrap();
        let snn = crate::convert::build_snn(&ann, 1.0, Some(&Default::default()), None).unwrap();
        let r = train_network(&ann, &snn, array![[0.5]].view(), &EncodingConfig::default(), &FinetuneConfig::default());
        assert!(r.is_err());
    }
}
