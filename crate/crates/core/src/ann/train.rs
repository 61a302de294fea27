use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{forward_batch, Architecture, DenseLayer, MlpParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.1,
            epochs: 20,
            batch: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_loss: Vec<f64>,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Xavier-uniform weights, zero biases.
pub fn init_params(arch: &Architecture, rng: &mut impl Rng) -> MlpParams {
    let layers = arch
        .0
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            DenseLayer {
                weights: Array2::from_shape_simple_fn((fan_in, fan_out), || rng.gen_range(-limit..limit)),
                biases: Array1::zeros(fan_out),
            }
        })
        .collect();
    MlpParams { layers }
}

/// Mean softmax cross-entropy over the batch and its exact gradient.
pub fn loss_and_gradients(params: &MlpParams, x: ArrayView2<f64>, labels: &[u8]) -> (f64, Gradients) {
    let n = x.nrows() as f64;
    let (zs, acts) = forward_batch(params, x);
    let logits = zs.last().unwrap();
    let mut delta = Array2::<f64>::zeros(logits.raw_dim());
    let mut loss = 0.0;
    for (r, (row, &label)) in logits.outer_iter().zip(labels).enumerate() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let sum: f64 = row.iter().map(|&v| (v - m).exp()).sum();
        loss += m + sum.ln() - row[label as usize];
        for (c, &v) in row.iter().enumerate() {
            delta[[r, c]] = (v - m).exp() / sum / n;
        }
        delta[[r, label as usize]] -= 1.0 / n;
    }
    let layers = params.layers.len();
    let mut gw = vec![Array2::zeros((0, 0)); layers];
    let mut gb = vec![Array1::zeros(0); layers];
    for l in (0..layers).rev() {
        let input = if l == 0 { x } else { acts[l - 1].view() };
        gw[l] = input.t().dot(&delta);
        gb[l] = delta.sum_axis(Axis(0));
        if l > 0 {
            let mut back = delta.dot(&params.layers[l].weights.t());
            back.zip_mut_with(&zs[l - 1], |d, &z| {
                if z <= 0.0 {
                    *d = 0.0;
                }
            });
            delta = back;
        }
    }
    (loss / n, Gradients { weights: gw, biases: gb })
}

pub fn accuracy(params: &MlpParams, images: ArrayView2<f64>, labels: &[u8]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let mut correct = 0usize;
    let mut offset = 0;
    for chunk in images.axis_chunks_iter(Axis(0), 1000) {
        let (zs, _) = forward_batch(params, chunk);
        for (row, &label) in zs.last().unwrap().outer_iter().zip(&labels[offset..]) {
            if super::argmax(row) == label as usize {
                correct += 1;
            }
        }
        offset += chunk.nrows();
    }
    correct as f64 / labels.len() as f64
}

/// Plain minibatch SGD on softmax cross-entropy, deterministic in `cfg.seed`.
pub fn ann_train_sgd(
    images: ArrayView2<f64>,
    labels: &[u8],
    arch: &Architecture,
    cfg: &TrainConfig,
) -> Result<(MlpParams, TrainReport)> {
    if images.nrows() != labels.len() || images.nrows() == 0 {
        return Err(Error::Dimension("images and labels must be non-empty and equal in number".into()));
    }
    if images.ncols() != arch.0[0] {
        return Err(Error::Dimension(format!(
            "images have {} pixels, architecture expects {}",
            images.ncols(),
            arch.0[0]
        )));
    }
    let classes = *arch.0.last().unwrap();
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= classes) {
        return Err(Error::Dimension(format!("label {bad} out of range for {classes} outputs")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = init_params(arch, &mut rng);
    let mut order: Vec<usize> = (0..labels.len()).collect();
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    let batch = cfg.batch.max(1);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for idx in order.chunks(batch) {
            let x = images.select(Axis(0), idx);
            let y: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
            let (loss, grads) = loss_and_gradients(&params, x.view(), &y);
            if !loss.is_finite() {
                return Err(Error::Divergence(format!(
                    "non-finite loss in epoch {epoch} batch {batches}"
                )));
            }
            for (layer, (gw, gb)) in params.layers.iter_mut().zip(grads.weights.iter().zip(&grads.biases)) {
                layer.weights.scaled_add(-cfg.lr, gw);
                layer.biases.scaled_add(-cfg.lr, gb);
            }
            total += loss;
            batches += 1;
        }
        epoch_loss.push(total / batches as f64);
    }
    let train_accuracy = accuracy(&params, images, labels);
    Ok((params, TrainReport { epoch_loss, train_accuracy }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_epochs_returns_initialization() {
        let arch: Architecture = "2-3-2".parse().unwrap();
        let x = array![[0.0, 1.0], [1.0, 0.0]];
        let cfg = TrainConfig { epochs: 0, seed: 7, ..TrainConfig::default() };
        let (p, rep) = ann_train_sgd(x.view(), &[0, 1], &arch, &cfg).unwrap();
        let init = init_params(&arch, &mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(p, init);
        assert!(rep.epoch_loss.is_empty());
    }

    #[test]
    fn separable_toy_set_is_learned() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 200;
        let mut x = Array2::zeros((n, 2));
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let class = (i % 2) as u8;
            let cx = if class == 0 { -1.0 } else { 1.0 };
            x[[i, 0]] = cx + rng.gen_range(-0.5..0.5);
            x[[i, 1]] = rng.gen_range(-1.0..1.0);
            y.push(class);
        }
        let arch: Architecture = "2-8-2".parse().unwrap();
        let cfg = TrainConfig { lr: 0.1, epochs: 50, batch: 10, seed: 3 };
        let (_, rep) = ann_train_sgd(x.view(), &y, &arch, &cfg).unwrap();
        assert_eq!(rep.train_accuracy, 1.0);
    }

    #[test]
    fn training_is_deterministic() {
        let x = array![[0.1, 0.9], [0.8, 0.2], [0.4, 0.5]];
        let arch: Architecture = "2-4-2".parse().unwrap();
        let cfg = TrainConfig { epochs: 3, batch: 2, ..TrainConfig::default() };
        let a = ann_train_sgd(x.view(), &[0, 1, 0], &arch, &cfg).unwrap();
        let b = ann_train_sgd(x.view(), &[0, 1, 0], &arch, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn divergence_is_reported() {
        let x = array![[f64::NAN, 0.5]];
        let arch: Architecture = "2-2".parse().unwrap();
        let cfg = TrainConfig { lr: 0.1, epochs: 1, batch: 1, seed: 0 };
        assert!(matches!(ann_train_sgd(x.view(), &[1], &arch, &cfg), Err(Error::Divergence(_))));
    }
}
