//! ANN to TTFS conversion: data-driven weight normalization, magnitude
//! pruning, symmetric per-layer quantization and network construction.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::ann::{record_max_activations, MlpParams};
use crate::error::{Error, Result};
use crate::ttfs::{EncodingConfig, LayerQuant, TtfsLayer, TtfsNetwork};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationReport {
    /// Maximum activation per layer before normalization.
    pub lambda: Vec<f64>,
    /// Factor applied to each layer's weights, `λ^{l-1} / λ^l`.
    pub weight_scale: Vec<f64>,
    /// Factor applied to each layer's biases, `1 / λ^l`.
    pub bias_scale: Vec<f64>,
    /// Maximum activation per layer after normalization (1 on the samples).
    pub post_max: Vec<f64>,
}

/// Rescales every layer so its largest activation over `samples` becomes 1.
///
/// With `λ^0 = 1`, layer `l` gets `W · λ^{l-1}/λ^l` and `b / λ^l`, which
/// divides every activation of layer `l` by `λ^l`. ReLU is positively
/// homogeneous, so the output argmax is unchanged.
pub fn normalize_weights(
    params: &MlpParams,
    samples: ArrayView2<f64>,
) -> Result<(MlpParams, NormalizationReport)> {
    let lambda = record_max_activations(params, samples)?;
    if let Some(dead) = lambda.iter().position(|&l| !(l > 0.0)) {
        return Err(Error::Conversion(format!(
            "layer {dead} never activates on the normalization samples"
        )));
    }
    let mut out = params.clone();
    let mut weight_scale = Vec::with_capacity(lambda.len());
    let mut bias_scale = Vec::with_capacity(lambda.len());
    let mut prev = 1.0;
    for (layer, &lam) in out.layers.iter_mut().zip(&lambda) {
        let ws = prev / lam;
        layer.weights.mapv_inplace(|w| w * ws);
        layer.biases.mapv_inplace(|b| b / lam);
        weight_scale.push(ws);
        bias_scale.push(1.0 / lam);
        prev = lam;
    }
    let post_max = record_max_activations(&out, samples)?;
    Ok((
        out,
        NormalizationReport {
            lambda,
            weight_scale,
            bias_scale,
            post_max,
        },
    ))
}

/// Zeroes the `floor((1-β)·count)` smallest-magnitude weights of each layer.
/// Biases are kept. Magnitude ties are broken by position, lowest first.
pub fn prune(params: &MlpParams, beta: f64) -> Result<MlpParams> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::Conversion(format!("keep fraction β must be in (0, 1], got {beta}")));
    }
    let mut out = params.clone();
    for layer in &mut out.layers {
        let count = layer.weights.len();
        let drop = ((1.0 - beta) * count as f64 + 1e-9).floor() as usize;
        if drop == 0 {
            continue;
        }
        let flat = layer.weights.as_slice_mut().expect("standard layout");
        let mut order: Vec<usize> = (0..count).collect();
        order.sort_by(|&a, &b| flat[a].abs().total_cmp(&flat[b].abs()).then(a.cmp(&b)));
        for &i in &order[..drop] {
            flat[i] = 0.0;
        }
    }
    Ok(out)
}

/// Rounding is to nearest with ties to even.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantSpec {
    pub bits: u8,
}

impl Default for QuantSpec {
    fn default() -> Self {
        Self { bits: 8 }
    }
}

impl QuantSpec {
    pub fn max_level(&self) -> i32 {
        (1 << (self.bits - 1)) - 1
    }

    /// `max|w| / (2^{bits-1} - 1)`, rounded to `f32` so that the value stored
    /// in network files is the one actually used.
    pub fn scale_for(&self, max_abs: f64) -> f64 {
        if max_abs > 0.0 {
            (max_abs / self.max_level() as f64) as f32 as f64
        } else {
            1.0
        }
    }
}

fn quantize_layer(weights: &ndarray::Array2<f64>, biases: &ndarray::Array1<f64>, spec: &QuantSpec) -> LayerQuant {
    let max_abs = weights.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    let scale = spec.scale_for(max_abs);
    let lim = spec.max_level() as f64;
    let weights = weights.mapv(|w| (w / scale).round_ties_even().clamp(-lim, lim) as i8);
    let biases = biases
        .iter()
        .map(|b| (b / scale).round_ties_even().clamp(i32::MIN as f64, i32::MAX as f64) as i32)
        .collect();
    LayerQuant {
        bits: spec.bits,
        scale,
        weights,
        biases,
    }
}

/// Quantizes every layer symmetrically; biases share the weight scale.
pub fn quantize(params: &MlpParams, spec: &QuantSpec, threshold: f64) -> Result<TtfsNetwork> {
    quantize_layers(params.layers.iter().map(|l| (&l.weights, &l.biases, threshold)), spec)
}

/// Quantizes an already converted float network, typically after
/// fine-tuning. A network that is already quantized is returned as is.
pub fn quantize_network(net: &TtfsNetwork, spec: &QuantSpec) -> Result<TtfsNetwork> {
    if net.is_quantized() {
        return Ok(net.clone());
    }
    quantize_layers(net.layers().iter().map(|l| (&l.weights, &l.biases, l.threshold)), spec)
}

fn quantize_layers<'a>(
    layers: impl Iterator<Item = (&'a ndarray::Array2<f64>, &'a ndarray::Array1<f64>, f64)>,
    spec: &QuantSpec,
) -> Result<TtfsNetwork> {
    if spec.bits < 2 || spec.bits > 8 {
        return Err(Error::Conversion(format!("unsupported weight width {} bits", spec.bits)));
    }
    let layers = layers
        .map(|(w, b, threshold)| {
            if w.iter().chain(b.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Conversion("non-finite weight".into()));
            }
            let q = quantize_layer(w, b, spec);
            Ok(TtfsLayer {
                weights: q.weights.mapv(|v| v as f64 * q.scale),
                biases: q.biases.iter().map(|&b| b as f64 * q.scale).collect(),
                threshold,
                quant: Some(q),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    TtfsNetwork::new(layers)
}

/// Builds the spiking network. With quantization and a tick rate, also checks
/// that every integer threshold fits the 16-bit potential.
pub fn build_snn(
    params: &MlpParams,
    threshold: f64,
    quant: Option<&QuantSpec>,
    ticks_per_unit: Option<f64>,
) -> Result<TtfsNetwork> {
    if params.layers.is_empty() {
        return Err(Error::Conversion("network has no layers".into()));
    }
    let net = match quant {
        Some(spec) => quantize(params, spec, threshold)?,
        None => TtfsNetwork::new(
            params
                .layers
                .iter()
                .map(|l| TtfsLayer {
                    weights: l.weights.clone(),
                    biases: l.biases.clone(),
                    threshold,
                    quant: None,
                })
                .collect(),
        )?,
    };
    if let (true, Some(tpu)) = (net.is_quantized(), ticks_per_unit) {
        for layer in net.layers() {
            layer.threshold_q(tpu)?;
        }
    }
    Ok(net)
}

/// The finest input tick rate at which every integer threshold of a
/// quantized network stays at or below `theta_limit`.
///
/// Starts from `base.t_in` and lowers it as needed; `t_total` is rescaled so
/// the window ends at the same continuous time.
pub fn fit_tick_rate(net: &TtfsNetwork, base: &EncodingConfig, theta_limit: i16) -> Result<EncodingConfig> {
    base.validate()?;
    if !net.is_quantized() {
        return Err(Error::Conversion("tick rate fitting needs a quantized network".into()));
    }
    let fits = |t_in: u32| -> bool {
        let tpu = (t_in - 1) as f64 / base.t_max;
        net.layers().iter().all(|l| l.threshold_q(tpu).is_ok_and(|q| q <= theta_limit))
    };
    let mut t_in = base.t_in;
    while t_in >= 2 && !fits(t_in) {
        t_in -= 1;
    }
    if t_in < 2 {
        return Err(Error::Conversion(format!(
            "no input tick rate keeps the integer thresholds within {theta_limit}"
        )));
    }
    let tpu = (t_in - 1) as f64 / base.t_max;
    let t_total = ((base.window_end() * tpu).round() as u32).max(t_in);
    Ok(EncodingConfig { t_max: base.t_max, t_in, t_total })
}
