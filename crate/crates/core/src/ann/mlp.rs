use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::io::{read_f32, read_magic, read_u32, write_f32, write_u32};

const MAGIC: &[u8; 4] = b"MLPW";
const VERSION: u32 = 1;

/// Layer widths from input to output, e.g. `784-300-300-10`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture(pub Vec<usize>);

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let widths = s
            .split('-')
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .ok()
                    .filter(|&w| w > 0)
                    .ok_or_else(|| Error::Dimension(format!("bad layer width {p:?} in {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if widths.len() < 2 {
            return Err(Error::Dimension(format!("architecture {s:?} needs at least two widths")));
        }
        Ok(Self(widths))
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(usize::to_string).collect();
        f.write_str(&parts.join("-"))
    }
}

/// `weights` is `[fan_in × fan_out]`; the layer computes `x · W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

impl DenseLayer {
    pub fn fan_in(&self) -> usize {
        self.weights.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<DenseLayer>,
}

impl MlpParams {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Dimension("network has no layers".into()));
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.biases.len() != layer.fan_out() {
                return Err(Error::Dimension(format!("layer {l}: bias length mismatch")));
            }
            if l > 0 && layers[l - 1].fan_out() != layer.fan_in() {
                return Err(Error::Dimension(format!("layer {l}: input width does not chain")));
            }
            if layer.weights.iter().chain(layer.biases.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Dimension(format!("layer {l}: non-finite parameter")));
            }
        }
        Ok(Self { layers })
    }

    pub fn architecture(&self) -> Architecture {
        let mut w = vec![self.layers[0].fan_in()];
        w.extend(self.layers.iter().map(DenseLayer::fan_out));
        Architecture(w)
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        write_u32(w, VERSION)?;
        write_u32(w, self.layers.len() as u32)?;
        for l in &self.layers {
            write_u32(w, l.fan_in() as u32)?;
            write_u32(w, l.fan_out() as u32)?;
            for &v in l.weights.iter() {
                write_f32(w, v as f32)?;
            }
            for &v in l.biases.iter() {
                write_f32(w, v as f32)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        read_magic(r, MAGIC)?;
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported MLPW version {version}")));
        }
        let count = read_u32(r)? as usize;
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let rows = read_u32(r)? as usize;
            let cols = read_u32(r)? as usize;
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                data.push(read_f32(r)? as f64);
            }
            let mut b = Vec::with_capacity(cols);
            for _ in 0..cols {
                b.push(read_f32(r)? as f64);
            }
            layers.push(DenseLayer {
                weights: Array2::from_shape_vec((rows, cols), data)
                    .map_err(|e| Error::Format(e.to_string()))?,
                biases: Array1::from(b),
            });
        }
        Self::new(layers).map_err(|e| Error::Format(format!("invalid parameters: {e}")))
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut f)
    }

    /// Rounds every parameter to `f32`, the precision of the file format.
    pub fn round_to_f32(&mut self) {
        for l in &mut self.layers {
            l.weights.mapv_inplace(|v| v as f32 as f64);
            l.biases.mapv_inplace(|v| v as f32 as f64);
        }
    }
}

/// Post-ReLU activations of every layer, plus the raw output logits.
///
/// The last activation vector is `ReLU(logits)`, the view that is coupled to
/// non-negative spike rates.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationRecord {
    pub activations: Vec<Array1<f64>>,
    pub logits: Array1<f64>,
}

pub fn ann_forward(params: &MlpParams, x: ArrayView1<f64>) -> Result<ActivationRecord> {
    if x.len() != params.input_len() {
        return Err(Error::Dimension(format!(
            "input has {} values, network expects {}",
            x.len(),
            params.input_len()
        )));
    }
    let mut activations = Vec::with_capacity(params.layers.len());
    let mut logits = Array1::zeros(0);
    let mut cur = x.to_owned();
    for (l, layer) in params.layers.iter().enumerate() {
        let z = cur.dot(&layer.weights) + &layer.biases;
        if l + 1 == params.layers.len() {
            logits = z.clone();
        }
        cur = z.mapv(|v| v.max(0.0));
        activations.push(cur.clone());
    }
    Ok(ActivationRecord { activations, logits })
}

/// Batched forward pass; returns per-layer pre-activations `z` and the
/// post-ReLU activations (the last entry of which is ReLU of the logits).
pub fn forward_batch(params: &MlpParams, x: ArrayView2<f64>) -> (Vec<Array2<f64>>, Vec<Array2<f64>>) {
    let mut zs = Vec::with_capacity(params.layers.len());
    let mut acts = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let input = acts.last().map_or(x, |a: &Array2<f64>| a.view());
        let z = input.dot(&layer.weights) + &layer.biases;
        acts.push(z.mapv(|v| v.max(0.0)));
        zs.push(z);
    }
    (zs, acts)
}

/// Per-layer maximum post-ReLU activation over a sample set.
pub fn record_max_activations(params: &MlpParams, samples: ArrayView2<f64>) -> Result<Vec<f64>> {
    if samples.nrows() == 0 {
        return Err(Error::Dimension("empty sample set".into()));
    }
    if samples.ncols() != params.input_len() {
        return Err(Error::Dimension("sample width does not match the network input".into()));
    }
    let mut lambda = vec![0.0f64; params.layers.len()];
    for chunk in samples.axis_chunks_iter(Axis(0), 512) {
        let (_, acts) = forward_batch(params, chunk);
        for (l, a) in acts.iter().enumerate() {
            lambda[l] = a.iter().fold(lambda[l], |m, &v| m.max(v));
        }
    }
    Ok(lambda)
}

pub fn argmax(v: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn net(w: Array2<f64>, b: Array1<f64>) -> MlpParams {
        MlpParams::new(vec![DenseLayer { weights: w, biases: b }]).unwrap()
    }

    #[test]
    fn relu_clamps_negatives() {
        let p = net(Array2::eye(2), array![0.0, 0.0]);
        let rec = ann_forward(&p, array![1.0, -1.0].view()).unwrap();
        assert_eq!(rec.activations[0], array![1.0, 0.0]);
        assert_eq!(rec.logits, array![1.0, -1.0]);
    }

    #[test]
    fn bias_only() {
        let p = net(Array2::zeros((2, 1)), array![3.0]);
        let rec = ann_forward(&p, array![0.7, -4.0].view()).unwrap();
        assert_eq!(rec.activations[0], array![3.0]);
    }

    #[test]
    fn zero_input_zero_bias() {
        let p = MlpParams::new(vec![
            DenseLayer { weights: array![[1.0, -2.0]], biases: array![0.0, 0.0] },
            DenseLayer { weights: array![[0.5], [1.0]], biases: array![0.0] },
        ])
        .unwrap();
        let rec = ann_forward(&p, array![0.0].view()).unwrap();
        assert!(rec.activations.iter().all(|a| a.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn max_activation_records() {
        let p = net(Array2::eye(2), array![0.0, 0.0]);
        assert_eq!(record_max_activations(&p, array![[0.2, 4.0]].view()).unwrap(), vec![4.0]);
        assert_eq!(record_max_activations(&p, array![[3.0, 0.0], [0.0, 5.0]].view()).unwrap(), vec![5.0]);
        assert_eq!(record_max_activations(&p, array![[-1.0, -2.0]].view()).unwrap(), vec![0.0]);
        assert!(record_max_activations(&p, Array2::zeros((0, 2)).view()).is_err());
    }

    #[test]
    fn architecture_parsing() {
        let a: Architecture = "784-300-300-10".parse().unwrap();
        assert_eq!(a.0, vec![784, 300, 300, 10]);
        assert_eq!(a.to_string(), "784-300-300-10");
        assert!("784".parse::<Architecture>().is_err());
        assert!("784-x".parse::<Architecture>().is_err());
    }

    #[test]
    fn params_file_roundtrip() {
        let mut p = net(array![[0.25, -1.5], [3.0, 0.125]], array![0.5, -0.75]);
        p.round_to_f32();
        let mut buf = Vec::new();
        p.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"MLPW");
        assert_eq!(buf.len(), 12 + 8 + 4 * 6);
        assert_eq!(MlpParams::read_from(&mut buf.as_slice()).unwrap(), p);
    }
}
