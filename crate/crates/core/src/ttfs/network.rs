use std::io::{Read, Write};

use ndarray::{Array1, Array2};

use super::discrete::{BiasMode, DiscreteLayer, DiscreteNetwork};
use crate::error::{Error, Result};
use crate::io::{read_f32, read_magic, read_u32, write_f32, write_u32};

const MAGIC: &[u8; 4] = b"TTFS";
const VERSION: u32 = 1;
const FLAG_QUANTIZED: u32 = 1;

/// Integer view of a layer after weight quantization.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerQuant {
    pub bits: u8,
    /// Real value of one integer step; weights are `scale * q`.
    pub scale: f64,
    pub weights: Array2<i8>,
    /// Biases in the same integer domain as the weights.
    pub biases: Vec<i32>,
}

/// One dense TTFS layer. `weights` is `[fan_in × fan_out]`.
///
/// When `quant` is present, `weights`/`biases` hold the dequantized values so
/// the float simulators see exactly what the hardware sees.
#[derive(Debug, Clone, PartialEq)]
pub struct TtfsLayer {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
    pub threshold: f64,
    pub quant: Option<LayerQuant>,
}

impl TtfsLayer {
    pub fn fan_in(&self) -> usize {
        self.weights.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.ncols()
    }

    /// Integer firing threshold for a tick-based run at `ticks_per_unit`.
    ///
    /// Per tick the potential grows by the slope, so in integer units the
    /// threshold is `θ · ticks_per_unit / scale`, rounded up.
    pub fn threshold_q(&self, ticks_per_unit: f64) -> Result<i16> {
        let q = self
            .quant
            .as_ref()
            .ok_or_else(|| Error::Conversion("layer is not quantized".into()))?;
        let exact = self.threshold * ticks_per_unit / q.scale;
        // The scale went through f32; absorb that rounding before taking the ceiling.
        let theta = (exact * (1.0 - 1e-6)).ceil();
        if theta > i16::MAX as f64 {
            return Err(Error::Conversion(format!(
                "integer threshold {theta} does not fit a 16-bit potential; \
                 use a wider potential width or fewer ticks per unit time"
            )));
        }
        Ok((theta as i16).max(1))
    }
}

/// A converted feedforward spiking network.
#[derive(Debug, Clone, PartialEq)]
pub struct TtfsNetwork {
    layers: Vec<TtfsLayer>,
}

impl TtfsNetwork {
    pub fn new(layers: Vec<TtfsLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Conversion("network has no layers".into()));
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.biases.len() != layer.fan_out() {
                return Err(Error::Dimension(format!(
                    "layer {l}: {} biases for {} neurons",
                    layer.biases.len(),
                    layer.fan_out()
                )));
            }
            if !(layer.threshold > 0.0) {
                return Err(Error::Conversion(format!("layer {l}: threshold must be positive")));
            }
            if l > 0 && layers[l - 1].fan_out() != layer.fan_in() {
                return Err(Error::Dimension(format!(
                    "layer {l} expects {} inputs but layer {} has {} neurons",
                    layer.fan_in(),
                    l - 1,
                    layers[l - 1].fan_out()
                )));
            }
            if let Some(q) = &layer.quant {
                if q.bits == 0 || q.bits > 8 {
                    return Err(Error::Conversion(format!("layer {l}: {} quantization bits", q.bits)));
                }
                let lim = (1i32 << (q.bits - 1)) - 1;
                if q.weights.iter().any(|&w| (w as i32).abs() > lim) {
                    return Err(Error::Conversion(format!(
                        "layer {l}: integer weight outside {}-bit range",
                        q.bits
                    )));
                }
            }
        }
        let quantized = layers[0].quant.is_some();
        if layers.iter().any(|l| l.quant.is_some() != quantized) {
            return Err(Error::Conversion("mixed quantized and float layers".into()));
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[TtfsLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [TtfsLayer] {
        &mut self.layers
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().map_or(0, TtfsLayer::fan_out)
    }

    pub fn is_quantized(&self) -> bool {
        self.layers[0].quant.is_some()
    }

    /// Float tick-based view: the threshold is rescaled by the tick rate so
    /// that a slope `A` integrated once per tick matches continuous time.
    pub fn to_discrete_float(&self, ticks_per_unit: f64, bias_mode: BiasMode) -> DiscreteNetwork<f64> {
        let layers = self
            .layers
            .iter()
            .map(|l| DiscreteLayer {
                fan_in: l.fan_in(),
                fan_out: l.fan_out(),
                weights: l.weights.iter().copied().collect(),
                biases: l.biases.to_vec(),
                threshold: l.threshold * ticks_per_unit,
            })
            .collect();
        DiscreteNetwork { layers, bias_mode }
    }

    /// 16-bit fixed-point view used by the accelerator and its reference.
    pub fn to_fixed(&self, ticks_per_unit: f64, bias_mode: BiasMode) -> Result<DiscreteNetwork<i16>> {
        let layers = self
            .layers
            .iter()
            .enumerate()
            .map(|(idx, l)| {
                let q = l
                    .quant
                    .as_ref()
                    .ok_or_else(|| Error::Conversion(format!("layer {idx} is not quantized")))?;
                let biases = q
                    .biases
                    .iter()
                    .map(|&b| {
                        i16::try_from(b).map_err(|_| {
                            Error::Conversion(format!("layer {idx}: bias {b} exceeds 16 bits"))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(DiscreteLayer {
                    fan_in: l.fan_in(),
                    fan_out: l.fan_out(),
                    weights: q.weights.iter().map(|&w| w as i16).collect(),
                    biases,
                    threshold: l.threshold_q(ticks_per_unit)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DiscreteNetwork { layers, bias_mode })
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        write_u32(w, VERSION)?;
        write_u32(w, self.layers.len() as u32)?;
        let bits = self.layers[0].quant.as_ref().map_or(0, |q| q.bits as u32);
        let flags = if self.is_quantized() { FLAG_QUANTIZED | (bits << 8) } else { 0 };
        write_u32(w, flags)?;
        for l in &self.layers {
            write_u32(w, l.fan_in() as u32)?;
            write_u32(w, l.fan_out() as u32)?;
            write_f32(w, l.threshold as f32)?;
            match &l.quant {
                Some(q) => {
                    write_f32(w, q.scale as f32)?;
                    let bytes: Vec<u8> = q.weights.iter().map(|&v| v as u8).collect();
                    w.write_all(&bytes)?;
                    for &b in &q.biases {
                        w.write_all(&b.to_le_bytes())?;
                    }
                }
                None => {
                    for &v in l.weights.iter() {
                        write_f32(w, v as f32)?;
                    }
                    for &v in l.biases.iter() {
                        write_f32(w, v as f32)?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        read_magic(r, MAGIC)?;
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported TTFS version {version}")));
        }
        let count = read_u32(r)? as usize;
        let flags = read_u32(r)?;
        let quantized = flags & FLAG_QUANTIZED != 0;
        let bits = ((flags >> 8) & 0xff) as u8;
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let rows = read_u32(r)? as usize;
            let cols = read_u32(r)? as usize;
            let threshold = read_f32(r)? as f64;
            if quantized {
                let scale = read_f32(r)? as f64;
                let mut raw = vec![0u8; rows * cols];
                r.read_exact(&mut raw)?;
                let qw: Vec<i8> = raw.into_iter().map(|b| b as i8).collect();
                let mut qb = Vec::with_capacity(cols);
                for _ in 0..cols {
                    let mut buf = [0u8; 4];
                    r.read_exact(&mut buf)?;
                    qb.push(i32::from_le_bytes(buf));
                }
                let weights_q = Array2::from_shape_vec((rows, cols), qw)
                    .map_err(|e| Error::Format(e.to_string()))?;
                layers.push(TtfsLayer {
                    weights: weights_q.mapv(|q| q as f64 * scale),
                    biases: qb.iter().map(|&b| b as f64 * scale).collect(),
                    threshold,
                    quant: Some(LayerQuant {
                        bits,
                        scale,
                        weights: weights_q,
                        biases: qb,
                    }),
                });
            } else {
                let mut data = Vec::with_capacity(rows * cols);
                for _ in 0..rows * cols {
                    data.push(read_f32(r)? as f64);
                }
                let mut biases = Vec::with_capacity(cols);
                for _ in 0..cols {
                    biases.push(read_f32(r)? as f64);
                }
                layers.push(TtfsLayer {
                    weights: Array2::from_shape_vec((rows, cols), data)
                        .map_err(|e| Error::Format(e.to_string()))?,
                    biases: Array1::from(biases),
                    threshold,
                    quant: None,
                });
            }
        }
        Self::new(layers).map_err(|e| Error::Format(format!("invalid network: {e}")))
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
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn quant_layer() -> TtfsLayer {
        let q = array![[-127i8, 64], [3, 0]];
        let scale = (1.0f64 / 127.0) as f32 as f64;
        TtfsLayer {
            weights: q.mapv(|v| v as f64 * scale),
            biases: array![5.0 * scale, -2.0 * scale],
            threshold: 1.0,
            quant: Some(LayerQuant {
                bits: 8,
                scale,
                weights: q,
                biases: vec![5, -2],
            }),
        }
    }

    #[test]
    fn chaining_is_checked() {
        let a = TtfsLayer {
            weights: Array2::zeros((3, 2)),
            biases: Array1::zeros(2),
            threshold: 1.0,
            quant: None,
        };
        let b = TtfsLayer {
            weights: Array2::zeros((3, 1)),
            biases: Array1::zeros(1),
            threshold: 1.0,
            quant: None,
        };
        assert!(matches!(TtfsNetwork::new(vec![a, b]), Err(Error::Dimension(_))));
        assert!(TtfsNetwork::new(vec![]).is_err());
    }

    #[test]
    fn quantized_file_roundtrip() {
        let net = TtfsNetwork::new(vec![quant_layer()]).unwrap();
        let mut buf = Vec::new();
        net.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"TTFS");
        let back = TtfsNetwork::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn bad_magic_is_a_format_error() {
        let mut buf = b"MLPW".to_vec();
        buf.extend_from_slice(&[0; 12]);
        assert!(matches!(TtfsNetwork::read_from(&mut buf.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn integer_threshold_per_tick_rate() {
        let layer = quant_layer();
        assert_eq!(layer.threshold_q(1.0).unwrap(), 127);
        assert_eq!(layer.threshold_q(10.0).unwrap(), 1270);
        assert!(layer.threshold_q(1000.0).is_err());
    }
}
