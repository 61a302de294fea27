//! Placement of a fixed-point network onto the PE grid, and the program
//! image (register files and bank contents) that realizes it.

use std::io::{Read, Write};
use std::path::Path;

use super::packet::{Coord, Payload};
use super::pe::{pack_neuron, reg, Registers};
use super::sram::BankId;
use super::HwConfig;
use crate::error::{Error, Result};
use crate::io::{read_bytes, read_magic, read_u32, read_u8, write_u32};
use crate::ttfs::DiscreteNetwork;

/// PEs needed for an `m × n` fully connected layer: at least
/// `max(ceil(n/N), ceil(m·n/W))`, raised until the per-PE slice fits both
/// the neuron and the weight budget.
pub fn pes_for_layer(m: usize, n: usize, hw: &HwConfig) -> Result<usize> {
    let w = hw.weight_bytes;
    let cap = hw.max_neurons();
    if m > w {
        return Err(Error::Mapping(format!("fan-in {m} exceeds the {w}-byte weight bank even for one neuron")));
    }
    let mut c = n.div_ceil(cap).max((m * n).div_ceil(w)).max(1);
    while n.div_ceil(c) > cap || n.div_ceil(c) * m > w {
        c += 1;
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PePlacement {
    pub coord: Coord,
    pub layer: usize,
    pub first_neuron: usize,
    pub regs: Registers,
    pub softmax_range: (u8, u8),
}

impl PePlacement {
    pub fn neurons(&self) -> std::ops::Range<usize> {
        self.first_neuron..self.first_neuron + self.regs.neurons as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerPlacement {
    pub fan_in: usize,
    pub fan_out: usize,
    /// Indices into `Placement::pes`, in forwarding-chain order.
    pub pes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Placement {
    pub grid_w: u8,
    pub grid_h: u8,
    pub layers: Vec<LayerPlacement>,
    pub pes: Vec<PePlacement>,
}

impl Placement {
    pub fn input_len(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn pe_counts(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.pes.len()).collect()
    }

    /// Chain head of layer `l`, where upstream spikes are sent.
    pub fn head(&self, l: usize) -> Coord {
        self.pes[self.layers[l].pes[0]].coord
    }
}

/// Grid position of the `i`-th allocated PE: row-major.
pub fn pe_coord(i: usize, grid_w: u8) -> Coord {
    Coord::new((i % grid_w as usize) as u8, (i / grid_w as usize) as u8)
}

/// Splits every layer over its PEs (even split, earlier PEs take the
/// remainder), chains each layer's PEs for forwarding and points every PE's
/// output at the next layer's chain head, or at the host for the last layer.
pub fn map_network(net: &DiscreteNetwork<i16>, hw: &HwConfig, softmax_output: bool) -> Result<Placement> {
    if net.layers.is_empty() {
        return Err(Error::Mapping("network has no layers".into()));
    }
    let counts = net
        .layers
        .iter()
        .map(|l| pes_for_layer(l.fan_in, l.fan_out, hw))
        .collect::<Result<Vec<_>>>()?;
    let total: usize = counts.iter().sum();
    let grid = hw.grid_w as usize * hw.grid_h as usize;
    if total > grid {
        let breakdown: Vec<String> = counts.iter().enumerate().map(|(l, c)| format!("layer {l}: {c}")).collect();
        return Err(Error::Mapping(format!(
            "needs {total} PEs ({}) but the {}x{} grid has {grid}",
            breakdown.join(", "),
            hw.grid_w,
            hw.grid_h
        )));
    }
    if softmax_output && *counts.last().unwrap() != 1 {
        return Err(Error::Mapping("softmax output needs the final layer on a single PE".into()));
    }
    let mut pes = Vec::with_capacity(total);
    let mut layers = Vec::with_capacity(counts.len());
    let last = net.layers.len() - 1;
    for (l, (layer, &c)) in net.layers.iter().zip(&counts).enumerate() {
        let base = layer.fan_out / c;
        let extra = layer.fan_out % c;
        let mut first = 0;
        let mut ids = Vec::with_capacity(c);
        for q in 0..c {
            let size = base + (q < extra) as usize;
            let idx = pes.len();
            ids.push(idx);
            pes.push(PePlacement {
                coord: pe_coord(idx, hw.grid_w),
                layer: l,
                first_neuron: first,
                regs: Registers {
                    p: size as u16,
                    m: 1,
                    neurons: size as u16,
                    theta: layer.threshold,
                    out_dest: None,
                    fwd_dest: None,
                    softmax: softmax_output && l == last,
                    expected_eots: if l == 0 { 1 } else { counts[l - 1] as u8 },
                },
                softmax_range: if softmax_output && l == last { (0, size.saturating_sub(1) as u8) } else { (0, 0) },
            });
            first += size;
        }
        layers.push(LayerPlacement {
            fan_in: layer.fan_in,
            fan_out: layer.fan_out,
            pes: ids,
        });
    }
    let mut placement = Placement {
        grid_w: hw.grid_w,
        grid_h: hw.grid_h,
        layers,
        pes,
    };
    for l in 0..placement.layers.len() {
        let dest = if l == last { Coord::HOST } else { placement.head(l + 1) };
        let ids = placement.layers[l].pes.clone();
        for (q, &i) in ids.iter().enumerate() {
            placement.pes[i].regs.out_dest = Some(dest);
            placement.pes[i].regs.fwd_dest = ids.get(q + 1).map(|&n| placement.pes[n].coord);
        }
    }
    Ok(placement)
}

/// Placement plus the byte image of every PE's banks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProgramImage {
    pub placement: Placement,
    /// Per PE, indexed by `BankId`.
    pub banks: Vec<[Vec<u8>; 4]>,
}

const MAGIC: &[u8; 4] = b"YOSO";
const VERSION: u32 = 1;

impl ProgramImage {
    /// Lays out weights `[source][local neuron]` with stride `M = 1`, seeds
    /// the accumulated and potential entries from the bias mode, and fills
    /// the spike-address table with each neuron's outgoing payload.
    pub fn build(net: &DiscreteNetwork<i16>, placement: Placement, hw: &HwConfig) -> Result<Self> {
        let mut banks = Vec::with_capacity(placement.pes.len());
        for pe in &placement.pes {
            let layer = &net.layers[pe.layer];
            let mut img = BankId::ALL.map(|id| vec![0u8; hw.geometry(id).bytes]);
            let p = pe.regs.p as usize;
            let states = layer.initial_states(net.bias_mode);
            for (k, n) in pe.neurons().enumerate() {
                for j in 0..layer.fan_in {
                    let w = layer.weights[j * layer.fan_out + n];
                    let w8 = i8::try_from(w).map_err(|_| {
                        Error::Mapping(format!("layer {}: weight {w} does not fit 8 bits", pe.layer))
                    })?;
                    img[BankId::Weight as usize][j * p + k] = w8 as u8;
                }
                let acc = &mut img[BankId::Acc as usize];
                acc[k * 4..k * 4 + 2].copy_from_slice(&states[n].slope.to_le_bytes());
                let nb = &mut img[BankId::Neuron as usize];
                nb[k * 4..k * 4 + 4].copy_from_slice(&pack_neuron(states[n].potential, false).to_le_bytes());
                let sa = &mut img[BankId::SpikeAddr as usize];
                sa[k * 8..k * 8 + 4].copy_from_slice(&Payload::data_spike(n).encode().to_le_bytes());
            }
            banks.push(img);
        }
        Ok(Self { placement, banks })
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let pl = &self.placement;
        w.write_all(MAGIC)?;
        write_u32(w, VERSION)?;
        w.write_all(&[pl.grid_w, pl.grid_h])?;
        write_u32(w, pl.layers.len() as u32)?;
        for l in &pl.layers {
            write_u32(w, l.fan_in as u32)?;
            write_u32(w, l.fan_out as u32)?;
            write_u32(w, l.pes.len() as u32)?;
            for &i in &l.pes {
                write_u32(w, i as u32)?;
            }
        }
        write_u32(w, pl.pes.len() as u32)?;
        for (pe, banks) in pl.pes.iter().zip(&self.banks) {
            w.write_all(&[pe.coord.x, pe.coord.y])?;
            write_u32(w, pe.layer as u32)?;
            write_u32(w, pe.first_neuron as u32)?;
            w.write_all(&pe.regs.to_bytes())?;
            w.write_all(&[pe.softmax_range.0, pe.softmax_range.1])?;
            for b in banks {
                write_u32(w, b.len() as u32)?;
                w.write_all(b)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        read_magic(r, MAGIC)?;
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported placement version {version}")));
        }
        let grid_w = read_u8(r)?;
        let grid_h = read_u8(r)?;
        let n_layers = read_u32(r)? as usize;
        let mut layers = Vec::with_capacity(n_layers.min(64));
        for _ in 0..n_layers {
            let fan_in = read_u32(r)? as usize;
            let fan_out = read_u32(r)? as usize;
            let n = read_u32(r)? as usize;
            let pes = (0..n).map(|_| read_u32(r).map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
            layers.push(LayerPlacement { fan_in, fan_out, pes });
        }
        let n_pes = read_u32(r)? as usize;
        if n_pes > 256 {
            return Err(Error::Format(format!("{n_pes} PEs cannot be addressed on a 4-bit grid")));
        }
        let mut pes = Vec::with_capacity(n_pes);
        let mut banks = Vec::with_capacity(n_pes);
        for _ in 0..n_pes {
            let x = read_u8(r)?;
            let y = read_u8(r)?;
            let layer = read_u32(r)? as usize;
            let first_neuron = read_u32(r)? as usize;
            let raw: [u8; reg::SIZE] = read_bytes(r, reg::SIZE)?.try_into().unwrap();
            let lo = read_u8(r)?;
            let hi = read_u8(r)?;
            let mut img: [Vec<u8>; 4] = Default::default();
            for b in &mut img {
                let len = read_u32(r)? as usize;
                if len > 1 << 20 {
                    return Err(Error::Format(format!("bank image of {len} bytes is implausible")));
                }
                *b = read_bytes(r, len)?;
            }
            pes.push(PePlacement {
                coord: Coord { x, y },
                layer,
                first_neuron,
                regs: Registers::from_bytes(&raw),
                softmax_range: (lo, hi),
            });
            banks.push(img);
        }
        for l in &layers {
            if l.pes.iter().any(|&i| i >= pes.len()) || l.pes.is_empty() {
                return Err(Error::Format("layer refers to a missing PE".into()));
            }
        }
        if layers.is_empty() {
            return Err(Error::Format("placement has no layers".into()));
        }
        Ok(Self {
            placement: Placement { grid_w, grid_h, layers, pes },
            banks,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ttfs::{BiasMode, DiscreteLayer};

    fn dense(m: usize, n: usize) -> DiscreteLayer<i16> {
        DiscreteLayer {
            fan_in: m,
            fan_out: n,
            weights: (0..m * n).map(|i| (i % 7) as i16 - 3).collect(),
            biases: (0..n).map(|i| i as i16).collect(),
            threshold: 127,
        }
    }

    #[test]
    fn mnist_layer_counts() {
        let hw = HwConfig::default();
        assert_eq!(pes_for_layer(784, 300, &hw).unwrap(), 6);
        assert_eq!(pes_for_layer(300, 300, &hw).unwrap(), 3);
        assert_eq!(pes_for_layer(300, 10, &hw).unwrap(), 1);
    }

    #[test]
    fn slice_must_fit_weights() {
        let hw = HwConfig::default();
        assert_eq!(pes_for_layer(410, 100, &hw).unwrap(), 2);
        // ceil(78000/40960) = 2, but a 7-neuron slice needs 42000 weight bytes.
        assert_eq!(pes_for_layer(6000, 13, &hw).unwrap(), 3);
        assert!(pes_for_layer(50000, 1, &hw).is_err());
    }

    #[test]
    fn mnist_placement_chains_and_destinations() {
        let hw = HwConfig::default();
        let net = DiscreteNetwork {
            layers: vec![dense(784, 300), dense(300, 300), dense(300, 10)],
            bias_mode: BiasMode::Slope,
        };
        let p = map_network(&net, &hw, true).unwrap();
        assert_eq!(p.pe_counts(), vec![6, 3, 1]);
        assert!(p.pes.iter().all(|pe| pe.coord.x < 6 && pe.coord.y < 7));
        let l0: Vec<_> = p.layers[0].pes.iter().map(|&i| &p.pes[i]).collect();
        assert!(l0.iter().all(|pe| pe.regs.neurons == 50));
        assert_eq!(l0[0].regs.fwd_dest, Some(l0[1].coord));
        assert_eq!(l0[5].regs.fwd_dest, None);
        assert!(l0.iter().all(|pe| pe.regs.out_dest == Some(p.head(1))));
        let l1 = &p.pes[p.layers[1].pes[0]];
        assert_eq!(l1.regs.expected_eots, 6);
        let out = &p.pes[p.layers[2].pes[0]];
        assert_eq!(out.regs.out_dest, Some(Coord::HOST));
        assert!(out.regs.softmax);
        assert_eq!(out.softmax_range, (0, 9));
    }

    #[test]
    fn too_small_grid_reports_breakdown() {
        let hw = HwConfig { grid_w: 2, grid_h: 2, ..HwConfig::default() };
        let net = DiscreteNetwork { layers: vec![dense(784, 300)], bias_mode: BiasMode::Slope };
        let e = map_network(&net, &hw, false).unwrap_err().to_string();
        assert!(e.contains("layer 0: 6"), "{e}");
    }

    #[test]
    fn uneven_split_and_image_roundtrip() {
        let hw = HwConfig::default();
        let net = DiscreteNetwork { layers: vec![dense(3, 600)], bias_mode: BiasMode::Slope };
        let p = map_network(&net, &hw, false).unwrap();
        let sizes: Vec<u16> = p.pes.iter().map(|pe| pe.regs.neurons).collect();
        assert_eq!(sizes, vec![200, 200, 200]);
        let img = ProgramImage::build(&net, p, &hw).unwrap();
        let pe = &img.placement.pes[1];
        // neuron 205 is local 5 of PE 1; weight row 2
        assert_eq!(img.banks[1][BankId::Weight as usize][2 * 200 + 5] as i8 as i16, net.layers[0].weights[2 * 600 + 205]);
        assert_eq!(pe.first_neuron, 200);
        let mut buf = Vec::new();
        img.write_to(&mut buf).unwrap();
        assert_eq!(ProgramImage::read_from(&mut buf.as_slice()).unwrap(), img);
        buf[0] = b'X';
        assert!(ProgramImage::read_from(&mut buf.as_slice()).is_err());
    }
}
