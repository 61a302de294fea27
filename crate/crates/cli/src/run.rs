//! Inference over the test set on one of the three backends.

use std::io::Write;
use std::path::Path;

use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};
use yoso_core::sim::{AccessCounters, CounterReport, System};
use yoso_core::ttfs::{
    decode_first_spike, decode_softmax_membrane, itl_encode_continuous, itl_encode_discrete,
    network_forward_continuous, network_forward_discrete, write_tick_trace, write_time_trace, EncodingConfig,
};
use yoso_core::{SpikeTickVector, SpikeTimeVector, SpikeTimes};

use crate::artifacts::{self as art, Artifacts};
use crate::config::{Decode, PipelineConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    RefCont,
    RefDisc,
    Hw,
}

impl Backend {
    pub const ALL: [Backend; 3] = [Backend::RefCont, Backend::RefDisc, Backend::Hw];

    pub fn name(self) -> &'static str {
        match self {
            Backend::RefCont => "ref-cont",
            Backend::RefDisc => "ref-disc",
            Backend::Hw => "hw",
        }
    }
}

pub const OUTPUTS: &str = "outputs.csv";
pub const PREDICTIONS: &str = "predictions.csv";
pub const SUMMARY: &str = "summary.json";
pub const COUNTERS: &str = "counters.json";

/// Output layer of one inference. Ticks and integer potentials are carried
/// as `f64`, which holds them exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageOutput {
    pub label: u8,
    pub spikes: SpikeTimes<f64>,
    pub potentials: Vec<f64>,
}

impl ImageOutput {
    pub fn first_spike(&self) -> Option<usize> {
        decode_first_spike(&self.spikes).ok()
    }

    pub fn membrane(&self) -> usize {
        decode_softmax_membrane(&self.potentials)
    }

    pub fn prediction(&self, d: Decode) -> Option<usize> {
        match d {
            Decode::FirstSpike => self.first_spike(),
            Decode::Membrane => Some(self.membrane()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub images: usize,
    pub first_spike: f64,
    pub membrane: f64,
    /// Images on which no output neuron spiked.
    pub no_decision: usize,
}

impl Accuracy {
    pub fn of(outputs: &[ImageOutput]) -> Self {
        let n = outputs.len().max(1) as f64;
        let fs = outputs.iter().filter(|o| o.first_spike() == Some(o.label as usize)).count();
        let mem = outputs.iter().filter(|o| o.membrane() == o.label as usize).count();
        Self {
            images: outputs.len(),
            first_spike: fs as f64 / n,
            membrane: mem as f64 / n,
            no_decision: outputs.iter().filter(|o| o.first_spike().is_none()).count(),
        }
    }

    pub fn get(&self, d: Decode) -> f64 {
        match d {
            Decode::FirstSpike => self.first_spike,
            Decode::Membrane => self.membrane,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub backend: Backend,
    pub model: String,
    pub quantized: bool,
    pub encoding: EncodingConfig,
    pub decode: Decode,
    pub early_stop: bool,
    pub accuracy: Accuracy,
    /// Mean ticks simulated per image (discrete backends).
    pub mean_ticks: Option<f64>,
    /// Saturated additions (fixed-point backends).
    pub saturations: Option<u64>,
}

fn ticks_as_f64(t: &SpikeTickVector) -> SpikeTimeVector {
    SpikeTimes::from_vec(t.as_slice().iter().map(|v| v.map(f64::from)).collect())
}

pub fn run(cfg: &PipelineConfig, backend: Backend) -> Result<RunSummary> {
    let out = Artifacts::new(cfg)?;
    let dir = out.run_dir(backend.name());
    // Check the backend's inputs before touching the dataset.
    let placement = match backend {
        Backend::Hw => Some(out.load_placement()?),
        _ => None,
    };
    let mut test = art::load_test(cfg)?;
    if let (Backend::Hw, Some(n)) = (backend, cfg.limits.hw_images) {
        test = test.truncate(n);
    }
    if dir.exists() {
        std::fs::remove_dir_all(&dir)?;
    }
    let traces = dir.join("traces");
    std::fs::create_dir_all(&traces)?;
    let mut outputs = Vec::with_capacity(test.len());
    let mut ticks_total = 0u64;
    let mut saturations = None;
    let mut counters = None;
    let model;
    let quantized;
    let encoding;
    let trace_path = |n: usize| traces.join(format!("image_{n:05}.csv"));

    match backend {
        Backend::RefCont => {
            let (net, name) = out.load_model_for(cfg, false)?;
            (model, quantized, encoding) = (name, net.is_quantized(), cfg.encoding);
            let enc = &encoding;
            for (n, (x, &label)) in test.images.outer_iter().zip(&test.labels).enumerate() {
                let input = itl_encode_continuous(x.as_slice().expect("contiguous rows"), enc)?;
                let r = network_forward_continuous(&net, &input, Some(cfg.horizon()))?;
                if n < cfg.trace_limit {
                    let mut w = art::create(&trace_path(n))?;
                    write_time_trace(&mut w, &r.layer_times())?;
                    w.flush()?;
                }
                outputs.push(ImageOutput {
                    label,
                    spikes: r.output_times().clone(),
                    potentials: r.output_potentials(),
                });
            }
        }
        Backend::RefDisc => {
            let (net, name) = out.load_model_for(cfg, false)?;
            (model, quantized, encoding) = (name, net.is_quantized(), cfg.discrete_encoding(&net)?);
            let enc = &encoding;
            let tpu = enc.ticks_per_unit();
            let fixed = if quantized { Some(net.to_fixed(tpu, cfg.bias_mode)?) } else { None };
            let float = net.to_discrete_float(tpu, cfg.bias_mode);
            let mut clamps = 0;
            for (n, (x, &label)) in test.images.outer_iter().zip(&test.labels).enumerate() {
                let input = itl_encode_discrete(x.as_slice().expect("contiguous rows"), enc)?;
                let (layers, pots, ticks) = match &fixed {
                    Some(f) => {
                        let r = network_forward_discrete(f, &input, enc.t_total, cfg.early_stop)?;
                        clamps += r.clamps;
                        let p = r.output_potentials().into_iter().map(f64::from).collect();
                        (r.layer_spikes, p, r.ticks)
                    }
                    None => {
                        let r = network_forward_discrete(&float, &input, enc.t_total, cfg.early_stop)?;
                        let p = r.output_potentials();
                        (r.layer_spikes, p, r.ticks)
                    }
                };
                ticks_total += ticks as u64;
                if n < cfg.trace_limit {
                    let mut w = art::create(&trace_path(n))?;
                    write_tick_trace(&mut w, &layers.iter().collect::<Vec<_>>())?;
                    w.flush()?;
                }
                outputs.push(ImageOutput {
                    label,
                    spikes: ticks_as_f64(layers.last().unwrap()),
                    potentials: pots,
                });
            }
            saturations = fixed.as_ref().map(|_| clamps);
        }
        Backend::Hw => {
            let image = placement.expect("loaded above");
            let (net, name) = out.load_model_for(cfg, true)?;
            if net.input_len() != image.placement.input_len() {
                bail!("placement does not match {name}; re-run `yoso map`");
            }
            (model, quantized, encoding) = (name, true, cfg.discrete_encoding(&net)?);
            let enc = &encoding;
            let fixed = net.to_fixed(enc.ticks_per_unit(), cfg.bias_mode)?;
            for (l, layer) in fixed.layers.iter().enumerate() {
                let head = &image.placement.pes[image.placement.layers[l].pes[0]];
                if head.regs.theta != layer.threshold {
                    bail!("placement does not match {name}; re-run `yoso map`");
                }
            }
            let mut sys = System::new(cfg.hw)?;
            let (packets, hops) = sys.program(&image)?;
            let mut total = AccessCounters::default();
            for (n, (x, &label)) in test.images.outer_iter().zip(&test.labels).enumerate() {
                let input = itl_encode_discrete(x.as_slice().expect("contiguous rows"), enc)?;
                let r = sys.run_inference(&input, enc.t_total, cfg.early_stop)?;
                total.accumulate(&r.counters);
                ticks_total += r.ticks as u64;
                if n < cfg.trace_limit {
                    let mut w = art::create(&trace_path(n))?;
                    write_tick_trace(&mut w, &r.layer_spikes.iter().collect::<Vec<_>>())?;
                    w.flush()?;
                }
                outputs.push(ImageOutput {
                    label,
                    spikes: ticks_as_f64(r.output_times()),
                    potentials: r.final_potentials.iter().map(|&v| f64::from(v)).collect(),
                });
            }
            total.program_packets = packets;
            total.program_hops = hops;
            let p: Vec<u16> = image.placement.pes.iter().map(|p| p.regs.p).collect();
            let rep = total.report(&p, cfg.energy.as_ref());
            saturations = Some(rep.saturations);
            counters = Some(rep);
        }
    }

    write_outputs(&dir.join(OUTPUTS), &outputs)?;
    write_predictions(&dir.join(PREDICTIONS), &outputs, cfg.decode)?;
    if let Some(c) = &counters {
        art::write_json(&dir.join(COUNTERS), c)?;
    }
    let summary = RunSummary {
        backend,
        model: model.into(),
        quantized,
        encoding,
        decode: cfg.decode,
        early_stop: cfg.early_stop && backend != Backend::RefCont,
        accuracy: Accuracy::of(&outputs),
        mean_ticks: (backend != Backend::RefCont).then(|| ticks_total as f64 / outputs.len().max(1) as f64),
        saturations,
    };
    art::write_json(&dir.join(SUMMARY), &summary)?;
    Ok(summary)
}

fn write_outputs(path: &Path, outputs: &[ImageOutput]) -> Result<()> {
    let mut w = csv::Writer::from_writer(art::create(path)?);
    w.write_record(["image", "label", "neuron", "spike", "potential"])?;
    for (n, o) in outputs.iter().enumerate() {
        for (k, v) in o.potentials.iter().enumerate() {
            let spike = o.spikes.get(k).map(|t| t.to_string()).unwrap_or_default();
            w.write_record([n.to_string(), o.label.to_string(), k.to_string(), spike, v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_predictions(path: &Path, outputs: &[ImageOutput], decode: Decode) -> Result<()> {
    let mut w = csv::Writer::from_writer(art::create(path)?);
    w.write_record(["image", "label", "first_spike", "membrane", "prediction"])?;
    let opt = |v: Option<usize>| v.map(|c| c.to_string()).unwrap_or_default();
    for (n, o) in outputs.iter().enumerate() {
        w.write_record([
            n.to_string(),
            o.label.to_string(),
            opt(o.first_spike()),
            o.membrane().to_string(),
            opt(o.prediction(decode)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an `outputs.csv` back into per-image records.
pub fn read_outputs(path: &Path) -> Result<Vec<ImageOutput>> {
    if !path.is_file() {
        bail!("{} missing: run `yoso run` for that backend first", path.display());
    }
    let mut r = csv::Reader::from_path(path)?;
    let mut out: Vec<ImageOutput> = Vec::new();
    let mut spikes: Vec<Option<f64>> = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let bad = || anyhow::anyhow!("{}: malformed row {}", path.display(), line + 2);
        let image: usize = field(0).parse().map_err(|_| bad())?;
        let label: u8 = field(1).parse().map_err(|_| bad())?;
        let neuron: usize = field(2).parse().map_err(|_| bad())?;
        let spike = match field(3) {
            "" => None,
            s => Some(s.parse::<f64>().map_err(|_| bad())?),
        };
        let potential: f64 = field(4).parse().map_err(|_| bad())?;
        if neuron == 0 {
            if let Some(last) = out.last_mut() {
                last.spikes = SpikeTimes::from_vec(std::mem::take(&mut spikes));
            }
            if image != out.len() {
                return Err(bad());
            }
            out.push(ImageOutput { label, spikes: SpikeTimes::silent(0), potentials: Vec::new() });
        }
        let count = out.len();
        let cur = out.last_mut().ok_or_else(bad)?;
        if image + 1 != count || neuron != cur.potentials.len() {
            return Err(bad());
        }
        cur.potentials.push(potential);
        spikes.push(spike);
    }
    if let Some(last) = out.last_mut() {
        last.spikes = SpikeTimes::from_vec(spikes);
    }
    Ok(out)
}

pub fn read_summary(dir: &Path) -> Result<RunSummary> {
    art::read_json(&dir.join(SUMMARY))
}

pub fn read_counters(dir: &Path) -> Result<Option<CounterReport>> {
    let p = dir.join(COUNTERS);
    if !p.is_file() {
        return Ok(None);
    }
    art::read_json(&p).map(Some)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outputs_round_trip() {
        let outs = vec![
            ImageOutput {
                label: 1,
                spikes: SpikeTimes::from_vec(vec![None, Some(4.25), Some(0.1 + 0.2)]),
                potentials: vec![-3.0, 7.5, 1e-17],
            },
            ImageOutput {
                label: 0,
                spikes: SpikeTimes::from_vec(vec![Some(12.0), None, None]),
                potentials: vec![5.0, 5.0, 2.0],
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("o.csv");
        write_outputs(&p, &outs).unwrap();
        assert_eq!(read_outputs(&p).unwrap(), outs);
        let acc = Accuracy::of(&outs);
        assert_eq!(acc.first_spike, 0.5);
        assert_eq!(acc.membrane, 1.0);
        assert_eq!(acc.no_decision, 0);
    }
}
