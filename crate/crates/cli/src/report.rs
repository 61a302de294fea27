//! Aggregated report. Every accuracy figure is recomputed from the files on
//! disk, never copied from a run summary.

use std::collections::BTreeMap;

use anyhow::Result;
use serde::{Deserialize, Serialize};
use yoso_core::ann::accuracy;
use yoso_core::sim::CounterReport;

use crate::artifacts::{self as art, Artifacts};
use crate::config::{Decode, PipelineConfig, SCHEMA_VERSION};
use crate::run::{read_counters, read_outputs, Accuracy, Backend, OUTPUTS};
use crate::stages::{ConvertSummary, FinetuneSummary, PlacementSummary};

/// Memory traffic in the layout of the TrueNorth comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficBlock {
    pub per_spike_read_bytes: f64,
    pub per_spike_write_bytes: f64,
    pub per_timestep_read_bytes: f64,
    pub per_timestep_write_bytes: f64,
    /// The same traffic divided by the neurons each event touches.
    pub per_neuron_spike_read_bytes: f64,
    pub per_neuron_spike_write_bytes: f64,
    pub per_neuron_timestep_read_bytes: f64,
    pub per_neuron_timestep_write_bytes: f64,
}

impl TrafficBlock {
    pub fn from_counters(c: &CounterReport) -> Self {
        let (mut s_neurons, mut e_neurons) = (0.0, 0.0);
        let (mut sr, mut sw, mut er, mut ew) = (0.0, 0.0, 0.0, 0.0);
        for pe in &c.pes {
            let (s, e) = (pe.spikes_processed as f64, pe.eots_processed as f64);
            s_neurons += s * pe.p as f64;
            e_neurons += e * pe.p as f64;
            sr += s * pe.per_spike_read_bytes;
            sw += s * pe.per_spike_write_bytes;
            er += e * pe.per_eot_read_bytes;
            ew += e * pe.per_eot_write_bytes;
        }
        let div = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
        Self {
            per_spike_read_bytes: c.per_spike_read_bytes,
            per_spike_write_bytes: c.per_spike_write_bytes,
            per_timestep_read_bytes: c.per_eot_read_bytes,
            per_timestep_write_bytes: c.per_eot_write_bytes,
            per_neuron_spike_read_bytes: div(sr, s_neurons),
            per_neuron_spike_write_bytes: div(sw, s_neurons),
            per_neuron_timestep_read_bytes: div(er, e_neurons),
            per_neuron_timestep_write_bytes: div(ew, e_neurons),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnAccuracy {
    pub images: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub decode: Decode,
    /// ANN, SNN-continuous, SNN-discrete and SNN-hardware at the configured decode.
    pub headline: BTreeMap<String, f64>,
    pub ann: Option<AnnAccuracy>,
    /// Per backend, both decodes.
    pub snn: BTreeMap<String, Accuracy>,
    pub traffic: Option<TrafficBlock>,
    pub counters: Option<CounterReport>,
    pub normalization: Option<ConvertSummary>,
    pub finetune: Option<FinetuneSummary>,
    pub placement: Option<PlacementSummary>,
    /// Label only; no figure in this report is derived from it.
    pub clock_hz: u64,
    pub config: PipelineConfig,
}

fn optional<T: serde::de::DeserializeOwned>(out: &Artifacts, name: &str) -> Result<Option<T>> {
    let p = out.path(name);
    if p.is_file() {
        art::read_json(&p).map(Some)
    } else {
        Ok(None)
    }
}

pub fn report(cfg: &PipelineConfig) -> Result<Report> {
    let out = Artifacts::new(cfg)?;
    let ann = if out.path(art::ANN).is_file() && cfg.data_dir.is_dir() {
        let params = out.load_ann()?;
        let test = art::load_test(cfg)?;
        Some(AnnAccuracy {
            images: test.len(),
            accuracy: accuracy(&params, test.images.view(), &test.labels),
        })
    } else {
        None
    };
    let mut snn = BTreeMap::new();
    let mut counters = None;
    for b in Backend::ALL {
        let dir = out.run_dir(b.name());
        if !dir.join(OUTPUTS).is_file() {
            continue;
        }
        snn.insert(b.name().to_string(), Accuracy::of(&read_outputs(&dir.join(OUTPUTS))?));
        if b == Backend::Hw {
            counters = read_counters(&dir)?;
        }
    }
    let mut headline = BTreeMap::new();
    if let Some(a) = &ann {
        headline.insert("ann".to_string(), a.accuracy);
    }
    for (b, key) in [
        (Backend::RefCont, "snn_continuous"),
        (Backend::RefDisc, "snn_discrete"),
        (Backend::Hw, "snn_hardware"),
    ] {
        if let Some(a) = snn.get(b.name()) {
            headline.insert(key.to_string(), a.get(cfg.decode));
        }
    }
    let rep = Report {
        schema_version: SCHEMA_VERSION,
        decode: cfg.decode,
        headline,
        ann,
        snn,
        traffic: counters.as_ref().map(TrafficBlock::from_counters),
        counters,
        normalization: optional(&out, art::NORMALIZATION)?,
        finetune: optional(&out, art::FT_SUMMARY)?,
        placement: optional(&out, art::PLACEMENT_SUMMARY)?,
        clock_hz: cfg.clock_hz,
        config: cfg.clone(),
    };
    art::write_json(&out.path(art::REPORT), &rep)?;
    Ok(rep)
}
