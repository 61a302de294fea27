//! The artifact-producing stages that precede inference.

use std::io::Write;

use anyhow::{Context, Result};
use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};
use yoso_core::ann::{accuracy, ann_forward, ann_train_sgd, argmax};
use yoso_core::convert::{build_snn, NormalizationReport};
use yoso_core::finetune::{evaluate_layer_loss, prepare_ann, train_network};
use yoso_core::sim::{map_network, ProgramImage};
use yoso_core::ttfs::{itl_encode_discrete, EncodingConfig};

use crate::artifacts::{self as art, Artifacts};
use crate::config::PipelineConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSummary {
    pub architecture: String,
    pub train_images: usize,
    pub test_images: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub final_loss: f64,
}

pub fn train_ann(cfg: &PipelineConfig) -> Result<TrainSummary> {
    let out = Artifacts::new(cfg)?;
    let train = art::load_train(cfg)?;
    let test = art::load_test(cfg)?;
    let arch = cfg.arch()?;
    let (mut params, rep) = ann_train_sgd(train.images.view(), &train.labels, &arch, &cfg.train)?;
    // Evaluate what is actually stored on disk.
    params.round_to_f32();
    params.save(&out.path(art::ANN))?;
    let mut log = art::create(&out.path(art::ANN_LOG))?;
    writeln!(log, "epoch,loss")?;
    for (e, l) in rep.epoch_loss.iter().enumerate() {
        writeln!(log, "{e},{l:.9e}")?;
    }
    log.flush()?;
    let summary = TrainSummary {
        architecture: arch.to_string(),
        train_images: train.len(),
        test_images: test.len(),
        train_accuracy: accuracy(&params, train.images.view(), &train.labels),
        test_accuracy: accuracy(&params, test.images.view(), &test.labels),
        final_loss: rep.epoch_loss.last().copied().unwrap_or(f64::NAN),
    };
    art::write_json(&out.path(art::ANN_SUMMARY), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvertSummary {
    pub samples: Vec<usize>,
    pub beta: f64,
    pub threshold: f64,
    pub normalization: NormalizationReport,
    /// Test images checked for an unchanged ANN argmax after pruning and normalization.
    pub argmax_checked: usize,
    pub argmax_mismatches: usize,
}

fn gather(images: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    images.select(Axis(0), idx)
}

pub fn convert(cfg: &PipelineConfig) -> Result<ConvertSummary> {
    let out = Artifacts::new(cfg)?;
    let ann = out.load_ann()?;
    let train = art::load_train(cfg)?;
    let test = art::load_test(cfg)?;
    let samples = art::sample_indices(train.len(), cfg.finetune.samples, cfg.seed())?;
    let x = gather(&train.images, &samples);
    let (norm, report) = prepare_ann(&ann, x.view(), cfg.finetune.beta)?;
    let snn = build_snn(&norm, cfg.threshold, None, None)?;
    norm.save(&out.path(art::ANN_NORM))?;
    snn.save(&out.path(art::SNN))?;

    // Pruning may flip a decision; normalization alone cannot.
    let pruned = yoso_core::convert::prune(&ann, cfg.finetune.beta)?;
    let checked = test.len().min(1000);
    let mut mismatches = 0;
    for r in test.images.outer_iter().take(checked) {
        let a = ann_forward(&pruned, r)?;
        let b = ann_forward(&norm, r)?;
        if argmax(a.logits.view()) != argmax(b.logits.view()) {
            mismatches += 1;
        }
    }
    let summary = ConvertSummary {
        samples,
        beta: cfg.finetune.beta,
        threshold: cfg.threshold,
        normalization: report,
        argmax_checked: checked,
        argmax_mismatches: mismatches,
    };
    art::write_json(&out.path(art::NORMALIZATION), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FinetuneSummary {
    pub iterations_run: usize,
    pub initial_layer_loss: Vec<f64>,
    pub final_layer_loss: Vec<f64>,
    pub learning_rate: f64,
    pub alg1_literal: bool,
}

pub fn finetune(cfg: &PipelineConfig) -> Result<FinetuneSummary> {
    let out = Artifacts::new(cfg)?;
    let ann = out.load_ann_norm()?;
    let snn = out.load_snn()?;
    let conv: ConvertSummary = art::read_json(&out.path(art::NORMALIZATION)).context("run `yoso convert` first")?;
    let train = art::load_train(cfg)?;
    if let Some(&bad) = conv.samples.iter().find(|&&i| i >= train.len()) {
        anyhow::bail!("normalization sample {bad} outside the training set; re-run `yoso convert`");
    }
    let x = gather(&train.images, &conv.samples);
    let initial = evaluate_layer_loss(&ann, &snn, x.view(), &cfg.encoding, &cfg.finetune)?;
    let outcome = train_network(&ann, &snn, x.view(), &cfg.encoding, &cfg.finetune)?;
    outcome.network.save(&out.path(art::SNN_FT))?;
    let mut log = art::create(&out.path(art::FT_LOG))?;
    outcome.write_log(&mut log)?;
    log.flush()?;
    let summary = FinetuneSummary {
        iterations_run: outcome.iterations_run,
        initial_layer_loss: initial,
        final_layer_loss: outcome.final_layer_loss,
        learning_rate: cfg.finetune.learning_rate,
        alg1_literal: cfg.finetune.alg1_literal,
    };
    art::write_json(&out.path(art::FT_SUMMARY), &summary)?;
    Ok(summary)
}

/// Writes `image,input,tick,time` for every input spike of the test images.
pub fn encode(cfg: &PipelineConfig) -> Result<usize> {
    let out = Artifacts::new(cfg)?;
    let test = art::load_test(cfg)?;
    let enc: &EncodingConfig = &cfg.encoding;
    let tpu = enc.ticks_per_unit();
    let mut w = art::create(&out.path(art::ENCODED))?;
    writeln!(w, "image,input,tick,time")?;
    for (n, r) in test.images.outer_iter().enumerate() {
        let ticks = itl_encode_discrete(r.as_slice().expect("contiguous rows"), enc)?;
        for (i, t) in ticks.spikes() {
            let time = (1.0 - r[i]) * enc.t_max;
            debug_assert!((t as f64 / tpu - time).abs() <= 0.5 / tpu + 1e-12);
            writeln!(w, "{n},{i},{t},{time}")?;
        }
    }
    w.flush()?;
    Ok(test.len())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlacementSummary {
    pub model: String,
    /// Input encoding the integer thresholds were derived for.
    pub encoding: EncodingConfig,
    pub pe_counts: Vec<usize>,
    pub grid: (u8, u8),
    pub layers: Vec<Vec<PlacedPe>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlacedPe {
    pub x: u8,
    pub y: u8,
    pub first_neuron: usize,
    pub neurons: u16,
    pub p: u16,
    pub m: u16,
    pub theta: i16,
    pub expected_eots: u8,
}

pub fn map(cfg: &PipelineConfig) -> Result<PlacementSummary> {
    let out = Artifacts::new(cfg)?;
    let (net, model) = out.load_model_for(cfg, true)?;
    let enc = cfg.discrete_encoding(&net)?;
    let fixed = net.to_fixed(enc.ticks_per_unit(), cfg.bias_mode)?;
    let placement = map_network(&fixed, &cfg.hw, cfg.softmax_output)?;
    let image = ProgramImage::build(&fixed, placement, &cfg.hw)?;
    image.save(&out.path(art::PLACEMENT))?;
    let pl = &image.placement;
    let summary = PlacementSummary {
        model: model.into(),
        encoding: enc,
        pe_counts: pl.pe_counts(),
        grid: (pl.grid_w, pl.grid_h),
        layers: pl
            .layers
            .iter()
            .map(|l| {
                l.pes
                    .iter()
                    .map(|&q| {
                        let p = &pl.pes[q];
                        PlacedPe {
                            x: p.coord.x,
                            y: p.coord.y,
                            first_neuron: p.first_neuron,
                            neurons: p.regs.neurons,
                            p: p.regs.p,
                            m: p.regs.m,
                            theta: p.regs.theta,
                            expected_eots: p.regs.expected_eots,
                        }
                    })
                    .collect()
            })
            .collect(),
    };
    art::write_json(&out.path(art::PLACEMENT_SUMMARY), &summary)?;
    Ok(summary)
}
