//! Where each stage puts its files, and loaders that fail with a message
//! naming the stage that should have produced them.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use yoso_core::ann::{mnist, MlpParams};
use yoso_core::convert::{quantize_network, QuantSpec};
use yoso_core::sim::ProgramImage;
use yoso_core::ttfs::TtfsNetwork;

use crate::config::PipelineConfig;

pub const ANN: &str = "ann.mlpw";
pub const ANN_LOG: &str = "train_log.csv";
pub const ANN_SUMMARY: &str = "train_summary.json";
pub const ANN_NORM: &str = "ann_norm.mlpw";
pub const NORMALIZATION: &str = "normalization.json";
pub const SNN: &str = "snn.ttfs";
pub const SNN_FT: &str = "snn_ft.ttfs";
pub const FT_LOG: &str = "finetune_log.csv";
pub const FT_SUMMARY: &str = "finetune.json";
pub const ENCODED: &str = "encoded_inputs.csv";
pub const PLACEMENT: &str = "placement.yoso";
pub const PLACEMENT_SUMMARY: &str = "placement.json";
pub const REPORT: &str = "report.json";

/// Offset mixed into the pipeline seed for the fine-tuning sample draw, so
/// it is independent of the trainer's stream.
const SAMPLE_STREAM: u64 = 0x5eed_0001;

pub struct Artifacts {
    pub root: PathBuf,
}

impl Artifacts {
    pub fn new(cfg: &PipelineConfig) -> Result<Self> {
        std::fs::create_dir_all(&cfg.out_dir)
            .with_context(|| format!("creating output directory {}", cfg.out_dir.display()))?;
        Ok(Self { root: cfg.out_dir.clone() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn run_dir(&self, backend: &str) -> PathBuf {
        self.root.join("runs").join(backend)
    }

    fn require(&self, name: &str, stage: &str) -> Result<PathBuf> {
        let p = self.path(name);
        if !p.is_file() {
            bail!("{name} missing in {}: run `yoso {stage}` first", self.root.display());
        }
        Ok(p)
    }

    pub fn load_ann(&self) -> Result<MlpParams> {
        let p = self.require(ANN, "train-ann")?;
        MlpParams::load(&p).with_context(|| format!("loading {}", p.display()))
    }

    pub fn load_ann_norm(&self) -> Result<MlpParams> {
        let p = self.require(ANN_NORM, "convert")?;
        MlpParams::load(&p).with_context(|| format!("loading {}", p.display()))
    }

    pub fn load_snn(&self) -> Result<TtfsNetwork> {
        let p = self.require(SNN, "convert")?;
        TtfsNetwork::load(&p).with_context(|| format!("loading {}", p.display()))
    }

    /// The fine-tuned network if there is one, otherwise the converted one.
    pub fn load_model(&self) -> Result<(TtfsNetwork, &'static str)> {
        let ft = self.path(SNN_FT);
        if ft.is_file() {
            let net = TtfsNetwork::load(&ft).with_context(|| format!("loading {}", ft.display()))?;
            return Ok((net, SNN_FT));
        }
        Ok((self.load_snn()?, SNN))
    }

    /// The model as run: quantized when the config asks for it or when
    /// `force_quant` is set (the accelerator only holds integer weights).
    pub fn load_model_for(&self, cfg: &PipelineConfig, force_quant: bool) -> Result<(TtfsNetwork, &'static str)> {
        let (net, name) = self.load_model()?;
        if cfg.quantize || force_quant {
            let q = quantize_network(&net, &QuantSpec { bits: cfg.bits as u8 })?;
            return Ok((q, name));
        }
        Ok((net, name))
    }

    pub fn load_placement(&self) -> Result<ProgramImage> {
        let p = self.path(PLACEMENT);
        if !p.is_file() {
            bail!("placement missing: {} not found, run `yoso map` first", p.display());
        }
        ProgramImage::load(&p).with_context(|| format!("loading {}", p.display()))
    }
}

pub fn load_train(cfg: &PipelineConfig) -> Result<mnist::Dataset> {
    load_split(cfg, true, cfg.limits.train_images)
}

pub fn load_test(cfg: &PipelineConfig) -> Result<mnist::Dataset> {
    load_split(cfg, false, cfg.limits.test_images)
}

fn load_split(cfg: &PipelineConfig, train: bool, limit: Option<usize>) -> Result<mnist::Dataset> {
    cfg.require_data_dir()?;
    let ds = mnist::load_split(&cfg.data_dir, train)
        .with_context(|| format!("reading MNIST from {}", cfg.data_dir.display()))?;
    Ok(match limit {
        Some(n) => ds.truncate(n),
        None => ds,
    })
}

/// Seeded draw of `n` distinct training indices, in draw order.
pub fn sample_indices(total: usize, n: usize, seed: u64) -> Result<Vec<usize>> {
    if n == 0 || n > total {
        bail!("cannot draw {n} samples from {total} training images");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SAMPLE_STREAM);
    Ok(rand::seq::index::sample(&mut rng, total, n).into_vec())
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
