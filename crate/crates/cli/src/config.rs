//! Pipeline configuration: a versioned JSON document, overridable from the
//! command line.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use yoso_core::ann::{Architecture, TrainConfig};
use yoso_core::convert::fit_tick_rate;
use yoso_core::finetune::FinetuneConfig;
use yoso_core::sim::{EnergyCosts, HwConfig};
use yoso_core::ttfs::{BiasMode, EncodingConfig, TtfsNetwork};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Decode {
    FirstSpike,
    #[default]
    Membrane,
}

/// Caps on how many images each stage touches; `None` means all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Limits {
    pub train_images: Option<usize>,
    pub test_images: Option<usize>,
    /// The cycle-level backend is much slower than the references.
    pub hw_images: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema_version: u32,
    pub seed: Option<u64>,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub architecture: String,
    pub limits: Limits,
    pub train: TrainConfig,
    pub finetune: FinetuneConfig,
    pub encoding: EncodingConfig,
    pub threshold: f64,
    pub quantize: bool,
    pub bits: u32,
    pub bias_mode: BiasMode,
    /// Lower the tick rate of integer runs until every threshold fits
    /// `theta_limit`; otherwise integer runs use `encoding` as is.
    pub fit_tick_rate: bool,
    pub theta_limit: i16,
    pub decode: Decode,
    pub early_stop: bool,
    /// Put the output layer in softmax mode on the accelerator.
    pub softmax_output: bool,
    pub hw: HwConfig,
    pub energy: Option<EnergyCosts>,
    /// Images whose full per-layer spike trace is written.
    pub trace_limit: usize,
    /// Report label only; nothing is timed against it.
    pub clock_hz: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: None,
            data_dir: PathBuf::from("data/mnist"),
            out_dir: PathBuf::from("out"),
            architecture: "784-300-300-10".into(),
            limits: Limits::default(),
            train: TrainConfig::default(),
            finetune: FinetuneConfig::default(),
            encoding: EncodingConfig::default(),
            threshold: 1.0,
            quantize: false,
            bits: 8,
            bias_mode: BiasMode::Slope,
            fit_tick_rate: true,
            theta_limit: 8192,
            decode: Decode::Membrane,
            early_stop: false,
            softmax_output: false,
            hw: HwConfig::default(),
            energy: None,
            trace_limit: 10,
            clock_hz: 120_000,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub data_dir: Option<PathBuf>,
    pub quantize: bool,
    pub decode: Option<Decode>,
    pub early_stop: bool,
    pub alg1_literal: bool,
    pub bias_as_initial_potential: bool,
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(text).context("config is not valid JSON")?;
        match v.get("schema_version").and_then(|s| s.as_u64()) {
            Some(n) if n == SCHEMA_VERSION as u64 => {}
            Some(n) => bail!("unsupported config schema_version {n} (expected {SCHEMA_VERSION})"),
            None => bail!("config lacks schema_version"),
        }
        serde_json::from_value(v).context("invalid config")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if o.seed.is_some() {
            self.seed = o.seed;
        }
        if let Some(out) = &o.out {
            self.out_dir = out.clone();
        }
        if let Some(d) = &o.data_dir {
            self.data_dir = d.clone();
        }
        self.quantize |= o.quantize;
        if let Some(d) = o.decode {
            self.decode = d;
        }
        self.early_stop |= o.early_stop;
        self.finetune.alg1_literal |= o.alg1_literal;
        if o.bias_as_initial_potential {
            self.bias_mode = BiasMode::InitialPotential;
        }
    }

    /// Checks the fields every stage relies on and pins the seed into the
    /// trainer.
    pub fn resolve(mut self) -> Result<Self> {
        let Some(seed) = self.seed else {
            bail!("a seed is required (set \"seed\" in the config or pass --seed)");
        };
        self.train.seed = seed;
        self.arch()?;
        self.encoding.validate()?;
        self.finetune.validate()?;
        if self.bits < 2 || self.bits > 8 {
            bail!("bits must be within 2..=8, got {}", self.bits);
        }
        if self.theta_limit < 1 {
            bail!("theta_limit must be positive");
        }
        if !(self.threshold > 0.0) {
            bail!("threshold must be positive");
        }
        if self.finetune.horizon.is_none() {
            self.finetune.horizon = Some(self.encoding.window_end());
        }
        Ok(self)
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("resolved config")
    }

    pub fn arch(&self) -> Result<Architecture> {
        Ok(self.architecture.parse()?)
    }

    /// Window end of the continuous reference, aligned with the discrete one.
    pub fn horizon(&self) -> f64 {
        self.encoding.window_end()
    }

    /// Encoding of discrete runs of `net`: fitted to the threshold budget
    /// for integer networks, the configured one otherwise.
    pub fn discrete_encoding(&self, net: &TtfsNetwork) -> Result<EncodingConfig> {
        if net.is_quantized() && self.fit_tick_rate {
            return Ok(fit_tick_rate(net, &self.encoding, self.theta_limit)?);
        }
        Ok(self.encoding)
    }

    pub fn require_data_dir(&self) -> Result<()> {
        if !self.data_dir.is_dir() {
            bail!("data directory {} does not exist", self.data_dir.display());
        }
        Ok(())
    }
}
