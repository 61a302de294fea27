//! Pipeline driver: every subcommand of the `yoso` binary is a function
//! here taking a resolved [`PipelineConfig`], so tests can run the whole
//! pipeline in-process.

pub mod artifacts;
pub mod compare;
pub mod config;
pub mod report;
pub mod run;
pub mod stages;

pub use config::{Decode, Limits, Overrides, PipelineConfig};
pub use run::Backend;

/// Runs train-ann, convert, finetune, encode, map, the three backends and
/// report, in that order.
pub fn full_pipeline(cfg: &PipelineConfig) -> anyhow::Result<report::Report> {
    stages::train_ann(cfg)?;
    stages::convert(cfg)?;
    stages::finetune(cfg)?;
    stages::encode(cfg)?;
    stages::map(cfg)?;
    for b in Backend::ALL {
        run::run(cfg, b)?;
    }
    report::report(cfg)
}
