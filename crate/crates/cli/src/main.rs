use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use yoso_cli::{compare, report, run, stages, Backend, Decode, Overrides, PipelineConfig};

#[derive(Parser)]
#[command(name = "yoso", version, about = "ANN to TTFS conversion and YOSO accelerator simulation")]
struct Cli {
    /// JSON pipeline configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for every artifact.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// MNIST directory with the four IDX files.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Run with 8-bit (or `bits`) quantized weights.
    #[arg(long, global = true)]
    quantize: bool,
    #[arg(long, global = true, value_enum)]
    decode: Option<Decode>,
    /// Stop a discrete run at the first output spike.
    #[arg(long, global = true)]
    early_stop: bool,
    /// Scale each fine-tuning update by the layer loss as well.
    #[arg(long, global = true)]
    alg1_literal: bool,
    /// Load biases into the membrane potential instead of the slope.
    #[arg(long, global = true)]
    bias_as_initial_potential: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train the ReLU perceptron.
    TrainAnn,
    /// Prune, normalize and convert the ANN to a TTFS network.
    Convert,
    /// Layerwise fine-tuning of the converted network.
    Finetune,
    /// Write the ItL-encoded test inputs.
    Encode,
    /// Place the quantized network on the PE grid.
    Map,
    /// Run inference over the test set.
    Run {
        #[arg(long, value_enum)]
        backend: Backend,
    },
    /// Diff two backends' outputs and traces; fails on any mismatch.
    Compare {
        #[arg(long, value_enum, default_value = "hw")]
        a: Backend,
        #[arg(long, value_enum, default_value = "ref-disc")]
        b: Backend,
    },
    /// Aggregate accuracies and counters into report.json.
    Report,
    /// Print the resolved configuration.
    ShowConfig,
}

fn execute(cli: Cli) -> Result<bool> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    cfg.apply(&Overrides {
        seed: cli.seed,
        out: cli.out,
        data_dir: cli.data,
        quantize: cli.quantize,
        decode: cli.decode,
        early_stop: cli.early_stop,
        alg1_literal: cli.alg1_literal,
        bias_as_initial_potential: cli.bias_as_initial_potential,
    });
    let cfg = cfg.resolve()?;
    match cli.cmd {
        Cmd::TrainAnn => {
            let s = stages::train_ann(&cfg)?;
            println!(
                "ann {}: train {:.4}, test {:.4} ({} images)",
                s.architecture, s.train_accuracy, s.test_accuracy, s.test_images
            );
        }
        Cmd::Convert => {
            let s = stages::convert(&cfg)?;
            println!(
                "converted: lambda {:?}, argmax mismatches {}/{}",
                s.normalization.lambda, s.argmax_mismatches, s.argmax_checked
            );
        }
        Cmd::Finetune => {
            let s = stages::finetune(&cfg)?;
            println!(
                "fine-tuned {} iterations: layer loss {:?} -> {:?}",
                s.iterations_run, s.initial_layer_loss, s.final_layer_loss
            );
        }
        Cmd::Encode => println!("encoded {} images", stages::encode(&cfg)?),
        Cmd::Map => {
            let s = stages::map(&cfg)?;
            println!("placed {} on a {}x{} grid: PEs per layer {:?}", s.model, s.grid.0, s.grid.1, s.pe_counts);
        }
        Cmd::Run { backend } => {
            let s = run::run(&cfg, backend)?;
            println!(
                "{}: {} images, first-spike {:.4}, membrane {:.4}, no decision {}",
                backend.name(),
                s.accuracy.images,
                s.accuracy.first_spike,
                s.accuracy.membrane,
                s.accuracy.no_decision
            );
        }
        Cmd::Compare { a, b } => {
            let d = compare::compare(&cfg, a, b)?;
            for m in d.mismatches.iter().take(50) {
                println!("{m}");
            }
            if !d.is_empty() {
                eprintln!("{} mismatches between {} and {}", d.mismatches.len(), a.name(), b.name());
                return Ok(false);
            }
            println!("identical over {} images and {} traces", d.images, d.traces);
        }
        Cmd::Report => {
            let r = report::report(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&r.headline)?);
        }
        Cmd::ShowConfig => println!("{}", serde_json::to_string_pretty(&cfg)?),
    }
    Ok(true)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
