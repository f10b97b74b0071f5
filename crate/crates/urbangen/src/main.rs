use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use urbangen::config::RunConfig;
use urbangen::pipeline::{
    cmd_build_dataset, cmd_evaluate, cmd_gen_prompts, cmd_render_control, cmd_sample,
    cmd_train, cmd_validate, FeatureSource, ModelKind,
};
use urbangen::prompts::PromptStyle;
use urbangen::render::Variant;

/// Tile-aligned land-use ingestion, constraint rendering, prompt synthesis,
/// diffusion training with a ControlNet branch, and FID/KID evaluation.
#[derive(Parser)]
#[command(name = "urbangen", version, about)]
struct Cli {
    /// Path to the run configuration (TOML).
    #[arg(long, global = true, default_value = "urbangen.toml")]
    config: PathBuf,

    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the conditioning variant.
    #[arg(long, global = true, value_enum)]
    variant: Option<VariantArg>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Base,
    Landuse,
}

#[derive(Clone, Copy, ValueEnum)]
enum StyleArg {
    Minimal,
    Structured,
    Elaborate,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Diffusion,
    Controlnet,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full dataset pipeline: ingest, filter, render, prompt,
    /// augment, split, and write the manifest.
    BuildDataset,
    /// Render control images for every configured tile (no filtering).
    RenderControl {
        /// Restrict to one city.
        #[arg(long)]
        city: Option<String>,
    },
    /// Generate prompt records for every configured tile.
    GenPrompts {
        #[arg(long, value_enum)]
        style: Option<StyleArg>,
        /// Output path (defaults to out_root/prompts.jsonl).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the base denoiser or a ControlNet over a frozen base.
    Train {
        #[arg(long, value_enum, default_value = "controlnet")]
        model: ModelArg,
        /// Base checkpoint for ControlNet training
        /// (defaults to out_root/checkpoints/diffusion.ckpt).
        #[arg(long)]
        base_checkpoint: Option<PathBuf>,
        /// Override the configured number of optimization steps.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Sample a grid of images from a checkpoint.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Control image (required for controlnet checkpoints).
        #[arg(long)]
        control: Option<PathBuf>,
        /// Prompt text to condition on.
        #[arg(long)]
        prompt: String,
        /// Number of images in the grid.
        #[arg(long, default_value_t = 4)]
        num: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// FID/KID between real and generated image directories.
    Evaluate {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        gen: PathBuf,
        /// Externally computed features for the real side (JSON lines).
        #[arg(long, requires = "gen_features")]
        real_features: Option<PathBuf>,
        /// Externally computed features for the generated side.
        #[arg(long, requires = "real_features")]
        gen_features: Option<PathBuf>,
        /// Write the JSON report here as well as to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Structural checks over a dataset manifest.
    Validate {
        #[arg(long)]
        manifest: PathBuf,
    },
}

fn load_config(cli: &Cli) -> urbangen::Result<RunConfig> {
    let mut cfg = RunConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(variant) = cli.variant {
        cfg.variant = match variant {
            VariantArg::Base => Variant::Base,
            VariantArg::Landuse => Variant::Landuse,
        };
    }
    Ok(cfg)
}

fn run(cli: Cli) -> urbangen::Result<u8> {
    match &cli.command {
        Command::BuildDataset => {
            let cfg = load_config(&cli)?;
            let summary = cmd_build_dataset(&cfg)?;
            for (city, s) in &summary.per_city {
                println!(
                    "{city}: {} tiles considered, {} kept, {} dropped (coverage <= 70%), {} samples",
                    s.tiles_considered, s.kept, s.dropped_low_coverage, s.samples
                );
            }
            println!(
                "wrote {} samples to {}",
                summary.total_samples,
                summary.manifest_path.display()
            );
            Ok(0)
        }
        Command::RenderControl { city } => {
            let cfg = load_config(&cli)?;
            let written = cmd_render_control(&cfg, city.as_deref())?;
            println!("rendered {written} control images");
            Ok(0)
        }
        Command::GenPrompts { style, out } => {
            let cfg = load_config(&cli)?;
            let style = style.map(|s| match s {
                StyleArg::Minimal => PromptStyle::Minimal,
                StyleArg::Structured => PromptStyle::Structured,
                StyleArg::Elaborate => PromptStyle::Elaborate,
            });
            let path = cmd_gen_prompts(&cfg, style, cli.seed, out.as_deref())?;
            println!("wrote prompts to {}", path.display());
            Ok(0)
        }
        Command::Train { model, base_checkpoint, steps } => {
            let cfg = load_config(&cli)?;
            let kind = match model {
                ModelArg::Diffusion => ModelKind::Diffusion,
                ModelArg::Controlnet => ModelKind::Controlnet,
            };
            let outcome = cmd_train(&cfg, kind, base_checkpoint.as_deref(), *steps)?;
            println!(
                "trained {} steps: loss {:.4} -> {:.4}; checkpoint {}",
                outcome.steps,
                outcome.initial_loss,
                outcome.final_loss,
                outcome.checkpoint.display()
            );
            Ok(0)
        }
        Command::Sample { checkpoint, control, prompt, num, out } => {
            let cfg = load_config(&cli)?;
            let path = cmd_sample(&cfg, checkpoint, control.as_deref(), prompt, *num, out)?;
            println!("wrote sample grid to {}", path.display());
            Ok(0)
        }
        Command::Evaluate { real, gen, real_features, gen_features, out } => {
            let cfg = load_config(&cli)?;
            let source = match (real_features, gen_features) {
                (Some(r), Some(g)) => FeatureSource::External {
                    real: r.clone(),
                    generated: g.clone(),
                },
                _ => FeatureSource::Builtin,
            };
            let report = cmd_evaluate(&cfg, real, gen, source, out.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&report).unwrap());
            Ok(0)
        }
        Command::Validate { manifest } => {
            let report = cmd_validate(manifest)?;
            println!("{}", serde_json::to_string_pretty(&report).unwrap());
            if report.clean() {
                Ok(0)
            } else {
                Ok(1)
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
