use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};
use inkline::config::RunConfig;
use inkline::pipeline;
use inkline_core::metrics::classifier::ClassifierConfig;
use inkline_core::synth::CorpusConfig;
use inkline_core::traj::DEFAULT_RDP_EPSILON;

#[derive(Parser)]
#[command(name = "inkline", version, about = "Hierarchical online handwritten text-line generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic multi-writer corpus with ground-truth layouts.
    SynthCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        writers: usize,
        #[arg(long, default_value_t = 200)]
        lines: usize,
        #[arg(long, default_value_t = 20)]
        categories: usize,
        #[arg(long, default_value_t = 10)]
        min_len: usize,
        #[arg(long, default_value_t = 16)]
        max_len: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Simplify strokes, extract layouts and height-normalize glyphs.
    Preprocess {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_RDP_EPSILON)]
        rdp_eps: f64,
    },
    TrainLayout {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the configured step count.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    TrainFont {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Generate one line for a comma-separated category sequence.
    Generate {
        #[arg(long)]
        text: String,
        #[arg(long = "ref")]
        reference: Option<PathBuf>,
        #[arg(long)]
        layout_ckpt: PathBuf,
        #[arg(long)]
        font_ckpt: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    Evaluate {
        #[arg(long)]
        gen: PathBuf,
        #[arg(long)]
        real: PathBuf,
        /// Recognizer transcripts, one {"hyp": [...]} per generated line.
        #[arg(long)]
        hyp: Option<PathBuf>,
        /// Train content/style classifiers for this many steps (0 skips them).
        #[arg(long, default_value_t = 0)]
        classifier_steps: usize,
        #[arg(long)]
        out: PathBuf,
    },
    Render {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long)]
        color_per_stroke: bool,
    },
    ExportStyleFeatures {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: Option<&PathBuf>) -> anyhow::Result<RunConfig> {
    match path {
        Some(p) => Ok(RunConfig::load(p)?),
        None => Ok(RunConfig::default()),
    }
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::SynthCorpus { out, writers, lines, categories, min_len, max_len, seed } => {
            let cfg = CorpusConfig { writers, lines_per_writer: lines, categories, min_len, max_len, seed };
            let n = pipeline::synth_corpus(&out, &cfg)?;
            log::info!("wrote {n} lines to {}", out.display());
        }
        Command::Preprocess { input, out, rdp_eps } => {
            let n = pipeline::preprocess(&input, &out, rdp_eps)?;
            log::info!("preprocessed {n} lines");
        }
        Command::TrainLayout { config, data, out, steps, resume } => {
            let cfg = load_config(config.as_ref())?;
            let steps = steps.unwrap_or(cfg.layout.steps);
            let losses = pipeline::train_layout(&cfg, &data, &out, steps, resume.as_deref())?;
            log::info!("final layout loss {:?}", losses.last());
        }
        Command::TrainFont { config, data, out, steps, resume } => {
            let cfg = load_config(config.as_ref())?;
            let steps = steps.unwrap_or(cfg.font.steps);
            let losses = pipeline::train_font(&cfg, &data, &out, steps, resume.as_deref())?;
            log::info!("final font loss {:?}", losses.last());
        }
        Command::Generate { text, reference, layout_ckpt, font_ckpt, out, seed } => {
            pipeline::generate(&text, reference.as_deref(), &layout_ckpt, &font_ckpt, &out, seed)?;
        }
        Command::Evaluate { gen, real, hyp, classifier_steps, out } => {
            let cls = (classifier_steps > 0).then(|| ClassifierConfig { steps: classifier_steps, ..Default::default() });
            let report = pipeline::evaluate(&gen, &real, hyp.as_deref(), cls.as_ref(), &out)?;
            println!("{}", serde_json::to_string_pretty(&report).context("serializing report")?);
        }
        Command::Render { input, out, index, color_per_stroke } => {
            pipeline::render(&input, &out, index, color_per_stroke)?;
        }
        Command::ExportStyleFeatures { ckpt, data, out } => {
            let n = pipeline::export_style_features(&ckpt, &data, &out)?;
            log::info!("exported {n} feature vectors");
        }
    }
    Ok(())
}
