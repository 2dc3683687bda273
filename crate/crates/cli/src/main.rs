use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use hkcd_core::dataset::{write_dataset, DatasetManifest};
use hkcd_core::split::{split_with_mode, SplitAssignment, SplitMode, SplitPart};
use hkcd_core::synthetic::rectangles_pair;
use hkcd_core::ImageBuffer;
use hkcd_harness::{
    evaluate, load_model, predict_images, run_ablation, run_segmentation_mode, train, EvalOptions, ModelPredictor,
    TrainConfig,
};
use hkcd_monitor::{detect_and_alert, DeliveryStatus, FrameSource, ModelDetector, MonitorConfig, WebhookSink};
use hkcd_prep::{dataset_stats, prep_dataset, GateConfig};

#[derive(Parser)]
#[command(name = "hkcd", version, about = "Housekeeping change detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Align raw pairs and keep those passing the blank-area gate.
    Prep {
        /// Manifest file or dataset directory.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// TOML file with gate settings.
        #[arg(long)]
        gate_config: Option<PathBuf>,
        /// Ratio-test threshold.
        #[arg(long)]
        ratio: Option<f32>,
        /// Pairs are kept only below this blank fraction.
        #[arg(long)]
        blank_max: Option<f64>,
    },
    /// Per-type counts and change-area histograms of a dataset.
    Stats {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Seeded train/val/test split.
    Split {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.7, 0.2, 0.1])]
        ratios: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Split each hazard type separately.
        #[arg(long)]
        stratified: bool,
    },
    /// Train a model; writes a run directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        split: SplitArgs,
        /// Override total_steps (and the schedule period if it was longer).
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Score a checkpoint on one part of a split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_parser = parse_part)]
        split: SplitPart,
        /// Manifest file or dataset directory.
        #[arg(long)]
        data: PathBuf,
        /// Defaults to split.json of the checkpoint's run directory.
        #[arg(long)]
        split_file: Option<PathBuf>,
        /// Defaults to config.snapshot of the checkpoint's run directory.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train with and without good images and tabulate the difference.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        split: SplitArgs,
        #[arg(long, value_parser = parse_part, default_value = "test")]
        eval_part: SplitPart,
    },
    /// Train on unaligned pairs under three input conditions.
    Segmode {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        raw_data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        split: SplitArgs,
        #[arg(long, value_parser = parse_part, default_value = "test")]
        eval_part: SplitPart,
    },
    /// Predict a change mask for one image pair.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        poor: PathBuf,
        /// Omit to predict from the poor image alone.
        #[arg(long)]
        good: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Square side the inputs are resized to; 0 keeps their size.
        #[arg(long, default_value_t = 1024)]
        resize: usize,
    },
    /// Watch a frame source and post alerts to a webhook.
    Monitor {
        /// Directory of frames or an animated GIF.
        #[arg(long)]
        source: PathBuf,
        #[arg(long, default_value_t = 1)]
        interval: usize,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        sink_url: String,
        #[arg(long, default_value_t = hkcd_monitor::DEFAULT_THRESHOLD)]
        threshold: f64,
        /// Clean view of the scene; omit for blackout mode.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        mask_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 1024)]
        resize: usize,
        #[arg(long, default_value_t = 10)]
        timeout_secs: u64,
    },
    /// Write a dataset of synthetic rectangle pairs.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        count: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct SplitArgs {
    /// Split file; without one the data is split 7:2:1 with the config seed.
    #[arg(long)]
    split_file: Option<PathBuf>,
}

fn parse_part(s: &str) -> Result<SplitPart, String> {
    s.parse()
}

fn square(side: usize) -> Option<[usize; 2]> {
    (side > 0).then_some([side, side])
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_split(args: &SplitArgs, manifest: &DatasetManifest, seed: u64) -> Result<SplitAssignment> {
    match &args.split_file {
        Some(path) => Ok(SplitAssignment::load(path)?),
        None => Ok(split_with_mode(manifest, [0.7, 0.2, 0.1], seed, SplitMode::Uniform)?),
    }
}

fn run_dir_of(checkpoint: &Path) -> Option<&Path> {
    checkpoint.parent()?.parent()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prep {
            manifest,
            out,
            gate_config,
            ratio,
            blank_max,
        } => {
            let mut cfg = match gate_config {
                Some(path) => toml::from_str(&std::fs::read_to_string(&path)?)
                    .with_context(|| format!("parsing {}", path.display()))?,
                None => GateConfig::default(),
            };
            if let Some(r) = ratio {
                cfg.ratio_threshold = r;
            }
            if let Some(b) = blank_max {
                cfg.blank_max = b;
            }
            let run = prep_dataset(&DatasetManifest::open(&manifest)?, &out, &cfg)?;
            let s = &run.summary;
            println!(
                "{} pairs: {} accepted, {} too few matches, {} alignment failed, {} excess blank",
                s.total, s.accepted, s.rejected_too_few_matches, s.rejected_alignment_failed, s.rejected_excess_blank
            );
        }
        Command::Stats { data, out } => {
            let report = dataset_stats(&DatasetManifest::open(&data)?)?;
            emit(&report.to_json()?, out.as_deref())?;
        }
        Command::Split {
            data,
            out,
            ratios,
            seed,
            stratified,
        } => {
            let manifest = DatasetManifest::open(&data)?;
            let mode = if stratified { SplitMode::Stratified } else { SplitMode::Uniform };
            let split = split_with_mode(&manifest, [ratios[0], ratios[1], ratios[2]], seed, mode)?;
            split.save(&out)?;
            println!("train {} / val {} / test {}", split.train.len(), split.val.len(), split.test.len());
        }
        Command::Train {
            config,
            data,
            out,
            split,
            steps,
        } => {
            let mut cfg = TrainConfig::load(&config)?;
            if let Some(n) = steps {
                cfg.total_steps = n;
                cfg.scheduler_steps = cfg.scheduler_steps.min(n);
            }
            let manifest = DatasetManifest::open(&data)?;
            let split = load_split(&split, &manifest, cfg.seed)?;
            let record = train(&cfg, &split, &manifest, &out)?;
            println!(
                "{} steps in {:.1} s; checkpoint {}",
                record.steps,
                record.wall_clock_secs,
                record.selected_checkpoint().display()
            );
        }
        Command::Eval {
            checkpoint,
            split,
            data,
            split_file,
            config,
            out,
        } => {
            let run_dir = run_dir_of(&checkpoint);
            let split_file = split_file
                .or_else(|| run_dir.map(|d| d.join("split.json")).filter(|p| p.is_file()))
                .context("no --split-file given and none next to the checkpoint")?;
            let config = config.or_else(|| run_dir.map(|d| d.join("config.snapshot")).filter(|p| p.is_file()));
            let (opts, expected) = match config {
                Some(path) => {
                    let cfg = TrainConfig::load(&path)?;
                    (EvalOptions::from_config(&cfg), Some(cfg.model))
                }
                None => (EvalOptions::default(), None),
            };
            let manifest = DatasetManifest::open(&data)?;
            let assignment = SplitAssignment::load(&split_file)?;
            let report = evaluate(&checkpoint, expected.as_ref(), &manifest, &assignment, split, &opts)?;
            emit(&report.to_json()?, out.as_deref())?;
        }
        Command::Ablate {
            config,
            data,
            out,
            split,
            eval_part,
        } => {
            let cfg = TrainConfig::load(&config)?;
            let manifest = DatasetManifest::open(&data)?;
            let split = load_split(&split, &manifest, cfg.seed)?;
            let report = run_ablation(&cfg, &split, &manifest, eval_part, &out)?;
            print!("{}", report.table().to_markdown());
        }
        Command::Segmode {
            config,
            raw_data,
            out,
            split,
            eval_part,
        } => {
            let cfg = TrainConfig::load(&config)?;
            let manifest = DatasetManifest::open(&raw_data)?;
            let split = load_split(&split, &manifest, cfg.seed)?;
            let report = run_segmentation_mode(&cfg, &manifest, &split, eval_part, &out)?;
            print!("{}", report.table().to_markdown());
        }
        Command::Predict {
            checkpoint,
            poor,
            good,
            out,
            resize,
        } => {
            let model = load_model(&checkpoint, None)?;
            let poor = ImageBuffer::load(&poor)?;
            let good = good.map(|p| ImageBuffer::load(&p)).transpose()?;
            let consts = Default::default();
            let mask = predict_images(&ModelPredictor::new(&model), &poor, good.as_ref(), square(resize), &consts)?;
            mask.save(&out)?;
            println!("change ratio {:.4}", hkcd_monitor::change_ratio(&mask));
        }
        Command::Monitor {
            source,
            interval,
            checkpoint,
            sink_url,
            threshold,
            reference,
            mask_dir,
            resize,
            timeout_secs,
        } => {
            let source = FrameSource::detect(source, interval)?;
            let detector = ModelDetector::load(&checkpoint, square(resize), Default::default())?;
            let reference = reference.map(|p| ImageBuffer::load(&p)).transpose()?;
            let sink = WebhookSink::new(sink_url, Duration::from_secs(timeout_secs))?;
            let cfg = MonitorConfig {
                threshold,
                mask_dir,
                ..MonitorConfig::default()
            };
            let records = detect_and_alert(&source, reference.as_ref(), &detector, &sink, &cfg)?;
            for r in &records {
                println!("{}", serde_json::to_string(r)?);
            }
            let failed = records.iter().filter(|r| matches!(r.status, DeliveryStatus::Failed { .. })).count();
            if failed > 0 {
                log::warn!("{failed} of {} alerts could not be delivered", records.iter().filter(|r| r.alerted()).count());
            }
        }
        Command::Synth { out, count, size, seed } => {
            if size % 16 != 0 || size == 0 {
                bail!("size must be a positive multiple of 16");
            }
            let pairs: Vec<_> = (0..count)
                .map(|i| rectangles_pair(&format!("rect_{i:04}"), size, seed.wrapping_add(i as u64)))
                .collect();
            let manifest = write_dataset(&out, &pairs)?;
            println!("wrote {} pairs to {}", manifest.len(), out.display());
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
