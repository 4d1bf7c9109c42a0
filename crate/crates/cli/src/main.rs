//! `drgrade`: preprocess fundus images, train the ensemble, grade images,
//! evaluate segmentations, render reports and generate synthetic data.
//!
//! Exit status: 0 on success, 1 when some items failed, 2 on a fatal error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use drgrade_core::datasets::{files_with_ext, load_grade_labels};
use drgrade_core::pipeline::commands::{par_map, ItemFailure, IMAGE_EXTS};
use drgrade_core::pipeline::*;
use drgrade_core::{Error, Result};
use log::{error, info, warn};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "drgrade", version, about = "Diabetic-retinopathy grading pipeline")]
struct Cli {
    /// Pipeline config JSON; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Output format on stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Preprocess every PNG/PPM in a directory.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Grading CSV; with --features-out, labelled images get feature rows.
        #[arg(long, requires = "features_out")]
        labels: Option<PathBuf>,
        #[arg(long, requires = "labels")]
        features_out: Option<PathBuf>,
    },
    /// Train the six classifiers and the weighted ensemble from feature CSVs.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        val: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grade images (files or directories).
    Grade {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Ensemble JSON; overrides `models.ensemble_path`.
        #[arg(long)]
        ensemble: Option<PathBuf>,
        /// Write preprocessed and lesion overlay PNGs here.
        #[arg(long)]
        overlay_dir: Option<PathBuf>,
        /// Write one `<id>.json` report per image here.
        #[arg(long)]
        report_dir: Option<PathBuf>,
    },
    /// Compare predicted lesion masks with ground truth.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Also write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a grading, metrics or evaluation JSON as text.
    Report { file: PathBuf },
    /// Write a synthetic dataset with images, masks, labels and a config.
    Synthgen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        n_per_class: usize,
        /// Square image side in pixels.
        #[arg(long, default_value_t = 256)]
        size: usize,
        #[arg(long, default_value_t = 0.3)]
        val_fraction: f64,
    },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn report_failures(failed: &[ItemFailure]) -> bool {
    for f in failed {
        error!("{}: {}", f.item, f.error);
    }
    failed.is_empty()
}

fn grade_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            out.extend(files_with_ext(p, IMAGE_EXTS)?);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Runs one verb; `Ok(false)` means some items failed.
fn run(cli: &Cli) -> Result<bool> {
    let pool = worker_pool(cli.jobs)?;
    match &cli.command {
        Command::Preprocess {
            input,
            output,
            labels,
            features_out,
        } => {
            let cfg = load_config(cli)?;
            let labels = labels.as_ref().map(load_grade_labels).transpose()?;
            let export = labels
                .as_ref()
                .zip(features_out.as_deref())
                .map(|(labels, csv)| FeatureExport { labels, csv });
            let out = cmd_preprocess(&cfg, input, output, &pool, export)?;
            info!(
                "preprocessed {} images, {} failed",
                out.processed.len(),
                out.failed.len()
            );
            match cli.format {
                Format::Json => print_json(&out)?,
                Format::Text => {
                    println!("preprocessed {} images into {}", out.processed.len(), output.display());
                    if let Some(csv) = features_out {
                        println!("wrote {} feature rows to {}", out.feature_rows, csv.display());
                    }
                }
            }
            Ok(report_failures(&out.failed))
        }
        Command::Train { train, val, out } => {
            let cfg = load_config(cli)?;
            let result = pool.install(|| cmd_train(&cfg, train, val, out))?;
            match cli.format {
                Format::Json => print_json(&result)?,
                Format::Text => {
                    print!("{}", result.table.render_text());
                    println!("ensemble written to {}", result.ensemble_path.display());
                }
            }
            Ok(true)
        }
        Command::Grade {
            inputs,
            ensemble,
            overlay_dir,
            report_dir,
        } => {
            let mut cfg = load_config(cli)?;
            if let Some(e) = ensemble {
                cfg.models.ensemble_path = Some(e.clone());
            }
            let grader = Grader::new(&cfg)?;
            let images = grade_inputs(inputs)?;
            let results = pool.install(|| par_map(&images, |p| grader.grade(p, overlay_dir.as_deref())));
            let mut failed = Vec::new();
            let mut reports = Vec::new();
            for (path, r) in images.iter().zip(results) {
                match r {
                    Ok(r) => {
                        if let Some(dir) = report_dir {
                            write_file(&dir.join(format!("{}.json", r.source_id)), &r.to_json())?;
                        }
                        reports.push(r);
                    }
                    Err(e) => failed.push(ItemFailure {
                        item: path.display().to_string(),
                        error: e.to_string(),
                    }),
                }
            }
            match cli.format {
                Format::Json if images.len() == 1 && reports.len() == 1 => print_json(&reports[0])?,
                Format::Json => print_json(&reports)?,
                Format::Text => {
                    for r in &reports {
                        println!("{}", r.render_text());
                    }
                }
            }
            if images.is_empty() {
                warn!("no images to grade");
            }
            Ok(report_failures(&failed))
        }
        Command::Evaluate { pred, truth, out } => {
            let cfg = load_config(cli)?;
            let report = cmd_evaluate(&cfg, pred, truth)?;
            if let Some(out) = out {
                write_file(out, &serde_json::to_string_pretty(&report)?)?;
            }
            match cli.format {
                Format::Json => print_json(&report)?,
                Format::Text => print!("{}", report.render_text()),
            }
            Ok(true)
        }
        Command::Report { file } => {
            match cli.format {
                Format::Text => print!("{}", render_report_file(file)?),
                Format::Json => {
                    render_report_file(file)?;
                    print!("{}", std::fs::read_to_string(file).map_err(|e| Error::io(file, e))?);
                }
            }
            Ok(true)
        }
        Command::Synthgen {
            out,
            n_per_class,
            size,
            val_fraction,
        } => {
            let opts = SynthTreeOptions {
                seed: cli.seed.unwrap_or(0),
                n_per_class: *n_per_class,
                dims: (*size, *size),
                val_fraction: *val_fraction,
            };
            let summary = write_synth_tree(out, &opts, &pool)?;
            match cli.format {
                Format::Json => print_json(&summary)?,
                Format::Text => println!(
                    "wrote {} images ({} train / {} val feature rows); config at {}",
                    summary.images,
                    summary.train_rows,
                    summary.val_rows,
                    summary.config.display()
                ),
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            error!("{e}");
            ExitCode::from(2)
        }
    }
}
