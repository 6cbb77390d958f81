use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use monodist_core::features::IndexEntry;
use monodist_core::metrics::BinnedErrorReport;
use monodist_core::pipeline::{
    discover_sequences, evaluate, export_sequence, load_sequence, EvaluationReport, PipelineConfig,
};
use monodist_core::simulate::{run_ensemble, EnsembleConfig, SimulationReport};

mod run_config;

use run_config::pipeline_config;

#[derive(Parser)]
#[command(name = "monodist", version, about = "Monocular distance from bounding-box size change and ego-motion")]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, env = "MONODIST_OUT_DIR", default_value = "monodist-out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a random scene ensemble through the analytic solver.
    Simulate(SimulateArgs),
    /// Evaluate the analytic estimator on KITTI-layout sequences.
    Evaluate(EvaluateArgs),
    /// Write network-input feature containers for KITTI-layout sequences.
    ExportFeatures(DatasetArgs),
    /// Parse every label and oxts file and report counts.
    IngestCheck(DatasetArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Ensemble config (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    object_order: Option<u8>,
    /// Relative std of multiplicative height noise.
    #[arg(long)]
    height_noise: Option<f64>,
    /// Absolute std (meters) of additive camera-displacement noise.
    #[arg(long)]
    imu_noise: Option<f64>,
    #[arg(long)]
    constant_camera_velocity: bool,
    #[arg(long)]
    eps: Option<f64>,
}

#[derive(Args)]
struct DatasetArgs {
    /// Dataset root containing `label_02/`, `oxts/` and `image_02/`.
    #[arg(long)]
    data: PathBuf,
    /// Sequences to process (default: all under `label_02/`).
    #[arg(long = "sequence")]
    sequences: Vec<String>,
    /// Pipeline config (`key = value` lines); flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lookback: Option<i64>,
    #[arg(long)]
    stride: Option<i64>,
    #[arg(long)]
    fps: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    /// Directory of tracker outputs in label format, one `<sequence>.txt` each.
    #[arg(long)]
    predictions: Option<PathBuf>,
}

fn write(dir: &Path, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(dir, name, text)
}

fn write_binned(dir: &Path, prefix: &str, binned: &[BinnedErrorReport]) -> Result<()> {
    for b in binned {
        write(dir, &format!("{prefix}_binned_{}.csv", b.axis.name()), b.to_csv()?)?;
    }
    Ok(())
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

#[derive(Serialize)]
struct SimulateOutput<'a> {
    config_text: String,
    #[serde(flatten)]
    report: &'a SimulationReport,
}

fn simulate(args: SimulateArgs, out: &Path) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            EnsembleConfig::from_config_str(&text).with_context(|| format!("in {}", path.display()))?
        }
        None => EnsembleConfig::default(),
    };
    if let Some(v) = args.scenes {
        cfg.scenes = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.object_order {
        cfg.object_order = v;
    }
    if let Some(v) = args.height_noise {
        cfg.height_noise = v;
    }
    if let Some(v) = args.imu_noise {
        cfg.imu_noise = v;
    }
    if let Some(v) = args.eps {
        cfg.eps_singular = v;
    }
    cfg.constant_camera_velocity |= args.constant_camera_velocity;
    cfg.validate()?;

    let report = run_ensemble(&cfg)?;
    create_out(out)?;
    write_json(
        out,
        "simulate.json",
        &SimulateOutput {
            config_text: cfg.to_config_string(),
            report: &report,
        },
    )?;
    let text = report.to_text();
    write(out, "simulate.txt", &text)?;
    write_binned(out, "simulate", &report.binned)?;
    print!("{text}");
    Ok(())
}

fn sequences(args: &DatasetArgs) -> Result<Vec<String>> {
    if args.sequences.is_empty() {
        let names = discover_sequences(&args.data)?;
        if names.is_empty() {
            bail!("no sequences under {}", args.data.join("label_02").display());
        }
        Ok(names)
    } else {
        Ok(args.sequences.clone())
    }
}

#[derive(Serialize)]
struct EvaluateOutput<'a> {
    config_text: String,
    data: &'a Path,
    predictions: Option<&'a Path>,
    #[serde(flatten)]
    report: &'a EvaluationReport,
}

fn run_evaluate(args: EvaluateArgs, out: &Path) -> Result<()> {
    let (cfg, config_text) = pipeline_config(&args.dataset)?;
    let names = sequences(&args.dataset)?;
    let inputs = names
        .par_iter()
        .map(|name| {
            load_sequence(
                &args.dataset.data,
                name,
                args.predictions.as_deref(),
                cfg.scheme.frame_rate,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let report = evaluate(&inputs, &cfg)?;
    create_out(out)?;
    write_json(
        out,
        "evaluate.json",
        &EvaluateOutput {
            config_text,
            data: &args.dataset.data,
            predictions: args.predictions.as_deref(),
            report: &report,
        },
    )?;
    let text = report.to_text();
    write(out, "evaluate.txt", &text)?;
    write_binned(out, "evaluate", &report.binned)?;
    print!("{text}");
    Ok(())
}

#[derive(Serialize)]
struct ExportSummary<'a> {
    config_text: String,
    config: &'a PipelineConfig,
    data: &'a Path,
    sequences: Vec<SequenceSummary>,
}

#[derive(Serialize)]
struct SequenceSummary {
    sequence: String,
    bundles: usize,
    index: String,
}

fn export_features(args: DatasetArgs, out: &Path) -> Result<()> {
    let (cfg, config_text) = pipeline_config(&args)?;
    let names = sequences(&args)?;
    let exported = names
        .par_iter()
        .map(|name| {
            let input = load_sequence(&args.data, name, None, cfg.scheme.frame_rate)?;
            Ok((name.clone(), export_sequence(&input, &cfg)?))
        })
        .collect::<Result<Vec<_>>>()?;

    let dir = out.join("features");
    create_out(&dir)?;
    let mut summary = Vec::new();
    for (name, items) in &exported {
        for item in items {
            write(&dir, &item.entry.file, &item.bytes)?;
        }
        let index: Vec<&IndexEntry> = items.iter().map(|i| &i.entry).collect();
        let index_name = format!("{name}_index.json");
        write_json(&dir, &index_name, &index)?;
        println!("sequence {name}: {} bundles", items.len());
        summary.push(SequenceSummary {
            sequence: name.clone(),
            bundles: items.len(),
            index: format!("features/{index_name}"),
        });
    }
    write_json(
        out,
        "export.json",
        &ExportSummary {
            config_text,
            config: &cfg,
            data: &args.data,
            sequences: summary,
        },
    )
}

fn ingest_check(args: DatasetArgs) -> Result<()> {
    let (cfg, _) = pipeline_config(&args)?;
    for name in sequences(&args)? {
        let input = load_sequence(&args.data, &name, None, cfg.scheme.frame_rate)?;
        let excluded = input.labels.iter().filter(|r| r.excluded).count();
        let tracks: std::collections::BTreeSet<i64> = input
            .labels
            .iter()
            .filter(|r| !r.excluded)
            .map(|r| r.track_id)
            .collect();
        println!(
            "sequence {name}: {} labels ({excluded} excluded), {} tracks, {} oxts records",
            input.labels.len(),
            tracks.len(),
            input.imu.len()
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => simulate(args, &cli.out),
        Command::Evaluate(args) => run_evaluate(args, &cli.out),
        Command::ExportFeatures(args) => export_features(args, &cli.out),
        Command::IngestCheck(args) => ingest_check(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
