use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};

use splitinfer::codec::{load_codec, CodecConfig, CodecError};
use splitinfer::harness::{
    self, emit_report, load_dataset, load_points, HarnessError, ReportFormat, SweepGrid, SweepOptions,
};
use splitinfer::model::{load_model, ModelError, ModelGraph, SplitPlan};
use splitinfer::planner::{
    pareto_frontier, rank_by_weights, select_split, Constraints, Objective, PlanError, TradeoffPoint,
};
use splitinfer::profiler::profile_model;
use splitinfer::transport::{self, TransportError};

#[derive(Parser)]
#[command(name = "splitinfer", version, about = "Split CNN inference with compressed activations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-layer FLOPs and activation sizes as CSV.
    Profile {
        model: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a codec on the calibration split at cut k.
    Calibrate {
        model: PathBuf,
        data: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        b: u32,
        #[arg(long, default_value_t = 4.0)]
        clip: f32,
        #[arg(long, default_value_t = 200)]
        calibration_limit: usize,
        #[arg(short, long, default_value = "codec.splitcdc")]
        out: PathBuf,
    },
    /// Accuracy and payload size of one split on the test split.
    Eval {
        model: PathBuf,
        data: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        codec: Option<PathBuf>,
    },
    /// Calibrate and evaluate every (k, codec config) cell.
    Sweep {
        model: PathBuf,
        data: PathBuf,
        /// Comma-separated cuts, or "all" for every cut a codec can use.
        #[arg(long, default_value = "all")]
        k_list: String,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long, default_value_t = 200)]
        calibration_limit: usize,
        /// Report file; `.json` selects JSON, anything else CSV. Stdout CSV if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pick a split from a sweep report under constraints.
    Plan {
        report: PathBuf,
        #[arg(long)]
        max_bytes: Option<f64>,
        #[arg(long)]
        min_acc: Option<f64>,
        #[arg(long)]
        max_flops: Option<u64>,
        #[arg(long, default_value = "max-accuracy")]
        objective: Objective,
        /// Rank all points by `w_acc,w_bytes,w_flops` instead of constraints.
        #[arg(long, value_delimiter = ',', num_args = 3)]
        weights: Option<Vec<f64>>,
    },
    /// Run the suffix behind a TCP port.
    Serve {
        model: PathBuf,
        codec: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 7878)]
        port: u16,
    },
    /// Run the prefix locally and the suffix on a server.
    Infer {
        model: PathBuf,
        codec: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value = "127.0.0.1:7878")]
        host: String,
        /// SPLITDAT file holding the image.
        #[arg(long)]
        image: PathBuf,
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long, default_value_t = 30)]
        timeout_secs: u64,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("{0}")]
    Usage(String),
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        Self::Harness(e.into())
    }
}

impl From<CodecError> for CliError {
    fn from(e: CodecError) -> Self {
        Self::Harness(e.into())
    }
}

impl From<PlanError> for CliError {
    fn from(e: PlanError) -> Self {
        Self::Harness(e.into())
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        Self::Harness(e.into())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        let model_format = |e: &ModelError| !matches!(e, ModelError::Io(_) | ModelError::InvalidCut(_));
        let codec_format = |e: &CodecError| {
            matches!(
                e,
                CodecError::BadMagic
                    | CodecError::VersionUnsupported(_)
                    | CodecError::Truncated
                    | CodecError::ChecksumMismatch
                    | CodecError::CorruptPayload(_)
                    | CodecError::TrailingGarbage
            )
        };
        match self {
            Self::Harness(HarnessError::Plan(PlanError::Infeasible { .. })) => 2,
            Self::Harness(
                HarnessError::Format(_)
                | HarnessError::Json(_)
                | HarnessError::Csv(_)
                | HarnessError::Plan(PlanError::BadRecord(_) | PlanError::Csv(_) | PlanError::Json(_)),
            ) => 3,
            Self::Harness(HarnessError::Model(e)) if model_format(e) => 3,
            Self::Harness(HarnessError::Codec(e)) if codec_format(e) => 3,
            Self::Transport(TransportError::Model(e)) if model_format(e) => 3,
            Self::Transport(TransportError::Codec(e)) if codec_format(e) => 3,
            _ => 1,
        }
    }
}

fn output(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn parse_k_list(s: &str, model: &ModelGraph) -> Result<Vec<usize>, CliError> {
    if s == "all" {
        return Ok(model.codec_cuts());
    }
    s.split(',').map(|t| t.trim().parse().map_err(|_| CliError::Usage(format!("bad cut {t:?} in --k-list")))).collect()
}

fn describe(p: &TradeoffPoint) -> String {
    let codec = match p.codec {
        Some(c) => format!("d={} m={} b={} clip={}", c.block_size, c.components, c.quant_bits, c.clip_sigmas),
        None => "raw".to_string(),
    };
    format!(
        "k={} {codec} local_flops={} mean_payload_bytes={:.2} top1_accuracy={:.4}",
        p.k, p.local_flops, p.mean_payload_bytes, p.top1_accuracy
    )
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut out = io::stdout().lock();
    match cli.command {
        Command::Profile { model, out } => {
            let model = load_model(model)?;
            let profile = profile_model(&model);
            profile.write_csv(output(out.as_deref())?).map_err(HarnessError::from)?;
        }
        Command::Calibrate { model, data, k, d, m, b, clip, calibration_limit, out } => {
            let model = load_model(model)?;
            let dataset = load_dataset(data)?;
            let config = CodecConfig::new(d, m, b).with_clip(clip);
            let split = dataset.split();
            let idx: Vec<usize> = split.calibration.into_iter().take(calibration_limit).collect();
            let (images, _) = dataset.select(&idx);
            let cm = harness::calibrate(&model, &images, k, config)?;
            cm.save(&out)?;
            eprintln!(
                "fitted {} blocks on {} images at k={k}; model_id {:016x} -> {}",
                cm.blocks().len(),
                images.len(),
                cm.model_id(),
                out.display()
            );
        }
        Command::Eval { model, data, k, codec } => {
            let model = load_model(model)?;
            let dataset = load_dataset(data)?;
            let codec = codec.map(load_codec).transpose()?;
            let split = dataset.split();
            let (images, labels) = dataset.select(&split.test);
            let point = harness::evaluate_split(&model, &images, &labels, k, codec.as_ref(), &Default::default())?;
            writeln!(out, "{}", serde_json::to_string_pretty(&point).map_err(HarnessError::from)?)?;
        }
        Command::Sweep { model, data, k_list, grid, calibration_limit, out } => {
            let model = load_model(model)?;
            let dataset = load_dataset(data)?;
            let k_list = parse_k_list(&k_list, &model)?;
            let grid = SweepGrid::load(grid)?;
            let options = SweepOptions { calibration_limit, ..Default::default() };
            let report = harness::sweep(&model, &dataset, &k_list, &grid, &options)?;
            let format = out.as_deref().map_or(ReportFormat::Csv, ReportFormat::from_path);
            let mut w = output(out.as_deref())?;
            emit_report(&report, format, &mut w)?;
            w.flush()?;
        }
        Command::Plan { report, max_bytes, min_acc, max_flops, objective, weights } => {
            let points = load_points(report)?;
            let constraints = Constraints { max_bytes, max_local_flops: max_flops, min_accuracy: min_acc };
            if let Some(w) = weights {
                for i in rank_by_weights(&points, [w[0], w[1], w[2]]) {
                    writeln!(out, "{}", describe(&points[i]))?;
                }
            } else if constraints.is_empty() {
                for p in pareto_frontier(&points)? {
                    writeln!(out, "{}", describe(&p))?;
                }
            } else {
                match select_split(&points, &constraints, objective) {
                    Ok(p) => writeln!(out, "{}", describe(&p))?,
                    Err(PlanError::Infeasible { nearest }) => {
                        eprintln!("infeasible; nearest: {}", describe(&nearest));
                        return Err(PlanError::Infeasible { nearest }.into());
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        }
        Command::Serve { model, codec, k, port } => {
            let model = load_model(model)?;
            let codec = load_codec(codec)?;
            eprintln!("serving k={k} on port {port}");
            transport::serve(model, codec, k, port)?;
        }
        Command::Infer { model, codec, k, host, image, index, timeout_secs } => {
            let model = load_model(model)?;
            let codec = load_codec(codec)?;
            let dataset = load_dataset(image)?;
            if index >= dataset.len() {
                return Err(CliError::Usage(format!("image index {index} outside 0..{}", dataset.len())));
            }
            SplitPlan::new(&model, k)?;
            let r = transport::remote_infer(
                &model,
                &codec,
                k,
                host.as_str(),
                dataset.image(index),
                Duration::from_secs(timeout_secs),
            )?;
            writeln!(out, "label {} (true {}), {} bytes sent", r.label, dataset.label(index), r.bytes_sent)?;
            let logits: Vec<String> = r.logits.data().iter().map(|v| format!("{v:.4}")).collect();
            writeln!(out, "logits {}", logits.join(" "))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Harness(HarnessError::Io(e))) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
