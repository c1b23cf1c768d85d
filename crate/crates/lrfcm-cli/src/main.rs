//! Command-line frontend: segment, evaluate, generate, ablate, decompose.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lrfcm::clustering::ThresholdConvention;
use lrfcm::error::Error;
use lrfcm::pipeline::{self, PipelineConfig, SegmentOutputs};
use lrfcm::synth::{NoiseKind, NoiseSpec};

#[derive(Parser)]
#[command(name = "lrfcm", version, about = "Residual-sparse fuzzy C-means image segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment an image and write the segmented image, labels and report.
    Segment(SegmentArgs),
    /// Compute accuracy and entropy metrics for label/segmentation files.
    Evaluate(EvaluateArgs),
    /// Write the four-level synthetic test image, a noisy version, and its
    /// ground truth.
    Generate(GenerateArgs),
    /// Run the ten component-switch combinations and print a comparison
    /// table.
    Ablate(AblateArgs),
    /// Dump the nine frame-decomposition channels as PGM files.
    Decompose(DecomposeArgs),
}

/// Pipeline parameters; unset flags fall back to `--config` values and then
/// to the defaults.
#[derive(Args)]
struct ParamArgs {
    /// JSON config file with the same field names as the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long)]
    fuzzifier: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta_scale: Option<f64>,
    #[arg(long)]
    window_radius: Option<usize>,
    #[arg(long)]
    se_size: Option<usize>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// `magnitude` keeps values whose magnitude reaches the threshold;
    /// `literal` zeroes all negatives.
    #[arg(long)]
    threshold_convention: Option<ThresholdConvention>,
    /// Skip the morphological-reconstruction prefilter.
    #[arg(long)]
    no_mr: bool,
    /// Cluster raw intensities instead of frame features.
    #[arg(long)]
    no_frames: bool,
    /// Skip residual estimation.
    #[arg(long)]
    no_l0: bool,
    /// Skip label smoothing.
    #[arg(long)]
    no_smooth: bool,
}

impl ParamArgs {
    fn build(&self) -> Result<PipelineConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::from_json_file(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(v) = self.clusters {
            cfg.clusters = v;
        }
        if let Some(v) = self.fuzzifier {
            cfg.fuzzifier = v;
        }
        if let Some(v) = self.epsilon {
            cfg.epsilon = v;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.beta_scale {
            cfg.beta_scale = v;
        }
        if let Some(v) = self.window_radius {
            cfg.window_radius = v;
        }
        if let Some(v) = self.se_size {
            cfg.se_size = v;
        }
        if let Some(v) = self.max_iter {
            cfg.max_iter = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.threshold_convention {
            cfg.threshold_convention = v;
        }
        if self.no_mr {
            cfg.enable_mr_filter = false;
        }
        if self.no_frames {
            cfg.enable_frames = false;
        }
        if self.no_l0 {
            cfg.enable_l0 = false;
        }
        if self.no_smooth {
            cfg.enable_label_smoothing = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SegmentArgs {
    /// Input image (PGM, PPM or PNG).
    input: PathBuf,
    /// Segmented image destination; the extension picks the codec.
    #[arg(long, short)]
    output: PathBuf,
    /// Label image destination (PGM with spread gray levels).
    #[arg(long)]
    labels_out: Option<PathBuf>,
    /// JSON run report destination.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Objective trace CSV destination.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Ground-truth label image; adds metrics to the report.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[command(flatten)]
    params: ParamArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Predicted label image.
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth label image (enables SA).
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Segmented image (enables the entropy numbers).
    #[arg(long)]
    seg_image: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 256)]
    height: usize,
    #[arg(long, default_value_t = 256)]
    width: usize,
    /// gaussian, impulse or mixed.
    #[arg(long, default_value = "mixed")]
    noise: NoiseKind,
    /// Gaussian standard deviation in gray levels.
    #[arg(long, default_value_t = 0.0)]
    std: f64,
    /// Fraction of pixels hit by impulse noise.
    #[arg(long, default_value_t = 0.0)]
    density: f64,
    #[arg(long, default_value_t = 0)]
    noise_seed: u64,
    #[arg(long)]
    clean: PathBuf,
    #[arg(long)]
    noisy: PathBuf,
    #[arg(long)]
    truth: PathBuf,
}

#[derive(Args)]
struct AblateArgs {
    /// Input image; omit with --synthetic.
    input: Option<PathBuf>,
    /// Use the built-in four-level synthetic with mixed noise instead of a
    /// file.
    #[arg(long, conflicts_with = "input")]
    synthetic: bool,
    #[arg(long, default_value_t = 30.0)]
    std: f64,
    #[arg(long, default_value_t = 0.2)]
    density: f64,
    #[arg(long, default_value_t = 0)]
    noise_seed: u64,
    /// Ground-truth label image (implied for --synthetic).
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Write the table as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    params: ParamArgs,
}

#[derive(Args)]
struct DecomposeArgs {
    input: PathBuf,
    #[arg(long)]
    outdir: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let mut source = std::error::Error::source(&err);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            let code = match err.root() {
                Error::Param(_) | Error::Precondition(_) => 2,
                Error::Io { .. } | Error::Format { .. } | Error::Dimension(_) => 3,
                Error::Divergence { .. } => 4,
                Error::Stage { .. } => 1,
            };
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Segment(args) => {
            let cfg = args.params.build()?;
            let outputs = SegmentOutputs {
                segmented: args.output,
                labels: args.labels_out,
                report: args.report,
                trace: args.trace,
            };
            let report = pipeline::segment(&args.input, &cfg, &outputs, args.truth.as_deref())?;
            println!(
                "segmented {} in {} iterations ({:.0} ms)",
                args.input.display(),
                report.iterations,
                report.stage_times_ms.total
            );
            if let Some(metrics) = &report.metrics {
                if let Some(sa) = metrics.sa_percent {
                    println!("SA = {sa:.4}%");
                }
                if let Some(ei) = metrics.ei {
                    println!("EI = {ei:.4}");
                }
            }
            Ok(())
        }
        Command::Evaluate(args) => {
            let report =
                pipeline::evaluate(&args.pred, args.truth.as_deref(), args.seg_image.as_deref())?;
            println!(
                "{}",
                serde_json::to_string_pretty(&report)
                    .map_err(|e| Error::Param(format!("report serialization: {e}")))?
            );
            Ok(())
        }
        Command::Generate(args) => {
            let spec = NoiseSpec {
                kind: args.noise,
                std: args.std,
                density: args.density,
                seed: args.noise_seed,
            };
            pipeline::generate(
                args.height,
                args.width,
                &spec,
                &args.clean,
                &args.noisy,
                &args.truth,
            )?;
            println!(
                "wrote {}, {}, {}",
                args.clean.display(),
                args.noisy.display(),
                args.truth.display()
            );
            Ok(())
        }
        Command::Ablate(args) => {
            let cfg = args.params.build()?;
            let (image, truth) = if args.synthetic {
                let (clean, truth) =
                    lrfcm::synth::generate_four_level(256, 256)?;
                let noisy =
                    lrfcm::synth::add_mixed(&clean, args.std, args.density, args.noise_seed)?;
                (lrfcm::Image::Gray(noisy), Some(truth))
            } else {
                let input = args.input.ok_or_else(|| {
                    Error::Param("ablate needs an input image or --synthetic".into())
                })?;
                let image = lrfcm::io::read_image(&input)?;
                let truth = match &args.truth {
                    Some(path) => Some(pipeline::labels_from_image(&lrfcm::io::read_image(path)?)?),
                    None => None,
                };
                (image, truth)
            };
            let rows = pipeline::ablate(&image, &cfg, truth.as_ref());
            println!("{:<4} {:<7} {:<4} {:<7} {:>10} {:>11}", "mr", "frames", "l0", "smooth", "SA (%)", "iterations");
            for row in &rows {
                let mark = |b: bool| if b { "+" } else { "-" };
                let sa = row
                    .sa_percent
                    .map(|v| format!("{v:.4}"))
                    .unwrap_or_else(|| "-".into());
                let iters = row
                    .iterations
                    .map(|v| v.to_string())
                    .unwrap_or_else(|| "-".into());
                println!(
                    "{:<4} {:<7} {:<4} {:<7} {sa:>10} {iters:>11}{}",
                    mark(row.mr_filter),
                    mark(row.frames),
                    mark(row.l0),
                    mark(row.label_smoothing),
                    row.error
                        .as_ref()
                        .map(|e| format!("  error: {e}"))
                        .unwrap_or_default()
                );
            }
            if let Some(path) = &args.report {
                let json = serde_json::to_string_pretty(&rows)
                    .map_err(|e| Error::Param(format!("report serialization: {e}")))?;
                std::fs::write(path, json).map_err(|e| Error::io(path, e))?;
            }
            Ok(())
        }
        Command::Decompose(args) => {
            let err = pipeline::decompose_debug(&args.input, &args.outdir)?;
            println!("wrote 9 channel files to {}", args.outdir.display());
            println!("max reconstruction error: {err:.3e}");
            Ok(())
        }
    }
}
