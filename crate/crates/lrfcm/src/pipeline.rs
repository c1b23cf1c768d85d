//! End-to-end segmentation pipeline and its file-level entry points.
//!
//! A run filters the observed image with the closing reconstruction, blends
//! it with the original, extracts frame features, clusters them with the
//! sparse-residual solver, smooths the argmax labels, and reconstructs a
//! segmented image from the per-label prototypes. Each stage can be toggled
//! off for ablation studies.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::clustering::{
    self, NeighborhoodSpec, SolverConfig, SolverResult, ThresholdConvention,
};
use crate::error::{Error, Result};
use crate::frames::{self, FeatureSet};
use crate::image::{GrayImage, Image};
use crate::io;
use crate::labeling::{self, LabelImage};
use crate::metrics::{self, EvaluationReport};
use crate::morphology::{self, StructuringElement};
use crate::synth::{self, NoiseSpec};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub clusters: usize,
    pub fuzzifier: f64,
    pub epsilon: f64,
    /// Weight of the filtered image in the blended input.
    pub alpha: f64,
    /// Residual regularization scale relative to per-channel deviation.
    pub beta_scale: f64,
    pub window_radius: usize,
    pub se_size: usize,
    pub levels: usize,
    pub max_iter: usize,
    pub seed: u64,
    pub threshold_convention: ThresholdConvention,
    pub enable_mr_filter: bool,
    pub enable_frames: bool,
    pub enable_l0: bool,
    pub enable_label_smoothing: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            clusters: 2,
            fuzzifier: 2.0,
            epsilon: 1e-6,
            alpha: 3.8,
            beta_scale: 70.0,
            window_radius: 1,
            se_size: 3,
            levels: 1,
            max_iter: 300,
            seed: 0,
            threshold_convention: ThresholdConvention::Magnitude,
            enable_mr_filter: true,
            enable_frames: true,
            enable_l0: true,
            enable_label_smoothing: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clusters == 0 {
            return Err(Error::Param("clusters must be at least 1".into()));
        }
        if !(self.fuzzifier > 1.0) {
            return Err(Error::Param("fuzzifier must be > 1".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Param("epsilon must be > 0".into()));
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::Param("alpha must be >= 0".into()));
        }
        if !(self.beta_scale >= 0.0) {
            return Err(Error::Param("beta-scale must be >= 0".into()));
        }
        if self.se_size % 2 == 0 || self.se_size == 0 {
            return Err(Error::Param("se-size must be odd".into()));
        }
        if self.levels != 1 {
            return Err(Error::Param("only 1 decomposition level is supported".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Param("max-iter must be at least 1".into()));
        }
        Ok(())
    }

    /// Load a JSON config file; missing fields take their defaults.
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Param(format!("config {}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct StageTimesMs {
    pub read: f64,
    pub filter: f64,
    pub features: f64,
    pub clustering: f64,
    pub labeling: f64,
    pub rendering: f64,
    pub write: f64,
    pub total: f64,
}

/// In-memory result of one pipeline run.
pub struct PipelineRun {
    /// Labels straight from the membership argmax.
    pub labels_raw: LabelImage,
    /// Final (possibly smoothed) labels.
    pub labels: LabelImage,
    pub segmented: Image,
    pub solver: SolverResult,
    pub stage_times: StageTimesMs,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub config: PipelineConfig,
    pub iterations: usize,
    pub nonzero_residuals: usize,
    pub reseeded_clusters: usize,
    pub stage_times_ms: StageTimesMs,
    pub metrics: Option<EvaluationReport>,
    pub outputs: OutputPaths,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct OutputPaths {
    pub segmented: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub trace: Option<PathBuf>,
}

/// File destinations for [`segment`]; everything except the segmented image
/// is optional.
#[derive(Debug, Clone, Default)]
pub struct SegmentOutputs {
    pub segmented: PathBuf,
    pub labels: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub trace: Option<PathBuf>,
}

fn now_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Run the full pipeline on an already-loaded image.
pub fn run_pipeline(input: &Image, cfg: &PipelineConfig) -> Result<PipelineRun> {
    cfg.validate()?;
    let total_start = Instant::now();
    let mut times = StageTimesMs::default();
    let se = StructuringElement::square(cfg.se_size)?;

    let channels: Vec<&GrayImage> = match input {
        Image::Gray(g) => vec![g],
        Image::Color(c) => c.channels().to_vec(),
    };

    // filtering: closing reconstruction per channel, then the weighted blend
    let stage = Instant::now();
    let blended: Vec<GrayImage> = channels
        .iter()
        .map(|g| -> Result<GrayImage> {
            let filtered = if cfg.enable_mr_filter {
                morphology::closing_reconstruction(g, &se)?
            } else {
                (*g).clone()
            };
            morphology::weighted_sum(g, &filtered, cfg.alpha)
        })
        .collect::<Result<_>>()
        .map_err(Error::in_stage("filter"))?;
    times.filter = now_ms(stage);

    // feature extraction
    let stage = Instant::now();
    let per_channel: Vec<FeatureSet> = blended
        .iter()
        .map(|g| {
            if cfg.enable_frames {
                frames::decompose(g, cfg.levels)
            } else {
                Ok(FeatureSet::from_intensity(g))
            }
        })
        .collect::<Result<_>>()
        .map_err(Error::in_stage("features"))?;
    let bands = per_channel[0].channels();
    let features = FeatureSet::stack(&per_channel).map_err(Error::in_stage("features"))?;
    times.features = now_ms(stage);

    // clustering
    let stage = Instant::now();
    let beta = clustering::estimate_beta(&features, cfg.beta_scale);
    let solver_cfg = SolverConfig {
        clusters: cfg.clusters,
        fuzzifier: cfg.fuzzifier,
        epsilon: cfg.epsilon,
        max_iter: cfg.max_iter,
        beta,
        seed: cfg.seed,
        threshold_convention: cfg.threshold_convention,
        residual_updates: cfg.enable_l0,
    };
    let nb = NeighborhoodSpec::new(cfg.window_radius);
    let mut solver = clustering::run_lrfcm(&features, &nb, &solver_cfg)
        .map_err(Error::in_stage("clustering"))?;
    // deterministic, intensity-correlated cluster order
    let low_pass: Vec<usize> = (0..channels.len()).map(|k| k * bands).collect();
    let (u, v, _) =
        clustering::order_clusters_by_intensity(&solver.partition, &solver.prototypes, &low_pass);
    solver.partition = u;
    solver.prototypes = v;
    times.clustering = now_ms(stage);

    // labels
    let stage = Instant::now();
    let labels_raw = labeling::argmax_labels(&solver.partition, input.height(), input.width())
        .map_err(Error::in_stage("labeling"))?;
    let labels = if cfg.enable_label_smoothing {
        labeling::smooth_labels(&labels_raw, &se).map_err(Error::in_stage("labeling"))?
    } else {
        labels_raw.clone()
    };
    times.labeling = now_ms(stage);

    // segmented image
    let stage = Instant::now();
    let segmented = if cfg.enable_frames {
        let rendered: Vec<GrayImage> = (0..channels.len())
            .map(|k| {
                let protos = solver.prototypes.slice_channels(k * bands..(k + 1) * bands);
                labeling::render_segmentation(&labels, &protos)
            })
            .collect::<Result<_>>()
            .map_err(Error::in_stage("render"))?;
        assemble_image(rendered)?
    } else {
        // raw-intensity features: the prototype value itself is the pixel
        let rendered: Vec<GrayImage> = (0..channels.len())
            .map(|k| {
                let data = labels
                    .labels()
                    .iter()
                    .map(|&l| solver.prototypes.vector(l as usize - 1)[k])
                    .collect();
                GrayImage::new(input.height(), input.width(), data)
            })
            .collect::<Result<_>>()
            .map_err(Error::in_stage("render"))?;
        assemble_image(rendered)?
    };
    times.rendering = now_ms(stage);
    times.total = now_ms(total_start);

    Ok(PipelineRun {
        labels_raw,
        labels,
        segmented,
        solver,
        stage_times: times,
    })
}

fn assemble_image(mut rendered: Vec<GrayImage>) -> Result<Image> {
    match rendered.len() {
        1 => Ok(Image::Gray(rendered.pop().unwrap())),
        3 => {
            let b = rendered.pop().unwrap();
            let g = rendered.pop().unwrap();
            let r = rendered.pop().unwrap();
            Ok(Image::Color(crate::image::ColorImage::new(r, g, b)?))
        }
        n => Err(Error::Dimension(format!("unexpected channel count {n}"))),
    }
}

/// Objective-trace CSV: one row per sweep.
pub fn trace_csv(solver: &SolverResult) -> String {
    let mut out = String::from("iteration,objective,delta_u,nonzero_residuals\n");
    for row in &solver.trace {
        let delta = row
            .delta_u
            .map(|d| format!("{d:.12e}"))
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{:.12e},{},{}",
            row.iteration, row.objective, delta, row.nonzero_residuals
        );
    }
    out
}

/// Segment an image file end to end and write the segmented image, the
/// label image, the objective trace and a JSON run report. Partial outputs
/// are removed if any later stage fails.
pub fn segment(
    input: impl AsRef<Path>,
    cfg: &PipelineConfig,
    outputs: &SegmentOutputs,
    truth: Option<&Path>,
) -> Result<RunReport> {
    let mut written: Vec<PathBuf> = Vec::new();
    let result = segment_inner(input.as_ref(), cfg, outputs, truth, &mut written);
    if result.is_err() {
        for path in written {
            let _ = fs::remove_file(path);
        }
    }
    result
}

fn segment_inner(
    input: &Path,
    cfg: &PipelineConfig,
    outputs: &SegmentOutputs,
    truth: Option<&Path>,
    written: &mut Vec<PathBuf>,
) -> Result<RunReport> {
    let total_start = Instant::now();
    let stage = Instant::now();
    let img = io::read_image(input).map_err(Error::in_stage("read"))?;
    let read_ms = now_ms(stage);

    let mut run = run_pipeline(&img, cfg)?;
    run.stage_times.read = read_ms;

    let metrics_report = match truth {
        Some(path) => {
            let truth_img = io::read_image(path).map_err(Error::in_stage("evaluate"))?;
            let truth_labels = labels_from_image(&truth_img).map_err(Error::in_stage("evaluate"))?;
            let (sa, matching) = metrics::segmentation_accuracy(&run.labels, &truth_labels)
                .map_err(Error::in_stage("evaluate"))?;
            let seg_gray = match &run.segmented {
                Image::Gray(g) => g.clone(),
                Image::Color(c) => luminance(c),
            };
            let (e1, e2, ei) = metrics::entropy_information(&seg_gray, &run.labels)
                .map_err(Error::in_stage("evaluate"))?;
            Some(EvaluationReport {
                sa_percent: Some(sa),
                e1: Some(e1),
                e2: Some(e2),
                ei: Some(ei),
                matching: Some(matching),
                pixels: run.labels.labels().len(),
            })
        }
        None => None,
    };

    // writes
    let stage = Instant::now();
    io::write_image(&run.segmented, &outputs.segmented).map_err(Error::in_stage("write"))?;
    written.push(outputs.segmented.clone());
    if let Some(path) = &outputs.labels {
        io::write_gray(&run.labels.to_gray_spread(), path).map_err(Error::in_stage("write"))?;
        written.push(path.clone());
    }
    if let Some(path) = &outputs.trace {
        fs::write(path, trace_csv(&run.solver))
            .map_err(|e| Error::in_stage("write")(Error::io(path, e)))?;
        written.push(path.clone());
    }
    run.stage_times.write = now_ms(stage);
    run.stage_times.total = now_ms(total_start);

    let report = RunReport {
        config: cfg.clone(),
        iterations: run.solver.iterations,
        nonzero_residuals: run.solver.residuals.count_nonzero(),
        reseeded_clusters: run.solver.reseeded.len(),
        stage_times_ms: run.stage_times.clone(),
        metrics: metrics_report,
        outputs: OutputPaths {
            segmented: Some(outputs.segmented.clone()),
            labels: outputs.labels.clone(),
            report: outputs.report.clone(),
            trace: outputs.trace.clone(),
        },
    };
    if let Some(path) = &outputs.report {
        let json = serde_json::to_string_pretty(&report)
            .map_err(|e| Error::Param(format!("report serialization: {e}")))?;
        fs::write(path, json).map_err(|e| Error::in_stage("write")(Error::io(path, e)))?;
        written.push(path.clone());
    }
    Ok(report)
}

fn luminance(c: &crate::image::ColorImage) -> GrayImage {
    let [r, g, b] = c.channels();
    let data = (0..r.len())
        .map(|i| (r.data()[i] + g.data()[i] + b.data()[i]) / 3.0)
        .collect();
    GrayImage::from_raw(c.height(), c.width(), data)
}

/// The ten ablation rows: all components off, each alone, each left out,
/// and the full pipeline, as (mr, frames, l0, smoothing) switch tuples.
pub const ABLATION_ROWS: [(bool, bool, bool, bool); 10] = [
    (false, false, false, false),
    (true, false, false, false),
    (false, true, false, false),
    (false, false, true, false),
    (false, false, false, true),
    (true, true, true, false),
    (true, true, false, true),
    (true, false, true, true),
    (false, true, true, true),
    (true, true, true, true),
];

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub mr_filter: bool,
    pub frames: bool,
    pub l0: bool,
    pub label_smoothing: bool,
    pub sa_percent: Option<f64>,
    pub iterations: Option<usize>,
    pub error: Option<String>,
}

/// Run the ten switch combinations; rows that fail are reported with their
/// error while the rest still complete.
pub fn ablate(
    input: &Image,
    cfg: &PipelineConfig,
    truth: Option<&LabelImage>,
) -> Vec<AblationRow> {
    ABLATION_ROWS
        .iter()
        .map(|&(mr, fr, l0, sm)| {
            let mut row_cfg = cfg.clone();
            row_cfg.enable_mr_filter = mr;
            row_cfg.enable_frames = fr;
            row_cfg.enable_l0 = l0;
            row_cfg.enable_label_smoothing = sm;
            let outcome = run_pipeline(input, &row_cfg).and_then(|run| {
                let sa = match truth {
                    Some(t) => Some(metrics::segmentation_accuracy(&run.labels, t)?.0),
                    None => None,
                };
                Ok((sa, run.solver.iterations))
            });
            match outcome {
                Ok((sa, iterations)) => AblationRow {
                    mr_filter: mr,
                    frames: fr,
                    l0,
                    label_smoothing: sm,
                    sa_percent: sa,
                    iterations: Some(iterations),
                    error: None,
                },
                Err(e) => AblationRow {
                    mr_filter: mr,
                    frames: fr,
                    l0,
                    label_smoothing: sm,
                    sa_percent: None,
                    iterations: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

/// Interpret a gray image as a label field: distinct rounded intensities
/// map to labels 1..n in ascending order.
pub fn labels_from_image(img: &Image) -> Result<LabelImage> {
    let gray = match img {
        Image::Gray(g) => g.clone(),
        Image::Color(_) => {
            return Err(Error::Param(
                "label images must be grayscale".into(),
            ))
        }
    };
    let mut values: Vec<i64> = gray.data().iter().map(|&v| v.round() as i64).collect();
    let mut distinct = values.clone();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() > 64 {
        return Err(Error::Param(format!(
            "{} distinct gray values is too many for a label image",
            distinct.len()
        )));
    }
    for v in &mut values {
        *v = distinct.binary_search(v).unwrap() as i64 + 1;
    }
    LabelImage::new(
        gray.height(),
        gray.width(),
        distinct.len() as u32,
        values.into_iter().map(|v| v as u32).collect(),
    )
}

/// Evaluate label/segmentation files: SA when a truth file is given, the
/// entropy numbers when a segmented image is given.
pub fn evaluate(
    pred: impl AsRef<Path>,
    truth: Option<&Path>,
    seg_image: Option<&Path>,
) -> Result<EvaluationReport> {
    let pred_labels = labels_from_image(&io::read_image(pred.as_ref())?)?;
    let mut report = EvaluationReport {
        sa_percent: None,
        e1: None,
        e2: None,
        ei: None,
        matching: None,
        pixels: pred_labels.labels().len(),
    };
    if let Some(path) = truth {
        let truth_labels = labels_from_image(&io::read_image(path)?)?;
        let (sa, matching) = metrics::segmentation_accuracy(&pred_labels, &truth_labels)?;
        report.sa_percent = Some(sa);
        report.matching = Some(matching);
    }
    if let Some(path) = seg_image {
        let seg = match io::read_image(path)? {
            Image::Gray(g) => g,
            Image::Color(c) => luminance(&c),
        };
        let (e1, e2, ei) = metrics::entropy_information(&seg, &pred_labels)?;
        report.e1 = Some(e1);
        report.e2 = Some(e2);
        report.ei = Some(ei);
    }
    Ok(report)
}

/// Write the clean four-level pattern, a noisy version, and the
/// ground-truth label image.
pub fn generate(
    height: usize,
    width: usize,
    noise: &NoiseSpec,
    clean: &Path,
    noisy: &Path,
    truth: &Path,
) -> Result<()> {
    let (img, labels) = synth::generate_four_level(height, width)?;
    let corrupted = noise.apply(&img)?;
    io::write_gray(&img, clean)?;
    io::write_gray(&corrupted, noisy)?;
    io::write_gray(&labels.to_gray_spread(), truth)?;
    Ok(())
}

/// Dump the nine decomposition channels as min-max normalized PGM files and
/// return the round-trip reconstruction error.
pub fn decompose_debug(input: impl AsRef<Path>, outdir: impl AsRef<Path>) -> Result<f64> {
    let img = match io::read_image(input.as_ref())? {
        Image::Gray(g) => g,
        Image::Color(_) => {
            return Err(Error::Param(
                "channel dump expects a grayscale input".into(),
            ))
        }
    };
    let outdir = outdir.as_ref();
    fs::create_dir_all(outdir).map_err(|e| Error::io(outdir, e))?;
    let fs_set = frames::decompose(&img, 1)?;
    for l in 0..fs_set.channels() {
        let ch = fs_set.channel_image(l);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in ch.data() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let span = if hi > lo { hi - lo } else { 1.0 };
        let norm = ch.map(|v| (v - lo) / span * 255.0);
        io::write_gray(&norm, outdir.join(format!("channel_{l}.pgm")))?;
    }
    let back = frames::reconstruct(&fs_set)?;
    let err = img
        .data()
        .iter()
        .zip(back.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    Ok(err)
}
