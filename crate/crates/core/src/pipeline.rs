//! Dataset-level evaluation and feature export over KITTI-layout sequences.
//!
//! Evaluation: labels (or aligned predictions) → edge filter → track cache →
//! IMU-derived camera advance along the object ray → solver → metrics.
//! Export: labels → training filter → track cache → overlay + side vector.

use std::collections::hash_map::Entry;
use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alignment::{assign, DEFAULT_SCORE_FLOOR};
use crate::features::{
    make_overlay, make_side_vector, sha256_hex, FeatureBundle, FeatureError, GrayPatch, IndexEntry,
};
use crate::ingest::{
    camera_displacement, displacement_along_ray, imu_features, parse_imu, parse_labels,
    ImuRecord, IngestError, LabelRecord,
};
use crate::kinematics::{ray_adapter, CameraIntrinsics, KinematicsError};
use crate::metrics::{
    binned_report, compute_metrics, BinAxis, BinnedErrorReport, EvalPair, MetricsError,
    MetricsReport,
};
use crate::solver::{
    estimate, range_to_distance, DistanceEstimate, EstimateStatus, SolverError, TrackId,
    DEFAULT_EPS_SINGULAR,
};
use crate::synth::SequencePaths;
use crate::trackbuf::{
    edge_filter, training_filter, Detection, FilterDecision, KeyframeScheme, KeyframeSet,
    TrackCache, TrackError,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Parse {
        path: PathBuf,
        #[source]
        source: IngestError,
    },
    #[error("sequence {sequence}: {source}")]
    Join {
        sequence: String,
        #[source]
        source: IngestError,
    },
    #[error("sequence {sequence}: {source}")]
    Track {
        sequence: String,
        #[source]
        source: TrackError,
    },
    #[error("sequence {sequence}: {source}")]
    Solver {
        sequence: String,
        #[source]
        source: SolverError,
    },
    #[error("sequence {sequence}: {source}")]
    Geometry {
        sequence: String,
        #[source]
        source: KinematicsError,
    },
    #[error("{}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: FeatureError,
    },
    #[error("sequence {sequence}, frame {frame}: no image found in {}", dir.display())]
    MissingImage {
        sequence: String,
        frame: i64,
        dir: PathBuf,
    },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub scheme: KeyframeScheme,
    pub eps_singular: f64,
    /// Used for box-center rays and to normalize box centers.
    pub intrinsics: CameraIntrinsics,
    pub score_floor: f64,
    pub bin_width_distance: f64,
    pub bin_width_distance_change: f64,
    pub bin_width_velocity_change: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            scheme: KeyframeScheme::default(),
            eps_singular: DEFAULT_EPS_SINGULAR,
            intrinsics: CameraIntrinsics::KITTI_NOMINAL,
            score_floor: DEFAULT_SCORE_FLOOR,
            bin_width_distance: 5.0,
            bin_width_distance_change: 1.0,
            bin_width_velocity_change: 0.5,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.scheme
            .validate()
            .map_err(|e| PipelineError::Invalid(e.to_string()))?;
        if !(self.eps_singular > 0.0) {
            return Err(PipelineError::Invalid("eps_singular must be positive".into()));
        }
        for w in [
            self.bin_width_distance,
            self.bin_width_distance_change,
            self.bin_width_velocity_change,
        ] {
            if !(w > 0.0 && w.is_finite()) {
                return Err(PipelineError::Invalid("bin widths must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Parsed inputs of one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceInput {
    pub name: String,
    pub labels: Vec<LabelRecord>,
    pub imu: Vec<ImuRecord>,
    pub predictions: Option<Vec<LabelRecord>>,
    pub image_dir: PathBuf,
}

fn read_text(path: &Path) -> Result<String, PipelineError> {
    fs::read_to_string(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_labels(path: &Path) -> Result<Vec<LabelRecord>, PipelineError> {
    parse_labels(&read_text(path)?).map_err(|source| PipelineError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

/// Sequence names (label file stems under `label_02/`), sorted.
pub fn discover_sequences(root: &Path) -> Result<Vec<String>, PipelineError> {
    let dir = root.join("label_02");
    let entries = fs::read_dir(&dir).map_err(|source| PipelineError::Io {
        path: dir.clone(),
        source,
    })?;
    let mut names = Vec::new();
    for entry in entries {
        let path = entry
            .map_err(|source| PipelineError::Io {
                path: dir.clone(),
                source,
            })?
            .path();
        if path.extension().is_some_and(|e| e == "txt") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                names.push(stem.to_string());
            }
        }
    }
    names.sort();
    Ok(names)
}

/// Load labels, oxts and optional predictions (`<predictions>/<name>.txt`).
pub fn load_sequence(
    root: &Path,
    name: &str,
    predictions: Option<&Path>,
    frame_rate: f64,
) -> Result<SequenceInput, PipelineError> {
    let paths = SequencePaths::new(root, name);
    let labels = read_labels(&paths.labels)?;
    let imu = parse_imu(&read_text(&paths.oxts)?, frame_rate).map_err(|source| {
        PipelineError::Parse {
            path: paths.oxts.clone(),
            source,
        }
    })?;
    let predictions = predictions
        .map(|dir| read_labels(&dir.join(format!("{name}.txt"))))
        .transpose()?;
    Ok(SequenceInput {
        name: name.to_string(),
        labels,
        imu,
        predictions,
        image_dir: paths.images,
    })
}

fn by_frame(records: &[LabelRecord]) -> BTreeMap<i64, Vec<&LabelRecord>> {
    let mut map: BTreeMap<i64, Vec<&LabelRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| !r.excluded) {
        map.entry(r.frame).or_default().push(r);
    }
    for v in map.values_mut() {
        v.sort_by_key(|r| r.track_id);
    }
    map
}

/// Alignment counts for a sequence evaluated against predictions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentSummary {
    pub predictions: usize,
    pub ground_truth: usize,
    pub matched: usize,
    /// Matches whose prediction and ground-truth boxes are identical.
    pub identical: usize,
}

/// Per-frame detections to evaluate, in frame then track order. With
/// predictions, each prediction carries the 3D center of its matched label.
fn evaluation_detections(
    input: &SequenceInput,
    cfg: &PipelineConfig,
) -> (Vec<Detection>, Option<AlignmentSummary>) {
    let size = cfg.intrinsics.image_size;
    let gts = by_frame(&input.labels);
    let Some(preds) = &input.predictions else {
        let dets = gts.values().flatten().map(|r| r.to_detection(size)).collect();
        return (dets, None);
    };
    let preds = by_frame(preds);
    let mut summary = AlignmentSummary::default();
    let mut dets = Vec::new();
    for (frame, frame_preds) in &preds {
        let frame_gts = gts.get(frame).map(Vec::as_slice).unwrap_or(&[]);
        summary.predictions += frame_preds.len();
        let p: Vec<_> = frame_preds.iter().map(|r| (TrackId(r.track_id), r.bbox())).collect();
        let g: Vec<_> = frame_gts.iter().map(|r| (TrackId(r.track_id), r.bbox())).collect();
        let matches = assign(&p, &g, cfg.score_floor);
        for (i, pred) in frame_preds.iter().enumerate() {
            let mut det = pred.to_detection(size);
            let gt = matches.iter().find(|m| m.pred == i).map(|m| frame_gts[m.gt]);
            det.gt_location = gt.and_then(|g| g.center_3d());
            if let Some(g) = gt {
                summary.matched += 1;
                if g.bbox == pred.bbox {
                    summary.identical += 1;
                }
            }
            dets.push(det);
        }
    }
    summary.ground_truth = gts.values().map(Vec::len).sum();
    (dets, Some(summary))
}

/// Camera advance toward the object for each interval of `set`, measured
/// along the ray through the newest box center.
fn camera_deltas(
    set: &KeyframeSet,
    imu: &[ImuRecord],
    ray: [f64; 3],
) -> Result<Vec<f64>, IngestError> {
    set.frame_ids()
        .windows(2)
        .map(|w| camera_displacement(imu, w[0], w[1]).map(|d| displacement_along_ray(d, ray)))
        .collect()
}

fn analytic_estimate(
    set: &KeyframeSet,
    input: &SequenceInput,
    cfg: &PipelineConfig,
) -> Result<DistanceEstimate, PipelineError> {
    let seq = || input.name.clone();
    let center = set.newest().normalized_center();
    let ray = cfg
        .intrinsics
        .unit_ray(center)
        .map_err(|source| PipelineError::Geometry { sequence: seq(), source })?;
    let deltas = camera_deltas(set, &input.imu, ray)
        .map_err(|source| PipelineError::Join { sequence: seq(), source })?;
    let triple = set
        .to_triple(deltas)
        .map_err(|source| PipelineError::Track { sequence: seq(), source })?;
    let est = estimate(&triple, cfg.eps_singular)
        .map_err(|source| PipelineError::Solver { sequence: seq(), source })?;
    if !est.is_ok() {
        return Ok(est);
    }
    let cartesian = ray_adapter(center, &cfg.intrinsics, est.range)
        .map_err(|source| PipelineError::Geometry { sequence: seq(), source })?;
    Ok(est.with_cartesian(cartesian))
}

/// One evaluated keyframe set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub sequence: String,
    pub track_id: i64,
    pub frame_id: i64,
    pub class_label: String,
    pub d_gt: f64,
    pub d_pred: Option<f64>,
    pub cartesian: Option<[f64; 3]>,
    pub status: EstimateStatus,
    pub distance_change: f64,
    pub velocity_change: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceEvaluation {
    pub sequence: String,
    /// Keyframe sets completed in the track cache.
    pub windows: usize,
    /// Sets skipped because a keyframe lacked a ground-truth 3D center.
    pub unlabelled: usize,
    pub alignment: Option<AlignmentSummary>,
    pub records: Vec<EvalRecord>,
}

pub fn evaluate_sequence(
    input: &SequenceInput,
    cfg: &PipelineConfig,
) -> Result<SequenceEvaluation, PipelineError> {
    let (dets, alignment) = evaluation_detections(input, cfg);
    let mut cache = TrackCache::new(cfg.scheme).map_err(|source| PipelineError::Track {
        sequence: input.name.clone(),
        source,
    })?;
    let mut windows = 0;
    let mut unlabelled = 0;
    let mut records = Vec::new();
    for det in dets {
        if edge_filter(&det) == FilterDecision::Drop {
            continue;
        }
        let sets = cache.ingest(det).map_err(|source| PipelineError::Track {
            sequence: input.name.clone(),
            source,
        })?;
        for set in sets {
            windows += 1;
            let gt: Option<Vec<f64>> = set
                .detections
                .iter()
                .map(|d| d.gt_location.map(range_to_distance))
                .collect();
            let Some(d) = gt else {
                unlabelled += 1;
                continue;
            };
            let est = analytic_estimate(&set, input, cfg)?;
            let q = d.len() - 1;
            records.push(EvalRecord {
                sequence: input.name.clone(),
                track_id: set.track_id.0,
                frame_id: set.frame_id,
                class_label: set.newest().class_label.clone(),
                d_gt: d[q],
                d_pred: est.is_ok().then_some(est.range),
                cartesian: est.cartesian,
                status: est.status,
                distance_change: d[q] - d[0],
                velocity_change: ((d[q] - d[q - 1]) - (d[1] - d[0])) / set.dt,
            });
        }
    }
    records.sort_by_key(|r| (r.track_id, r.frame_id));
    Ok(SequenceEvaluation {
        sequence: input.name.clone(),
        windows,
        unlabelled,
        alignment,
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub config: PipelineConfig,
    pub sequences: Vec<SequenceEvaluation>,
    pub samples: usize,
    pub ok: usize,
    pub degenerate: usize,
    /// `None` when there are no samples.
    pub metrics: Option<MetricsReport>,
    pub binned: Vec<BinnedErrorReport>,
}

impl EvaluationReport {
    pub fn records(&self) -> impl Iterator<Item = &EvalRecord> {
        self.sequences.iter().flat_map(|s| s.records.iter())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.sequences {
            out.push_str(&format!(
                "sequence {}: {} windows, {} samples\n",
                s.sequence,
                s.windows,
                s.records.len()
            ));
        }
        out.push_str(&format!(
            "samples: {}\nok: {}\ndegenerate: {}\n",
            self.samples, self.ok, self.degenerate
        ));
        match &self.metrics {
            Some(m) => out.push_str(&m.to_string()),
            None => out.push_str("no samples\n"),
        }
        for b in &self.binned {
            out.push('\n');
            out.push_str(&b.to_string());
        }
        out
    }
}

fn aggregate(
    pairs: &[EvalPair],
    cfg: &PipelineConfig,
) -> Result<(Option<MetricsReport>, Vec<BinnedErrorReport>), MetricsError> {
    if pairs.is_empty() {
        return Ok((None, Vec::new()));
    }
    let binned = [
        (BinAxis::Distance, cfg.bin_width_distance),
        (BinAxis::DistanceChange, cfg.bin_width_distance_change),
        (BinAxis::VelocityChange, cfg.bin_width_velocity_change),
    ]
    .iter()
    .map(|&(axis, w)| binned_report(pairs, axis, w))
    .collect::<Result<_, _>>()?;
    Ok((Some(compute_metrics(pairs)?), binned))
}

/// Evaluate every sequence in parallel; sequences keep their input order.
pub fn evaluate(
    inputs: &[SequenceInput],
    cfg: &PipelineConfig,
) -> Result<EvaluationReport, PipelineError> {
    cfg.validate()?;
    let sequences: Vec<SequenceEvaluation> = inputs
        .par_iter()
        .map(|input| evaluate_sequence(input, cfg))
        .collect::<Result<_, _>>()?;
    let samples = sequences.iter().map(|s| s.records.len()).sum();
    let pairs: Vec<EvalPair> = sequences
        .iter()
        .flat_map(|s| &s.records)
        .filter_map(|r| {
            r.d_pred.map(|d_pred| EvalPair {
                d_gt: r.d_gt,
                d_pred,
                distance_change: r.distance_change,
                velocity_change: r.velocity_change,
            })
        })
        .collect();
    let (metrics, binned) = aggregate(&pairs, cfg)?;
    Ok(EvaluationReport {
        config: cfg.clone(),
        sequences,
        samples,
        ok: pairs.len(),
        degenerate: samples - pairs.len(),
        metrics,
        binned,
    })
}

/// One encoded feature container ready to be written.
#[derive(Debug, Clone, PartialEq)]
pub struct ExportItem {
    pub entry: IndexEntry,
    pub bytes: Vec<u8>,
}

fn load_frame(input: &SequenceInput, frame: i64) -> Result<GrayPatch, PipelineError> {
    for ext in ["pgm", "png"] {
        let path = input.image_dir.join(format!("{frame:06}.{ext}"));
        if path.is_file() {
            let bytes = fs::read(&path).map_err(|source| PipelineError::Io {
                path: path.clone(),
                source,
            })?;
            return GrayPatch::from_encoded(&bytes)
                .map_err(|source| PipelineError::Image { path, source });
        }
    }
    Err(PipelineError::MissingImage {
        sequence: input.name.clone(),
        frame,
        dir: input.image_dir.clone(),
    })
}

/// Training export: one container per keyframe set whose detections all
/// pass the training filter and whose newest label has a 3D center.
pub fn export_sequence(
    input: &SequenceInput,
    cfg: &PipelineConfig,
) -> Result<Vec<ExportItem>, PipelineError> {
    if cfg.scheme.intervals() != 2 {
        return Err(PipelineError::Invalid(format!(
            "feature export needs exactly three keyframes, scheme has {}",
            cfg.scheme.intervals() + 1
        )));
    }
    let seq = || input.name.clone();
    let mut cache = TrackCache::new(cfg.scheme)
        .map_err(|source| PipelineError::Track { sequence: seq(), source })?;
    let mut sets = Vec::new();
    for det in by_frame(&input.labels)
        .values()
        .flatten()
        .map(|r| r.to_detection(cfg.intrinsics.image_size))
    {
        let keep = training_filter(&det)
            .map_err(|source| PipelineError::Track { sequence: seq(), source })?;
        if keep == FilterDecision::Keep {
            sets.extend(
                cache
                    .ingest(det)
                    .map_err(|source| PipelineError::Track { sequence: seq(), source })?,
            );
        }
    }
    sets.retain(|s| s.newest().gt_location.is_some());
    sets.sort_by_key(|s| (s.track_id, s.frame_id));

    let mut frames: HashMap<i64, GrayPatch> = HashMap::new();
    let mut items = Vec::with_capacity(sets.len());
    for set in &sets {
        let ids = set.frame_ids();
        for &f in &ids {
            if let Entry::Vacant(slot) = frames.entry(f) {
                slot.insert(load_frame(input, f)?);
            }
        }
        let crop = |d: &Detection| {
            frames[&d.frame_id]
                .crop(&d.bbox)
                .map_err(|source| PipelineError::Image {
                    path: input.image_dir.join(format!("{:06}", d.frame_id)),
                    source,
                })
        };
        let patches = [
            crop(&set.detections[0])?,
            crop(&set.detections[1])?,
            crop(&set.detections[2])?,
        ];
        let heights = [0, 1, 2].map(|k| set.detections[k].height());
        let overlay = make_overlay(&patches, heights).map_err(|source| PipelineError::Image {
            path: input.image_dir.clone(),
            source,
        })?;
        let imu = imu_features(&input.imu, &ids)
            .map_err(|source| PipelineError::Join { sequence: seq(), source })?;
        let est = analytic_estimate(set, input, cfg)?;
        let centers = [0, 1, 2].map(|k| set.detections[k].normalized_center());
        let side = make_side_vector(&imu, centers, &est);
        let bundle = FeatureBundle {
            overlay,
            side,
            target: set.newest().gt_location,
        };
        let bytes = bundle.encode();
        items.push(ExportItem {
            entry: IndexEntry {
                file: format!("{}_{:06}_{:06}.mdfb", input.name, set.track_id.0, set.frame_id),
                track_id: set.track_id.0,
                frame_ids: ids,
                class_label: set.newest().class_label.clone(),
                analytic_degenerate: bundle.side.analytic_degenerate,
                sha256: sha256_hex(&bytes),
            },
            bytes,
        });
    }
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::sample_scene;
    use crate::synth::{SyntheticObject, SyntheticSequence};

    fn sequence() -> SyntheticSequence {
        SyntheticSequence {
            frames: 26,
            frame_rate: 10.0,
            camera_speed: 6.0,
            camera_accel: 2.0,
            intrinsics: CameraIntrinsics::KITTI_NOMINAL,
            objects: vec![
                SyntheticObject::on_axis(1, 30.0, 1.0, 1.5),
                SyntheticObject::on_axis(2, 60.0, -2.0, 3.0),
            ],
        }
    }

    fn input(seq: &SyntheticSequence, with_predictions: bool) -> SequenceInput {
        let labels = seq.labels();
        SequenceInput {
            name: "0000".into(),
            predictions: with_predictions.then(|| labels.clone()),
            labels,
            imu: seq.imu_records(),
            image_dir: PathBuf::from("/nonexistent"),
        }
    }

    #[test]
    fn on_axis_evaluation_matches_scene_model() {
        let seq = sequence();
        let cfg = PipelineConfig::default();
        let report = evaluate(&[input(&seq, false)], &cfg).unwrap();
        // 26 frames, lookback 10: windows end at frames 10..=25 for two tracks.
        assert_eq!(report.samples, 32);
        for r in report.records() {
            let obj = seq.objects.iter().find(|o| o.track_id == r.track_id).unwrap();
            let frames = cfg.scheme.keyframes(r.frame_id);
            let scene = sample_scene(&seq.scene_spec(obj), &frames).unwrap();
            let oracle = estimate(&scene.triple, cfg.eps_singular).unwrap();
            let d = r.d_pred.unwrap();
            assert!((d - oracle.range).abs() < 1e-9 * d, "{d} vs {}", oracle.range);
            assert!((r.d_gt - scene.final_distance()).abs() < 1e-12 * r.d_gt);
        }
        assert!(report.metrics.unwrap().mare < 1e-9);
    }

    #[test]
    fn ground_truth_as_predictions_aligns_identically() {
        let seq = sequence();
        let cfg = PipelineConfig::default();
        let direct = evaluate(&[input(&seq, false)], &cfg).unwrap();
        let aligned = evaluate(&[input(&seq, true)], &cfg).unwrap();
        let a = aligned.sequences[0].alignment.unwrap();
        assert_eq!(a.matched, a.predictions);
        assert_eq!(a.identical, a.ground_truth);
        assert_eq!(direct.sequences[0].records, aligned.sequences[0].records);
    }

    #[test]
    fn short_tracks_give_no_samples() {
        let mut seq = sequence();
        seq.frames = 8;
        let report = evaluate(&[input(&seq, false)], &PipelineConfig::default()).unwrap();
        assert_eq!(report.samples, 0);
        assert!(report.metrics.is_none());
        assert!(report.to_text().contains("no samples"));
    }

    #[test]
    fn export_requires_three_keyframes() {
        let seq = sequence();
        let cfg = PipelineConfig {
            scheme: KeyframeScheme::new(15, 5, 10.0).unwrap(),
            ..PipelineConfig::default()
        };
        assert!(matches!(
            export_sequence(&input(&seq, false), &cfg),
            Err(PipelineError::Invalid(_))
        ));
    }

    #[test]
    fn export_reports_missing_images() {
        let seq = sequence();
        let err = export_sequence(&input(&seq, false), &PipelineConfig::default()).unwrap_err();
        assert!(matches!(err, PipelineError::MissingImage { frame: 0, .. }), "{err}");
    }
}
