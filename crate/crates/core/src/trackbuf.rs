//! Per-track observation cache and keyframe selection.
//!
//! A track becomes estimable at frame `n` once it has detections at every
//! keyframe `n - lookback, n - lookback + stride, ..., n`. With the default
//! scheme (lookback 10, stride 5, 10 fps) that is frames `n - 10, n - 5, n`,
//! one second apart end to end.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bbox::BBox;
use crate::solver::{KeyframeTriple, TrackId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackError {
    #[error("track {track:?} already has a different detection at frame {frame}")]
    DuplicateFrame { track: TrackId, frame: i64 },
    #[error("malformed detection at frame {frame}: {reason}")]
    Malformed { frame: i64, reason: String },
    #[error("detection at frame {frame} lacks truncation/occlusion annotations")]
    MissingAnnotation { frame: i64 },
    #[error("invalid keyframe scheme: {0}")]
    InvalidScheme(String),
    #[error("expected {expected} camera displacements, got {got}")]
    DeltaCount { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame_id: i64,
    pub track_id: TrackId,
    pub bbox: BBox,
    /// Carried for evaluation grouping only.
    pub class_label: String,
    pub truncated: Option<bool>,
    pub occluded: Option<bool>,
    pub image_size: (u32, u32),
    /// Ground-truth 3D object center in camera coordinates, when known.
    pub gt_location: Option<[f64; 3]>,
}

impl Detection {
    pub fn validate(&self) -> Result<(), TrackError> {
        let malformed = |reason: &str| TrackError::Malformed {
            frame: self.frame_id,
            reason: reason.to_string(),
        };
        if !self.bbox.is_well_formed() {
            return Err(malformed("box must satisfy left < right and top < bottom"));
        }
        let (w, h) = (f64::from(self.image_size.0), f64::from(self.image_size.1));
        if self.image_size.0 == 0 || self.image_size.1 == 0 {
            return Err(malformed("empty image"));
        }
        // Touching the border is allowed; leaving the image is not.
        let b = &self.bbox;
        if b.left < 0.0 || b.top < 0.0 || b.right > w || b.bottom > h {
            return Err(malformed("box outside image bounds"));
        }
        Ok(())
    }

    pub fn height(&self) -> f64 {
        self.bbox.height()
    }

    pub fn normalized_center(&self) -> [f64; 2] {
        self.bbox.normalized_center(self.image_size)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyframeScheme {
    pub lookback_frames: i64,
    pub stride: i64,
    pub frame_rate: f64,
}

impl Default for KeyframeScheme {
    fn default() -> Self {
        Self {
            lookback_frames: 10,
            stride: 5,
            frame_rate: 10.0,
        }
    }
}

impl KeyframeScheme {
    pub fn new(lookback_frames: i64, stride: i64, frame_rate: f64) -> Result<Self, TrackError> {
        let scheme = Self {
            lookback_frames,
            stride,
            frame_rate,
        };
        scheme.validate()?;
        Ok(scheme)
    }

    pub fn validate(&self) -> Result<(), TrackError> {
        if self.stride <= 0 || self.lookback_frames <= 0 {
            return Err(TrackError::InvalidScheme("lookback and stride must be positive".into()));
        }
        if self.lookback_frames % self.stride != 0 {
            return Err(TrackError::InvalidScheme(format!(
                "lookback {} is not divisible by stride {}",
                self.lookback_frames, self.stride
            )));
        }
        if !(self.frame_rate > 0.0) {
            return Err(TrackError::InvalidScheme("frame rate must be positive".into()));
        }
        Ok(())
    }

    /// Number of intervals between keyframes (`q`).
    pub fn intervals(&self) -> usize {
        (self.lookback_frames / self.stride) as usize
    }

    /// Keyframes ending at `n`, oldest first.
    pub fn keyframes(&self, n: i64) -> Vec<i64> {
        (0..=self.intervals() as i64)
            .map(|k| n - self.lookback_frames + k * self.stride)
            .collect()
    }

    pub fn interval_seconds(&self) -> f64 {
        self.stride as f64 / self.frame_rate
    }
}

/// Detections of one track at all keyframes ending at `frame_id`, oldest first.
///
/// Camera displacements come from the IMU join; see [`KeyframeSet::to_triple`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyframeSet {
    pub track_id: TrackId,
    pub frame_id: i64,
    pub detections: Vec<Detection>,
    pub dt: f64,
}

impl KeyframeSet {
    pub fn frame_ids(&self) -> Vec<i64> {
        self.detections.iter().map(|d| d.frame_id).collect()
    }

    pub fn newest(&self) -> &Detection {
        self.detections.last().expect("keyframe sets are never empty")
    }

    pub fn to_triple(&self, camera_deltas: Vec<f64>) -> Result<KeyframeTriple, TrackError> {
        let expected = self.detections.len() - 1;
        if camera_deltas.len() != expected {
            return Err(TrackError::DeltaCount {
                expected,
                got: camera_deltas.len(),
            });
        }
        Ok(KeyframeTriple {
            heights: self.detections.iter().map(Detection::height).collect(),
            camera_deltas,
            dt: self.dt,
            bbox_centers: self.detections.iter().map(Detection::normalized_center).collect(),
            frame_ids: self.frame_ids(),
            track_id: self.track_id,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterDecision {
    Keep,
    Drop,
}

/// Drops boxes touching the image border (inference/evaluation filter).
pub fn edge_filter(det: &Detection) -> FilterDecision {
    if det.bbox.touches_border(det.image_size) {
        FilterDecision::Drop
    } else {
        FilterDecision::Keep
    }
}

/// Drops occluded or truncated detections (training export filter).
pub fn training_filter(det: &Detection) -> Result<FilterDecision, TrackError> {
    match (det.truncated, det.occluded) {
        (Some(truncated), Some(occluded)) => Ok(if truncated || occluded {
            FilterDecision::Drop
        } else {
            FilterDecision::Keep
        }),
        _ => Err(TrackError::MissingAnnotation {
            frame: det.frame_id,
        }),
    }
}

/// Bounded per-track history. Each track keeps only frames within
/// `capacity` of its newest frame.
#[derive(Debug, Clone)]
pub struct TrackCache {
    scheme: KeyframeScheme,
    capacity: i64,
    tracks: HashMap<TrackId, BTreeMap<i64, Detection>>,
}

impl TrackCache {
    pub fn new(scheme: KeyframeScheme) -> Result<Self, TrackError> {
        let capacity = scheme.lookback_frames + 1;
        Self::with_capacity(scheme, capacity)
    }

    pub fn with_capacity(scheme: KeyframeScheme, capacity: i64) -> Result<Self, TrackError> {
        scheme.validate()?;
        if capacity < scheme.lookback_frames + 1 {
            return Err(TrackError::InvalidScheme(format!(
                "capacity {capacity} is below lookback + 1"
            )));
        }
        Ok(Self {
            scheme,
            capacity,
            tracks: HashMap::new(),
        })
    }

    pub fn scheme(&self) -> &KeyframeScheme {
        &self.scheme
    }

    pub fn track_count(&self) -> usize {
        self.tracks.len()
    }

    /// Total cached detections over all tracks.
    pub fn len(&self) -> usize {
        self.tracks.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Store a detection and return every keyframe set it completes.
    pub fn ingest(&mut self, det: Detection) -> Result<Vec<KeyframeSet>, TrackError> {
        det.validate()?;
        let frame = det.frame_id;
        let track_id = det.track_id;
        let history = self.tracks.entry(track_id).or_default();

        if let Some(existing) = history.get(&frame) {
            return if existing.bbox == det.bbox {
                Ok(Vec::new())
            } else {
                Err(TrackError::DuplicateFrame {
                    track: track_id,
                    frame,
                })
            };
        }
        let newest = history.keys().next_back().copied().unwrap_or(frame).max(frame);
        if frame <= newest - self.capacity {
            // Too old to ever be a keyframe again.
            return Ok(Vec::new());
        }
        history.insert(frame, det);
        let cutoff = newest - self.capacity;
        while let Some((&oldest, _)) = history.first_key_value() {
            if oldest > cutoff {
                break;
            }
            history.remove(&oldest);
        }

        // Every window in which `frame` is a keyframe.
        let mut emitted = Vec::new();
        for k in 0..=self.scheme.intervals() as i64 {
            let end = frame + self.scheme.lookback_frames - k * self.scheme.stride;
            let keyframes = self.scheme.keyframes(end);
            let detections: Option<Vec<Detection>> =
                keyframes.iter().map(|f| history.get(f).cloned()).collect();
            if let Some(detections) = detections {
                emitted.push(KeyframeSet {
                    track_id,
                    frame_id: end,
                    detections,
                    dt: self.scheme.interval_seconds(),
                });
            }
        }
        emitted.sort_by_key(|s| s.frame_id);
        Ok(emitted)
    }
}
