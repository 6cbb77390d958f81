//! Synthetic sequences in the KITTI tracking layout.
//!
//! The camera drives straight ahead with constant acceleration; objects move
//! along the optical axis direction at constant speed. Labels, oxts records
//! and grayscale frames are generated from the same geometry, so an on-axis
//! object reproduces the 1-D scene model exactly.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::features::GrayPatch;
use crate::ingest::{serialize_imu, serialize_labels, ImuRecord, LabelRecord};
use crate::kinematics::{CameraIntrinsics, SceneSpec, Trajectory1D};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticObject {
    pub track_id: i64,
    pub object_type: String,
    /// Lateral offset of the object center (camera x, meters).
    pub lateral: f64,
    /// Vertical offset of the object center (camera y, meters, down positive).
    pub vertical: f64,
    /// Height, width, length (meters).
    pub dimensions: [f64; 3],
    /// World position along the driving direction at t = 0.
    pub initial_depth: f64,
    pub speed: f64,
    pub truncated: f64,
    pub occluded: i64,
    pub first_frame: i64,
    pub last_frame: i64,
}

impl SyntheticObject {
    /// Object on the optical axis, visible in every frame.
    pub fn on_axis(track_id: i64, initial_depth: f64, speed: f64, height: f64) -> Self {
        Self {
            track_id,
            object_type: "Car".to_string(),
            lateral: 0.0,
            vertical: 0.0,
            dimensions: [height, 1.6, 3.9],
            initial_depth,
            speed,
            truncated: 0.0,
            occluded: 0,
            first_frame: 0,
            last_frame: i64::MAX,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSequence {
    pub frames: i64,
    pub frame_rate: f64,
    pub camera_speed: f64,
    pub camera_accel: f64,
    pub intrinsics: CameraIntrinsics,
    pub objects: Vec<SyntheticObject>,
}

impl SyntheticSequence {
    pub fn time(&self, frame: i64) -> f64 {
        frame as f64 / self.frame_rate
    }

    pub fn camera_position(&self, t: f64) -> f64 {
        self.camera_speed * t + 0.5 * self.camera_accel * t * t
    }

    /// Depth of `obj` in the camera frame at `frame`.
    pub fn depth(&self, obj: &SyntheticObject, frame: i64) -> f64 {
        let t = self.time(frame);
        obj.initial_depth + obj.speed * t - self.camera_position(t)
    }

    /// 1-D scene equivalent to an on-axis object.
    pub fn scene_spec(&self, obj: &SyntheticObject) -> SceneSpec {
        SceneSpec {
            camera: Trajectory1D::constant_acceleration(0.0, self.camera_speed, self.camera_accel),
            object: Trajectory1D::constant_velocity(obj.initial_depth, obj.speed),
            size_constant: self.intrinsics.focal_length * obj.dimensions[0],
            frame_rate: self.frame_rate,
            noise: None,
        }
    }

    /// Image box of `obj` at `frame`, unclamped; `None` behind the camera.
    pub fn project(&self, obj: &SyntheticObject, frame: i64) -> Option<[f64; 4]> {
        let z = self.depth(obj, frame);
        if z <= 0.0 {
            return None;
        }
        let f = self.intrinsics.focal_length;
        let [cx, cy] = self.intrinsics.principal_point;
        let [h, w, _] = obj.dimensions;
        Some([
            f * (obj.lateral - 0.5 * w) / z + cx,
            f * (obj.vertical - 0.5 * h) / z + cy,
            f * (obj.lateral + 0.5 * w) / z + cx,
            f * (obj.vertical + 0.5 * h) / z + cy,
        ])
    }

    /// Labels for every object-frame whose box overlaps the image.
    /// Boxes crossing the border are clamped and flagged as truncated.
    pub fn labels(&self) -> Vec<LabelRecord> {
        let (w, h) = (
            f64::from(self.intrinsics.image_size.0),
            f64::from(self.intrinsics.image_size.1),
        );
        let mut out = Vec::new();
        for frame in 0..self.frames {
            for obj in &self.objects {
                if frame < obj.first_frame || frame > obj.last_frame {
                    continue;
                }
                let Some(b) = self.project(obj, frame) else { continue };
                if b[2] <= 0.0 || b[0] >= w || b[3] <= 0.0 || b[1] >= h {
                    continue;
                }
                let clamped = [b[0].max(0.0), b[1].max(0.0), b[2].min(w), b[3].min(h)];
                let truncated = if clamped != b { 1.0 } else { obj.truncated };
                let z = self.depth(obj, frame);
                out.push(LabelRecord {
                    frame,
                    track_id: obj.track_id,
                    object_type: obj.object_type.clone(),
                    truncated,
                    occluded: obj.occluded,
                    alpha: 0.0,
                    bbox: clamped,
                    dimensions: obj.dimensions,
                    location: [obj.lateral, obj.vertical + 0.5 * obj.dimensions[0], z],
                    rotation_y: 0.0,
                    score: None,
                    excluded: false,
                });
            }
        }
        out
    }

    /// oxts records: forward velocity ramp, constant forward acceleration, no rotation.
    pub fn imu_records(&self) -> Vec<ImuRecord> {
        (0..self.frames)
            .map(|frame| {
                let t = self.time(frame);
                ImuRecord::synthetic(
                    frame,
                    t,
                    [self.camera_speed + self.camera_accel * t, 0.0, 0.0],
                    [self.camera_accel, 0.0, 0.0],
                    [0.0; 3],
                )
            })
            .collect()
    }

    /// Grayscale frame: a smooth background plus each visible object as a
    /// textured box, nearer objects drawn last.
    pub fn render(&self, frame: i64) -> GrayPatch {
        let (w, h) = self.intrinsics.image_size;
        let mut img = GrayPatch::from_fn(w, h, |x, y| {
            0.15 + 0.1 * (x as f32 / w as f32) + 0.05 * (y as f32 / h as f32)
        });
        let mut visible: Vec<(&SyntheticObject, [f64; 4])> = self
            .objects
            .iter()
            .filter(|o| frame >= o.first_frame && frame <= o.last_frame)
            .filter_map(|o| self.project(o, frame).map(|b| (o, b)))
            .collect();
        visible.sort_by(|a, b| {
            self.depth(b.0, frame)
                .total_cmp(&self.depth(a.0, frame))
                .then(a.0.track_id.cmp(&b.0.track_id))
        });
        for (obj, b) in visible {
            let x0 = b[0].max(0.0).floor() as u32;
            let y0 = b[1].max(0.0).floor() as u32;
            let x1 = (b[2].min(f64::from(w))).ceil() as u32;
            let y1 = (b[3].min(f64::from(h))).ceil() as u32;
            let shade = 0.45 + 0.1 * (obj.track_id.rem_euclid(4) as f32);
            for y in y0..y1.min(h) {
                for x in x0..x1.min(w) {
                    let u = ((f64::from(x) + 0.5 - b[0]) / (b[2] - b[0])).clamp(0.0, 0.999);
                    let v = ((f64::from(y) + 0.5 - b[1]) / (b[3] - b[1])).clamp(0.0, 0.999);
                    let cell = (u * 4.0) as u32 + (v * 6.0) as u32;
                    let value = if cell.is_multiple_of(2) { shade } else { shade - 0.25 };
                    img.pixels[(y * w + x) as usize] = value;
                }
            }
        }
        img
    }
}

/// Files of one sequence in the KITTI tracking layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequencePaths {
    pub labels: PathBuf,
    pub oxts: PathBuf,
    pub images: PathBuf,
}

impl SequencePaths {
    pub fn new(root: &Path, sequence: &str) -> Self {
        Self {
            labels: root.join("label_02").join(format!("{sequence}.txt")),
            oxts: root.join("oxts").join(format!("{sequence}.txt")),
            images: root.join("image_02").join(sequence),
        }
    }

    pub fn image(&self, frame: i64, extension: &str) -> PathBuf {
        self.images.join(format!("{frame:06}.{extension}"))
    }
}

/// Write labels, oxts and (optionally) PGM frames under `root`.
pub fn write_sequence(
    root: &Path,
    sequence: &str,
    seq: &SyntheticSequence,
    with_images: bool,
) -> io::Result<SequencePaths> {
    let paths = SequencePaths::new(root, sequence);
    for dir in [paths.labels.parent(), paths.oxts.parent()].into_iter().flatten() {
        fs::create_dir_all(dir)?;
    }
    fs::write(&paths.labels, serialize_labels(&seq.labels()))?;
    fs::write(&paths.oxts, serialize_imu(&seq.imu_records()))?;
    if with_images {
        fs::create_dir_all(&paths.images)?;
        for frame in 0..seq.frames {
            fs::write(paths.image(frame, "pgm"), seq.render(frame).to_pgm())?;
        }
    }
    Ok(paths)
}
