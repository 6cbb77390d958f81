//! KITTI tracking labels, oxts IMU records, and the ego-motion join.
//!
//! Label lines carry 17 whitespace-separated columns in devkit order:
//!
//! ```text
//! frame track_id type truncated occluded alpha left top right bottom h w l x y z rotation_y
//! ```
//!
//! Tracker outputs may append an 18th `score` column. oxts lines carry 30
//! numeric columns per frame (line `i` is frame `i`), optionally followed by a
//! timestamp in seconds. Consumed columns (0-based):
//! 8..=10 velocity forward/left/up, 11..=13 acceleration x/y/z,
//! 17..=19 angular rate x/y/z, all in the vehicle frame.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bbox::BBox;
use crate::solver::TrackId;
use crate::trackbuf::Detection;

pub const LABEL_COLUMNS: usize = 17;
pub const OXTS_COLUMNS: usize = 30;
pub const IMU_FEATURE_LEN: usize = 27;

const VELOCITY_COLS: [usize; 3] = [8, 9, 10];
const ACCELERATION_COLS: [usize; 3] = [11, 12, 13];
const ANGULAR_RATE_COLS: [usize; 3] = [17, 18, 19];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    /// `column` is the 1-based whitespace-separated field index (0 for whole-line errors).
    #[error("line {line}, column {column}: {reason}")]
    Parse {
        line: usize,
        column: usize,
        reason: String,
    },
    #[error("frame {frame} is outside the IMU record range {first}..={last}")]
    Range { frame: i64, first: i64, last: i64 },
    #[error("invalid frame interval {from}..{to}")]
    Interval { from: i64, to: i64 },
    #[error("need {needed} keyframes, got {got}")]
    KeyframeCount { needed: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub frame: i64,
    pub track_id: i64,
    pub object_type: String,
    pub truncated: f64,
    pub occluded: i64,
    pub alpha: f64,
    pub bbox: [f64; 4],
    /// Height, width, length in meters.
    pub dimensions: [f64; 3],
    /// Bottom center of the 3D box in camera coordinates.
    pub location: [f64; 3],
    pub rotation_y: f64,
    pub score: Option<f64>,
    /// `Misc` and `DontCare` entries are parsed but excluded from use.
    pub excluded: bool,
}

pub fn is_excluded_type(object_type: &str) -> bool {
    matches!(object_type, "Misc" | "DontCare")
}

impl LabelRecord {
    pub fn bbox(&self) -> BBox {
        BBox::new(self.bbox[0], self.bbox[1], self.bbox[2], self.bbox[3])
    }

    /// Geometric center of the 3D box, or `None` when the 3D fields are the
    /// "unknown" placeholders used by tracker outputs.
    pub fn center_3d(&self) -> Option<[f64; 3]> {
        let [h, _, _] = self.dimensions;
        let [x, y, z] = self.location;
        if h <= 0.0 || z <= 0.0 || self.location.iter().any(|v| *v <= -999.0) {
            return None;
        }
        Some([x, y - 0.5 * h, z])
    }

    /// Detection view of this record. The box is clamped into the image so
    /// partially visible tracker boxes end up touching the border.
    pub fn to_detection(&self, image_size: (u32, u32)) -> Detection {
        let (w, h) = (f64::from(image_size.0), f64::from(image_size.1));
        let bbox = BBox::new(
            self.bbox[0].clamp(0.0, w),
            self.bbox[1].clamp(0.0, h),
            self.bbox[2].clamp(0.0, w),
            self.bbox[3].clamp(0.0, h),
        );
        Detection {
            frame_id: self.frame,
            track_id: TrackId(self.track_id),
            bbox,
            class_label: self.object_type.clone(),
            truncated: (self.truncated >= 0.0).then_some(self.truncated > 0.0),
            occluded: (self.occluded >= 0).then_some(self.occluded > 0),
            image_size,
            gt_location: self.center_3d(),
        }
    }
}

fn parse_err(line: usize, column: usize, reason: impl Into<String>) -> IngestError {
    IngestError::Parse {
        line,
        column,
        reason: reason.into(),
    }
}

fn parse_real(field: &str, line: usize, column: usize) -> Result<f64, IngestError> {
    let value: f64 = field
        .parse()
        .map_err(|_| parse_err(line, column, format!("`{field}` is not a number")))?;
    if !value.is_finite() {
        return Err(parse_err(line, column, format!("`{field}` is not finite")));
    }
    Ok(value)
}

fn parse_int(field: &str, line: usize, column: usize) -> Result<i64, IngestError> {
    field
        .parse()
        .map_err(|_| parse_err(line, column, format!("`{field}` is not an integer")))
}

pub fn parse_labels(text: &str) -> Result<Vec<LabelRecord>, IngestError> {
    let mut records = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.len() != LABEL_COLUMNS && fields.len() != LABEL_COLUMNS + 1 {
            return Err(parse_err(
                line,
                0,
                format!("expected {LABEL_COLUMNS} fields, found {}", fields.len()),
            ));
        }
        let real = |i: usize| parse_real(fields[i], line, i + 1);
        let bbox = [real(6)?, real(7)?, real(8)?, real(9)?];
        if !(bbox[0] < bbox[2]) {
            return Err(parse_err(line, 9, "bbox right must exceed left"));
        }
        if !(bbox[1] < bbox[3]) {
            return Err(parse_err(line, 10, "bbox bottom must exceed top"));
        }
        let object_type = fields[2].to_string();
        records.push(LabelRecord {
            frame: parse_int(fields[0], line, 1)?,
            track_id: parse_int(fields[1], line, 2)?,
            excluded: is_excluded_type(&object_type),
            object_type,
            truncated: real(3)?,
            occluded: parse_int(fields[4], line, 5)?,
            alpha: real(5)?,
            bbox,
            dimensions: [real(10)?, real(11)?, real(12)?],
            location: [real(13)?, real(14)?, real(15)?],
            rotation_y: real(16)?,
            score: if fields.len() > LABEL_COLUMNS {
                Some(real(17)?)
            } else {
                None
            },
        });
    }
    Ok(records)
}

/// Canonical serialization: single spaces, shortest round-trip numbers.
pub fn serialize_labels(records: &[LabelRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let _ = write!(
            out,
            "{} {} {} {} {} {}",
            r.frame, r.track_id, r.object_type, r.truncated, r.occluded, r.alpha
        );
        for v in r.bbox.iter().chain(&r.dimensions).chain(&r.location) {
            let _ = write!(out, " {v}");
        }
        let _ = write!(out, " {}", r.rotation_y);
        if let Some(score) = r.score {
            let _ = write!(out, " {score}");
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccelerationSource {
    Measured,
    Differenced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImuRecord {
    pub frame: i64,
    pub timestamp: f64,
    /// Forward, left, up (m/s).
    pub velocity: [f64; 3],
    /// Measured acceleration (m/s²), when the source provides it.
    pub acceleration: Option<[f64; 3]>,
    /// Angular rate about x, y, z (rad/s).
    pub angular_rate: [f64; 3],
    /// Every column of the source line, for lossless re-serialization.
    pub raw: Vec<f64>,
}

impl ImuRecord {
    /// Build an oxts-shaped record from the consumed quantities; other columns are zero.
    pub fn synthetic(
        frame: i64,
        timestamp: f64,
        velocity: [f64; 3],
        acceleration: [f64; 3],
        angular_rate: [f64; 3],
    ) -> Self {
        let mut raw = vec![0.0; OXTS_COLUMNS + 1];
        for (cols, vals) in [
            (VELOCITY_COLS, velocity),
            (ACCELERATION_COLS, acceleration),
            (ANGULAR_RATE_COLS, angular_rate),
        ] {
            for (c, v) in cols.iter().zip(vals) {
                raw[*c] = v;
            }
        }
        raw[OXTS_COLUMNS] = timestamp;
        Self {
            frame,
            timestamp,
            velocity,
            acceleration: Some(acceleration),
            angular_rate,
            raw,
        }
    }
}

pub fn parse_imu(text: &str, frame_rate: f64) -> Result<Vec<ImuRecord>, IngestError> {
    let mut records = Vec::new();
    let mut frame = 0i64;
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        if raw_line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw_line.split_whitespace().collect();
        if fields.len() != OXTS_COLUMNS && fields.len() != OXTS_COLUMNS + 1 {
            return Err(parse_err(
                line,
                0,
                format!("expected {OXTS_COLUMNS} fields, found {}", fields.len()),
            ));
        }
        let raw = fields
            .iter()
            .enumerate()
            .map(|(i, f)| parse_real(f, line, i + 1))
            .collect::<Result<Vec<f64>, _>>()?;
        let pick = |cols: [usize; 3]| cols.map(|c| raw[c]);
        let timestamp = raw
            .get(OXTS_COLUMNS)
            .copied()
            .unwrap_or(frame as f64 / frame_rate);
        if let Some(prev) = records.last().map(|r: &ImuRecord| r.timestamp) {
            if timestamp <= prev {
                return Err(parse_err(line, OXTS_COLUMNS + 1, "timestamps must increase"));
            }
        }
        records.push(ImuRecord {
            frame,
            timestamp,
            velocity: pick(VELOCITY_COLS),
            acceleration: Some(pick(ACCELERATION_COLS)),
            angular_rate: pick(ANGULAR_RATE_COLS),
            raw,
        });
        frame += 1;
    }
    Ok(records)
}

pub fn serialize_imu(records: &[ImuRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let fields: Vec<String> = r.raw.iter().map(|v| v.to_string()).collect();
        out.push_str(&fields.join(" "));
        out.push('\n');
    }
    out
}

fn index_of(records: &[ImuRecord], frame: i64) -> Result<usize, IngestError> {
    let range_err = || IngestError::Range {
        frame,
        first: records.first().map_or(0, |r| r.frame),
        last: records.last().map_or(-1, |r| r.frame),
    };
    records
        .binary_search_by_key(&frame, |r| r.frame)
        .map_err(|_| range_err())
}

fn axpy(acc: &mut [f64; 3], scale: f64, v: &[f64; 3]) {
    for (a, x) in acc.iter_mut().zip(v) {
        *a += scale * x;
    }
}

/// Trapezoidal integral of vehicle-frame velocity over `[frame_a, frame_b]`.
pub fn camera_displacement(
    records: &[ImuRecord],
    frame_a: i64,
    frame_b: i64,
) -> Result<[f64; 3], IngestError> {
    if frame_b <= frame_a {
        return Err(IngestError::Interval {
            from: frame_a,
            to: frame_b,
        });
    }
    let (ia, ib) = (index_of(records, frame_a)?, index_of(records, frame_b)?);
    let mut displacement = [0.0; 3];
    for pair in records[ia..=ib].windows(2) {
        let h = pair[1].timestamp - pair[0].timestamp;
        axpy(&mut displacement, 0.5 * h, &pair[0].velocity);
        axpy(&mut displacement, 0.5 * h, &pair[1].velocity);
    }
    Ok(displacement)
}

/// Derivative of a per-frame vector by central differences, one-sided at the ends.
fn differentiate(
    records: &[ImuRecord],
    frame: i64,
    value: impl Fn(&ImuRecord) -> [f64; 3],
) -> Result<[f64; 3], IngestError> {
    let i = index_of(records, frame)?;
    if records.len() < 2 {
        return Err(IngestError::Range {
            frame,
            first: records[0].frame,
            last: records[0].frame,
        });
    }
    let lo = i.saturating_sub(1);
    let hi = (i + 1).min(records.len() - 1);
    let h = records[hi].timestamp - records[lo].timestamp;
    let (a, b) = (value(&records[lo]), value(&records[hi]));
    Ok([0, 1, 2].map(|k| (b[k] - a[k]) / h))
}

pub fn angular_acceleration(records: &[ImuRecord], frame: i64) -> Result<[f64; 3], IngestError> {
    differentiate(records, frame, |r| r.angular_rate)
}

/// Measured acceleration when present, otherwise differenced velocity.
pub fn acceleration_at(
    records: &[ImuRecord],
    frame: i64,
) -> Result<([f64; 3], AccelerationSource), IngestError> {
    let i = index_of(records, frame)?;
    match records[i].acceleration {
        Some(a) => Ok((a, AccelerationSource::Measured)),
        None => differentiate(records, frame, |r| r.velocity)
            .map(|a| (a, AccelerationSource::Differenced)),
    }
}

/// Keyframe-major IMU block: for each of the three keyframes, velocity xyz,
/// acceleration xyz, angular acceleration xyz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImuFeatures {
    pub values: [f64; IMU_FEATURE_LEN],
    pub acceleration_source: AccelerationSource,
}

impl ImuFeatures {
    pub fn zeros() -> Self {
        Self {
            values: [0.0; IMU_FEATURE_LEN],
            acceleration_source: AccelerationSource::Measured,
        }
    }
}

pub fn imu_features(records: &[ImuRecord], keyframes: &[i64]) -> Result<ImuFeatures, IngestError> {
    if keyframes.len() != 3 {
        return Err(IngestError::KeyframeCount {
            needed: 3,
            got: keyframes.len(),
        });
    }
    let mut values = [0.0; IMU_FEATURE_LEN];
    let mut source = AccelerationSource::Measured;
    for (k, &frame) in keyframes.iter().enumerate() {
        let rec = &records[index_of(records, frame)?];
        let (accel, src) = acceleration_at(records, frame)?;
        if src == AccelerationSource::Differenced {
            source = src;
        }
        let alpha = angular_acceleration(records, frame)?;
        let block = &mut values[k * 9..(k + 1) * 9];
        block[..3].copy_from_slice(&rec.velocity);
        block[3..6].copy_from_slice(&accel);
        block[6..].copy_from_slice(&alpha);
    }
    Ok(ImuFeatures {
        values,
        acceleration_source: source,
    })
}

/// Vehicle frame (forward, left, up) to camera frame (right, down, forward).
pub fn vehicle_to_camera(v: [f64; 3]) -> [f64; 3] {
    [-v[1], -v[2], v[0]]
}

/// Scalar camera advance toward the object: the camera-frame displacement
/// projected on the unit ray through the object.
pub fn displacement_along_ray(vehicle_displacement: [f64; 3], unit_ray: [f64; 3]) -> f64 {
    let d = vehicle_to_camera(vehicle_displacement);
    d[0] * unit_ray[0] + d[1] * unit_ray[1] + d[2] * unit_ray[2]
}

#[cfg(test)]
mod tests {
    use super::*;

    const CAR: &str = "0 1 Car 0 0 -1.793451 296.744956 161.752147 455.226042 292.372804 2 1.823255 4.433886 -4.552284 1.858523 13.410495 -2.115488\n";

    fn constant_velocity_imu(n: i64, fps: f64, v: f64) -> Vec<ImuRecord> {
        (0..n)
            .map(|f| ImuRecord::synthetic(f, f as f64 / fps, [v, 0.0, 0.0], [0.0; 3], [0.0; 3]))
            .collect()
    }

    #[test]
    fn parses_car_label() {
        let recs = parse_labels(CAR).unwrap();
        assert_eq!(recs.len(), 1);
        let r = &recs[0];
        assert_eq!(r.frame, 0);
        assert_eq!(r.track_id, 1);
        assert_eq!(r.object_type, "Car");
        assert!(!r.excluded);
        assert_eq!(r.bbox, [296.744956, 161.752147, 455.226042, 292.372804]);
        assert_eq!(r.dimensions, [2.0, 1.823255, 4.433886]);
        assert_eq!(r.location, [-4.552284, 1.858523, 13.410495]);
        assert_eq!(r.rotation_y, -2.115488);
        assert_eq!(r.score, None);
        let c = r.center_3d().unwrap();
        assert_eq!(c, [-4.552284, 1.858523 - 1.0, 13.410495]);
    }

    #[test]
    fn dontcare_is_excluded() {
        let line = "3 -1 DontCare -1 -1 -10 219.3 188.49 245.5 218.56 -1000 -1000 -1000 -10 -1 -1 -1\n";
        let r = &parse_labels(line).unwrap()[0];
        assert!(r.excluded);
        assert_eq!(r.center_3d(), None);
        let d = r.to_detection((1242, 375));
        assert_eq!(d.truncated, None);
        assert_eq!(d.occluded, None);
    }

    #[test]
    fn wrong_field_count_names_line() {
        let short = "0 1 Car 0 0 -1.7 296 161 455 292 2 1.8 4.4 -4.5 1.8 13.4\n";
        let text = format!("{CAR}{short}");
        assert_eq!(
            parse_labels(&text).unwrap_err(),
            IngestError::Parse {
                line: 2,
                column: 0,
                reason: "expected 17 fields, found 16".into()
            }
        );
        let bad_num = CAR.replace("13.410495", "13.4x");
        assert!(matches!(
            parse_labels(&bad_num).unwrap_err(),
            IngestError::Parse { line: 1, column: 16, .. }
        ));
        let bad_frame = CAR.replacen('0', "a", 1);
        assert!(matches!(
            parse_labels(&bad_frame).unwrap_err(),
            IngestError::Parse { line: 1, column: 1, .. }
        ));
    }

    #[test]
    fn label_serialization_round_trips() {
        let recs = parse_labels(CAR).unwrap();
        let text = serialize_labels(&recs);
        assert_eq!(parse_labels(&text).unwrap(), recs);
        assert_eq!(text, CAR);
    }

    #[test]
    fn imu_constant_forward_velocity() {
        let text = serialize_imu(&constant_velocity_imu(11, 10.0, 5.0));
        let recs = parse_imu(&text, 10.0).unwrap();
        assert_eq!(recs.len(), 11);
        assert!(recs.iter().all(|r| r.velocity == [5.0, 0.0, 0.0]));
        assert!(parse_imu("", 10.0).unwrap().is_empty());
    }

    #[test]
    fn imu_timestamps_synthesized() {
        let line = vec!["0"; OXTS_COLUMNS].join(" ");
        let text = format!("{line}\n{line}\n{line}\n");
        let recs = parse_imu(&text, 10.0).unwrap();
        assert_eq!(recs.iter().map(|r| r.timestamp).collect::<Vec<_>>(), vec![0.0, 0.1, 0.2]);
        assert_eq!(recs[2].frame, 2);
    }

    #[test]
    fn imu_nan_is_rejected() {
        let mut fields = vec!["0"; OXTS_COLUMNS];
        fields[9] = "NaN";
        let text = fields.join(" ");
        assert!(matches!(
            parse_imu(&text, 10.0).unwrap_err(),
            IngestError::Parse { line: 1, column: 10, .. }
        ));
        assert!(matches!(
            parse_imu("1 2 3", 10.0).unwrap_err(),
            IngestError::Parse { line: 1, column: 0, .. }
        ));
    }

    #[test]
    fn trapezoid_displacements() {
        let recs = constant_velocity_imu(11, 10.0, 5.0);
        let d = camera_displacement(&recs, 0, 5).unwrap();
        assert!((d[0] - 2.5).abs() < 1e-12 && d[1] == 0.0 && d[2] == 0.0);

        // 0 -> 2 m/s over 1 s.
        let ramp: Vec<_> = (0..11)
            .map(|f| {
                let t = f as f64 / 10.0;
                ImuRecord::synthetic(f, t, [2.0 * t, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0; 3])
            })
            .collect();
        let d = camera_displacement(&ramp, 0, 10).unwrap();
        assert!((d[0] - 1.0).abs() < 1e-12);

        let still = constant_velocity_imu(5, 10.0, 0.0);
        assert_eq!(camera_displacement(&still, 0, 4).unwrap(), [0.0; 3]);

        assert!(matches!(
            camera_displacement(&recs, 5, 20),
            Err(IngestError::Range { frame: 20, .. })
        ));
        assert!(camera_displacement(&recs, 5, 5).is_err());
    }

    #[test]
    fn angular_acceleration_by_differences() {
        let constant: Vec<_> = (0..5)
            .map(|f| ImuRecord::synthetic(f, f as f64 / 10.0, [0.0; 3], [0.0; 3], [0.0, 0.0, 0.3]))
            .collect();
        assert_eq!(angular_acceleration(&constant, 2).unwrap(), [0.0; 3]);

        let ramp: Vec<_> = (0..11)
            .map(|f| {
                ImuRecord::synthetic(f, f as f64 / 10.0, [0.0; 3], [0.0; 3], [0.0, 0.0, 0.01 * f as f64])
            })
            .collect();
        for f in [0, 5, 10] {
            let a = angular_acceleration(&ramp, f).unwrap();
            assert!((a[2] - 0.1).abs() < 1e-12, "frame {f}: {a:?}");
        }

        let single = &constant[..1];
        assert!(angular_acceleration(single, 0).is_err());
    }

    #[test]
    fn differenced_acceleration_when_missing() {
        let mut recs: Vec<_> = (0..5)
            .map(|f| {
                let t = f as f64 / 10.0;
                ImuRecord::synthetic(f, t, [3.0 * t, 0.0, 0.0], [0.0; 3], [0.0; 3])
            })
            .collect();
        for r in &mut recs {
            r.acceleration = None;
        }
        let (a, src) = acceleration_at(&recs, 2).unwrap();
        assert_eq!(src, AccelerationSource::Differenced);
        assert!((a[0] - 3.0).abs() < 1e-12);
        let feats = imu_features(&recs, &[0, 2, 4]).unwrap();
        assert_eq!(feats.acceleration_source, AccelerationSource::Differenced);
    }

    #[test]
    fn imu_feature_layout() {
        let recs: Vec<_> = (0..11)
            .map(|f| {
                let x = f as f64;
                ImuRecord::synthetic(f, x / 10.0, [x, 0.0, 0.0], [0.0, x, 0.0], [0.0, 0.0, 0.0])
            })
            .collect();
        let feats = imu_features(&recs, &[0, 5, 10]).unwrap();
        assert_eq!(feats.values.len(), 27);
        assert_eq!(feats.values[0], 0.0);
        assert_eq!(feats.values[9], 5.0);
        assert_eq!(feats.values[18], 10.0);
        assert_eq!(feats.values[9 + 4], 5.0);
        assert!(imu_features(&recs, &[0, 5]).is_err());
    }

    #[test]
    fn projection_on_ray() {
        assert_eq!(displacement_along_ray([2.0, 0.0, 0.0], [0.0, 0.0, 1.0]), 2.0);
        // Moving left is moving toward an object on the left (negative x ray).
        let s = 0.5f64.sqrt();
        let along = displacement_along_ray([0.0, 1.0, 0.0], [-s, 0.0, s]);
        assert!((along - s).abs() < 1e-15);
    }
}
