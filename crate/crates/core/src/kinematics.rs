//! Ground-truth axial scene model and forward simulator.
//!
//! Positions are measured along the camera→object axis. Camera motion toward
//! the object is a positive displacement, and the range is
//! `d(t) = D(t) - C(t)`. The projected height follows `H = K / d`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, KeyValues};
use crate::solver::{KeyframeTriple, MotionOrder, TrackId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("range at frame {frame} is not positive ({distance})")]
    NonPositiveDistance { frame: i64, distance: f64 },
    #[error("bad frame sequence: {0}")]
    BadFrameSequence(String),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("invalid ray: {0}")]
    InvalidRay(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Polynomial motion along the camera–object axis.
///
/// `jerk` adds a cubic term on top of the constant-acceleration model. Camera
/// paths need it to excite the three-interval system: a camera whose
/// displacements are themselves linear in the interval index is
/// indistinguishable from object motion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trajectory1D {
    pub initial_position: f64,
    pub velocity: f64,
    pub acceleration: f64,
    #[serde(default)]
    pub jerk: f64,
    pub order: MotionOrder,
}

impl Trajectory1D {
    pub fn stationary(position: f64) -> Self {
        Self {
            initial_position: position,
            velocity: 0.0,
            acceleration: 0.0,
            jerk: 0.0,
            order: MotionOrder::Stationary,
        }
    }

    pub fn constant_velocity(position: f64, velocity: f64) -> Self {
        Self {
            initial_position: position,
            velocity,
            acceleration: 0.0,
            jerk: 0.0,
            order: MotionOrder::ConstantVelocity,
        }
    }

    pub fn constant_acceleration(position: f64, velocity: f64, acceleration: f64) -> Self {
        Self {
            initial_position: position,
            velocity,
            acceleration,
            jerk: 0.0,
            order: MotionOrder::ConstantAcceleration,
        }
    }

    pub fn with_jerk(self, jerk: f64) -> Self {
        Self {
            jerk,
            order: MotionOrder::ConstantAcceleration,
            ..self
        }
    }

    /// Position at time `t` seconds; terms above the declared order are ignored.
    pub fn position(&self, t: f64) -> f64 {
        match self.order {
            MotionOrder::Stationary => self.initial_position,
            MotionOrder::ConstantVelocity => self.initial_position + self.velocity * t,
            MotionOrder::ConstantAcceleration => {
                self.initial_position
                    + self.velocity * t
                    + 0.5 * self.acceleration * t * t
                    + self.jerk * t * t * t / 6.0
            }
        }
    }

    pub fn velocity_at(&self, t: f64) -> f64 {
        match self.order {
            MotionOrder::Stationary => 0.0,
            MotionOrder::ConstantVelocity => self.velocity,
            MotionOrder::ConstantAcceleration => {
                self.velocity + self.acceleration * t + 0.5 * self.jerk * t * t
            }
        }
    }

    pub fn acceleration_at(&self, t: f64) -> f64 {
        match self.order {
            MotionOrder::ConstantAcceleration => self.acceleration + self.jerk * t,
            _ => 0.0,
        }
    }
}

/// Multiplicative Gaussian noise on heights, additive Gaussian noise on camera displacements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub height_noise_rel: f64,
    pub imu_noise_abs: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub camera: Trajectory1D,
    pub object: Trajectory1D,
    /// `K` in `H = K / d`.
    pub size_constant: f64,
    pub frame_rate: f64,
    pub noise: Option<NoiseSpec>,
}

/// Noiseless ground truth alongside the (possibly noisy) observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledScene {
    pub triple: KeyframeTriple,
    pub distances: Vec<f64>,
    pub object_deltas: Vec<f64>,
    pub true_camera_deltas: Vec<f64>,
}

impl SampledScene {
    /// Ground-truth range at the newest keyframe.
    pub fn final_distance(&self) -> f64 {
        *self.distances.last().expect("sampled scenes have at least two frames")
    }
}

const SCENE_KEYS: &[&str] = &[
    "camera.position",
    "camera.velocity",
    "camera.acceleration",
    "camera.jerk",
    "camera.order",
    "object.position",
    "object.velocity",
    "object.acceleration",
    "object.jerk",
    "object.order",
    "size_constant",
    "frame_rate",
    "noise.height_rel",
    "noise.imu_abs",
    "noise.seed",
];

impl SceneSpec {
    pub fn validate(&self) -> Result<(), KinematicsError> {
        if !(self.size_constant > 0.0) || !self.size_constant.is_finite() {
            return Err(KinematicsError::InvalidScene("size_constant must be positive".into()));
        }
        if !(self.frame_rate > 0.0) || !self.frame_rate.is_finite() {
            return Err(KinematicsError::InvalidScene("frame_rate must be positive".into()));
        }
        for traj in [&self.camera, &self.object] {
            if ![traj.initial_position, traj.velocity, traj.acceleration, traj.jerk]
                .iter()
                .all(|v| v.is_finite())
            {
                return Err(KinematicsError::InvalidScene("non-finite trajectory".into()));
            }
            if traj.jerk != 0.0 && traj.order != MotionOrder::ConstantAcceleration {
                return Err(KinematicsError::InvalidScene(
                    "jerk requires a constant-acceleration trajectory".into(),
                ));
            }
        }
        if let Some(noise) = &self.noise {
            if !(noise.height_noise_rel >= 0.0) || !(noise.imu_noise_abs >= 0.0) {
                return Err(KinematicsError::InvalidScene("noise std must be >= 0".into()));
            }
        }
        Ok(())
    }

    pub fn distance_at(&self, t: f64) -> f64 {
        self.object.position(t) - self.camera.position(t)
    }

    /// Parse the `key = value` scene format. See the README for the key list.
    pub fn from_config_str(text: &str) -> Result<Self, KinematicsError> {
        let kv = KeyValues::parse(text)?;
        kv.reject_unknown(SCENE_KEYS)?;
        let trajectory = |prefix: &str| -> Result<Trajectory1D, KinematicsError> {
            let order: u8 = kv.get_or(&format!("{prefix}.order"), 0)?;
            let order = MotionOrder::from_degree(order)
                .map_err(|e| KinematicsError::InvalidScene(format!("{prefix}.order: {e}")))?;
            Ok(Trajectory1D {
                initial_position: kv.require(&format!("{prefix}.position"))?,
                velocity: kv.get_or(&format!("{prefix}.velocity"), 0.0)?,
                acceleration: kv.get_or(&format!("{prefix}.acceleration"), 0.0)?,
                jerk: kv.get_or(&format!("{prefix}.jerk"), 0.0)?,
                order,
            })
        };
        let noise = if kv.keys().any(|k| k.starts_with("noise.")) {
            Some(NoiseSpec {
                height_noise_rel: kv.get_or("noise.height_rel", 0.0)?,
                imu_noise_abs: kv.get_or("noise.imu_abs", 0.0)?,
                seed: kv.get_or("noise.seed", 0)?,
            })
        } else {
            None
        };
        let spec = Self {
            camera: trajectory("camera")?,
            object: trajectory("object")?,
            size_constant: kv.require("size_constant")?,
            frame_rate: kv.require("frame_rate")?,
            noise,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        for (prefix, t) in [("camera", &self.camera), ("object", &self.object)] {
            out.push_str(&format!("{prefix}.position = {}\n", t.initial_position));
            out.push_str(&format!("{prefix}.velocity = {}\n", t.velocity));
            out.push_str(&format!("{prefix}.acceleration = {}\n", t.acceleration));
            out.push_str(&format!("{prefix}.jerk = {}\n", t.jerk));
            out.push_str(&format!("{prefix}.order = {}\n", t.order.degree()));
        }
        out.push_str(&format!("size_constant = {}\n", self.size_constant));
        out.push_str(&format!("frame_rate = {}\n", self.frame_rate));
        if let Some(n) = &self.noise {
            out.push_str(&format!("noise.height_rel = {}\n", n.height_noise_rel));
            out.push_str(&format!("noise.imu_abs = {}\n", n.imu_noise_abs));
            out.push_str(&format!("noise.seed = {}\n", n.seed));
        }
        out
    }
}

fn check_frames(frame_indices: &[i64]) -> Result<(), KinematicsError> {
    if frame_indices.len() < 2 {
        return Err(KinematicsError::BadFrameSequence(format!(
            "need at least 2 frames, got {}",
            frame_indices.len()
        )));
    }
    if frame_indices.windows(2).any(|w| w[1] <= w[0]) {
        return Err(KinematicsError::BadFrameSequence(
            "frame indices must be strictly increasing".into(),
        ));
    }
    let step = frame_indices[1] - frame_indices[0];
    if frame_indices.windows(2).any(|w| w[1] - w[0] != step) {
        return Err(KinematicsError::BadFrameSequence(
            "frame indices must be evenly spaced".into(),
        ));
    }
    Ok(())
}

/// Observe a scene at the given frames. Frame `f` is at time `f / frame_rate`.
pub fn sample_scene(spec: &SceneSpec, frame_indices: &[i64]) -> Result<SampledScene, KinematicsError> {
    spec.validate()?;
    check_frames(frame_indices)?;

    let times: Vec<f64> = frame_indices
        .iter()
        .map(|&f| f as f64 / spec.frame_rate)
        .collect();
    let camera: Vec<f64> = times.iter().map(|&t| spec.camera.position(t)).collect();
    let object: Vec<f64> = times.iter().map(|&t| spec.object.position(t)).collect();
    let distances: Vec<f64> = object.iter().zip(&camera).map(|(o, c)| o - c).collect();
    if let Some((i, &d)) = distances.iter().enumerate().find(|(_, d)| !(**d > 0.0)) {
        return Err(KinematicsError::NonPositiveDistance {
            frame: frame_indices[i],
            distance: d,
        });
    }

    let true_camera_deltas: Vec<f64> = camera.windows(2).map(|w| w[1] - w[0]).collect();
    let object_deltas: Vec<f64> = object.windows(2).map(|w| w[1] - w[0]).collect();
    let mut heights: Vec<f64> = distances.iter().map(|d| spec.size_constant / d).collect();
    let mut camera_deltas = true_camera_deltas.clone();

    if let Some(noise) = &spec.noise {
        let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
        for h in &mut heights {
            let z: f64 = StandardNormal.sample(&mut rng);
            // Clamp keeps heights positive under extreme noise settings.
            *h = (*h * (1.0 + noise.height_noise_rel * z)).max(f64::MIN_POSITIVE);
        }
        for c in &mut camera_deltas {
            let z: f64 = StandardNormal.sample(&mut rng);
            *c += noise.imu_noise_abs * z;
        }
    }

    let dt = (frame_indices[1] - frame_indices[0]) as f64 / spec.frame_rate;
    let triple = KeyframeTriple {
        heights,
        camera_deltas,
        dt,
        bbox_centers: vec![[0.5, 0.5]; frame_indices.len()],
        frame_ids: frame_indices.to_vec(),
        track_id: TrackId(0),
    };
    Ok(SampledScene {
        triple,
        distances,
        object_deltas,
        true_camera_deltas,
    })
}

/// Pinhole intrinsics used only to turn a box center into a viewing ray.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub focal_length: f64,
    pub principal_point: [f64; 2],
    pub image_size: (u32, u32),
}

impl CameraIntrinsics {
    /// Nominal left color camera of the KITTI tracking sequences.
    pub const KITTI_NOMINAL: CameraIntrinsics = CameraIntrinsics {
        focal_length: 721.5377,
        principal_point: [609.5593, 172.854],
        image_size: (1242, 375),
    };

    /// Unit ray (x right, y down, z forward) through a normalized image point.
    pub fn unit_ray(&self, center: [f64; 2]) -> Result<[f64; 3], KinematicsError> {
        if !(self.focal_length > 0.0) {
            return Err(KinematicsError::InvalidRay("focal length must be positive".into()));
        }
        let px = center[0] * f64::from(self.image_size.0);
        let py = center[1] * f64::from(self.image_size.1);
        let x = (px - self.principal_point[0]) / self.focal_length;
        let y = (py - self.principal_point[1]) / self.focal_length;
        let norm = (x * x + y * y + 1.0).sqrt();
        if !norm.is_finite() {
            return Err(KinematicsError::InvalidRay("non-finite ray".into()));
        }
        Ok([x / norm, y / norm, 1.0 / norm])
    }
}

/// Cartesian object center at `range` along the ray through `center`.
pub fn ray_adapter(
    center: [f64; 2],
    intrinsics: &CameraIntrinsics,
    range: f64,
) -> Result<[f64; 3], KinematicsError> {
    if !(range > 0.0) {
        return Err(KinematicsError::InvalidRay(format!("range must be positive, got {range}")));
    }
    let ray = intrinsics.unit_ray(center)?;
    Ok(ray.map(|c| c * range))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    fn decelerating_camera_scene() -> SceneSpec {
        // C(t) = 2.5 t - t²/2 gives ΔC = 2 then 1 at one frame per second.
        SceneSpec {
            camera: Trajectory1D::constant_acceleration(0.0, 2.5, -1.0),
            object: Trajectory1D::stationary(10.0),
            size_constant: 1.0,
            frame_rate: 1.0,
            noise: None,
        }
    }

    #[test]
    fn stationary_object_approached_by_camera() {
        let s = sample_scene(&decelerating_camera_scene(), &[0, 1, 2]).unwrap();
        assert_eq!(s.distances, vec![10.0, 8.0, 7.0]);
        assert_eq!(s.triple.camera_deltas, vec![2.0, 1.0]);
        assert_eq!(s.triple.heights[0], 0.1);
        assert_eq!(s.triple.heights[1], 0.125);
        assert!(rel(s.triple.heights[2], 1.0 / 7.0) < 1e-15);
        assert_eq!(s.final_distance(), 7.0);
        assert_eq!(s.triple.dt, 1.0);
    }

    #[test]
    fn static_scene_projects_constant_height() {
        let spec = SceneSpec {
            camera: Trajectory1D::stationary(0.0),
            object: Trajectory1D::stationary(5.0),
            size_constant: 1.0,
            frame_rate: 10.0,
            noise: None,
        };
        let s = sample_scene(&spec, &[0, 5, 10]).unwrap();
        assert_eq!(s.triple.heights, vec![0.2, 0.2, 0.2]);
        assert_eq!(s.triple.camera_deltas, vec![0.0, 0.0]);
        assert_eq!(s.triple.dt, 0.5);
    }

    #[test]
    fn moving_object_recursion() {
        let spec = SceneSpec {
            camera: Trajectory1D::constant_acceleration(0.0, 3.5, -1.0),
            object: Trajectory1D::constant_velocity(20.0, 1.0),
            size_constant: 1.0,
            frame_rate: 1.0,
            noise: None,
        };
        let s = sample_scene(&spec, &[0, 1, 2]).unwrap();
        assert_eq!(s.true_camera_deltas, vec![3.0, 2.0]);
        assert_eq!(s.distances, vec![20.0, 18.0, 17.0]);
        assert_eq!(s.triple.heights[0], 0.05);
        assert!(rel(s.triple.heights[1], 1.0 / 18.0) < 1e-15);
        assert!(rel(s.triple.heights[2], 1.0 / 17.0) < 1e-15);
        for n in 1..3 {
            let lhs = s.distances[n] - s.distances[n - 1];
            let rhs = s.object_deltas[n - 1] - s.true_camera_deltas[n - 1];
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn rejects_bad_frames_and_negative_ranges() {
        let spec = decelerating_camera_scene();
        assert!(matches!(
            sample_scene(&spec, &[0, 2, 1]),
            Err(KinematicsError::BadFrameSequence(_))
        ));
        assert!(matches!(
            sample_scene(&spec, &[3]),
            Err(KinematicsError::BadFrameSequence(_))
        ));
        assert!(matches!(
            sample_scene(&spec, &[0, 1, 3]),
            Err(KinematicsError::BadFrameSequence(_))
        ));
        let passing = SceneSpec {
            camera: Trajectory1D::constant_velocity(0.0, 3.0),
            ..spec
        };
        assert!(matches!(
            sample_scene(&passing, &[0, 5, 10]),
            Err(KinematicsError::NonPositiveDistance { .. })
        ));
    }

    #[test]
    fn noise_is_seeded() {
        let mut spec = decelerating_camera_scene();
        spec.noise = Some(NoiseSpec {
            height_noise_rel: 0.01,
            imu_noise_abs: 0.05,
            seed: 7,
        });
        let a = sample_scene(&spec, &[0, 1, 2]).unwrap();
        let b = sample_scene(&spec, &[0, 1, 2]).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.triple.heights[0], 0.1);
        spec.noise.as_mut().unwrap().seed = 8;
        let c = sample_scene(&spec, &[0, 1, 2]).unwrap();
        assert_ne!(a.triple.heights, c.triple.heights);
        // Ground truth is untouched by noise.
        assert_eq!(a.distances, vec![10.0, 8.0, 7.0]);
    }

    #[test]
    fn invalid_scene() {
        let mut spec = decelerating_camera_scene();
        spec.size_constant = 0.0;
        assert!(sample_scene(&spec, &[0, 1]).is_err());
        let mut spec = decelerating_camera_scene();
        spec.frame_rate = -1.0;
        assert!(sample_scene(&spec, &[0, 1]).is_err());
    }

    #[test]
    fn ray_adapter_examples() {
        let k = CameraIntrinsics {
            focal_length: 1000.0,
            principal_point: [500.0, 200.0],
            image_size: (1000, 400),
        };
        assert_eq!(ray_adapter([0.5, 0.5], &k, 10.0).unwrap(), [0.0, 0.0, 10.0]);

        // 1000 px right of the principal point at focal 1000: 45 degrees.
        let wide = CameraIntrinsics {
            image_size: (2000, 400),
            principal_point: [1000.0, 200.0],
            ..k
        };
        let p = ray_adapter([1.0, 0.5], &wide, 2f64.sqrt()).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-15 && p[1] == 0.0 && (p[2] - 1.0).abs() < 1e-15);

        let p = ray_adapter([0.6, 0.5], &k, 10.0).unwrap();
        let expected = [1.0 / 1.01f64.sqrt(), 0.0, 10.0 / 1.01f64.sqrt()];
        assert!(rel(p[0], expected[0]) < 1e-14);
        assert!(rel(p[2], expected[2]) < 1e-14);
        assert!((p[0] - 0.995037).abs() < 1e-6);

        assert!(ray_adapter([0.5, 0.5], &k, 0.0).is_err());
        let bad = CameraIntrinsics { focal_length: 0.0, ..k };
        assert!(ray_adapter([0.5, 0.5], &bad, 1.0).is_err());
    }

    #[test]
    fn scene_config_round_trip() {
        let mut spec = decelerating_camera_scene();
        spec.noise = Some(NoiseSpec {
            height_noise_rel: 0.01,
            imu_noise_abs: 0.0,
            seed: 42,
        });
        let text = spec.to_config_string();
        assert_eq!(SceneSpec::from_config_str(&text).unwrap(), spec);
        assert!(matches!(
            SceneSpec::from_config_str(&format!("{text}bogus = 1\n")),
            Err(KinematicsError::Config(ConfigError::UnknownKey { .. }))
        ));
        assert!(SceneSpec::from_config_str("camera.position = 0\n").is_err());
    }

    #[test]
    fn trajectory_respects_declared_order() {
        let t = Trajectory1D {
            initial_position: 1.0,
            velocity: 2.0,
            acceleration: 4.0,
            jerk: 0.0,
            order: MotionOrder::ConstantVelocity,
        };
        assert_eq!(t.position(0.0), 1.0);
        assert_eq!(t.position(1.0) - t.position(0.0), t.position(3.0) - t.position(2.0));
        let t = Trajectory1D { order: MotionOrder::ConstantAcceleration, ..t };
        assert_eq!(t.position(1.0), 5.0);
        assert_eq!(t.velocity_at(1.0), 6.0);
        let t = t.with_jerk(6.0);
        assert_eq!(t.position(1.0), 6.0);
        assert_eq!(t.acceleration_at(1.0), 10.0);
    }
}
