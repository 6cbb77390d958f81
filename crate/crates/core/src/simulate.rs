//! Randomized scene ensembles run through the forward simulator and the
//! analytic solver.
//!
//! Each scene draws its own generator from the ensemble seed and the scene
//! index, so results do not depend on evaluation order or thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, KeyValues};
use crate::kinematics::{sample_scene, KinematicsError, NoiseSpec, SceneSpec, Trajectory1D};
use crate::metrics::{
    binned_report, compute_metrics, BinAxis, BinnedErrorReport, EvalPair, MetricsError,
    MetricsReport,
};
use crate::solver::{estimate, EstimateStatus, MotionOrder, SolverError, DEFAULT_EPS_SINGULAR};

/// Scenes whose sampled range drops below this are redrawn.
const MIN_SAMPLED_RANGE: f64 = 1.0;
const MAX_DRAWS: usize = 1000;

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid ensemble: {0}")]
    Invalid(String),
    #[error("scene {index}: {source}")]
    Scene {
        index: usize,
        #[source]
        source: KinematicsError,
    },
    #[error("scene {index}: {source}")]
    Solver {
        index: usize,
        #[source]
        source: SolverError,
    },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Distribution of random scenes. Magnitude ranges are sampled uniformly
/// with a random sign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub scenes: usize,
    pub seed: u64,
    pub object_order: u8,
    /// Range at the newest keyframe is uniform in `[min_distance, max_distance]`.
    pub min_distance: f64,
    pub max_distance: f64,
    pub camera_speed_min: f64,
    pub camera_speed_max: f64,
    pub camera_accel_min: f64,
    pub camera_accel_max: f64,
    pub camera_jerk_min: f64,
    pub camera_jerk_max: f64,
    /// Forces zero camera acceleration and jerk.
    pub constant_camera_velocity: bool,
    pub object_speed_max: f64,
    pub object_accel_max: f64,
    pub object_height_min: f64,
    pub object_height_max: f64,
    pub focal_length: f64,
    pub height_noise: f64,
    pub imu_noise: f64,
    pub eps_singular: f64,
    pub stride: i64,
    pub frame_rate: f64,
    pub bin_width_distance: f64,
    pub bin_width_distance_change: f64,
    pub bin_width_velocity_change: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            scenes: 1000,
            seed: 0,
            object_order: 1,
            min_distance: 5.0,
            max_distance: 80.0,
            camera_speed_min: 0.0,
            camera_speed_max: 15.0,
            camera_accel_min: 1.0,
            camera_accel_max: 3.0,
            camera_jerk_min: 1.0,
            camera_jerk_max: 3.0,
            constant_camera_velocity: false,
            object_speed_max: 5.0,
            object_accel_max: 1.0,
            object_height_min: 1.0,
            object_height_max: 4.0,
            focal_length: 721.5377,
            height_noise: 0.0,
            imu_noise: 0.0,
            eps_singular: DEFAULT_EPS_SINGULAR,
            stride: 5,
            frame_rate: 10.0,
            bin_width_distance: 5.0,
            bin_width_distance_change: 1.0,
            bin_width_velocity_change: 0.5,
        }
    }
}

macro_rules! ensemble_keys {
    ($($field:ident),* $(,)?) => {
        const ENSEMBLE_KEYS: &[&str] = &[$(stringify!($field)),*];

        impl EnsembleConfig {
            /// Parse `key = value` lines; absent keys keep their defaults.
            pub fn from_config_str(text: &str) -> Result<Self, SimulateError> {
                let kv = KeyValues::parse(text)?;
                kv.reject_unknown(ENSEMBLE_KEYS)?;
                let d = Self::default();
                let cfg = Self {
                    $($field: kv.get_or(stringify!($field), d.$field)?,)*
                };
                cfg.validate()?;
                Ok(cfg)
            }

            /// Every key with its resolved value, in declaration order.
            pub fn to_config_string(&self) -> String {
                let mut out = String::new();
                $(out.push_str(&format!("{} = {}\n", stringify!($field), self.$field));)*
                out
            }
        }
    };
}

ensemble_keys!(
    scenes,
    seed,
    object_order,
    min_distance,
    max_distance,
    camera_speed_min,
    camera_speed_max,
    camera_accel_min,
    camera_accel_max,
    camera_jerk_min,
    camera_jerk_max,
    constant_camera_velocity,
    object_speed_max,
    object_accel_max,
    object_height_min,
    object_height_max,
    focal_length,
    height_noise,
    imu_noise,
    eps_singular,
    stride,
    frame_rate,
    bin_width_distance,
    bin_width_distance_change,
    bin_width_velocity_change,
);

impl EnsembleConfig {
    pub fn validate(&self) -> Result<(), SimulateError> {
        let bad = |m: &str| Err(SimulateError::Invalid(m.to_string()));
        let pairs = [
            ("distance", self.min_distance, self.max_distance),
            ("camera_speed", self.camera_speed_min, self.camera_speed_max),
            ("camera_accel", self.camera_accel_min, self.camera_accel_max),
            ("camera_jerk", self.camera_jerk_min, self.camera_jerk_max),
            ("object_height", self.object_height_min, self.object_height_max),
        ];
        for (name, lo, hi) in pairs {
            if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
                return bad(&format!("{name} range must satisfy 0 <= min <= max"));
            }
        }
        if self.min_distance < MIN_SAMPLED_RANGE {
            return bad(&format!("min_distance must be at least {MIN_SAMPLED_RANGE}"));
        }
        if !(self.object_height_min > 0.0) || !(self.focal_length > 0.0) {
            return bad("object height and focal length must be positive");
        }
        for v in [
            self.object_speed_max,
            self.object_accel_max,
            self.height_noise,
            self.imu_noise,
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad("speeds, accelerations and noise levels must be finite and >= 0");
            }
        }
        if !(self.eps_singular > 0.0) {
            return bad("eps_singular must be positive");
        }
        if self.stride < 1 || !(self.frame_rate > 0.0) {
            return bad("stride must be >= 1 and frame_rate > 0");
        }
        for w in [
            self.bin_width_distance,
            self.bin_width_distance_change,
            self.bin_width_velocity_change,
        ] {
            if !(w > 0.0 && w.is_finite()) {
                return bad("bin widths must be positive");
            }
        }
        self.motion_order()?;
        Ok(())
    }

    pub fn motion_order(&self) -> Result<MotionOrder, SimulateError> {
        MotionOrder::from_degree(self.object_order)
            .map_err(|e| SimulateError::Invalid(format!("object_order: {e}")))
    }

    /// Keyframe indices `0, stride, ..., q * stride` with `q = object_order + 1`.
    pub fn frames(&self) -> Vec<i64> {
        let q = i64::from(self.object_order) + 1;
        (0..=q).map(|k| k * self.stride).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub index: usize,
    pub d_gt: f64,
    /// `None` when the estimate is degenerate.
    pub d_pred: Option<f64>,
    pub status: EstimateStatus,
    pub condition_number: f64,
    pub distance_change: f64,
    pub velocity_change: f64,
}

impl SceneRecord {
    pub fn rel_error(&self) -> Option<f64> {
        self.d_pred.map(|d| (d - self.d_gt).abs() / self.d_gt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub config: EnsembleConfig,
    pub scenes: usize,
    pub ok: usize,
    pub degenerate: usize,
    /// `None` when no scene produced an estimate.
    pub metrics: Option<MetricsReport>,
    pub binned: Vec<BinnedErrorReport>,
    pub records: Vec<SceneRecord>,
}

impl SimulationReport {
    pub fn degenerate_fraction(&self) -> f64 {
        if self.scenes == 0 {
            0.0
        } else {
            self.degenerate as f64 / self.scenes as f64
        }
    }

    pub fn binned(&self, axis: BinAxis) -> Option<&BinnedErrorReport> {
        self.binned.iter().find(|b| b.axis == axis)
    }

    /// Human-readable summary.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "scenes: {}\nok: {}\ndegenerate: {} ({:.2}%)\n",
            self.scenes,
            self.ok,
            self.degenerate,
            100.0 * self.degenerate_fraction()
        );
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

fn signed_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let mag = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    if rng.random_bool(0.5) {
        mag
    } else {
        -mag
    }
}

fn symmetric(rng: &mut ChaCha8Rng, max: f64) -> f64 {
    if max > 0.0 {
        rng.random_range(-max..=max)
    } else {
        0.0
    }
}

/// Scene `index` of the ensemble, with its keyframe indices.
pub fn draw_scene(cfg: &EnsembleConfig, index: usize) -> Result<SceneSpec, SimulateError> {
    let order = cfg.motion_order()?;
    let frames = cfg.frames();
    let t_end = *frames.last().expect("at least two frames") as f64 / cfg.frame_rate;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);

    for _ in 0..MAX_DRAWS {
        let speed = rng.random_range(cfg.camera_speed_min..=cfg.camera_speed_max);
        let (accel, jerk) = if cfg.constant_camera_velocity {
            (0.0, 0.0)
        } else {
            let a = signed_uniform(&mut rng, cfg.camera_accel_min, cfg.camera_accel_max);
            let j = if order == MotionOrder::ConstantAcceleration {
                signed_uniform(&mut rng, cfg.camera_jerk_min, cfg.camera_jerk_max)
            } else {
                0.0
            };
            (a, j)
        };
        let camera = if cfg.constant_camera_velocity {
            Trajectory1D::constant_velocity(0.0, speed)
        } else {
            Trajectory1D::constant_acceleration(0.0, speed, accel).with_jerk(jerk)
        };

        let mut object = match order {
            MotionOrder::Stationary => Trajectory1D::stationary(0.0),
            MotionOrder::ConstantVelocity => {
                Trajectory1D::constant_velocity(0.0, symmetric(&mut rng, cfg.object_speed_max))
            }
            MotionOrder::ConstantAcceleration => Trajectory1D::constant_acceleration(
                0.0,
                symmetric(&mut rng, cfg.object_speed_max),
                symmetric(&mut rng, cfg.object_accel_max),
            ),
        };
        let target = rng.random_range(cfg.min_distance..=cfg.max_distance);
        object.initial_position = target - object.position(t_end) + camera.position(t_end);
        let height = rng.random_range(cfg.object_height_min..=cfg.object_height_max);
        let noise_seed: u64 = rng.random();

        let spec = SceneSpec {
            camera,
            object,
            size_constant: cfg.focal_length * height,
            frame_rate: cfg.frame_rate,
            noise: (cfg.height_noise > 0.0 || cfg.imu_noise > 0.0).then_some(NoiseSpec {
                height_noise_rel: cfg.height_noise,
                imu_noise_abs: cfg.imu_noise,
                seed: noise_seed,
            }),
        };
        let in_range = frames
            .iter()
            .all(|&f| spec.distance_at(f as f64 / cfg.frame_rate) >= MIN_SAMPLED_RANGE);
        if in_range {
            return Ok(spec);
        }
    }
    Err(SimulateError::Invalid(format!(
        "scene {index}: no draw kept the object in front of the camera"
    )))
}

/// Sample, solve and score a single scene.
pub fn run_scene(cfg: &EnsembleConfig, index: usize) -> Result<SceneRecord, SimulateError> {
    let spec = draw_scene(cfg, index)?;
    let frames = cfg.frames();
    let scene = sample_scene(&spec, &frames).map_err(|source| SimulateError::Scene { index, source })?;
    let est = estimate(&scene.triple, cfg.eps_singular)
        .map_err(|source| SimulateError::Solver { index, source })?;
    let d = &scene.distances;
    let q = d.len() - 1;
    let dt = scene.triple.dt;
    Ok(SceneRecord {
        index,
        d_gt: d[q],
        d_pred: est.is_ok().then_some(est.range),
        status: est.status,
        condition_number: est.condition_number,
        distance_change: d[q] - d[0],
        velocity_change: ((d[q] - d[q - 1]) - (d[1] - d[0])) / dt,
    })
}

/// Run the whole ensemble in parallel; records come back in scene order.
pub fn run_ensemble(cfg: &EnsembleConfig) -> Result<SimulationReport, SimulateError> {
    cfg.validate()?;
    let records: Vec<SceneRecord> = (0..cfg.scenes)
        .into_par_iter()
        .map(|i| run_scene(cfg, i))
        .collect::<Result<_, _>>()?;

    let pairs: Vec<EvalPair> = records
        .iter()
        .filter_map(|r| {
            r.d_pred.map(|d_pred| EvalPair {
                d_gt: r.d_gt,
                d_pred,
                distance_change: r.distance_change,
                velocity_change: r.velocity_change,
            })
        })
        .collect();
    let ok = pairs.len();
    let (metrics, binned) = if pairs.is_empty() {
        (None, Vec::new())
    } else {
        let axes = [
            (BinAxis::Distance, cfg.bin_width_distance),
            (BinAxis::DistanceChange, cfg.bin_width_distance_change),
            (BinAxis::VelocityChange, cfg.bin_width_velocity_change),
        ];
        let binned = axes
            .iter()
            .map(|&(axis, w)| binned_report(&pairs, axis, w))
            .collect::<Result<_, _>>()?;
        (Some(compute_metrics(&pairs)?), binned)
    };
    Ok(SimulationReport {
        config: cfg.clone(),
        scenes: records.len(),
        ok,
        degenerate: records.len() - ok,
        metrics,
        binned,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(order: u8) -> EnsembleConfig {
        EnsembleConfig {
            scenes: 200,
            seed: 7,
            object_order: order,
            ..EnsembleConfig::default()
        }
    }

    #[test]
    fn config_round_trip() {
        let cfg = EnsembleConfig {
            scenes: 12,
            height_noise: 0.01,
            constant_camera_velocity: true,
            ..EnsembleConfig::default()
        };
        let back = EnsembleConfig::from_config_str(&cfg.to_config_string()).unwrap();
        assert_eq!(back, cfg);
        assert!(matches!(
            EnsembleConfig::from_config_str("bogus = 1"),
            Err(SimulateError::Config(ConfigError::UnknownKey { line: 1, .. }))
        ));
        assert!(EnsembleConfig::from_config_str("object_order = 3").is_err());
        assert!(EnsembleConfig::from_config_str("min_distance = 50\nmax_distance = 10").is_err());
    }

    #[test]
    fn noiseless_orders_recover_range() {
        for order in 0..=2 {
            let report = run_ensemble(&small(order)).unwrap();
            assert_eq!(report.degenerate, 0, "order {order}");
            let m = report.metrics.unwrap();
            assert!(m.mare < 1e-9, "order {order}: {}", m.mare);
            assert_eq!(
                report.binned(BinAxis::Distance).unwrap().total_count(),
                report.ok
            );
        }
    }

    #[test]
    fn constant_camera_velocity_is_degenerate() {
        let cfg = EnsembleConfig {
            constant_camera_velocity: true,
            ..small(1)
        };
        let report = run_ensemble(&cfg).unwrap();
        assert_eq!(report.degenerate, report.scenes);
        assert!(report.metrics.is_none());
        assert!(report.to_text().contains("no samples"));
    }

    #[test]
    fn scenes_independent_of_ensemble_size() {
        let a = run_ensemble(&small(1)).unwrap();
        let b = run_ensemble(&EnsembleConfig { scenes: 50, ..small(1) }).unwrap();
        assert_eq!(&a.records[..50], &b.records[..]);
    }

    #[test]
    fn sampled_ranges_respect_bounds() {
        let cfg = small(2);
        for i in 0..50 {
            let spec = draw_scene(&cfg, i).unwrap();
            let t_end = 15.0 / cfg.frame_rate;
            let d = spec.distance_at(t_end);
            assert!((cfg.min_distance - 1e-9..=cfg.max_distance + 1e-9).contains(&d));
        }
    }
}
