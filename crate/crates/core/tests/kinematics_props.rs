use monodist_core::kinematics::{
    ray_adapter, sample_scene, CameraIntrinsics, NoiseSpec, SceneSpec, Trajectory1D,
};
use monodist_core::range_to_distance;
use proptest::prelude::*;

fn trajectory() -> impl Strategy<Value = Trajectory1D> {
    (-50.0..50.0f64, -10.0..10.0f64, -3.0..3.0f64, -2.0..2.0f64, 0u8..4).prop_map(
        |(x, v, a, j, kind)| match kind {
            0 => Trajectory1D::stationary(x),
            1 => Trajectory1D::constant_velocity(x, v),
            2 => Trajectory1D::constant_acceleration(x, v, a),
            _ => Trajectory1D::constant_acceleration(x, v, a).with_jerk(j),
        },
    )
}

fn spec() -> impl Strategy<Value = SceneSpec> {
    (trajectory(), trajectory(), 60.0..120.0f64, 0.1..5000.0f64).prop_map(|(camera, mut object, gap, k)| {
        object.initial_position += gap;
        SceneSpec {
            camera,
            object,
            size_constant: k,
            frame_rate: 10.0,
            noise: None,
        }
    })
}

fn frames() -> impl Strategy<Value = Vec<i64>> {
    (0i64..100, 1i64..8, 2usize..5).prop_map(|(start, step, n)| (0..n as i64).map(|i| start + i * step).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn heights_follow_inverse_distance(spec in spec(), frames in frames()) {
        let Ok(s) = sample_scene(&spec, &frames) else { return Ok(()) };
        let h = &s.triple.heights;
        for n in 1..h.len() {
            let lhs = h[n] / h[n - 1];
            let rhs = s.distances[n - 1] / s.distances[n];
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs);
        }
    }

    #[test]
    fn distances_follow_recursion(spec in spec(), frames in frames()) {
        let Ok(s) = sample_scene(&spec, &frames) else { return Ok(()) };
        for n in 1..s.distances.len() {
            let step = s.distances[n] - s.distances[n - 1];
            let model = s.object_deltas[n - 1] - s.true_camera_deltas[n - 1];
            let scale = s.distances[n].abs() + s.distances[n - 1].abs();
            prop_assert!((step - model).abs() <= 4.0 * f64::EPSILON * scale);
        }
        prop_assert_eq!(&s.triple.camera_deltas, &s.true_camera_deltas);
    }

    #[test]
    fn low_orders_have_equal_displacements(x in -10.0..10.0f64, v in -10.0..10.0f64, t in 0.0..10.0f64, h in 0.01..2.0f64) {
        for traj in [Trajectory1D::stationary(x), Trajectory1D::constant_velocity(x, v)] {
            let d1 = traj.position(t + h) - traj.position(t);
            let d2 = traj.position(t + 2.0 * h) - traj.position(t + h);
            prop_assert!((d1 - d2).abs() <= 1e-12 * (1.0 + x.abs() + v.abs() * (t + 2.0 * h)));
            prop_assert_eq!(traj.position(0.0), x);
        }
    }

    #[test]
    fn noise_is_reproducible(spec in spec(), seed in any::<u64>(), rel in 0.0..0.05f64, abs in 0.0..0.5f64) {
        let spec = SceneSpec {
            noise: Some(NoiseSpec { height_noise_rel: rel, imu_noise_abs: abs, seed }),
            ..spec
        };
        let frames = [0, 5, 10];
        let (a, b) = (sample_scene(&spec, &frames), sample_scene(&spec, &frames));
        match (a, b) {
            (Ok(a), Ok(b)) => {
                prop_assert!(a.triple.heights.iter().zip(&b.triple.heights).all(|(x, y)| x.to_bits() == y.to_bits()));
                prop_assert_eq!(a, b);
            }
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "runs disagree"),
        }
    }

    #[test]
    fn ray_adapter_preserves_range(u in -0.5..1.5f64, v in -0.5..1.5f64, range in 1e-3..1e4f64, f in 10.0..5000.0f64) {
        let intr = CameraIntrinsics { focal_length: f, ..CameraIntrinsics::KITTI_NOMINAL };
        let p = ray_adapter([u, v], &intr, range).unwrap();
        prop_assert!((range_to_distance(p) - range).abs() <= 1e-12 * range);
        prop_assert!(p[2] > 0.0);
    }
}

#[test]
fn worked_scenes() {
    // Camera advances 2 then 1 m toward a stationary object at 10 m.
    let spec = SceneSpec {
        camera: Trajectory1D::constant_acceleration(0.0, 2.5, -1.0),
        object: Trajectory1D::stationary(10.0),
        size_constant: 1.0,
        frame_rate: 1.0,
        noise: None,
    };
    let s = sample_scene(&spec, &[0, 1, 2]).unwrap();
    assert_eq!(s.true_camera_deltas, vec![2.0, 1.0]);
    assert_eq!(s.distances, vec![10.0, 8.0, 7.0]);
    assert_eq!(s.triple.heights, vec![0.1, 0.125, 1.0 / 7.0]);
    assert_eq!(s.final_distance(), 7.0);

    let still = SceneSpec {
        camera: Trajectory1D::stationary(0.0),
        object: Trajectory1D::stationary(5.0),
        size_constant: 1.0,
        frame_rate: 10.0,
        noise: None,
    };
    let s = sample_scene(&still, &[0, 5, 10]).unwrap();
    assert_eq!(s.triple.heights, vec![0.2; 3]);
    assert_eq!(s.triple.camera_deltas, vec![0.0; 2]);
}

#[test]
fn worked_rays() {
    let intr = CameraIntrinsics {
        focal_length: 1000.0,
        principal_point: [500.0, 250.0],
        image_size: (1000, 500),
    };
    assert_eq!(ray_adapter([0.5, 0.5], &intr, 10.0).unwrap(), [0.0, 0.0, 10.0]);
    let p = ray_adapter([0.6, 0.5], &intr, 10.0).unwrap();
    assert!((p[0] - 0.995037190209989).abs() < 1e-12);
    assert!((p[2] - 9.95037190209989).abs() < 1e-12);
    assert_eq!(p[1], 0.0);
    let wide = CameraIntrinsics { focal_length: 500.0, ..intr };
    let p = ray_adapter([1.0, 0.5], &wide, 2f64.sqrt()).unwrap();
    assert!((p[0] - 1.0).abs() < 1e-12 && (p[2] - 1.0).abs() < 1e-12);
}
