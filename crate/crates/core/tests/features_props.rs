use monodist_core::features::loss::{batch_c, data_loss_with_c};
use monodist_core::features::{
    berhu, data_loss, make_overlay, make_side_vector, sha256_hex, FeatureBundle, GrayPatch,
    SIDE_VECTOR_LEN,
};
use monodist_core::ingest::ImuFeatures;
use monodist_core::{DistanceEstimate, EstimateStatus};
use proptest::prelude::*;

fn fd(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    let h = 1e-6 * (1.0 + x.abs());
    (f(x + h) - f(x - h)) / (2.0 * h)
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-3)
}

fn batch() -> impl Strategy<Value = Vec<([f64; 3], [f64; 3])>> {
    proptest::collection::vec(
        (prop::array::uniform3(-50.0..50.0f64), prop::array::uniform3(-50.0..50.0f64)),
        1..16,
    )
}

/// Smooth test image so bilinear resampling stays close across scales.
fn smooth(w: u32, h: u32, phase: f32) -> GrayPatch {
    GrayPatch::from_fn(w, h, |x, y| {
        let u = (x as f32 + 0.5) / w as f32;
        let v = (y as f32 + 0.5) / h as f32;
        0.5 + 0.4 * (3.0 * u + phase).sin() * (2.0 * v).cos()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn berhu_gradient_matches_finite_difference(r in -100.0..100.0f64, c in 0.01..50.0f64) {
        let h = 1e-6 * (1.0 + r.abs());
        prop_assume!((r.abs() - c).abs() > 2.0 * h && r.abs() > 2.0 * h);
        let g = berhu(r, c).unwrap().grad;
        let num = fd(|x| berhu(x, c).unwrap().value, r);
        prop_assert!(rel_close(g, num, 1e-5), "{g} vs {num}");
    }

    #[test]
    fn berhu_is_continuous_and_convex(c in 0.01..50.0f64, a in -100.0..100.0f64, b in -100.0..100.0f64, t in 0.0..1.0f64) {
        let at = berhu(c, c).unwrap().value;
        let below = berhu(c * (1.0 - 1e-15), c).unwrap().value;
        prop_assert!((at - c).abs() <= 1e-12 * c);
        prop_assert!((at - below).abs() <= 1e-12 * c);
        let l = |x: f64| berhu(x, c).unwrap().value;
        let mid = l(t * a + (1.0 - t) * b);
        prop_assert!(mid <= t * l(a) + (1.0 - t) * l(b) + 1e-9 * (1.0 + l(a) + l(b)));
    }

    #[test]
    fn data_loss_gradient_matches_finite_difference(batch in batch(), pick in any::<prop::sample::Index>(), k in 0usize..3) {
        let c = batch_c(&batch);
        prop_assume!(c > 0.0);
        let loss = data_loss(&batch).unwrap();
        let i = pick.index(batch.len());
        let r = batch[i].0[k] - batch[i].1[k];
        let h = 1e-6 * (1.0 + batch[i].0[k].abs());
        prop_assume!((r.abs() - c).abs() > 2.0 * h && r.abs() > 2.0 * h);
        let f = |x: f64| {
            let mut b = batch.clone();
            b[i].0[k] = x;
            data_loss_with_c(&b, c).unwrap().value
        };
        let num = fd(f, batch[i].0[k]);
        prop_assert!(rel_close(loss.grad[i][k], num, 1e-5), "{} vs {num}", loss.grad[i][k]);
    }

    #[test]
    fn side_vector_has_fixed_layout(
        imu in prop::array::uniform27(-10.0..10.0f64), centers in prop::array::uniform3(prop::array::uniform2(0.0..1.0f64)),
        range in 0.5..100.0f64, ok in any::<bool>(),
    ) {
        let mut features = ImuFeatures::zeros();
        features.values = imu;
        let est = DistanceEstimate {
            range,
            motion_params: vec![0.0],
            cartesian: None,
            condition_number: 1.0,
            status: if ok { EstimateStatus::Ok } else { EstimateStatus::Degenerate },
        };
        let s = make_side_vector(&features, centers, &est);
        prop_assert_eq!(s.values.len(), SIDE_VECTOR_LEN);
        prop_assert_eq!(&s.values[..27], &imu[..]);
        prop_assert_eq!(s.values[27..33].to_vec(), centers.iter().flatten().copied().collect::<Vec<_>>());
        prop_assert_eq!(s.values[33], if ok { range } else { -1.0 });
        prop_assert_eq!(s.analytic_degenerate, !ok);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn overlay_is_stable_under_integer_rescaling(
        w in 20u32..60, h in 20u32..60, shrink in prop::array::uniform3(1u32..3), factor in 2u32..4,
    ) {
        let base: Vec<GrayPatch> = (0..3)
            .map(|i| smooth(w / shrink[i], h / shrink[i], i as f32))
            .collect();
        let heights = [0, 1, 2].map(|i| base[i].height as f64);
        let a = make_overlay(&[base[0].clone(), base[1].clone(), base[2].clone()], heights).unwrap();
        let big: Vec<GrayPatch> = base
            .iter()
            .map(|p| p.resize_bilinear(p.width * factor, p.height * factor))
            .collect();
        let b = make_overlay(&[big[0].clone(), big[1].clone(), big[2].clone()], heights.map(|x| x * factor as f64)).unwrap();
        prop_assert_eq!(a.shape(), [3, 224, 224]);
        prop_assert_eq!(b.shape(), [3, 224, 224]);
        let mad = a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs() as f64).sum::<f64>() / a.data.len() as f64;
        prop_assert!(mad < 1e-2, "mean abs diff {mad}");
    }
}

#[test]
fn overlay_is_deterministic() {
    let p = [smooth(100, 50, 0.0), smooth(40, 80, 1.0), smooth(300, 120, 2.0)];
    let a = make_overlay(&p, [50.0, 80.0, 120.0]).unwrap();
    let b = make_overlay(&p.clone(), [50.0, 80.0, 120.0]).unwrap();
    let bytes = |t: &monodist_core::features::OverlayTensor| -> Vec<u8> {
        t.data.iter().flat_map(|v| v.to_le_bytes()).collect()
    };
    assert_eq!(sha256_hex(&bytes(&a)), sha256_hex(&bytes(&b)));
}

#[test]
fn loss_worked_values() {
    assert_eq!(berhu(1.0, 2.0).unwrap().value, 1.0);
    assert_eq!(berhu(3.0, 2.0).unwrap().value, 3.25);
    assert_eq!(berhu(2.0, 2.0).unwrap().value, 2.0);
    assert!(berhu(1.0, 0.0).is_err());

    let one = data_loss(&[([1.0, 0.0, 0.0], [0.0; 3])]).unwrap();
    assert!((one.value - 1.04 / 0.4 / 3.0).abs() < 1e-15);
    let two = data_loss(&[([0.1, 0.0, 0.0], [0.0; 3]), ([1.0, 0.0, 0.0], [0.0; 3])]).unwrap();
    assert_eq!(two.c, 0.2);
    assert!((two.value - 0.45).abs() < 1e-15);
    assert_eq!(data_loss(&[([2.0; 3], [2.0; 3])]).unwrap().value, 0.0);
    assert!(data_loss(&[]).is_err());
}

#[test]
fn container_round_trip_through_bytes() {
    let p = [smooth(60, 60, 0.0), smooth(60, 60, 0.5), smooth(60, 60, 1.0)];
    let overlay = make_overlay(&p, [60.0; 3]).unwrap();
    let est = DistanceEstimate {
        range: 17.0,
        motion_params: vec![1.0],
        cartesian: None,
        condition_number: 3.0,
        status: EstimateStatus::Ok,
    };
    let side = make_side_vector(&ImuFeatures::zeros(), [[0.5, 0.5]; 3], &est);
    let bundle = FeatureBundle { overlay, side, target: Some([1.0, 2.0, 17.0]) };
    let bytes = bundle.encode();
    assert_eq!(&bytes[..8], &[b'M', b'D', b'F', b'B', 1, 0, 1, 0]);
    let back = FeatureBundle::decode(&bytes).unwrap();
    assert_eq!(back, bundle);
    assert_eq!(back.encode(), bytes);
}
