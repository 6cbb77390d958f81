use std::collections::{BTreeSet, HashMap};

use monodist_core::trackbuf::{Detection, KeyframeScheme, TrackCache};
use monodist_core::{BBox, TrackId};
use proptest::prelude::*;

fn det(track: i64, frame: i64) -> Detection {
    Detection {
        frame_id: frame,
        track_id: TrackId(track),
        bbox: BBox::new(100.0, 100.0, 200.0, 150.0 + (frame % 50) as f64),
        class_label: "Car".into(),
        truncated: Some(false),
        occluded: Some(false),
        image_size: (1242, 375),
        gt_location: None,
    }
}

fn scheme() -> impl Strategy<Value = KeyframeScheme> {
    (1i64..6, 1i64..4).prop_map(|(stride, q)| KeyframeScheme::new(stride * q, stride, 10.0).unwrap())
}

/// Per-track frame sets and an interleaving order across tracks.
fn stream() -> impl Strategy<Value = (Vec<BTreeSet<i64>>, Vec<prop::sample::Index>)> {
    proptest::collection::vec(proptest::collection::btree_set(0i64..80, 0..60), 1..4)
        .prop_flat_map(|tracks| {
            let total: usize = tracks.iter().map(BTreeSet::len).sum();
            (Just(tracks), proptest::collection::vec(any::<prop::sample::Index>(), total))
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    /// Every window whose keyframes are all present is emitted exactly once.
    #[test]
    fn emission_matches_brute_force(scheme in scheme(), (tracks, picks) in stream()) {
        let mut cache = TrackCache::new(scheme).unwrap();
        let mut queues: Vec<Vec<i64>> = tracks.iter().map(|s| s.iter().rev().copied().collect()).collect();
        let mut emitted: HashMap<(i64, i64), usize> = HashMap::new();
        for pick in picks {
            let live: Vec<usize> = (0..queues.len()).filter(|&t| !queues[t].is_empty()).collect();
            let t = live[pick.index(live.len())];
            let frame = queues[t].pop().unwrap();
            for set in cache.ingest(det(t as i64, frame)).unwrap() {
                prop_assert_eq!(set.track_id, TrackId(t as i64));
                prop_assert_eq!(set.frame_ids(), scheme.keyframes(set.frame_id));
                *emitted.entry((t as i64, set.frame_id)).or_default() += 1;
            }
            prop_assert!(cache.len() <= cache.track_count() * (scheme.lookback_frames as usize + 1));
        }

        let mut expected = BTreeSet::new();
        for (t, frames) in tracks.iter().enumerate() {
            for &n in frames {
                if scheme.keyframes(n).iter().all(|f| frames.contains(f)) {
                    expected.insert((t as i64, n));
                }
            }
        }
        prop_assert_eq!(emitted.keys().copied().collect::<BTreeSet<_>>(), expected);
        prop_assert!(emitted.values().all(|&c| c == 1));
    }

    /// Re-sending an identical detection never emits twice.
    #[test]
    fn identical_resend_is_idempotent(scheme in scheme(), frames in proptest::collection::btree_set(0i64..40, 0..30)) {
        let mut cache = TrackCache::new(scheme).unwrap();
        let mut total = 0;
        for &f in &frames {
            total += cache.ingest(det(1, f)).unwrap().len();
            prop_assert!(cache.ingest(det(1, f)).unwrap().is_empty());
        }
        let expected = frames.iter().filter(|&&n| scheme.keyframes(n).iter().all(|f| frames.contains(f))).count();
        prop_assert_eq!(total, expected);
    }
}

#[test]
fn conflicting_duplicate_is_rejected() {
    let mut cache = TrackCache::new(KeyframeScheme::default()).unwrap();
    cache.ingest(det(1, 3)).unwrap();
    let mut other = det(1, 3);
    other.bbox = BBox::new(0.0, 0.0, 10.0, 10.0);
    assert!(cache.ingest(other).is_err());
}

#[test]
fn gaps_block_emission() {
    let mut cache = TrackCache::new(KeyframeScheme::default()).unwrap();
    let mut out = Vec::new();
    for f in (0..=30).filter(|f| *f != 15) {
        out.extend(cache.ingest(det(7, f)).unwrap().into_iter().map(|s| s.frame_id));
    }
    let expected: Vec<i64> = (10..=30).filter(|n| ![15, 20, 25].contains(n)).collect();
    assert_eq!(out, expected);
}
