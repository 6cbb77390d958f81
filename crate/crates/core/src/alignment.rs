//! Per-frame assignment of ground-truth boxes to tracker boxes.

use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::solver::TrackId;

/// Pairs scoring at or below this are left unmatched.
pub const DEFAULT_SCORE_FLOOR: f64 = 0.0;

/// Intersection area minus symmetric-difference area, in pixels².
///
/// Equals `3·|A∩B| - |A| - |B|`; the maximum over `b` is `|a|`, at `b = a`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct MatchScore(pub f64);

pub fn match_score(pred: &BBox, gt: &BBox) -> MatchScore {
    let inter = pred.intersection_area(gt);
    let sym_diff = pred.area() + gt.area() - 2.0 * inter;
    MatchScore(inter - sym_diff)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub pred: usize,
    pub gt: usize,
    pub score: f64,
}

/// Greedy assignment by descending score; each box is used at most once.
/// Ties go to the lower prediction track id, then the lower ground-truth id.
pub fn assign(preds: &[(TrackId, BBox)], gts: &[(TrackId, BBox)], score_floor: f64) -> Vec<Match> {
    let mut candidates: Vec<Match> = Vec::new();
    for (pi, (_, pb)) in preds.iter().enumerate() {
        for (gi, (_, gb)) in gts.iter().enumerate() {
            let score = match_score(pb, gb).0;
            if score > score_floor {
                candidates.push(Match { pred: pi, gt: gi, score });
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(preds[a.pred].0.cmp(&preds[b.pred].0))
            .then(gts[a.gt].0.cmp(&gts[b.gt].0))
            .then(a.pred.cmp(&b.pred))
            .then(a.gt.cmp(&b.gt))
    });

    let mut pred_used = vec![false; preds.len()];
    let mut gt_used = vec![false; gts.len()];
    let mut matches = Vec::new();
    for c in candidates {
        if pred_used[c.pred] || gt_used[c.gt] {
            continue;
        }
        pred_used[c.pred] = true;
        gt_used[c.gt] = true;
        matches.push(c);
    }
    matches.sort_by_key(|m| m.pred);
    matches
}
