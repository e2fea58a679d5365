use super::config::DetectorConfig;
use crate::autograd::sigmoid;
use crate::error::Result;
use crate::geometry::{decode_point_set, rotated_nms, ObbRecord, OrientedBox, PointSet};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct Detection {
    pub bbox: OrientedBox,
    pub class: usize,
    /// Sigmoid probability of `class`.
    pub score: f64,
    pub points: PointSet,
}

impl Detection {
    pub fn to_record(&self) -> ObbRecord {
        ObbRecord {
            bbox: self.bbox,
            class: self.class,
            score: Some(self.score),
        }
    }
}

/// Score rounded to 1e-9, used for ranking so that round-off differences
/// between rotated copies of an image cannot reorder detections.
pub fn rank_score(score: f64) -> f64 {
    (score * 1e9).round() / 1e9
}

/// Position of a cell that is invariant under quarter turns of the grid:
/// squared distance from the centre, then the coordinate along the first
/// axis after rotating the offset into the quadrant `x > 0, y >= 0`.
fn orbit_key(cell: usize, grid: (usize, usize)) -> (i64, i64) {
    let (h, w) = (grid.0 as i64, grid.1 as i64);
    let (i, j) = (cell as i64 / w, cell as i64 % w);
    let (mut x, mut y) = (2 * j - (w - 1), 2 * i - (h - 1));
    if x == 0 && y == 0 {
        return (0, 0);
    }
    while !(x > 0 && y >= 0) {
        (x, y) = (-y, x);
    }
    (x * x + y * y, x)
}

type TieKey = (i64, i64, i64, i64);

/// Orbit radius, box area and perimeter (rounded to 1e-6), then orbit
/// position.
pub fn tie_key(cell: usize, grid: (usize, usize), bbox: &OrientedBox) -> TieKey {
    let (r2, x) = orbit_key(cell, grid);
    let c = &bbox.corners;
    let perimeter: f64 = (0..4).map(|i| c[(i + 1) % 4].sub(c[i]).norm()).sum();
    let q = |v: f64| (v * 1e6).round() as i64;
    (r2, q(bbox.area()), q(perimeter), x)
}

/// Best class per cell above the score threshold, decoded to the minimum-area
/// rectangle of its point-set hull, then per-class rotated NMS. Candidates
/// are ranked by [`rank_score`], ties broken by quarter-turn-invariant cell and box
/// features, so the kept set commutes with 90° rotations of the image. Output
/// is in that ranking. Cells whose point set has no area are skipped.
pub fn decode_detections(point_sets: &[PointSet], logits: &Tensor, cfg: &DetectorConfig) -> Result<Vec<Detection>> {
    let classes = logits.shape()[0];
    let grid = logits.hw();
    let plane = point_sets.len();
    let d = logits.data();
    let mut cands: Vec<(Detection, TieKey)> = Vec::new();
    for (p, points) in point_sets.iter().enumerate() {
        let (class, logit) = (0..classes)
            .map(|c| (c, d[c * plane + p]))
            .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
        let score = sigmoid(logit);
        if score < cfg.score_threshold {
            continue;
        }
        let Ok(bbox) = decode_point_set(points) else { continue };
        let det = Detection {
            bbox,
            class,
            score,
            points: points.clone(),
        };
        let key = tie_key(p, grid, &det.bbox);
        cands.push((det, key));
    }
    cands.sort_by(|a, b| rank_score(b.0.score).total_cmp(&rank_score(a.0.score)).then(a.1.cmp(&b.1)));
    let mut kept: Vec<usize> = Vec::new();
    for c in 0..classes {
        let idx: Vec<usize> = (0..cands.len()).filter(|&i| cands[i].0.class == c).collect();
        let boxes: Vec<OrientedBox> = idx.iter().map(|&i| cands[i].0.bbox).collect();
        let scores: Vec<f64> = idx.iter().map(|&i| rank_score(cands[i].0.score)).collect();
        kept.extend(rotated_nms(&boxes, &scores, cfg.nms_iou)?.into_iter().map(|j| idx[j]));
    }
    kept.sort_unstable();
    Ok(kept.into_iter().map(|i| cands[i].0.clone()).collect())
}
