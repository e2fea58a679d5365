use super::scene::{rotate_scene, SyntheticScene};
use super::thread_pool;
use crate::detector::{assign_targets, decode_detections, rank_score, Detection, Detector, GtObject};
use crate::error::{Error, Result};
use crate::geometry::box_iou;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Evaluation metrics. `ap50`/`ap75` average the per-class values over
/// classes that have ground truth; absent classes are `null`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rotation_deg: f64,
    pub images: usize,
    pub ap50: f64,
    pub ap75: f64,
    pub per_class_ap50: Vec<Option<f64>>,
    pub per_class_ap75: Vec<Option<f64>>,
}

/// 11-point interpolated AP from precision/recall pairs in ranking order.
pub fn eleven_point_ap(precision: &[f64], recall: &[f64]) -> f64 {
    (0..=10)
        .map(|t| {
            let t = t as f64 / 10.0;
            precision
                .iter()
                .zip(recall)
                .filter(|(_, &r)| r >= t)
                .map(|(&p, _)| p)
                .fold(0.0, f64::max)
        })
        .sum::<f64>()
        / 11.0
}

/// AP of one class at one IoU threshold. Detections are ranked by
/// [`rank_score`] (ties by image then list order); each takes the unmatched ground truth of
/// its image with the highest IoU, counting as a true positive when that IoU
/// reaches `thresh`. `None` when the class has no ground truth.
pub fn class_ap(dets: &[Vec<Detection>], gts: &[Vec<GtObject>], class: usize, thresh: f64) -> Option<f64> {
    let total: usize = gts.iter().map(|g| g.iter().filter(|o| o.class == class).count()).sum();
    if total == 0 {
        return None;
    }
    let mut ranked: Vec<(usize, &Detection)> = dets
        .iter()
        .enumerate()
        .flat_map(|(i, d)| d.iter().filter(|d| d.class == class).map(move |d| (i, d)))
        .collect();
    ranked.sort_by(|a, b| rank_score(b.1.score).total_cmp(&rank_score(a.1.score)));
    let mut used: Vec<Vec<bool>> = gts.iter().map(|g| vec![false; g.len()]).collect();
    let (mut tp, mut fp) = (0usize, 0usize);
    let (mut prec, mut rec) = (Vec::new(), Vec::new());
    for (img, d) in ranked {
        let mut best: Option<(usize, f64)> = None;
        for (j, g) in gts[img].iter().enumerate() {
            if g.class != class || used[img][j] {
                continue;
            }
            let iou = box_iou(&d.bbox, &g.bbox).unwrap_or(0.0);
            if best.is_none_or(|(_, b)| iou > b) {
                best = Some((j, iou));
            }
        }
        match best {
            Some((j, iou)) if iou >= thresh => {
                used[img][j] = true;
                tp += 1;
            }
            _ => fp += 1,
        }
        prec.push(tp as f64 / (tp + fp) as f64);
        rec.push(tp as f64 / total as f64);
    }
    Some(eleven_point_ap(&prec, &rec))
}

fn mean_defined(v: &[Option<f64>]) -> f64 {
    let d: Vec<f64> = v.iter().flatten().copied().collect();
    if d.is_empty() {
        0.0
    } else {
        d.iter().sum::<f64>() / d.len() as f64
    }
}

/// Metrics for given detections and ground truth.
pub fn score_detections(dets: &[Vec<Detection>], gts: &[Vec<GtObject>], num_classes: usize, rotation_deg: f64) -> Result<Metrics> {
    if gts.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let per = |t: f64| (0..num_classes).map(|c| class_ap(dets, gts, c, t)).collect::<Vec<_>>();
    let (p50, p75) = (per(0.5), per(0.75));
    Ok(Metrics {
        rotation_deg,
        images: gts.len(),
        ap50: mean_defined(&p50),
        ap75: mean_defined(&p75),
        per_class_ap50: p50,
        per_class_ap75: p75,
    })
}

/// Runs the detector on every scene.
pub fn detect_all(model: &Detector, scenes: &[SyntheticScene]) -> Result<Vec<Vec<Detection>>> {
    thread_pool().install(|| {
        scenes
            .par_iter()
            .map(|s| {
                let p = model.predict(&s.image)?;
                decode_detections(&p.point_sets, &p.logits, &model.cfg)
            })
            .collect()
    })
}

/// Rotates every scene (image and boxes) by `rotation_deg`, detects and
/// scores.
pub fn evaluate(model: &Detector, scenes: &[SyntheticScene], rotation_deg: f64) -> Result<Metrics> {
    if scenes.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let rotated: Vec<SyntheticScene> = scenes.iter().map(|s| rotate_scene(s, rotation_deg)).collect();
    let dets = detect_all(model, &rotated)?;
    let gts: Vec<Vec<GtObject>> = rotated.iter().map(|s| s.objects.clone()).collect();
    score_detections(&dets, &gts, model.cfg.num_classes, rotation_deg)
}

/// One row of a rotation sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub angle_deg: f64,
    pub map: f64,
    pub baseline_map: Option<f64>,
}

/// `0, step, 2·step, … < 360`.
pub fn sweep_angles(step_deg: f64) -> Vec<f64> {
    let n = (360.0 / step_deg).ceil() as usize;
    (0..n).map(|i| i as f64 * step_deg).filter(|&a| a < 360.0).collect()
}

/// mAP (mean per-class AP50) per angle for `model` and optionally a
/// baseline.
pub fn rotation_sweep(model: &Detector, baseline: Option<&Detector>, scenes: &[SyntheticScene], angles: &[f64]) -> Result<Vec<SweepRow>> {
    angles
        .iter()
        .map(|&a| {
            Ok(SweepRow {
                angle_deg: a,
                map: evaluate(model, scenes, a)?.ap50,
                baseline_map: baseline.map(|b| evaluate(b, scenes, a).map(|m| m.ap50)).transpose()?,
            })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("angle_deg,map,baseline_map\n");
    for r in rows {
        let b = r.baseline_map.map(|v| format!("{v:.6}")).unwrap_or_default();
        s.push_str(&format!("{},{:.6},{}\n", r.angle_deg, r.map, b));
    }
    s
}

/// Share of positive cells whose refined point 0 lies within `radius` pixels
/// of an edge midpoint of their assigned box.
pub fn edge_concentration(model: &Detector, scenes: &[SyntheticScene], radius: f64) -> Result<f64> {
    let counts: Vec<(usize, usize)> = thread_pool().install(|| {
        scenes
            .par_iter()
            .map(|s| {
                let p = model.predict(&s.image)?;
                let targets = assign_targets(p.grid, &s.objects);
                let mut hit = (0, 0);
                for (cell, t) in targets.iter().enumerate() {
                    let Some(t) = t else { continue };
                    let r = p.point_sets[cell][0];
                    hit.1 += 1;
                    let bbox = &s.objects[t.gt].bbox;
                    if bbox.edge_midpoints().iter().any(|m| m.sub(r).norm() <= radius) {
                        hit.0 += 1;
                    }
                }
                Ok(hit)
            })
            .collect::<Result<_>>()
    })?;
    let (hit, total) = counts.iter().fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    if total == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(hit as f64 / total as f64)
}
