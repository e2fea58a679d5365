use super::config::{DetectorConfig, FEATURE_STRIDE};
use super::model::{points_in_pixels, ForwardOutput};
use crate::autograd::Var;
use crate::geometry::{edge_constraint_with_grad, hull_giou_loss, OrientedBox, Point};
use crate::tensor::Tensor;

/// Ground-truth object: box and class id.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GtObject {
    pub bbox: OrientedBox,
    pub class: usize,
}

/// Positive cell assignment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CellTarget {
    pub class: usize,
    /// Index into the ground-truth list.
    pub gt: usize,
}

/// Assigns each cell of an `h × w` grid to the smallest box containing its
/// centre pixel `(4j, 4i)` (boundary included; equal areas go to the lower
/// index). Row-major, `None` for background.
pub fn assign_targets(grid: (usize, usize), gts: &[GtObject]) -> Vec<Option<CellTarget>> {
    let polys: Vec<_> = gts.iter().map(|g| g.bbox.to_polygon().ok()).collect();
    let areas: Vec<f64> = gts.iter().map(|g| g.bbox.area().abs()).collect();
    let st = FEATURE_STRIDE as f64;
    (0..grid.0 * grid.1)
        .map(|p| {
            let c = Point::new(st * (p % grid.1) as f64, st * (p / grid.1) as f64);
            let mut best: Option<usize> = None;
            for (i, poly) in polys.iter().enumerate() {
                if poly.as_ref().is_some_and(|q| q.contains(c)) && best.is_none_or(|b| areas[i] < areas[b]) {
                    best = Some(i);
                }
            }
            best.map(|gt| CellTarget { class: gts[gt].class, gt })
        })
        .collect()
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Focal loss and its derivative for one logit.
pub fn focal_term(x: f64, positive: bool, gamma: f64, alpha: f64) -> (f64, f64) {
    let p = crate::autograd::sigmoid(x);
    if positive {
        let log_p = -softplus(-x);
        let m = (1.0 - p).powf(gamma);
        (-alpha * m * log_p, alpha * m * (gamma * p * log_p - (1.0 - p)))
    } else {
        let log_q = -softplus(x);
        let m = p.powf(gamma);
        (-(1.0 - alpha) * m * log_q, -(1.0 - alpha) * m * (gamma * (1.0 - p) * log_q - p))
    }
}

/// Sigmoid focal loss on `[num_classes, H, W]` logits, summed over classes
/// and averaged over cells. `targets` holds the positive class per cell.
pub fn focal_loss<'t>(logits: Var<'t>, targets: &[Option<usize>], gamma: f64, alpha: f64) -> Var<'t> {
    let (sum, grad) = focal_sum(&logits.value(), targets, gamma, alpha);
    let cells = targets.len().max(1) as f64;
    scalar_op(logits, sum / cells, grad.scale(1.0 / cells))
}

fn focal_sum(x: &Tensor, targets: &[Option<usize>], gamma: f64, alpha: f64) -> (f64, Tensor) {
    let plane = targets.len();
    let mut sum = 0.0;
    let mut grad = vec![0.0; x.numel()];
    for (i, (&v, g)) in x.data().iter().zip(grad.iter_mut()).enumerate() {
        let (c, p) = (i / plane, i % plane);
        let (l, d) = focal_term(v, targets[p] == Some(c), gamma, alpha);
        sum += l;
        *g = d;
    }
    (sum, Tensor::from_parts(x.shape().to_vec(), grad))
}

/// Scalar node with a precomputed gradient.
fn scalar_op<'t>(x: Var<'t>, value: f64, grad: Tensor) -> Var<'t> {
    x.tape()
        .custom("loss", &[x], Tensor::scalar(value), move |g| vec![Some(grad.scale(g.item()))])
}

/// Loss value with its components.
pub struct LossBreakdown<'t> {
    pub total: Var<'t>,
    pub focal: f64,
    /// Mean `1 − GIoU` over positives.
    pub giou: f64,
    /// Mean edge-constraint distance over positives, in pixels; reported even
    /// when the term is switched off.
    pub edge: f64,
    pub num_pos: usize,
    /// Positives skipped because their point set had no area.
    pub degenerate: usize,
}

/// `focal + (1 − GIoU) + λ·L_ec`. The focal term is the class-summed loss
/// over all cells divided by the number of positives; the localisation terms
/// are averaged over positives. `L_ec` acts on point 0 of the refined set.
pub fn total_loss<'t>(
    out: &ForwardOutput<'t>,
    targets: &[Option<CellTarget>],
    gts: &[GtObject],
    cfg: &DetectorConfig,
) -> LossBreakdown<'t> {
    let classes: Vec<Option<usize>> = targets.iter().map(|t| t.map(|t| t.class)).collect();
    let num_pos = targets.iter().filter(|t| t.is_some()).count();
    let norm = num_pos.max(1) as f64;
    let (fsum, fgrad) = focal_sum(&out.logits.value(), &classes, cfg.focal_gamma, cfg.focal_alpha);
    let focal = scalar_op(out.logits, fsum / norm, fgrad.scale(1.0 / norm));

    let field = out.refined.value();
    let s = field.shape().to_vec();
    let plane = s[2] * s[3];
    let sets = points_in_pixels(&field);
    let st = FEATURE_STRIDE as f64;
    let mut grad = vec![0.0; field.numel()];
    let (mut giou_sum, mut edge_sum, mut degenerate) = (0.0, 0.0, 0);
    for (p, t) in targets.iter().enumerate() {
        let Some(t) = t else { continue };
        let gt = &gts[t.gt].bbox;
        let mut put = |ki: usize, g: Point, w: f64| {
            grad[2 * ki * plane + p] += w * st * g.x;
            grad[(2 * ki + 1) * plane + p] -= w * st * g.y;
        };
        match hull_giou_loss(&sets[p], gt) {
            Ok((l, g)) => {
                giou_sum += l;
                for (ki, &gk) in g.iter().enumerate() {
                    put(ki, gk, 1.0 / norm);
                }
            }
            Err(_) => degenerate += 1,
        }
        let (e, ge) = edge_constraint_with_grad(sets[p][0], gt);
        edge_sum += e;
        if cfg.ablation.edge_constraint {
            put(0, ge, cfg.lambda_ec / norm);
        }
    }
    let lambda = if cfg.ablation.edge_constraint { cfg.lambda_ec } else { 0.0 };
    let loc_value = (giou_sum + lambda * edge_sum) / norm;
    let loc = scalar_op(out.refined, loc_value, Tensor::from_parts(s, grad));
    LossBreakdown {
        total: focal.add(loc),
        focal: fsum / norm,
        giou: giou_sum / norm,
        edge: edge_sum / norm,
        num_pos,
        degenerate,
    }
}
