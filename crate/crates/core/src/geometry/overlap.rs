use super::polygon::{convex_hull, cross, min_area_rect, signed_area, OrientedBox, Point, Polygon};
use super::real::Real;
use crate::error::{Error, Result};

/// Sutherland–Hodgman: clips `subject` against every edge of the convex
/// `clip`. Vertices lying on a clip edge count as inside.
pub fn clip_polygon<T: Real>(subject: &[Point<T>], clip: &[Point<T>]) -> Vec<Point<T>> {
    let mut out = subject.to_vec();
    let m = clip.len();
    for j in 0..m {
        if out.is_empty() {
            break;
        }
        let (e0, e1) = (clip[j], clip[(j + 1) % m]);
        let input = std::mem::take(&mut out);
        let n = input.len();
        for i in 0..n {
            let p = input[(i + n - 1) % n];
            let q = input[i];
            let sp = cross(e0, e1, p);
            let sq = cross(e0, e1, q);
            let (p_in, q_in) = (sp.val() >= 0.0, sq.val() >= 0.0);
            if q_in != p_in {
                let t = sp / (sp - sq);
                out.push(p.add(q.sub(p).scale(t)));
            }
            if q_in {
                out.push(q);
            }
        }
    }
    out
}

/// Area of the intersection of two convex polygons.
pub fn intersection_area<T: Real>(a: &Polygon<T>, b: &Polygon<T>) -> Result<T> {
    if !a.is_convex() || !b.is_convex() {
        return Err(Error::NonConvex);
    }
    let clipped = clip_polygon(a.vertices(), b.vertices());
    if clipped.len() < 3 {
        return Ok(T::cst(0.0));
    }
    Ok(signed_area(&clipped))
}

/// Intersection over union of two convex polygons, in `[0, 1]`.
pub fn polygon_iou<T: Real>(a: &Polygon<T>, b: &Polygon<T>) -> Result<T> {
    let i = intersection_area(a, b)?;
    let u = a.area() + b.area() - i;
    Ok(i / u)
}

/// Generalised IoU with the enclosing region taken as the minimum-area
/// rectangle around the hull of both polygons.
pub fn giou<T: Real>(a: &Polygon<T>, b: &Polygon<T>) -> Result<T> {
    let i = intersection_area(a, b)?;
    let u = a.area() + b.area() - i;
    let mut all = a.vertices().to_vec();
    all.extend_from_slice(b.vertices());
    let c = min_area_rect(&convex_hull(&all)?)?.area();
    Ok(i / u - (c - u) / c)
}

/// Distance from `reference` to the nearest edge midpoint of `gt` (ties go
/// to the lowest edge index).
pub fn edge_constraint_loss<T: Real>(reference: Point<T>, gt: &OrientedBox) -> T {
    let mids = gt.edge_midpoints();
    let mut best = (f64::INFINITY, T::cst(0.0));
    for m in mids {
        let d = reference.sub(m.lift()).norm();
        if d.val() < best.0 {
            best = (d.val(), d);
        }
    }
    best.1
}

/// Greedy suppression in descending score order (ties by index). A box is
/// dropped when its IoU with an already kept box exceeds `iou_thresh`.
pub fn rotated_nms(boxes: &[OrientedBox], scores: &[f64], iou_thresh: f64) -> Result<Vec<usize>> {
    if boxes.len() != scores.len() {
        return Err(crate::error::shape_err(
            "rotated_nms",
            format!("{} boxes vs {} scores", boxes.len(), scores.len()),
        ));
    }
    let polys = boxes.iter().map(|b| b.to_polygon()).collect::<Result<Vec<_>>>()?;
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut keep: Vec<usize> = Vec::new();
    for i in order {
        let mut suppressed = false;
        for &k in &keep {
            if polygon_iou(&polys[i], &polys[k])? > iou_thresh {
                suppressed = true;
                break;
            }
        }
        if !suppressed {
            keep.push(i);
        }
    }
    Ok(keep)
}
