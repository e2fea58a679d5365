//! Value-and-gradient wrappers used by the detector's localisation loss.

use super::overlap::{edge_constraint_loss, giou};
use super::polygon::{convex_hull, OrientedBox, Point};
use super::real::{Dual, Real};
use crate::error::Result;

const LANES: usize = 16;

/// `1 − giou(hull(points), gt)` and its gradient with respect to every input
/// point. Points that are not hull vertices get a zero gradient.
pub fn hull_giou_loss(points: &[Point], gt: &OrientedBox) -> Result<(f64, Vec<Point>)> {
    let gt_poly = gt.to_polygon()?;
    let coords = 2 * points.len();
    let mut grad = vec![Point::new(0.0, 0.0); points.len()];
    let mut value = 0.0;
    for chunk in (0..coords).step_by(LANES) {
        let seeded: Vec<Point<Dual<LANES>>> = points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                Point::new(
                    Dual::seeded(p.x, (2 * i).wrapping_sub(chunk)),
                    Dual::seeded(p.y, (2 * i + 1).wrapping_sub(chunk)),
                )
            })
            .collect();
        let gt_d = super::Polygon::new(gt_poly.vertices().iter().map(|p| p.lift()).collect())?;
        let l = Dual::cst(1.0) - giou(&convex_hull(&seeded)?, &gt_d)?;
        value = l.val();
        for (lane, d) in l.d.iter().enumerate() {
            let c = chunk + lane;
            if c < coords {
                if c % 2 == 0 {
                    grad[c / 2].x = *d;
                } else {
                    grad[c / 2].y = *d;
                }
            }
        }
    }
    Ok((value, grad))
}

/// Edge-constraint distance and its gradient with respect to `reference`.
pub fn edge_constraint_with_grad(reference: Point, gt: &OrientedBox) -> (f64, Point) {
    let r = Point::new(Dual::<2>::seeded(reference.x, 0), Dual::seeded(reference.y, 1));
    let l = edge_constraint_loss(r, gt);
    (l.v, Point::new(l.d[0], l.d[1]))
}
