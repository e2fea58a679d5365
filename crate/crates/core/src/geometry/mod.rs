//! Computational geometry for point sets and oriented boxes.
//!
//! Routines are generic over [`Real`], so the same code yields values on
//! `f64` and gradients on [`Dual`] numbers. Combinatorial choices (hull
//! membership, clipping sides, the minimising rectangle) are made on primal
//! values; derivatives flow through the selected vertices.
//!
//! Orientation convention: polygons have positive signed shoelace area,
//! i.e. counter-clockwise in an x-right, y-up frame. On an image grid with
//! y pointing down the same vertex order appears clockwise.

mod format;
mod grad;
mod overlap;
mod polygon;
mod real;

pub use format::{format_obb, format_obb_line, parse_obb, parse_obb_line, ObbRecord};
pub use grad::{edge_constraint_with_grad, hull_giou_loss};
pub use overlap::{clip_polygon, edge_constraint_loss, giou, intersection_area, polygon_iou, rotated_nms};
pub use polygon::{convex_hull, cross, hull_center, min_area_rect, signed_area, OrientedBox, Point, Polygon};
pub use real::{Dual, Real};

/// `K` points in image pixels; point 0 is the alignment reference.
pub type PointSet = Vec<Point>;

/// Decodes a point set to its minimum-area rectangle.
pub fn decode_point_set(points: &[Point]) -> crate::Result<OrientedBox> {
    min_area_rect(&convex_hull(points)?)
}

/// IoU of two oriented boxes.
pub fn box_iou(a: &OrientedBox, b: &OrientedBox) -> crate::Result<f64> {
    polygon_iou(&a.to_polygon()?, &b.to_polygon()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;

    fn pts(v: &[(f64, f64)]) -> Vec<Point> {
        v.iter().map(|&p| p.into()).collect()
    }

    fn square(x0: f64, y0: f64, s: f64) -> Polygon {
        Polygon::new(pts(&[(x0, y0), (x0 + s, y0), (x0 + s, y0 + s), (x0, y0 + s)])).unwrap()
    }

    #[test]
    fn hull_examples() {
        let h = convex_hull(&pts(&[(0.0, 0.0), (1.0, 0.0), (0.5, 0.5), (1.0, 1.0), (0.0, 1.0)])).unwrap();
        assert_eq!(h.vertices(), &pts(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])[..]);
        let tri = pts(&[(0.0, 0.0), (2.0, 0.0), (0.0, 1.0)]);
        assert_eq!(convex_hull(&tri).unwrap().vertices(), &tri[..]);
        let line = pts(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (1.0, 1.0)]);
        assert!(matches!(convex_hull(&line), Err(Error::DegenerateHull)));
        let edge = pts(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (2.0, 2.0)]);
        assert_eq!(convex_hull(&edge).unwrap().len(), 3);
    }

    #[test]
    fn centroid_examples() {
        assert_eq!(hull_center(&square(0.0, 0.0, 1.0)).unwrap(), Point::new(0.5, 0.5));
        let t = Polygon::new(pts(&[(0.0, 0.0), (3.0, 0.0), (0.0, 3.0)])).unwrap();
        let c = hull_center(&t).unwrap();
        assert!((c.x - 1.0).abs() < 1e-15 && (c.y - 1.0).abs() < 1e-15);
        assert!(Polygon::new(pts(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)])).is_err());
    }

    #[test]
    fn polygon_orientation_is_normalised() {
        let cw = Polygon::new(pts(&[(0.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, 0.0)])).unwrap();
        assert_eq!(cw.area(), 1.0);
        assert!(cw.contains(Point::new(0.5, 0.0)));
        assert!(!cw.contains(Point::new(1.5, 0.5)));
    }

    #[test]
    fn min_area_rect_examples() {
        let r = min_area_rect(&square(0.0, 0.0, 1.0)).unwrap();
        assert_eq!(r.area(), 1.0);
        let c = Point::new(0.5, 0.5);
        let rotated: Vec<Point> = square(0.0, 0.0, 1.0)
            .vertices()
            .iter()
            .map(|p| p.rotate_about(c, 30f64.to_radians()))
            .collect();
        let r = min_area_rect(&Polygon::new(rotated).unwrap()).unwrap();
        assert!((r.area() - 1.0).abs() < 1e-9);
        let l = Polygon::new(pts(&[(0.0, 0.0), (2.0, 0.0), (2.0, 1.0), (1.0, 1.0), (1.0, 2.0), (0.0, 2.0)])).unwrap();
        assert!(matches!(min_area_rect(&l), Err(Error::NonConvex)));
    }

    #[test]
    fn iou_examples() {
        let a = square(0.0, 0.0, 1.0);
        assert_eq!(polygon_iou(&a, &a).unwrap(), 1.0);
        assert_eq!(polygon_iou(&a, &square(3.0, 0.0, 1.0)).unwrap(), 0.0);
        let b = Polygon::new(pts(&[(0.5, 0.0), (1.5, 0.0), (1.5, 1.0), (0.5, 1.0)])).unwrap();
        assert_eq!(polygon_iou(&a, &b).unwrap(), 1.0 / 3.0);
        assert_eq!(giou(&a, &a).unwrap(), 1.0);
        // Disjoint: enclosing rectangle 1×4, union 2 → giou = −2/4.
        let g = giou(&a, &square(3.0, 0.0, 1.0)).unwrap();
        assert!((g + 0.5).abs() < 1e-12);
    }

    #[test]
    fn edge_constraint_examples() {
        let gt = OrientedBox {
            corners: [(0.0, 0.0), (2.0, 0.0), (2.0, 2.0), (0.0, 2.0)].map(Point::from),
        };
        assert_eq!(
            gt.edge_midpoints(),
            [(1.0, 0.0), (2.0, 1.0), (1.0, 2.0), (0.0, 1.0)].map(Point::from)
        );
        assert_eq!(edge_constraint_loss(Point::new(1.0, 0.0), &gt), 0.0);
        assert_eq!(edge_constraint_loss(Point::new(0.5, 0.0), &gt), 0.5);
        let (_, g) = edge_constraint_with_grad(Point::new(0.5, 0.0), &gt);
        assert_eq!(g, Point::new(-1.0, 0.0));
        // Equidistant from edges 0 and 3: lowest index wins.
        let (_, g) = edge_constraint_with_grad(Point::new(0.0, 0.0), &gt);
        assert_eq!(g, Point::new(-1.0, 0.0));
        assert_eq!(edge_constraint_with_grad(Point::new(2.0, 1.0), &gt).1, Point::new(0.0, 0.0));
    }

    #[test]
    fn nms_examples() {
        let b = OrientedBox::from_center(5.0, 5.0, 4.0, 2.0, 0.3);
        assert_eq!(rotated_nms(&[b, b], &[0.9, 0.8], 0.5).unwrap(), vec![0]);
        assert_eq!(rotated_nms(&[b, b], &[0.8, 0.9], 0.5).unwrap(), vec![1]);
        let far = OrientedBox::from_center(50.0, 5.0, 4.0, 2.0, 0.3);
        assert_eq!(rotated_nms(&[b, far], &[0.5, 0.5], 0.5).unwrap(), vec![0, 1]);
        assert!(rotated_nms(&[b], &[], 0.5).is_err());
    }

    #[test]
    fn obb_text_round_trip() {
        let gt = "0 0 4 0 4 2 0 2 1\n# comment\n\n1.5 0 3 0 3 1 1.5 1 0 0.75\n";
        let recs = parse_obb(gt).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].score, None);
        assert_eq!(recs[1].score, Some(0.75));
        assert_eq!(parse_obb(&format_obb(&recs)).unwrap(), recs);
        assert!(parse_obb_line("1 2 3").is_err());
        assert!(parse_obb_line("0 0 1 0 1 1 0 1 x").is_err());
    }

    #[test]
    fn from_center_matches_size_and_angle() {
        let b = OrientedBox::from_center(3.0, 4.0, 6.0, 2.0, 0.4);
        let (w, h, a) = b.size_and_angle();
        assert!((w - 6.0).abs() < 1e-12 && (h - 2.0).abs() < 1e-12 && (a - 0.4).abs() < 1e-12);
        assert!((b.area() - 12.0).abs() < 1e-12);
        assert!((b.center().x - 3.0).abs() < 1e-12);
    }
}
