mod common;

use common::geometry_oracles::*;
use equikit::geometry::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn same_cycle(a: &[Point], b: &[Point], tol: f64) -> bool {
    a.len() == b.len()
        && (0..a.len()).any(|s| {
            (0..a.len()).all(|i| {
                let (p, q) = (a[(i + s) % a.len()], b[i]);
                (p.x - q.x).abs() <= tol && (p.y - q.y).abs() <= tol
            })
        })
}

fn quarter(p: Point) -> Point {
    Point::new(-p.y, p.x)
}

#[test]
fn hull_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..200 {
        let n = 3 + trial % 40;
        let pts = random_points(n, 10.0, &mut rng);
        let hull = convex_hull(&pts).unwrap();
        let mut want = brute_force_hull(&pts);
        let mut got = hull.vertices().to_vec();
        let key = |p: &Point| (p.x, p.y);
        want.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
        got.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
        assert_eq!(got, want, "trial {trial}");
    }
}

#[test]
fn fifty_points_lie_inside_their_hull() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let pts = random_points(50, 5.0, &mut rng);
    let hull = convex_hull(&pts).unwrap();
    assert!(pts.iter().all(|&p| hull.contains(p)));
    assert!(hull.vertices().iter().all(|v| pts.contains(v)));
}

#[test]
fn hull_on_integer_grid_with_duplicates() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    use rand::Rng;
    for _ in 0..100 {
        let pts: Vec<Point> = (0..20)
            .map(|_| Point::new(rng.random_range(0..5) as f64, rng.random_range(0..5) as f64))
            .collect();
        let Ok(hull) = convex_hull(&pts) else { continue };
        let mut want = brute_force_hull(&pts);
        let mut got = hull.vertices().to_vec();
        let key = |p: &Point| (p.x, p.y);
        want.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
        got.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
        assert_eq!(got, want);
    }
}

#[test]
fn centroid_matches_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let hull = convex_hull(&random_points(12, 3.0, &mut rng)).unwrap();
    let c = hull_center(&hull).unwrap();
    let m = monte_carlo_centroid(&hull, 1_000_000, &mut rng);
    assert!((c.x - m.x).abs() < 1e-2 && (c.y - m.y).abs() < 1e-2, "{c:?} vs {m:?}");
}

#[test]
fn min_area_rect_matches_angle_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let hull = convex_hull(&random_points(15, 10.0, &mut rng)).unwrap();
        let r = min_area_rect(&hull).unwrap();
        let want = angle_sweep_min_area(hull.vertices());
        assert!(((r.area() - want) / want).abs() < 1e-6, "{} vs {want}", r.area());
        assert!(r.area() >= hull.area() - 1e-9);
        let c = r.corners;
        let d0 = c[2].sub(c[0]).norm();
        let d1 = c[3].sub(c[1]).norm();
        assert!((d0 - d1).abs() < 1e-6);
        assert!(c[1].sub(c[0]).dot(c[2].sub(c[1])).abs() < 1e-6);
        assert!(hull.vertices().iter().all(|&p| r.to_polygon().unwrap().contains(p)
            || r.corners.iter().any(|q| q.sub(p).norm() < 1e-9)
            || {
                // On the boundary up to rounding.
                let poly = r.to_polygon().unwrap();
                let v = poly.vertices();
                (0..4).all(|i| cross(v[i], v[(i + 1) % 4], p) > -1e-9)
            }));
    }
}

#[test]
fn min_area_rect_equals_hull_area_only_for_rectangles() {
    let b = OrientedBox::from_center(1.0, 2.0, 5.0, 3.0, 0.7);
    let p = b.to_polygon().unwrap();
    assert!((min_area_rect(&p).unwrap().area() - p.area()).abs() < 1e-9);
    let tri = Polygon::new(vec![Point::new(0.0, 0.0), Point::new(2.0, 0.0), Point::new(0.0, 2.0)]).unwrap();
    assert!(min_area_rect(&tri).unwrap().area() > tri.area() + 1.0);
}

#[test]
fn iou_matches_monte_carlo() {
    let a = Polygon::new(vec![
        Point::new(0.0, 0.0),
        Point::new(1.0, 0.0),
        Point::new(1.0, 1.0),
        Point::new(0.0, 1.0),
    ])
    .unwrap();
    let b = Polygon::new(vec![
        Point::new(0.5, 0.0),
        Point::new(1.5, 0.0),
        Point::new(1.5, 1.0),
        Point::new(0.5, 1.0),
    ])
    .unwrap();
    assert_eq!(polygon_iou(&a, &b).unwrap(), 1.0 / 3.0);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    assert!((monte_carlo_iou(&a, &b, 1_000_000, &mut rng) - 1.0 / 3.0).abs() < 1e-2);
    for _ in 0..5 {
        let a = random_box(&mut rng, 10.0).to_polygon().unwrap();
        let b = random_box(&mut rng, 10.0).to_polygon().unwrap();
        let want = monte_carlo_iou(&a, &b, 1_000_000, &mut rng);
        assert!((polygon_iou(&a, &b).unwrap() - want).abs() < 1e-2);
    }
}

#[test]
fn nms_matches_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    use rand::Rng;
    for _ in 0..20 {
        let boxes: Vec<OrientedBox> = (0..20).map(|_| random_box(&mut rng, 20.0)).collect();
        let scores: Vec<f64> = (0..20).map(|_| (rng.random_range(0..10) as f64) / 10.0).collect();
        let got = rotated_nms(&boxes, &scores, 0.3).unwrap();
        let want = reference_nms(&boxes, &scores, 0.3, |a, b| box_iou(a, b).unwrap());
        assert_eq!(got, want);
    }
}

#[test]
fn edge_constraint_matches_four_way_min() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    use rand::Rng;
    for _ in 0..100 {
        let b = random_box(&mut rng, 10.0);
        let r = Point::new(rng.random_range(-5.0..15.0), rng.random_range(-5.0..15.0));
        let want = b
            .edge_midpoints()
            .iter()
            .map(|m| ((r.x - m.x).powi(2) + (r.y - m.y).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min);
        assert!((edge_constraint_loss(r, &b) - want).abs() < 1e-12);
    }
}

fn fd_check(points: &[Point], gt: &OrientedBox) -> f64 {
    let (_, grad) = hull_giou_loss(points, gt).unwrap();
    let f = |p: &[Point]| hull_giou_loss(p, gt).unwrap().0;
    let eps = 1e-6;
    let mut worst: f64 = 0.0;
    for i in 0..points.len() {
        for axis in 0..2 {
            let mut hi = points.to_vec();
            let mut lo = points.to_vec();
            if axis == 0 {
                hi[i].x += eps;
                lo[i].x -= eps;
            } else {
                hi[i].y += eps;
                lo[i].y -= eps;
            }
            let num = (f(&hi) - f(&lo)) / (2.0 * eps);
            let ana = if axis == 0 { grad[i].x } else { grad[i].y };
            worst = worst.max((ana - num).abs() / ana.abs().max(num.abs()).max(1e-4));
        }
    }
    worst
}

#[test]
fn giou_loss_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..30 {
        let gt = random_box(&mut rng, 10.0);
        let pts: Vec<Point> = random_points(9, 4.0, &mut rng)
            .into_iter()
            .map(|p| p.add(Point::new(5.0, 5.0)))
            .collect();
        assert!(fd_check(&pts, &gt) < 1e-4);
    }
}

#[test]
fn edge_constraint_gradient_is_unit_vector() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..50 {
        let b = random_box(&mut rng, 10.0);
        let r = random_points(1, 8.0, &mut rng)[0];
        let (v, g) = edge_constraint_with_grad(r, &b);
        assert!((g.norm() - 1.0).abs() < 1e-12);
        let eps = 1e-6;
        let nx =
            (edge_constraint_loss(Point::new(r.x + eps, r.y), &b) - edge_constraint_loss(Point::new(r.x - eps, r.y), &b)) / (2.0 * eps);
        assert!((nx - g.x).abs() < 1e-6, "{v}");
    }
}

#[test]
fn min_area_rect_breaks_area_ties_by_perimeter() {
    // Leg-flush and hypotenuse-flush rectangles both have area 4.
    let tri = [Point::new(0.0, 0.0), Point::new(2.0, 0.0), Point::new(0.0, 2.0)];
    for turns in 0..4 {
        for start in 0..3 {
            let mut v: Vec<Point> = tri.iter().map(|&p| (0..turns).fold(p, |q, _| quarter(q))).collect();
            v.rotate_left(start);
            let r = min_area_rect(&Polygon::new(v).unwrap()).unwrap();
            let (w, h, _) = r.size_and_angle();
            assert!((w - 2.0).abs() < 1e-12 && (h - 2.0).abs() < 1e-12, "{turns} {start}: {w} x {h}");
        }
    }
}

proptest! {
    #[test]
    fn quarter_turns_commute(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = random_points(10, 8.0, &mut rng);
        let rot: Vec<Point> = pts.iter().map(|&p| quarter(p)).collect();
        let h = convex_hull(&pts).unwrap();
        let hr = convex_hull(&rot).unwrap();
        let h_rot: Vec<Point> = h.vertices().iter().map(|&p| quarter(p)).collect();
        prop_assert!(same_cycle(&h_rot, hr.vertices(), 0.0));
        let c = hull_center(&h).unwrap();
        let cr = hull_center(&hr).unwrap();
        prop_assert!((quarter(c).x - cr.x).abs() < 1e-12 && (quarter(c).y - cr.y).abs() < 1e-12);
        let r = min_area_rect(&h).unwrap();
        let rr = min_area_rect(&hr).unwrap();
        prop_assert!(same_cycle(&r.corners.map(quarter), &rr.corners, 1e-9));

        let a = random_box(&mut rng, 10.0);
        let b = random_box(&mut rng, 10.0);
        let (pa, pb) = (a.to_polygon().unwrap(), b.to_polygon().unwrap());
        let ra = Polygon::new(pa.vertices().iter().map(|&p| quarter(p)).collect()).unwrap();
        let rb = Polygon::new(pb.vertices().iter().map(|&p| quarter(p)).collect()).unwrap();
        prop_assert!((polygon_iou(&pa, &pb).unwrap() - polygon_iou(&ra, &rb).unwrap()).abs() < 1e-12);
        let rbox = OrientedBox { corners: a.corners.map(quarter) };
        let p = pts[0];
        prop_assert!((edge_constraint_loss(p, &a) - edge_constraint_loss(quarter(p), &rbox)).abs() < 1e-12);
    }

    #[test]
    fn iou_is_symmetric_and_reflexive(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_box(&mut rng, 10.0).to_polygon().unwrap();
        let b = random_box(&mut rng, 10.0).to_polygon().unwrap();
        let ab = polygon_iou(&a, &b).unwrap();
        prop_assert!((ab - polygon_iou(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((polygon_iou(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let g = giou(&a, &b).unwrap();
        prop_assert!(g <= ab + 1e-12 && g >= -1.0);
    }
}
