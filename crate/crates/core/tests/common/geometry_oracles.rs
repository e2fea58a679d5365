//! Independent reference implementations for the geometry routines.

use equikit::geometry::{OrientedBox, Point, Polygon};
use rand::Rng;

fn turn(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// O(n³) hull: `(i, j)` is a hull edge when every other point lies strictly
/// left of it or on the open segment. Returns the set of strict vertices.
pub fn brute_force_hull(points: &[Point]) -> Vec<Point> {
    let n = points.len();
    let mut verts: Vec<Point> = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let (a, b) = (points[i], points[j]);
            if a == b {
                continue;
            }
            let ok = points.iter().all(|&c| {
                let t = turn(a, b, c);
                if t > 0.0 {
                    return true;
                }
                if t < 0.0 {
                    return false;
                }
                let d = (c.x - a.x) * (b.x - a.x) + (c.y - a.y) * (b.y - a.y);
                let l = (b.x - a.x).powi(2) + (b.y - a.y).powi(2);
                (0.0..=l).contains(&d)
            });
            if ok {
                for p in [a, b] {
                    if !verts.contains(&p) {
                        verts.push(p);
                    }
                }
            }
        }
    }
    verts
}

/// Minimum-area rectangle by sweeping the orientation in 0.1° steps, then
/// refining the best bracket by golden-section search.
pub fn angle_sweep_min_area(points: &[Point]) -> f64 {
    let area_at = |a: f64| {
        let (s, c) = a.sin_cos();
        let (mut u0, mut u1, mut v0, mut v1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for p in points {
            let u = c * p.x + s * p.y;
            let v = -s * p.x + c * p.y;
            u0 = u0.min(u);
            u1 = u1.max(u);
            v0 = v0.min(v);
            v1 = v1.max(v);
        }
        (u1 - u0) * (v1 - v0)
    };
    let step = 0.1f64.to_radians();
    let mut best = (f64::MAX, 0.0);
    for i in 0..900 {
        let a = i as f64 * step;
        let v = area_at(a);
        if v < best.0 {
            best = (v, a);
        }
    }
    let (mut lo, mut hi) = (best.1 - step, best.1 + step);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let m1 = hi - g * (hi - lo);
        let m2 = lo + g * (hi - lo);
        if area_at(m1) < area_at(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    best.0.min(area_at(0.5 * (lo + hi)))
}

fn inside(poly: &Polygon, p: Point) -> bool {
    let v = poly.vertices();
    (0..v.len()).all(|i| turn(v[i], v[(i + 1) % v.len()], p) >= 0.0)
}

fn bounds(polys: &[&Polygon]) -> (f64, f64, f64, f64) {
    let mut b = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in polys {
        for v in p.vertices() {
            b = (b.0.min(v.x), b.1.max(v.x), b.2.min(v.y), b.3.max(v.y));
        }
    }
    b
}

/// Monte-Carlo IoU with `samples` uniform points over the joint bounding box.
pub fn monte_carlo_iou(a: &Polygon, b: &Polygon, samples: usize, rng: &mut impl Rng) -> f64 {
    let (x0, x1, y0, y1) = bounds(&[a, b]);
    let (mut i, mut u) = (0usize, 0usize);
    for _ in 0..samples {
        let p = Point::new(rng.random_range(x0..x1), rng.random_range(y0..y1));
        let (ia, ib) = (inside(a, p), inside(b, p));
        i += (ia && ib) as usize;
        u += (ia || ib) as usize;
    }
    i as f64 / u as f64
}

/// Monte-Carlo area centroid.
pub fn monte_carlo_centroid(a: &Polygon, samples: usize, rng: &mut impl Rng) -> Point {
    let (x0, x1, y0, y1) = bounds(&[a]);
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for _ in 0..samples {
        let p = Point::new(rng.random_range(x0..x1), rng.random_range(y0..y1));
        if inside(a, p) {
            sx += p.x;
            sy += p.y;
            n += 1;
        }
    }
    Point::new(sx / n as f64, sy / n as f64)
}

/// Quadratic NMS written against a caller-supplied IoU.
pub fn reference_nms(boxes: &[OrientedBox], scores: &[f64], thresh: f64, iou: impl Fn(&OrientedBox, &OrientedBox) -> f64) -> Vec<usize> {
    let n = boxes.len();
    let mut alive = vec![true; n];
    let mut keep = Vec::new();
    loop {
        let mut best: Option<usize> = None;
        for i in 0..n {
            if alive[i] && best.is_none_or(|b| scores[i] > scores[b]) {
                best = Some(i);
            }
        }
        let Some(b) = best else { break };
        keep.push(b);
        alive[b] = false;
        for i in 0..n {
            if alive[i] && iou(&boxes[b], &boxes[i]) > thresh {
                alive[i] = false;
            }
        }
    }
    keep
}

pub fn random_points(n: usize, scale: f64, rng: &mut impl Rng) -> Vec<Point> {
    (0..n)
        .map(|_| Point::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale)))
        .collect()
}

pub fn random_box(rng: &mut impl Rng, span: f64) -> OrientedBox {
    OrientedBox::from_center(
        rng.random_range(0.0..span),
        rng.random_range(0.0..span),
        rng.random_range(2.0..span / 2.0),
        rng.random_range(2.0..span / 2.0),
        rng.random_range(0.0..std::f64::consts::TAU),
    )
}
