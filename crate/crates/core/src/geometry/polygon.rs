use super::real::Real;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point<T = f64> {
    pub x: T,
    pub y: T,
}

impl<T: Real> Point<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }

    pub fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }

    pub fn scale(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s)
    }

    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y
    }

    pub fn norm(self) -> T {
        self.dot(self).sqrt()
    }

    pub fn value(self) -> Point {
        Point::new(self.x.val(), self.y.val())
    }
}

impl Point {
    pub fn lift<T: Real>(self) -> Point<T> {
        Point::new(T::cst(self.x), T::cst(self.y))
    }

    /// Rotates about `c` by `angle` radians (counter-clockwise in an x-right,
    /// y-up frame).
    pub fn rotate_about(self, c: Point, angle: f64) -> Point {
        let (s, co) = angle.sin_cos();
        let d = self.sub(c);
        Point::new(c.x + co * d.x - s * d.y, c.y + s * d.x + co * d.y)
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Point::new(x, y)
    }
}

/// `(b − a) × (c − a)`: positive when `a → b → c` turns counter-clockwise.
pub fn cross<T: Real>(a: Point<T>, b: Point<T>, c: Point<T>) -> T {
    let u = b.sub(a);
    let v = c.sub(a);
    u.x * v.y - u.y * v.x
}

/// Signed shoelace area.
pub fn signed_area<T: Real>(v: &[Point<T>]) -> T {
    let n = v.len();
    let mut s = T::cst(0.0);
    for i in 0..n {
        let (a, b) = (v[i], v[(i + 1) % n]);
        s = s + (a.x * b.y - b.x * a.y);
    }
    s * T::cst(0.5)
}

/// Simple polygon with positive signed area (counter-clockwise when x
/// points right and y points up).
#[derive(Clone, Debug, PartialEq)]
pub struct Polygon<T = f64> {
    vertices: Vec<Point<T>>,
}

impl<T: Real> Polygon<T> {
    /// Orders the vertices to positive signed area; rejects fewer than three
    /// vertices, non-finite coordinates and zero area.
    pub fn new(mut vertices: Vec<Point<T>>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::DegeneratePolygon("fewer than 3 vertices"));
        }
        if vertices.iter().any(|p| !p.x.val().is_finite() || !p.y.val().is_finite()) {
            return Err(Error::DegeneratePolygon("non-finite vertex"));
        }
        let a = signed_area(&vertices).val();
        if a == 0.0 {
            return Err(Error::DegeneratePolygon("zero area"));
        }
        if a < 0.0 {
            vertices.reverse();
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[Point<T>] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn area(&self) -> T {
        signed_area(&self.vertices)
    }

    /// No reflex vertex (collinear runs allowed).
    pub fn is_convex(&self) -> bool {
        let v = &self.vertices;
        let n = v.len();
        let scale = v.iter().map(|p| p.x.val().abs().max(p.y.val().abs())).fold(1.0, f64::max);
        (0..n).all(|i| cross(v[i], v[(i + 1) % n], v[(i + 2) % n]).val() >= -1e-12 * scale * scale)
    }

    pub fn value(&self) -> Polygon {
        Polygon {
            vertices: self.vertices.iter().map(|p| p.value()).collect(),
        }
    }

    /// Point-in-polygon for convex polygons; boundary points count as inside.
    pub fn contains(&self, p: Point) -> bool {
        let v = &self.vertices;
        let n = v.len();
        (0..n).all(|i| cross(v[i].value(), v[(i + 1) % n].value(), p) >= 0.0)
    }
}

/// Andrew's monotone chain. Returns the hull counter-clockwise without
/// duplicate or collinear boundary vertices.
pub fn convex_hull<T: Real>(points: &[Point<T>]) -> Result<Polygon<T>> {
    let mut pts = points.to_vec();
    if pts.iter().any(|p| !p.x.val().is_finite() || !p.y.val().is_finite()) {
        return Err(Error::DegeneratePolygon("non-finite vertex"));
    }
    pts.sort_by(|a, b| (a.x.val(), a.y.val()).partial_cmp(&(b.x.val(), b.y.val())).expect("finite"));
    let turn = |a: Point<T>, b: Point<T>, c: Point<T>| cross(a.value(), b.value(), c.value());
    let mut hull: Vec<Point<T>> = Vec::with_capacity(2 * pts.len());
    for pass in [&pts[..], &pts.iter().rev().copied().collect::<Vec<_>>()[..]] {
        let start = hull.len();
        for &p in pass {
            while hull.len() >= start + 2 && turn(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    if hull.len() < 3 {
        return Err(Error::DegenerateHull);
    }
    Ok(Polygon { vertices: hull })
}

/// Area centroid by Green's theorem.
pub fn hull_center<T: Real>(poly: &Polygon<T>) -> Result<Point<T>> {
    let v = poly.vertices();
    let n = v.len();
    let (mut a, mut cx, mut cy) = (T::cst(0.0), T::cst(0.0), T::cst(0.0));
    for i in 0..n {
        let (p, q) = (v[i], v[(i + 1) % n]);
        let c = p.x * q.y - q.x * p.y;
        a = a + c;
        cx = cx + (p.x + q.x) * c;
        cy = cy + (p.y + q.y) * c;
    }
    if a.val() == 0.0 {
        return Err(Error::DegeneratePolygon("zero area"));
    }
    let k = T::cst(3.0) * a;
    Ok(Point::new(cx / k, cy / k))
}

/// Rectangle given by four corners with positive signed area.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrientedBox<T = f64> {
    pub corners: [Point<T>; 4],
}

impl<T: Real> OrientedBox<T> {
    pub fn center(&self) -> Point<T> {
        let c = &self.corners;
        c[0].add(c[2]).scale(T::cst(0.5))
    }

    /// Midpoint of edge `i`, running from corner `i` to corner `i + 1`.
    pub fn edge_midpoints(&self) -> [Point<T>; 4] {
        let c = &self.corners;
        std::array::from_fn(|i| c[i].add(c[(i + 1) % 4]).scale(T::cst(0.5)))
    }

    pub fn area(&self) -> T {
        signed_area(&self.corners)
    }

    pub fn to_polygon(&self) -> Result<Polygon<T>> {
        Polygon::new(self.corners.to_vec())
    }

    pub fn value(&self) -> OrientedBox {
        OrientedBox {
            corners: self.corners.map(|p| p.value()),
        }
    }
}

impl OrientedBox {
    /// Box of size `w × h` centred on `(cx, cy)`, its `w` side turned by
    /// `angle` radians from the x axis.
    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64, angle: f64) -> Self {
        let c = Point::new(cx, cy);
        let half = [(-w, -h), (w, -h), (w, h), (-w, h)];
        Self {
            corners: half.map(|(dx, dy)| Point::new(cx + dx / 2.0, cy + dy / 2.0).rotate_about(c, angle)),
        }
    }

    /// `(width, height, angle)` of the first edge and its neighbour.
    pub fn size_and_angle(&self) -> (f64, f64, f64) {
        let c = &self.corners;
        let e0 = c[1].sub(c[0]);
        let e1 = c[2].sub(c[1]);
        (e0.norm(), e1.norm(), e0.y.atan2(e0.x))
    }

    pub fn rotate_about(&self, c: Point, angle: f64) -> Self {
        Self {
            corners: self.corners.map(|p| p.rotate_about(c, angle)),
        }
    }
}

/// Smallest-area enclosing rectangle of a convex polygon. Every candidate has
/// one side flush with a polygon edge. Areas equal to within a relative
/// 1e-9 count as ties, resolved by the smaller perimeter and then by edge
/// order, so the choice does not depend on where the vertex list starts.
pub fn min_area_rect<T: Real>(poly: &Polygon<T>) -> Result<OrientedBox<T>> {
    if !poly.is_convex() {
        return Err(Error::NonConvex);
    }
    let v = poly.vertices();
    let n = v.len();
    let mut best: Option<(f64, f64, OrientedBox<T>)> = None;
    for i in 0..n {
        let o = v[i];
        let e = v[(i + 1) % n].sub(o);
        let len = e.norm();
        if len.val() == 0.0 {
            continue;
        }
        let u = e.scale(T::cst(1.0) / len);
        let nrm = Point::new(-u.y, u.x);
        let (mut s_lo, mut s_hi, mut t_hi) = (T::cst(0.0), T::cst(0.0), T::cst(0.0));
        for &p in v {
            let d = p.sub(o);
            let s = d.dot(u);
            let t = d.dot(nrm);
            if s.val() < s_lo.val() {
                s_lo = s;
            }
            if s.val() > s_hi.val() {
                s_hi = s;
            }
            if t.val() > t_hi.val() {
                t_hi = t;
            }
        }
        let area = ((s_hi - s_lo) * t_hi).val();
        let perimeter = (s_hi - s_lo).val() + t_hi.val();
        let better = |&(a, p, _): &(f64, f64, OrientedBox<T>)| {
            let tol = 1e-9 * a.abs();
            area < a - tol || (area <= a + tol && perimeter < p * (1.0 - 1e-9))
        };
        if best.as_ref().is_none_or(better) {
            let a0 = o.add(u.scale(s_lo));
            let a1 = o.add(u.scale(s_hi));
            let lift = nrm.scale(t_hi);
            best = Some((
                area,
                perimeter,
                OrientedBox {
                    corners: [a0, a1, a1.add(lift), a0.add(lift)],
                },
            ));
        }
    }
    match best {
        Some((a, _, b)) if a > 0.0 => Ok(b),
        _ => Err(Error::DegeneratePolygon("zero area")),
    }
}
