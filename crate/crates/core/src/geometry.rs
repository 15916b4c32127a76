//! Planar primitives: exact orientation predicates, convex polygons and
//! half-plane clipping.
//!
//! Sign predicates are evaluated with adaptive-precision expansion arithmetic
//! (Shewchuk's predicates via the `robust` crate). Constructed coordinates
//! (intersection points, areas, moments) use plain `f64`.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// A point (or vector) in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn lerp(self, other: Point2, t: f64) -> Point2 {
        Point2::new(self.x + t * (other.x - self.x), self.y + t * (other.y - self.y))
    }

    /// Lexicographic order on (x, y). Used for sweep events.
    pub fn lex_cmp(&self, other: &Point2) -> std::cmp::Ordering {
        self.x
            .total_cmp(&other.x)
            .then_with(|| self.y.total_cmp(&other.y))
    }
}

impl From<[f64; 2]> for Point2 {
    fn from(v: [f64; 2]) -> Self {
        Point2::new(v[0], v[1])
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

/// Sign of an orientation determinant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Orientation {
    Clockwise,
    Collinear,
    CounterClockwise,
}

impl Orientation {
    fn from_det(det: f64) -> Self {
        if det > 0.0 {
            Orientation::CounterClockwise
        } else if det < 0.0 {
            Orientation::Clockwise
        } else {
            Orientation::Collinear
        }
    }

    pub fn sign(self) -> i32 {
        match self {
            Orientation::Clockwise => -1,
            Orientation::Collinear => 0,
            Orientation::CounterClockwise => 1,
        }
    }
}

fn coord(p: Point2) -> robust::Coord<f64> {
    robust::Coord { x: p.x, y: p.y }
}

/// Exact sign of the doubled signed area of triangle `(a, b, c)`.
pub fn orient2d(a: Point2, b: Point2, c: Point2) -> Orientation {
    Orientation::from_det(robust::orient2d(coord(a), coord(b), coord(c)))
}

/// Exact orientation of four lifted points.
///
/// Positive when `d` lies strictly below the plane through `a, b, c`, where
/// `a, b, c` are counterclockwise when seen from above.
pub fn orient3d(a: [f64; 3], b: [f64; 3], c: [f64; 3], d: [f64; 3]) -> f64 {
    let c3 = |p: [f64; 3]| robust::Coord3D {
        x: p[0],
        y: p[1],
        z: p[2],
    };
    robust::orient3d(c3(a), c3(b), c3(c), c3(d))
}

/// A straight segment between two points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: Point2,
    pub b: Point2,
}

impl Segment {
    pub fn new(a: Point2, b: Point2) -> Self {
        Self { a, b }
    }

    pub fn length(&self) -> f64 {
        self.a.distance(self.b)
    }

    pub fn midpoint(&self) -> Point2 {
        self.a.lerp(self.b, 0.5)
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub min: Point2,
    pub max: Point2,
}

impl BBox {
    pub fn empty() -> Self {
        BBox {
            min: Point2::new(f64::INFINITY, f64::INFINITY),
            max: Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    pub fn from_points<'a>(pts: impl IntoIterator<Item = &'a Point2>) -> Self {
        let mut bb = BBox::empty();
        for p in pts {
            bb.include(*p);
        }
        bb
    }

    pub fn include(&mut self, p: Point2) {
        self.min.x = self.min.x.min(p.x);
        self.min.y = self.min.y.min(p.y);
        self.max.x = self.max.x.max(p.x);
        self.max.y = self.max.y.max(p.y);
    }

    pub fn is_empty(&self) -> bool {
        self.min.x > self.max.x || self.min.y > self.max.y
    }

    pub fn overlaps(&self, other: &BBox) -> bool {
        self.min.x <= other.max.x
            && other.min.x <= self.max.x
            && self.min.y <= other.max.y
            && other.min.y <= self.max.y
    }

    pub fn diagonal(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.min.distance(self.max)
        }
    }

    pub fn center(&self) -> Point2 {
        self.min.lerp(self.max, 0.5)
    }
}

/// Relative tolerance for merging near-duplicate polygon vertices.
pub const MERGE_TOLERANCE: f64 = 1e-14;

/// A convex polygon with counterclockwise vertices, or the empty polygon.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConvexPolygon {
    vertices: Vec<Point2>,
}

impl ConvexPolygon {
    pub fn empty() -> Self {
        Self { vertices: Vec::new() }
    }

    /// Builds a polygon from the vertices of a convex ring in either
    /// orientation. Near-duplicate and collinear vertices are dropped; fewer
    /// than three remaining vertices gives the empty polygon.
    pub fn new(vertices: Vec<Point2>) -> Self {
        let mut poly = Self { vertices };
        poly.clean();
        poly
    }

    pub fn rectangle(min: Point2, max: Point2) -> Self {
        Self::new(vec![
            min,
            Point2::new(max.x, min.y),
            max,
            Point2::new(min.x, max.y),
        ])
    }

    pub fn triangle(a: Point2, b: Point2, c: Point2) -> Self {
        Self::new(vec![a, b, c])
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.len() < 3
    }

    pub fn edges(&self) -> impl Iterator<Item = Segment> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |k| Segment::new(self.vertices[k], self.vertices[(k + 1) % n]))
    }

    pub fn bbox(&self) -> BBox {
        BBox::from_points(&self.vertices)
    }

    fn signed_area(&self) -> f64 {
        shoelace(&self.vertices)
    }

    pub fn area(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.signed_area().max(0.0)
        }
    }

    /// Vertex average; always interior for a nonempty convex polygon.
    pub fn vertex_centroid(&self) -> Point2 {
        let n = self.vertices.len().max(1) as f64;
        let s = self
            .vertices
            .iter()
            .fold(Point2::default(), |acc, &p| acc + p);
        s * (1.0 / n)
    }

    /// Area centroid.
    pub fn centroid(&self) -> Point2 {
        if self.is_empty() {
            return self.vertex_centroid();
        }
        let o = self.vertices[0];
        let mut acc = Point2::default();
        let mut area2 = 0.0;
        for k in 1..self.vertices.len() - 1 {
            let a = self.vertices[k] - o;
            let b = self.vertices[k + 1] - o;
            let w = a.cross(b);
            area2 += w;
            acc = acc + (a + b) * w;
        }
        if area2 == 0.0 {
            return self.vertex_centroid();
        }
        o + acc * (1.0 / (3.0 * area2))
    }

    /// `∫_P |x - p|² dx`, exact for the polygon: fan triangulation from the
    /// vertex centroid and the edge-midpoint rule on each triangle.
    pub fn second_moment_about(&self, p: Point2) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let g = self.vertex_centroid();
        let n = self.vertices.len();
        let mut total = 0.0;
        for k in 0..n {
            let a = self.vertices[k];
            let b = self.vertices[(k + 1) % n];
            let area = 0.5 * (a - g).cross(b - g);
            let m1 = g.lerp(a, 0.5) - p;
            let m2 = a.lerp(b, 0.5) - p;
            let m3 = b.lerp(g, 0.5) - p;
            total += area / 3.0 * (m1.norm_squared() + m2.norm_squared() + m3.norm_squared());
        }
        total
    }

    /// Closed-containment test with exact predicates.
    pub fn contains(&self, p: Point2) -> bool {
        if self.is_empty() {
            return false;
        }
        self.edges()
            .all(|e| orient2d(e.a, e.b, p) != Orientation::Clockwise)
    }

    /// Reflection through `center`.
    pub fn reflect(&self, center: Point2) -> ConvexPolygon {
        ConvexPolygon {
            vertices: self.vertices.iter().map(|&v| center * 2.0 - v).collect(),
        }
    }

    fn clean(&mut self) {
        let v = &mut self.vertices;
        if v.len() < 3 {
            v.clear();
            return;
        }
        let tol = MERGE_TOLERANCE * BBox::from_points(v.iter()).diagonal();
        // merge near-duplicates (cyclically)
        let mut merged: Vec<Point2> = Vec::with_capacity(v.len());
        for &p in v.iter() {
            if merged.last().is_none_or(|q: &Point2| q.distance(p) > tol) {
                merged.push(p);
            }
        }
        while merged.len() > 1 && merged[0].distance(*merged.last().unwrap()) <= tol {
            merged.pop();
        }
        if shoelace(&merged) < 0.0 {
            merged.reverse();
        }
        // drop collinear (or reflex, from rounding) vertices
        let mut changed = true;
        while changed && merged.len() >= 3 {
            changed = false;
            let n = merged.len();
            for k in 0..n {
                let a = merged[(k + n - 1) % n];
                let b = merged[k];
                let c = merged[(k + 1) % n];
                if orient2d(a, b, c) != Orientation::CounterClockwise {
                    merged.remove(k);
                    changed = true;
                    break;
                }
            }
        }
        if merged.len() < 3 {
            merged.clear();
        }
        *v = merged;
    }
}

fn shoelace(v: &[Point2]) -> f64 {
    let n = v.len();
    if n < 3 {
        return 0.0;
    }
    let o = v[0];
    let mut s = 0.0;
    for k in 1..n - 1 {
        s += (v[k] - o).cross(v[k + 1] - o);
    }
    0.5 * s
}

/// Convex hull of a point set (Andrew's monotone chain, exact predicates).
pub fn convex_hull(points: &[Point2]) -> ConvexPolygon {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.lex_cmp(b));
    pts.dedup();
    if pts.len() < 3 {
        return ConvexPolygon::empty();
    }
    let mut chain: Vec<Point2> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = chain.len();
        let iter: Box<dyn Iterator<Item = &Point2>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while chain.len() >= start + 2
                && orient2d(chain[chain.len() - 2], chain[chain.len() - 1], p)
                    != Orientation::CounterClockwise
            {
                chain.pop();
            }
            chain.push(p);
        }
        chain.pop();
    }
    ConvexPolygon::new(chain)
}

/// Intersects `poly` with the half-plane `{x : <n, x> <= c}`.
pub fn clip_halfplane(poly: &ConvexPolygon, n: Point2, c: f64) -> ConvexPolygon {
    if poly.is_empty() {
        return ConvexPolygon::empty();
    }
    let s: Vec<f64> = poly.vertices.iter().map(|&v| n.dot(v) - c).collect();
    if s.iter().all(|&v| v <= 0.0) {
        return poly.clone();
    }
    if s.iter().all(|&v| v > 0.0) {
        return ConvexPolygon::empty();
    }
    let m = poly.vertices.len();
    let mut out = Vec::with_capacity(m + 1);
    for k in 0..m {
        let (a, b) = (poly.vertices[k], poly.vertices[(k + 1) % m]);
        let (sa, sb) = (s[k], s[(k + 1) % m]);
        if sa <= 0.0 {
            out.push(a);
        }
        if (sa < 0.0 && sb > 0.0) || (sa > 0.0 && sb < 0.0) {
            out.push(a.lerp(b, sa / (sa - sb)));
        }
    }
    ConvexPolygon::new(out)
}

/// Intersects `poly` with the closed left side of the directed line `a -> b`.
/// Vertex classification uses exact orientation.
pub fn clip_left_of(poly: &ConvexPolygon, a: Point2, b: Point2) -> ConvexPolygon {
    if poly.is_empty() {
        return ConvexPolygon::empty();
    }
    let side: Vec<Orientation> = poly.vertices.iter().map(|&v| orient2d(a, b, v)).collect();
    if side.iter().all(|&o| o != Orientation::Clockwise) {
        return poly.clone();
    }
    if side.iter().all(|&o| o != Orientation::CounterClockwise) {
        return ConvexPolygon::empty();
    }
    let d = b - a;
    let m = poly.vertices.len();
    let mut out = Vec::with_capacity(m + 1);
    for k in 0..m {
        let (p, q) = (poly.vertices[k], poly.vertices[(k + 1) % m]);
        let (op, oq) = (side[k], side[(k + 1) % m]);
        if op != Orientation::Clockwise {
            out.push(p);
        }
        let crosses = matches!(
            (op, oq),
            (Orientation::CounterClockwise, Orientation::Clockwise)
                | (Orientation::Clockwise, Orientation::CounterClockwise)
        );
        if crosses {
            let sp = d.cross(p - a);
            let sq = d.cross(q - a);
            // the float sides can disagree with the exact ones near the line
            let t = if sp == sq { 0.5 } else { (sp / (sp - sq)).clamp(0.0, 1.0) };
            out.push(p.lerp(q, t));
        }
    }
    ConvexPolygon::new(out)
}

/// Intersection of two convex polygons.
pub fn intersect_convex(subject: &ConvexPolygon, clip: &ConvexPolygon) -> ConvexPolygon {
    let mut out = subject.clone();
    for e in clip.edges() {
        if out.is_empty() {
            break;
        }
        out = clip_left_of(&out, e.a, e.b);
    }
    out
}

/// Edge provenance for [`LabeledPolygon`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub(crate) enum EdgeLabel {
    Boundary(usize),
    Site(usize),
}

/// Convex polygon whose edges remember which constraint produced them.
/// `labels[k]` belongs to the edge `pts[k] -> pts[k + 1]`.
#[derive(Debug, Clone)]
pub(crate) struct LabeledPolygon {
    pub pts: Vec<Point2>,
    pub labels: Vec<EdgeLabel>,
}

impl LabeledPolygon {
    pub fn from_boundary(poly: &ConvexPolygon) -> Self {
        Self {
            pts: poly.vertices.clone(),
            labels: (0..poly.vertices.len()).map(EdgeLabel::Boundary).collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.pts.len() < 3
    }

    /// Keeps `{x : <n, x> <= c}`; the new edge is tagged with `label`.
    pub fn clip(&mut self, n: Point2, c: f64, label: EdgeLabel) {
        if self.is_empty() {
            return;
        }
        let m = self.pts.len();
        let s: Vec<f64> = self.pts.iter().map(|&v| n.dot(v) - c).collect();
        if s.iter().all(|&v| v <= 0.0) {
            return;
        }
        if s.iter().all(|&v| v > 0.0) {
            self.pts.clear();
            self.labels.clear();
            return;
        }
        let mut pts = Vec::with_capacity(m + 1);
        let mut labels = Vec::with_capacity(m + 1);
        for k in 0..m {
            let (a, b) = (self.pts[k], self.pts[(k + 1) % m]);
            let (sa, sb) = (s[k], s[(k + 1) % m]);
            if sa <= 0.0 {
                pts.push(a);
                labels.push(self.labels[k]);
            }
            if sa <= 0.0 && sb > 0.0 {
                if sa < 0.0 {
                    pts.push(a.lerp(b, sa / (sa - sb)));
                    labels.push(label);
                } else {
                    // `a` itself is on the line: the edge leaving `a` is the cut
                    *labels.last_mut().unwrap() = label;
                }
            } else if sa > 0.0 && sb < 0.0 {
                pts.push(a.lerp(b, sa / (sa - sb)));
                labels.push(self.labels[k]);
            }
        }
        self.pts = pts;
        self.labels = labels;
        self.dedup();
    }

    fn dedup(&mut self) {
        if self.pts.len() < 3 {
            self.pts.clear();
            self.labels.clear();
            return;
        }
        let tol = MERGE_TOLERANCE * BBox::from_points(self.pts.iter()).diagonal();
        let mut pts: Vec<Point2> = Vec::with_capacity(self.pts.len());
        let mut labels: Vec<EdgeLabel> = Vec::with_capacity(self.pts.len());
        for k in 0..self.pts.len() {
            let p = self.pts[k];
            if let Some(&q) = pts.last() {
                if q.distance(p) <= tol {
                    // zero-length edge q->p collapses; keep p's outgoing label
                    *labels.last_mut().unwrap() = self.labels[k];
                    continue;
                }
            }
            pts.push(p);
            labels.push(self.labels[k]);
        }
        while pts.len() > 1 && pts[0].distance(*pts.last().unwrap()) <= tol {
            pts.pop();
            labels.pop();
        }
        if pts.len() < 3 || shoelace(&pts) <= 0.0 {
            pts.clear();
            labels.clear();
        }
        self.pts = pts;
        self.labels = labels;
    }

    pub fn to_polygon(&self) -> ConvexPolygon {
        ConvexPolygon::new(self.pts.clone())
    }

    pub fn edges_labeled(&self) -> impl Iterator<Item = (EdgeLabel, Segment)> + '_ {
        let m = self.pts.len();
        (0..m).map(move |k| (self.labels[k], Segment::new(self.pts[k], self.pts[(k + 1) % m])))
    }
}
