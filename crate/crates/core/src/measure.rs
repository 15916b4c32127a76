//! Target measures, parameterized meshes, and the constructions that turn a
//! parameterized surface into a source density or a target measure.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::density::DensityMesh;
use crate::diagram::Domain;
use crate::error::{Error, Result};
use crate::geometry::{ConvexPolygon, Point2};

/// Fraction of the domain kept free on each side by [`normalize_into_domain`].
pub const DOMAIN_MARGIN: f64 = 0.01;

/// Weighted point set `ν = Σ ν_i δ_{p_i}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    points: Vec<Point2>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(points: Vec<Point2>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("measure has no points".into()));
        }
        if points.len() != weights.len() {
            return Err(Error::InvalidInput(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidInput(format!("point {i} is not finite")));
        }
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidInput(format!(
                "point {i} has non-positive weight {}",
                weights[i]
            )));
        }
        Ok(Self { points, weights })
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Weights scaled to sum to 1.
    pub fn normalized(&self) -> Self {
        let t = self.total();
        Self {
            points: self.points.clone(),
            weights: self.weights.iter().map(|w| w / t).collect(),
        }
    }

    /// Merges exactly coincident points, summing their weights. Returns the
    /// merged measure and, for each input point, its merged index.
    pub fn merge_duplicates(&self) -> (Self, Vec<usize>) {
        let mut ids: HashMap<(u64, u64), usize> = HashMap::new();
        let mut points = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        let map = self
            .points
            .iter()
            .zip(&self.weights)
            .map(|(p, &w)| {
                // +0.0 and -0.0 are the same site
                let key = ((p.x + 0.0).to_bits(), (p.y + 0.0).to_bits());
                let id = *ids.entry(key).or_insert_with(|| {
                    points.push(*p);
                    weights.push(0.0);
                    points.len() - 1
                });
                weights[id] += w;
                id
            })
            .collect();
        (Self { points, weights }, map)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        expect_header(&mut rdr, &["x", "y", "weight"], path)?;
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for row in rdr.deserialize() {
            let (x, y, w): (f64, f64, f64) = row?;
            points.push(Point2::new(x, y));
            weights.push(w);
        }
        Self::new(points, weights)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["x", "y", "weight"])?;
        for (p, m) in self.points.iter().zip(&self.weights) {
            w.serialize((p.x, p.y, m))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn expect_header<R: std::io::Read>(rdr: &mut csv::Reader<R>, want: &[&str], path: &Path) -> Result<()> {
    let got: Vec<String> = rdr.headers()?.iter().map(|h| h.to_ascii_lowercase()).collect();
    if got != want {
        return Err(Error::Parse {
            context: path.display().to_string(),
            message: format!("expected header {}, found {}", want.join(","), got.join(",")),
        });
    }
    Ok(())
}

/// Uniform scale and translation `p -> scale * p + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transform {
    pub scale: f64,
    pub offset: Point2,
}

impl Transform {
    pub const IDENTITY: Transform = Transform {
        scale: 1.0,
        offset: Point2::new(0.0, 0.0),
    };

    pub fn apply(&self, p: Point2) -> Point2 {
        p * self.scale + self.offset
    }

    pub fn invert(&self, q: Point2) -> Point2 {
        (q - self.offset) * (1.0 / self.scale)
    }
}

/// Maps points into the domain shrunk by a 1% margin on each side.
///
/// Points already there are left alone. Otherwise the centre of their bounding
/// box goes to the domain centroid and the largest uniform scale that keeps
/// every point inside the shrunk domain is used; a single point lands on the
/// centroid at scale 1.
pub fn normalize_into_domain(points: &[Point2], domain: &Domain) -> Result<(Vec<Point2>, Transform)> {
    if points.is_empty() {
        return Err(Error::InvalidInput("no points to normalize".into()));
    }
    let c = domain.centroid();
    let shrink = 1.0 - 2.0 * DOMAIN_MARGIN;
    let inner = ConvexPolygon::new(
        domain
            .boundary()
            .vertices()
            .iter()
            .map(|&v| c + (v - c) * shrink)
            .collect(),
    );
    if points.iter().all(|&p| inner.contains(p)) {
        return Ok((points.to_vec(), Transform::IDENTITY));
    }
    let bb = crate::geometry::BBox::from_points(points);
    let b = bb.center();
    let mut scale = f64::INFINITY;
    for &p in points {
        let u = p - b;
        for e in inner.edges() {
            // outward normal of a counterclockwise edge
            let n = Point2::new(e.b.y - e.a.y, e.a.x - e.b.x);
            let nu = n.dot(u);
            if nu > 0.0 {
                scale = scale.min(n.dot(e.a - c) / nu);
            }
        }
    }
    if !scale.is_finite() {
        scale = 1.0;
    }
    let t = Transform {
        scale,
        offset: c - b * scale,
    };
    Ok((points.iter().map(|&p| t.apply(p)).collect(), t))
}

/// Surface mesh with a planar parameterization: vertex `k` sits at
/// `vertices3d[k]` in space and `vertices2d[k]` in the plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterizedMesh {
    pub vertices3d: Vec<[f64; 3]>,
    pub vertices2d: Vec<Point2>,
    pub faces: Vec<[usize; 3]>,
}

fn area3(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> f64 {
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    let x = u[1] * v[2] - u[2] * v[1];
    let y = u[2] * v[0] - u[0] * v[2];
    let z = u[0] * v[1] - u[1] * v[0];
    0.5 * (x * x + y * y + z * z).sqrt()
}

impl ParameterizedMesh {
    pub fn new(vertices3d: Vec<[f64; 3]>, vertices2d: Vec<Point2>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if vertices3d.len() != vertices2d.len() {
            return Err(Error::InvalidInput(format!(
                "{} 3D vertices but {} 2D vertices",
                vertices3d.len(),
                vertices2d.len()
            )));
        }
        if let Some(f) = faces.iter().position(|f| f.iter().any(|&v| v >= vertices2d.len())) {
            return Err(Error::InvalidInput(format!("face {f} has a bad vertex index")));
        }
        Ok(Self {
            vertices3d,
            vertices2d,
            faces,
        })
    }

    pub fn face_area3d(&self, f: usize) -> f64 {
        let [a, b, c] = self.faces[f].map(|v| self.vertices3d[v]);
        area3(a, b, c)
    }

    pub fn face_area2d(&self, f: usize) -> f64 {
        let [a, b, c] = self.faces[f].map(|v| self.vertices2d[v]);
        0.5 * (b - a).cross(c - a).abs()
    }

    /// Total surface area in space.
    pub fn area3d(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area3d(f)).sum()
    }

    /// Vertices on the boundary of the parameter domain (on an edge used by
    /// exactly one face).
    pub fn boundary_vertices(&self) -> Vec<bool> {
        let mut count: HashMap<(usize, usize), u32> = HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let mut out = vec![false; self.vertices2d.len()];
        for ((a, b), c) in count {
            if c == 1 {
                out[a] = true;
                out[b] = true;
            }
        }
        out
    }

    pub fn read_poff(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        Self::parse_poff(std::io::BufReader::new(file), &path.display().to_string())
    }

    pub fn parse_poff(reader: impl BufRead, context: &str) -> Result<Self> {
        let err = |message: String| Error::Parse {
            context: context.to_string(),
            message,
        };
        let mut lines = reader
            .lines()
            .map(|l| l.map(|s| s.trim().to_string()))
            .filter(|l| !matches!(l, Ok(s) if s.is_empty() || s.starts_with('#')));
        let mut next = |what: &str| -> Result<String> {
            lines
                .next()
                .ok_or_else(|| err(format!("unexpected end of file, expected {what}")))?
                .map_err(Error::from)
        };
        if next("header")? != "POFF" {
            return Err(err("missing POFF header".into()));
        }
        let counts = next("vertex and face counts")?;
        let nums: Vec<usize> = counts
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| err(format!("bad counts line {counts:?}: {e}")))?;
        let [nv, nf] = nums[..] else {
            return Err(err(format!("bad counts line {counts:?}")));
        };
        let mut v3 = Vec::with_capacity(nv);
        let mut v2 = Vec::with_capacity(nv);
        for k in 0..nv {
            let line = next("vertex")?;
            let x: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| err(format!("vertex {k}: {e}")))?;
            let [a, b, c, u, v] = x[..] else {
                return Err(err(format!("vertex {k} needs 5 numbers")));
            };
            v3.push([a, b, c]);
            v2.push(Point2::new(u, v));
        }
        let mut faces = Vec::with_capacity(nf);
        for k in 0..nf {
            let line = next("face")?;
            let x: Vec<usize> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| err(format!("face {k}: {e}")))?;
            let [3, i, j, l] = x[..] else {
                return Err(err(format!("face {k} must be `3 i j k`")));
            };
            faces.push([i, j, l]);
        }
        Self::new(v3, v2, faces)
    }

    pub fn write_poff(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "POFF")?;
        writeln!(out, "{} {}", self.vertices2d.len(), self.faces.len())?;
        for (p, q) in self.vertices3d.iter().zip(&self.vertices2d) {
            writeln!(out, "{:?} {:?} {:?} {:?} {:?}", p[0], p[1], p[2], q.x, q.y)?;
        }
        for f in &self.faces {
            writeln!(out, "3 {} {} {}", f[0], f[1], f[2])?;
        }
        Ok(())
    }

    pub fn save_poff(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_poff(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

/// Source density with per-triangle value `area3D / area2D`, scaled to total
/// mass 1.
pub fn extract_source_density(template: &ParameterizedMesh) -> Result<DensityMesh> {
    let mut density = Vec::with_capacity(template.faces.len());
    for f in 0..template.faces.len() {
        let a2 = template.face_area2d(f);
        if a2 == 0.0 {
            return Err(Error::DegenerateTriangle { face: f });
        }
        density.push(template.face_area3d(f) / a2);
    }
    let mesh = DensityMesh::new(template.vertices2d.clone(), template.faces.clone(), density)?;
    Ok(mesh.normalized())
}

/// Target measure: each vertex at its planar position with a third of the
/// spatial area of its incident faces, normalized to total 1. Vertices with
/// no incident face are dropped.
pub fn extract_target_measure(subject: &ParameterizedMesh) -> Result<DiscreteMeasure> {
    let n = subject.vertices2d.len();
    let mut w = vec![0.0; n];
    for (f, face) in subject.faces.iter().enumerate() {
        let a = subject.face_area3d(f) / 3.0;
        for &v in face {
            w[v] += a;
        }
    }
    let mut points = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for (k, &wk) in w.iter().enumerate() {
        if wk > 0.0 {
            points.push(subject.vertices2d[k]);
            weights.push(wk);
        } else {
            log::warn!("vertex {k} has no incident area and is dropped");
        }
    }
    Ok(DiscreteMeasure::new(points, weights)?.normalized())
}

/// Reads a density CSV (`x1,y1,x2,y2,x3,y3,density`). Vertices shared by
/// several rows must repeat bit-identical coordinates.
pub fn read_density_csv(path: impl AsRef<Path>) -> Result<DensityMesh> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    expect_header(&mut rdr, &["x1", "y1", "x2", "y2", "x3", "y3", "density"], path)?;
    let mut tris = Vec::new();
    let mut dens = Vec::new();
    for row in rdr.deserialize() {
        let r: [f64; 7] = row?;
        tris.push([
            Point2::new(r[0], r[1]),
            Point2::new(r[2], r[3]),
            Point2::new(r[4], r[5]),
        ]);
        dens.push(r[6]);
    }
    DensityMesh::from_triangles(&tris, dens)
}

pub fn write_density_csv(mesh: &DensityMesh, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x1", "y1", "x2", "y2", "x3", "y3", "density"])?;
    for (t, d) in mesh.triangles().iter().zip(mesh.density()) {
        let [a, b, c] = t.map(|v| mesh.vertices()[v]);
        w.serialize((a.x, a.y, b.x, b.y, c.x, c.y, d))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a domain ring (`x,y` per vertex).
pub fn read_domain_csv(path: impl AsRef<Path>) -> Result<Domain> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    expect_header(&mut rdr, &["x", "y"], path)?;
    let mut pts = Vec::new();
    for row in rdr.deserialize() {
        let (x, y): (f64, f64) = row?;
        pts.push(Point2::new(x, y));
    }
    let poly = ConvexPolygon::new(pts.clone());
    if poly.len() != crate::geometry::convex_hull(&pts).len() {
        return Err(Error::Parse {
            context: path.display().to_string(),
            message: "domain ring is not convex".into(),
        });
    }
    Domain::new(poly)
}

pub fn write_domain_csv(domain: &Domain, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "y"])?;
    for p in domain.boundary().vertices() {
        w.serialize((p.x, p.y))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_examples() {
        let d = Domain::unit_square();
        let inside = vec![Point2::new(0.25, 0.5), Point2::new(0.75, 0.5)];
        let (p, t) = normalize_into_domain(&inside, &d).unwrap();
        assert_eq!(t, Transform::IDENTITY);
        assert_eq!(p, inside);

        let (p, t) = normalize_into_domain(&[Point2::new(7.0, -3.0)], &d).unwrap();
        assert_eq!(t.scale, 1.0);
        assert_eq!(p[0], Point2::new(0.5, 0.5));

        let wide = vec![Point2::new(-2.0, -2.0), Point2::new(2.0, 2.0), Point2::new(-2.0, 2.0)];
        let (p, t) = normalize_into_domain(&wide, &d).unwrap();
        assert!((t.scale - 0.245).abs() < 1e-15);
        assert!((p[0].x - 0.01).abs() < 1e-15 && (p[1].x - 0.99).abs() < 1e-15);
        assert!((t.invert(p[2]) - wide[2]).norm() < 1e-14);
    }

    #[test]
    fn duplicates_merge() {
        let m = DiscreteMeasure::new(
            vec![Point2::new(0.1, 0.1), Point2::new(0.2, 0.2), Point2::new(0.1, 0.1)],
            vec![0.25, 0.5, 0.25],
        )
        .unwrap();
        let (merged, map) = m.merge_duplicates();
        assert_eq!(merged.len(), 2);
        assert_eq!(merged.weights(), &[0.5, 0.5]);
        assert_eq!(map, vec![0, 1, 0]);
    }

    #[test]
    fn single_triangle_measure() {
        // right triangle with legs sqrt(6): area 3
        let s = 6f64.sqrt();
        let mesh = ParameterizedMesh::new(
            vec![[0.0, 0.0, 0.0], [s, 0.0, 0.0], [0.0, s, 0.0]],
            vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(0.0, 1.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert!((mesh.area3d() - 3.0).abs() < 1e-14);
        let nu = extract_target_measure(&mesh).unwrap();
        for w in nu.weights() {
            assert!((w - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn poff_roundtrip() {
        let mesh = ParameterizedMesh::new(
            vec![[0.0, 0.0, 0.1], [1.0, 0.0, 0.0], [0.0, 1.0, 1.0 / 3.0], [1.0, 1.0, 0.0]],
            vec![
                Point2::new(0.0, 0.0),
                Point2::new(1.0, 0.0),
                Point2::new(0.0, 1.0),
                Point2::new(1.0, 1.0),
            ],
            vec![[0, 1, 2], [1, 3, 2]],
        )
        .unwrap();
        let mut buf = Vec::new();
        mesh.write_poff(&mut buf).unwrap();
        let back = ParameterizedMesh::parse_poff(&buf[..], "buffer").unwrap();
        assert_eq!(back, mesh);
        assert!(ParameterizedMesh::parse_poff(&b"OFF\n1 0\n"[..], "x").is_err());
        assert!(ParameterizedMesh::parse_poff(&b"POFF\n1 1\n0 0 0 0 0\n4 0 0 0 0\n"[..], "x").is_err());
    }

    #[test]
    fn boundary_flags() {
        let mesh = ParameterizedMesh::new(
            vec![[0.0; 3]; 5],
            vec![
                Point2::new(0.0, 0.0),
                Point2::new(1.0, 0.0),
                Point2::new(1.0, 1.0),
                Point2::new(0.0, 1.0),
                Point2::new(0.5, 0.5),
            ],
            vec![[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]],
        )
        .unwrap();
        assert_eq!(mesh.boundary_vertices(), vec![true, true, true, true, false]);
    }
}
