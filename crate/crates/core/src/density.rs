//! Piecewise-constant source densities, the sweep-line overlay with a power
//! diagram, and the integrals evaluated on it.

use std::collections::HashMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::diagram::{Domain, PowerDiagram};
use crate::error::{Error, Result};
use crate::geometry::{convex_hull, intersect_convex, BBox, ConvexPolygon, Point2, Segment};
use crate::par;

/// Relative tolerance for the tiling check of a mesh.
const TILING_TOLERANCE: f64 = 1e-9;

/// Triangulated convex domain with constant density per triangle.
#[derive(Debug, Clone)]
pub struct DensityMesh {
    vertices: Vec<Point2>,
    triangles: Vec<[usize; 3]>,
    density: Vec<f64>,
    polys: Vec<ConvexPolygon>,
    domain: Domain,
    index: OnceLock<GridIndex>,
}

impl DensityMesh {
    /// Validates and assembles a mesh. Clockwise triangles are reoriented.
    pub fn new(vertices: Vec<Point2>, triangles: Vec<[usize; 3]>, density: Vec<f64>) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::InvalidInput("mesh has no triangles".into()));
        }
        if triangles.len() != density.len() {
            return Err(Error::InvalidInput(format!(
                "{} triangles but {} densities",
                triangles.len(),
                density.len()
            )));
        }
        if let Some(p) = vertices.iter().find(|p| !p.is_finite()) {
            return Err(Error::InvalidInput(format!("vertex {p:?} is not finite")));
        }
        let mut triangles = triangles;
        let mut polys = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter_mut().enumerate() {
            if tri.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::InvalidInput(format!("triangle {t} has a bad vertex index")));
            }
            let [a, b, c] = tri.map(|v| vertices[v]);
            let signed = (b - a).cross(c - a);
            if signed == 0.0 {
                return Err(Error::DegenerateTriangle { face: t });
            }
            if signed < 0.0 {
                tri.swap(1, 2);
            }
            let poly = ConvexPolygon::triangle(a, b, c);
            if poly.is_empty() {
                return Err(Error::DegenerateTriangle { face: t });
            }
            polys.push(poly);
        }
        if let Some(t) = density.iter().position(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::InvalidInput(format!(
                "triangle {t} has invalid density {}",
                density[t]
            )));
        }
        let used: Vec<Point2> = triangles
            .iter()
            .flat_map(|tri| tri.iter().map(|&v| vertices[v]))
            .collect();
        let domain = Domain::new(convex_hull(&used))?;
        let tiled: f64 = polys.iter().map(ConvexPolygon::area).sum();
        if (tiled - domain.area()).abs() > TILING_TOLERANCE * domain.area() {
            return Err(Error::InvalidInput(format!(
                "triangles cover area {tiled} but their convex hull has area {}",
                domain.area()
            )));
        }
        let mesh = Self {
            vertices,
            triangles,
            density,
            polys,
            domain,
            index: OnceLock::new(),
        };
        if mesh.total_mass() <= 0.0 {
            return Err(Error::InvalidInput("mesh has zero total mass".into()));
        }
        Ok(mesh)
    }

    /// Builds a mesh from free triangles, sharing exactly equal vertices.
    pub fn from_triangles(tris: &[[Point2; 3]], density: Vec<f64>) -> Result<Self> {
        let mut ids: HashMap<(u64, u64), usize> = HashMap::new();
        let mut vertices = Vec::new();
        let triangles = tris
            .iter()
            .map(|t| {
                t.map(|p| {
                    *ids.entry((p.x.to_bits(), p.y.to_bits())).or_insert_with(|| {
                        vertices.push(p);
                        vertices.len() - 1
                    })
                })
            })
            .collect();
        Self::new(vertices, triangles, density)
    }

    /// `nx * ny` rectangles over `[min, max]`, each split along its rising
    /// diagonal; density from `f` at each triangle centroid.
    pub fn grid(min: Point2, max: Point2, nx: usize, ny: usize, f: impl Fn(Point2) -> f64) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidInput("empty grid".into()));
        }
        let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push(Point2::new(
                    min.x + (max.x - min.x) * i as f64 / nx as f64,
                    min.y + (max.y - min.y) * j as f64 / ny as f64,
                ));
            }
        }
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut triangles = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        let density = triangles
            .iter()
            .map(|t| {
                let c = (vertices[t[0]] + vertices[t[1]] + vertices[t[2]]) * (1.0 / 3.0);
                f(c)
            })
            .collect();
        Self::new(vertices, triangles, density)
    }

    /// Unit square split along `(0,0)-(1,1)` into the lower-right and
    /// upper-left triangles, with the given densities.
    pub fn unit_square(lower_right: f64, upper_left: f64) -> Result<Self> {
        Self::grid(Point2::new(0.0, 0.0), Point2::new(1.0, 1.0), 1, 1, |c| {
            if c.x > c.y {
                lower_right
            } else {
                upper_left
            }
        })
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle(&self, t: usize) -> &ConvexPolygon {
        &self.polys[t]
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn total_mass(&self) -> f64 {
        self.polys
            .iter()
            .zip(&self.density)
            .map(|(p, d)| d * p.area())
            .sum()
    }

    /// The same mesh with densities scaled to total mass 1.
    pub fn normalized(&self) -> Self {
        let m = self.total_mass();
        let mut out = self.clone();
        for d in &mut out.density {
            *d /= m;
        }
        out
    }

    fn index(&self) -> &GridIndex {
        self.index.get_or_init(|| GridIndex::new(self))
    }

    /// `∫_seg f ds`. A segment lying on a shared triangle edge takes the
    /// mean of the two densities.
    pub fn line_integral(&self, seg: &Segment) -> f64 {
        let len = seg.length();
        if len == 0.0 {
            return 0.0;
        }
        let tol = 1e-12 * self.domain().diameter();
        let mut total = 0.0;
        for t in self.index().candidates(seg) {
            let d = self.density[t];
            if d == 0.0 {
                continue;
            }
            if let Some((t0, t1, on_edge)) = clip_segment(seg, &self.polys[t], tol) {
                let w = if on_edge { 0.5 } else { 1.0 };
                total += w * d * (t1 - t0) * len;
            }
        }
        total
    }
}

/// Parameter range of `seg` inside the triangle, and whether the piece runs
/// along one of its edges.
fn clip_segment(seg: &Segment, tri: &ConvexPolygon, tol: f64) -> Option<(f64, f64, bool)> {
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    let mut on_edge = false;
    for e in tri.edges() {
        let edge = e.b - e.a;
        let elen = edge.norm();
        // signed distances to the outer side of the edge line
        let sa = -edge.cross(seg.a - e.a) / elen;
        let sb = -edge.cross(seg.b - e.a) / elen;
        if sa.abs() <= tol && sb.abs() <= tol {
            on_edge = true;
        } else if sa > tol && sb > tol {
            return None;
        } else if sa > tol || sb > tol {
            let tc = sa / (sa - sb);
            if sa > sb {
                t0 = t0.max(tc);
            } else {
                t1 = t1.min(tc);
            }
        }
    }
    (t1 > t0).then_some((t0, t1, on_edge))
}

/// Uniform bucket grid over the triangles, for segment queries.
#[derive(Debug, Clone)]
struct GridIndex {
    bbox: BBox,
    g: usize,
    buckets: Vec<Vec<usize>>,
}

impl GridIndex {
    fn new(mesh: &DensityMesh) -> Self {
        let bbox = mesh.domain().bbox();
        let g = ((mesh.len() as f64).sqrt().ceil() as usize).clamp(1, 512);
        let mut buckets = vec![Vec::new(); g * g];
        let idx = Self {
            bbox,
            g,
            buckets: Vec::new(),
        };
        for (t, poly) in mesh.polys.iter().enumerate() {
            let bb = poly.bbox();
            let (i0, j0) = idx.cell_of(bb.min);
            let (i1, j1) = idx.cell_of(bb.max);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * g + i].push(t);
                }
            }
        }
        Self { buckets, ..idx }
    }

    fn cell_of(&self, p: Point2) -> (usize, usize) {
        let fx = (p.x - self.bbox.min.x) / (self.bbox.max.x - self.bbox.min.x).max(f64::MIN_POSITIVE);
        let fy = (p.y - self.bbox.min.y) / (self.bbox.max.y - self.bbox.min.y).max(f64::MIN_POSITIVE);
        let c = |f: f64| ((f * self.g as f64).floor().max(0.0) as usize).min(self.g - 1);
        (c(fx), c(fy))
    }

    fn candidates(&self, seg: &Segment) -> Vec<usize> {
        let mut bb = BBox::empty();
        bb.include(seg.a);
        bb.include(seg.b);
        let (i0, j0) = self.cell_of(bb.min);
        let (i1, j1) = self.cell_of(bb.max);
        let mut out = Vec::new();
        for j in j0..=j1 {
            for i in i0..=i1 {
                out.extend_from_slice(&self.buckets[j * self.g + i]);
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// One convex piece `triangle ∩ cell`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub triangle: usize,
    pub site: usize,
    pub polygon: ConvexPolygon,
}

#[derive(Debug, Clone, Default)]
pub struct Overlay {
    pub atoms: Vec<Atom>,
    /// Sweep events that shared their position with the previous event.
    pub tie_events: usize,
}

impl Overlay {
    pub fn total_area(&self) -> f64 {
        self.atoms.iter().map(|a| a.polygon.area()).sum()
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Kind {
    Triangle,
    Cell,
}

struct Object {
    kind: Kind,
    index: usize,
    lo: Point2,
    hi: Point2,
    ymin: f64,
    ymax: f64,
}

fn object(kind: Kind, index: usize, poly: &ConvexPolygon) -> Object {
    let v = poly.vertices();
    let lo = *v.iter().min_by(|a, b| a.lex_cmp(b)).unwrap();
    let hi = *v.iter().max_by(|a, b| a.lex_cmp(b)).unwrap();
    let bb = poly.bbox();
    Object {
        kind,
        index,
        lo,
        hi,
        ymin: bb.min.y,
        ymax: bb.max.y,
    }
}

/// Overlays mesh triangles with diagram cells by a sweep in lexicographic
/// `(x, y)` order. An object is born at its lexicographically smallest
/// vertex and dies at its largest; a newborn is intersected only with the
/// live objects of the other kind whose y-extent meets its own.
pub fn build_overlay(mesh: &DensityMesh, diagram: &PowerDiagram) -> Overlay {
    let mut objects: Vec<Object> = (0..mesh.len())
        .map(|t| object(Kind::Triangle, t, mesh.triangle(t)))
        .collect();
    objects.extend(
        diagram
            .cells()
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_empty())
            .map(|(i, c)| object(Kind::Cell, i, c)),
    );
    // (point, death flag, kind, index, object id)
    let mut events: Vec<(Point2, bool, Kind, usize, usize)> = Vec::with_capacity(2 * objects.len());
    for (id, o) in objects.iter().enumerate() {
        events.push((o.lo, false, o.kind, o.index, id));
        events.push((o.hi, true, o.kind, o.index, id));
    }
    events.sort_by(|a, b| {
        a.0.lex_cmp(&b.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
            .then(a.3.cmp(&b.3))
    });

    let mut tie_events = 0;
    let mut alive: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    let mut slot = vec![usize::MAX; objects.len()];
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for (k, &(p, death, kind, _, id)) in events.iter().enumerate() {
        if k > 0 && events[k - 1].0 == p {
            tie_events += 1;
        }
        let side = kind as usize;
        if death {
            let s = slot[id];
            alive[side].swap_remove(s);
            if let Some(&moved) = alive[side].get(s) {
                slot[moved] = s;
            }
            continue;
        }
        let o = &objects[id];
        for &other in &alive[1 - side] {
            let q = &objects[other];
            if q.ymin <= o.ymax && o.ymin <= q.ymax {
                let (t, c) = if kind == Kind::Triangle { (id, other) } else { (other, id) };
                pairs.push((objects[t].index, objects[c].index));
            }
        }
        slot[id] = alive[side].len();
        alive[side].push(id);
    }
    pairs.sort_unstable();
    let atoms = clip_pairs(mesh, diagram, &pairs);
    Overlay { atoms, tie_events }
}

/// All-pairs overlay with bounding-box rejection. Test oracle.
pub fn naive_overlay(mesh: &DensityMesh, diagram: &PowerDiagram) -> Overlay {
    let mut pairs = Vec::new();
    for t in 0..mesh.len() {
        let tb = mesh.triangle(t).bbox();
        for (i, c) in diagram.cells().iter().enumerate() {
            if !c.is_empty() && c.bbox().overlaps(&tb) {
                pairs.push((t, i));
            }
        }
    }
    let atoms = clip_pairs(mesh, diagram, &pairs);
    Overlay { atoms, tie_events: 0 }
}

fn clip_pairs(mesh: &DensityMesh, diagram: &PowerDiagram, pairs: &[(usize, usize)]) -> Vec<Atom> {
    par::map_slice(pairs, |&(t, i)| {
        let poly = intersect_convex(diagram.cell(i), mesh.triangle(t));
        (!poly.is_empty() && poly.area() > 0.0).then(|| Atom {
            triangle: t,
            site: i,
            polygon: poly,
        })
    })
    .into_iter()
    .flatten()
    .collect()
}

/// `w_i = μ(cell_i)`.
pub fn mu_cell_volumes(overlay: &Overlay, mesh: &DensityMesh, n: usize) -> Vec<f64> {
    let masses = par::map_slice(&overlay.atoms, |a| mesh.density[a.triangle] * a.polygon.area());
    let mut w = vec![0.0; n];
    for (a, m) in overlay.atoms.iter().zip(masses) {
        w[a.site] += m;
    }
    w
}

/// `(1 / |p_i - p_j|) ∫_seg f ds`.
pub fn mu_edge_length(seg: &Segment, i: usize, j: usize, sites: &[Point2], mesh: &DensityMesh) -> Result<f64> {
    let dist = sites[i].distance(sites[j]);
    if i == j || dist < 1e-14 * mesh.domain().diameter() {
        return Err(Error::CoincidentSites(i, j));
    }
    Ok(mesh.line_integral(seg) / dist)
}

/// `½ Σ_atoms f ∫_atom |x - p_site|² dx`.
pub fn quadratic_cost(overlay: &Overlay, mesh: &DensityMesh, sites: &[Point2]) -> f64 {
    par::map_slice(&overlay.atoms, |a| {
        mesh.density[a.triangle] * a.polygon.second_moment_about(sites[a.site])
    })
    .into_iter()
    .sum::<f64>()
        * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagram::{power_diagram, DiagramMode};

    fn two_sites() -> Vec<Point2> {
        vec![Point2::new(0.25, 0.5), Point2::new(0.75, 0.5)]
    }

    #[test]
    fn single_cell_overlay() {
        let mesh = DensityMesh::unit_square(1.0, 1.0).unwrap();
        let d = power_diagram(&[Point2::new(0.5, 0.5)], &[0.0], mesh.domain(), DiagramMode::Nearest).unwrap();
        let ov = build_overlay(&mesh, &d);
        assert_eq!(ov.atoms.len(), 2);
        assert!(ov.atoms.iter().all(|a| (a.polygon.area() - 0.5).abs() < 1e-15));
        assert!((quadratic_cost(&ov, &mesh, d.sites()) - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn bisector_overlay_and_volumes() {
        let mesh = DensityMesh::unit_square(1.0, 1.0).unwrap();
        for (mode, cost) in [(DiagramMode::Nearest, 5.0 / 96.0), (DiagramMode::Farthest, 17.0 / 96.0)] {
            let d = power_diagram(&two_sites(), &[0.0, 0.0], mesh.domain(), mode).unwrap();
            let ov = build_overlay(&mesh, &d);
            assert_eq!(ov.atoms.len(), 4);
            assert!((ov.total_area() - 1.0).abs() < 1e-15);
            let w = mu_cell_volumes(&ov, &mesh, 2);
            assert!((w[0] - 0.5).abs() < 1e-15 && (w[1] - 0.5).abs() < 1e-15);
            assert!((quadratic_cost(&ov, &mesh, &two_sites()) - cost).abs() < 1e-15);
        }
    }

    #[test]
    fn mass_follows_density() {
        let mesh = DensityMesh::unit_square(0.0, 2.0).unwrap();
        let d = power_diagram(&[Point2::new(0.5, 0.5)], &[0.0], mesh.domain(), DiagramMode::Nearest).unwrap();
        let w = mu_cell_volumes(&build_overlay(&mesh, &d), &mesh, 1);
        assert_eq!(w, vec![1.0]);
    }

    #[test]
    fn edge_length_examples() {
        let wall = Segment::new(Point2::new(0.5, 0.0), Point2::new(0.5, 1.0));
        let s = two_sites();
        let uniform = DensityMesh::unit_square(1.0, 1.0).unwrap();
        assert!((mu_edge_length(&wall, 0, 1, &s, &uniform).unwrap() - 2.0).abs() < 1e-15);
        let upper = DensityMesh::unit_square(0.0, 2.0).unwrap();
        assert!((mu_edge_length(&wall, 0, 1, &s, &upper).unwrap() - 2.0).abs() < 1e-15);
        let lower = DensityMesh::unit_square(2.0, 0.0).unwrap();
        let off = Segment::new(Point2::new(0.1, 0.6), Point2::new(0.3, 0.9));
        assert_eq!(mu_edge_length(&off, 0, 1, &s, &lower).unwrap(), 0.0);
        assert!(matches!(
            mu_edge_length(&wall, 0, 1, &[s[0], s[0]], &uniform),
            Err(Error::CoincidentSites(0, 1))
        ));
    }

    #[test]
    fn segment_on_shared_edge_counts_once() {
        let mesh = DensityMesh::unit_square(1.0, 3.0).unwrap();
        let diag = Segment::new(Point2::new(0.0, 0.0), Point2::new(1.0, 1.0));
        assert!((mesh.line_integral(&diag) - 2.0 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn mesh_validation() {
        let p = [Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(1.0, 1.0), Point2::new(0.0, 1.0)];
        let deg = DensityMesh::new(vec![p[0], p[1], Point2::new(2.0, 0.0)], vec![[0, 1, 2]], vec![1.0]);
        assert!(matches!(deg, Err(Error::DegenerateTriangle { face: 0 })));
        // one triangle missing from the square
        let hole = DensityMesh::new(p.to_vec(), vec![[0, 1, 2]], vec![1.0]);
        assert!(hole.is_ok());
        let gap = DensityMesh::new(
            vec![p[0], p[1], p[2], p[3], Point2::new(0.5, 0.5)],
            vec![[0, 1, 4], [1, 2, 4], [2, 3, 4]],
            vec![1.0; 3],
        );
        assert!(matches!(gap, Err(Error::InvalidInput(_))));
        let cw = DensityMesh::new(p.to_vec(), vec![[0, 2, 1], [0, 3, 2]], vec![1.0, 1.0]).unwrap();
        assert!((cw.total_mass() - 1.0).abs() < 1e-15);
    }
}
