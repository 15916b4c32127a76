//! Nearest and farthest power diagrams clipped to a convex domain.
//!
//! Site `i` carries the plane `pi_i(x) = <p_i - a, x - a> + h_i`, where `a`
//! is the area centroid of the domain. Measuring the planes from `a` rather
//! than the origin only adds `-<p_i, a>` to each height, which leaves every
//! hull and diagram combinatorially unchanged, but it makes equal heights mean
//! "split the domain fairly" and keeps the potentials well scaled wherever
//! the domain sits in the plane.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BBox, ConvexPolygon, EdgeLabel, LabeledPolygon, Point2, Segment};
use crate::hull::{build_hull, HullMode, HullTriangulation, LiftedPoint};
use crate::par;

/// Relative area below which a cell counts as empty.
pub const EMPTY_CELL_AREA: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DiagramMode {
    /// Cells of the upper envelope `max_i pi_i` (optimal transport).
    Nearest,
    /// Cells of the lower envelope `min_i pi_i` (worst transport).
    Farthest,
}

impl DiagramMode {
    pub fn hull_mode(self) -> HullMode {
        match self {
            DiagramMode::Nearest => HullMode::LowerHull,
            DiagramMode::Farthest => HullMode::UpperHull,
        }
    }

    pub fn from_hull_mode(mode: HullMode) -> Self {
        match mode {
            HullMode::LowerHull => DiagramMode::Nearest,
            HullMode::UpperHull => DiagramMode::Farthest,
        }
    }
}

/// A compact convex domain with nonempty interior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConvexPolygon", into = "ConvexPolygon")]
pub struct Domain {
    boundary: ConvexPolygon,
    area: f64,
    centroid: Point2,
    diameter: f64,
}

impl Domain {
    pub fn new(boundary: ConvexPolygon) -> Result<Self> {
        if boundary.is_empty() || boundary.area() <= 0.0 {
            return Err(Error::InvalidInput("domain has no interior".into()));
        }
        if !boundary.vertices().iter().all(|p| p.is_finite()) {
            return Err(Error::InvalidInput("domain vertex is not finite".into()));
        }
        let area = boundary.area();
        let centroid = boundary.centroid();
        let v = boundary.vertices();
        let mut diameter: f64 = 0.0;
        for i in 0..v.len() {
            for j in i + 1..v.len() {
                diameter = diameter.max(v[i].distance(v[j]));
            }
        }
        Ok(Self {
            boundary,
            area,
            centroid,
            diameter,
        })
    }

    pub fn unit_square() -> Self {
        Self::new(ConvexPolygon::rectangle(
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 1.0),
        ))
        .expect("unit square")
    }

    pub fn boundary(&self) -> &ConvexPolygon {
        &self.boundary
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    /// Area centroid; the anchor of every plane.
    pub fn centroid(&self) -> Point2 {
        self.centroid
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn bbox(&self) -> BBox {
        self.boundary.bbox()
    }

    pub fn contains(&self, p: Point2) -> bool {
        self.boundary.contains(p)
    }
}

impl TryFrom<ConvexPolygon> for Domain {
    type Error = Error;
    fn try_from(p: ConvexPolygon) -> Result<Self> {
        Domain::new(p)
    }
}

impl From<Domain> for ConvexPolygon {
    fn from(d: Domain) -> Self {
        d.boundary
    }
}

/// Interior wall shared by cells `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wall {
    pub i: usize,
    pub j: usize,
    pub segment: Segment,
}

#[derive(Debug, Clone)]
pub struct PowerDiagram {
    mode: DiagramMode,
    domain: Domain,
    sites: Vec<Point2>,
    heights: Vec<f64>,
    cells: Vec<ConvexPolygon>,
    walls: Vec<Wall>,
}

/// Builds the hull (when the sites admit one) and projects it.
pub fn power_diagram(
    sites: &[Point2],
    heights: &[f64],
    domain: &Domain,
    mode: DiagramMode,
) -> Result<PowerDiagram> {
    check_inputs(sites, heights)?;
    let lifted: Vec<LiftedPoint> = sites
        .iter()
        .zip(heights)
        .enumerate()
        .map(|(i, (&p, &h))| LiftedPoint::new(i, p, h))
        .collect();
    match build_hull(&lifted, mode.hull_mode()) {
        Ok(hull) => Ok(project_diagram(&hull, domain)),
        Err(Error::DegenerateSites(_)) => Ok(project_all_pairs(sites, heights, domain, mode)),
        Err(e) => Err(e),
    }
}

fn check_inputs(sites: &[Point2], heights: &[f64]) -> Result<()> {
    if sites.is_empty() {
        return Err(Error::InvalidInput("no sites".into()));
    }
    if sites.len() != heights.len() {
        return Err(Error::InvalidInput(format!(
            "{} sites but {} heights",
            sites.len(),
            heights.len()
        )));
    }
    Ok(())
}

/// Clips each present site's cell against its hull neighbours.
pub fn project_diagram(hull: &HullTriangulation, domain: &Domain) -> PowerDiagram {
    let adj = hull.adjacency();
    let present = hull.present();
    build(
        hull.points(),
        hull.heights(),
        domain,
        DiagramMode::from_hull_mode(hull.mode()),
        |i| present[i].then(|| adj[i].clone()),
    )
}

/// Clips each cell against every other site. Used when no hull exists
/// (fewer than three sites, or all collinear) and as a test oracle.
pub fn project_all_pairs(
    sites: &[Point2],
    heights: &[f64],
    domain: &Domain,
    mode: DiagramMode,
) -> PowerDiagram {
    let n = sites.len();
    build(sites, heights, domain, mode, |i| {
        Some((0..n).filter(|&j| j != i).collect())
    })
}

fn build<F>(
    sites: &[Point2],
    heights: &[f64],
    domain: &Domain,
    mode: DiagramMode,
    neighbours: F,
) -> PowerDiagram
where
    F: Fn(usize) -> Option<Vec<usize>> + Sync + Send,
{
    let n = sites.len();
    let a = domain.centroid();
    let min_area = EMPTY_CELL_AREA * domain.area();
    let labeled: Vec<Option<LabeledPolygon>> = par::map_range(n, |i| {
        let nb = neighbours(i)?;
        let mut cell = LabeledPolygon::from_boundary(domain.boundary());
        for j in nb {
            let (nrm, c) = halfplane(sites, heights, a, mode, i, j);
            cell.clip(nrm, c, EdgeLabel::Site(j));
            if cell.is_empty() {
                return None;
            }
        }
        (cell.to_polygon().area() > min_area).then_some(cell)
    });
    let cells: Vec<ConvexPolygon> = labeled
        .iter()
        .map(|c| c.as_ref().map_or_else(ConvexPolygon::empty, |c| c.to_polygon()))
        .collect();
    let min_len = 1e-14 * domain.diameter();
    let mut walls = Vec::new();
    for (i, cell) in labeled.iter().enumerate() {
        let Some(cell) = cell else { continue };
        for (label, seg) in cell.edges_labeled() {
            if let EdgeLabel::Site(j) = label {
                if i < j && !cells[j].is_empty() && seg.length() > min_len {
                    walls.push(Wall { i, j, segment: seg });
                }
            }
        }
    }
    PowerDiagram {
        mode,
        domain: domain.clone(),
        sites: sites.to_vec(),
        heights: heights.to_vec(),
        cells,
        walls,
    }
}

/// Half-plane `{x : <n, x> <= c}` where site `i` beats site `j`.
fn halfplane(
    sites: &[Point2],
    heights: &[f64],
    a: Point2,
    mode: DiagramMode,
    i: usize,
    j: usize,
) -> (Point2, f64) {
    match mode {
        DiagramMode::Nearest => {
            let n = sites[j] - sites[i];
            (n, heights[i] - heights[j] + n.dot(a))
        }
        DiagramMode::Farthest => {
            let n = sites[i] - sites[j];
            (n, heights[j] - heights[i] + n.dot(a))
        }
    }
}

impl PowerDiagram {
    pub fn mode(&self) -> DiagramMode {
        self.mode
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn sites(&self) -> &[Point2] {
        &self.sites
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn cells(&self) -> &[ConvexPolygon] {
        &self.cells
    }

    pub fn cell(&self, i: usize) -> &ConvexPolygon {
        &self.cells[i]
    }

    pub fn walls(&self) -> &[Wall] {
        &self.walls
    }

    pub fn empty_cells(&self) -> Vec<usize> {
        (0..self.cells.len())
            .filter(|&i| self.cells[i].is_empty())
            .collect()
    }

    /// `pi_i(x)`.
    pub fn plane(&self, i: usize, x: Point2) -> f64 {
        let a = self.domain.centroid();
        (self.sites[i] - a).dot(x - a) + self.heights[i]
    }

    /// The site whose plane wins at `x` (lowest index on ties).
    pub fn owner(&self, x: Point2) -> usize {
        let mut best = 0;
        for i in 1..self.sites.len() {
            let (vi, vb) = (self.plane(i, x), self.plane(best, x));
            let better = match self.mode {
                DiagramMode::Nearest => vi > vb,
                DiagramMode::Farthest => vi < vb,
            };
            if better {
                best = i;
            }
        }
        best
    }
}

/// Interior walls `(i, j, segment)` between nonempty cells, `i < j`.
pub fn cell_boundary_edges(diagram: &PowerDiagram) -> Vec<(usize, usize, Segment)> {
    diagram
        .walls
        .iter()
        .map(|w| (w.i, w.j, w.segment))
        .collect()
}
