//! Lower and upper convex hulls of lifted sites, i.e. regular (weighted
//! Delaunay) triangulations, with incremental flip updates.
//!
//! A site `p_i` with height `h_i` lifts to `(p_i, -h_i)`. The lower hull of the
//! lifts is dual to the nearest power diagram; the upper hull is dual to the
//! farthest one and is computed as the lower hull of `(p_i, +h_i)`.
//!
//! Construction is incremental insertion with Edelsbrunner–Shah flipping. All
//! combinatorial decisions use exact predicates on coordinates that carry a
//! tiny deterministic per-site jitter (about 1e-10 of the site diameter),
//! which removes collinear and cocircular ties without changing the result on
//! nondegenerate input.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{orient2d, orient3d, BBox, Orientation, Point2};

const NONE: u32 = u32::MAX;
const JITTER: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HullMode {
    /// Dual of the nearest power diagram (OT).
    LowerHull,
    /// Dual of the farthest power diagram (WT).
    UpperHull,
}

/// A site with its height; lifts to `(p, -height)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiftedPoint {
    pub site_index: usize,
    pub p: Point2,
    pub height: f64,
}

impl LiftedPoint {
    pub fn new(site_index: usize, p: Point2, height: f64) -> Self {
        Self {
            site_index,
            p,
            height,
        }
    }

    pub fn lifted(&self) -> [f64; 3] {
        [self.p.x, self.p.y, -self.height]
    }
}

/// Work counters for the last build or update.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HullStats {
    pub flips: usize,
    pub removals: usize,
    pub rebuilt: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Loc {
    Inside,
    OnEdge(usize),
    OnVertex,
}

/// Projected hull triangulation. Local vertex `v` is the `v`-th input site.
#[derive(Debug, Clone)]
pub struct HullTriangulation {
    mode: HullMode,
    site_ids: Vec<usize>,
    points: Vec<Point2>,
    heights: Vec<f64>,
    jit: Vec<Point2>,
    z: Vec<f64>,
    tris: Vec<[u32; 3]>,
    nbrs: Vec<[u32; 3]>,
    alive: Vec<bool>,
    present: Vec<bool>,
    stats: HullStats,
    hint: u32,
}

/// Builds the requested hull of the lifted sites from scratch.
pub fn build_hull(sites: &[LiftedPoint], mode: HullMode) -> Result<HullTriangulation> {
    let n = sites.len();
    if n < 3 {
        return Err(Error::DegenerateSites(format!(
            "{n} sites, a hull needs at least 3"
        )));
    }
    if n >= NONE as usize {
        return Err(Error::InvalidInput("too many sites".into()));
    }
    let mut seen = HashSet::with_capacity(n);
    for s in sites {
        if !seen.insert(s.site_index) {
            return Err(Error::InvalidInput(format!(
                "duplicate site index {}",
                s.site_index
            )));
        }
        if !s.p.is_finite() || !s.height.is_finite() {
            return Err(Error::InvalidInput(format!(
                "site {} is not finite",
                s.site_index
            )));
        }
    }
    let points: Vec<Point2> = sites.iter().map(|s| s.p).collect();
    if all_collinear(&points) {
        return Err(Error::DegenerateSites("all sites are collinear".into()));
    }
    let mut hull = HullTriangulation::blank(
        mode,
        sites.iter().map(|s| s.site_index).collect(),
        points,
        sites.iter().map(|s| s.height).collect(),
    );
    hull.triangulate()?;
    Ok(hull)
}

/// Moves `hull` to new heights by local edge flips.
///
/// Edges whose flip would fold the triangulation are skipped and re-queued
/// once; if any remain non-regular, or a previously absent site now belongs
/// on the hull, the hull is rebuilt from scratch. A site that was present in
/// `hull` and is absent afterwards yields [`Error::EmptyCellDetected`].
pub fn flip_update(hull: &HullTriangulation, new_heights: &[f64]) -> Result<HullTriangulation> {
    let n = hull.points.len();
    if new_heights.len() != n {
        return Err(Error::InvalidInput(format!(
            "expected {n} heights, got {}",
            new_heights.len()
        )));
    }
    if new_heights.iter().any(|h| !h.is_finite()) {
        return Err(Error::InvalidInput("non-finite height".into()));
    }
    let mut next = hull.clone();
    next.heights = new_heights.to_vec();
    next.z = lift_z(hull.mode, new_heights);
    next.stats = HullStats::default();

    let flip_cap = 64 * n + 1024;
    let mut needs_rebuild = false;
    match next.lawson(next.all_edges(), flip_cap) {
        None => needs_rebuild = true,
        Some(stuck) if !stuck.is_empty() => {
            if next.lawson(stuck, flip_cap).is_none() || next.any_non_regular() {
                needs_rebuild = true;
            }
        }
        Some(_) => {}
    }
    if !needs_rebuild {
        needs_rebuild = (0..n).any(|v| !next.present[v] && next.belongs_on_hull(v as u32));
    }
    if needs_rebuild {
        let flips = next.stats.flips;
        next = HullTriangulation::blank(
            hull.mode,
            hull.site_ids.clone(),
            hull.points.clone(),
            new_heights.to_vec(),
        );
        next.triangulate()?;
        next.stats.flips += flips;
        next.stats.rebuilt = true;
    }
    if let Some(v) = (0..n).find(|&v| hull.present[v] && !next.present[v]) {
        return Err(Error::EmptyCellDetected {
            site: hull.site_ids[v],
        });
    }
    Ok(next)
}

/// Planar projection of the envelope vertex dual to `face`: the point where
/// `<p_i, x> + h_i` agree for the three sites.
pub fn dual_vertex(face: [usize; 3], sites: &[Point2], heights: &[f64]) -> Result<Point2> {
    let [i, j, k] = face;
    let (pi, pj, pk) = (sites[i], sites[j], sites[k]);
    let r1 = pi - pj;
    let r2 = pi - pk;
    let b1 = heights[j] - heights[i];
    let b2 = heights[k] - heights[i];
    let det = r1.cross(r2);
    if det.abs() <= 1e-12 * r1.norm() * r2.norm() || !det.is_finite() {
        return Err(Error::NearDegenerateFace(i, j, k));
    }
    Ok(Point2::new(
        (b1 * r2.y - b2 * r1.y) / det,
        (r1.x * b2 - r2.x * b1) / det,
    ))
}

fn all_collinear(points: &[Point2]) -> bool {
    let a = points[0];
    let Some(&b) = points.iter().find(|&&p| p != a) else {
        return true;
    };
    points
        .iter()
        .all(|&c| orient2d(a, b, c) == Orientation::Collinear)
}

fn lift_z(mode: HullMode, heights: &[f64]) -> Vec<f64> {
    match mode {
        HullMode::LowerHull => heights.iter().map(|h| -h).collect(),
        HullMode::UpperHull => heights.to_vec(),
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn unit_from(bits: u64) -> f64 {
    (bits >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

fn jittered(points: &[Point2]) -> Vec<Point2> {
    let eps = JITTER * BBox::from_points(points).diagonal();
    points
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let r1 = splitmix64(i as u64);
            let r2 = splitmix64(r1);
            Point2::new(p.x + eps * unit_from(r1), p.y + eps * unit_from(r2))
        })
        .collect()
}

fn hilbert_key(mut x: u32, mut y: u32) -> u64 {
    let n: u32 = 1 << 16;
    let mut d: u64 = 0;
    let mut s = n / 2;
    while s > 0 {
        let rx = u32::from(x & s > 0);
        let ry = u32::from(y & s > 0);
        d += u64::from(s) * u64::from(s) * u64::from((3 * rx) ^ ry);
        if ry == 0 {
            if rx == 1 {
                x = n - 1 - x;
                y = n - 1 - y;
            }
            std::mem::swap(&mut x, &mut y);
        }
        s /= 2;
    }
    d
}

impl HullTriangulation {
    fn blank(mode: HullMode, site_ids: Vec<usize>, points: Vec<Point2>, heights: Vec<f64>) -> Self {
        let n = points.len();
        Self {
            mode,
            site_ids,
            jit: jittered(&points),
            z: lift_z(mode, &heights),
            points,
            heights,
            tris: Vec::with_capacity(2 * n),
            nbrs: Vec::with_capacity(2 * n),
            alive: Vec::with_capacity(2 * n),
            present: vec![false; n],
            stats: HullStats::default(),
            hint: 0,
        }
    }

    pub fn mode(&self) -> HullMode {
        self.mode
    }

    pub fn stats(&self) -> HullStats {
        self.stats
    }

    /// Site coordinates, in input order.
    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn site_ids(&self) -> &[usize] {
        &self.site_ids
    }

    /// `present()[v]` is true when input site `v` is a hull vertex.
    pub fn present(&self) -> &[bool] {
        &self.present
    }

    /// Site indices of sites not on the hull; their cells are empty.
    pub fn absent_sites(&self) -> Vec<usize> {
        (0..self.points.len())
            .filter(|&v| !self.present[v])
            .map(|v| self.site_ids[v])
            .collect()
    }

    pub fn num_faces(&self) -> usize {
        self.alive.iter().filter(|&&a| a).count()
    }

    /// Faces as counterclockwise triples of site indices.
    pub fn faces(&self) -> Vec<[usize; 3]> {
        self.alive_tris()
            .map(|t| self.tris[t].map(|v| self.site_ids[v as usize]))
            .collect()
    }

    /// Faces rotated to start at their smallest index, then sorted. Two
    /// triangulations are equal iff their face sets are equal.
    pub fn face_set(&self) -> Vec<[usize; 3]> {
        let mut f: Vec<[usize; 3]> = self
            .faces()
            .into_iter()
            .map(|mut t| {
                let m = (0..3).min_by_key(|&k| t[k]).unwrap();
                t.rotate_left(m);
                t
            })
            .collect();
        f.sort_unstable();
        f
    }

    /// Hull edges as pairs of input positions `(u, v)` with `u < v`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e = Vec::with_capacity(3 * self.tris.len());
        for t in self.alive_tris() {
            let tri = self.tris[t];
            for k in 0..3 {
                let (a, b) = (tri[(k + 1) % 3], tri[(k + 2) % 3]);
                let u = self.nbrs[t][k];
                if u == NONE || (t as u32) < u {
                    e.push((a.min(b) as usize, a.max(b) as usize));
                }
            }
        }
        e.sort_unstable();
        e
    }

    /// Hull neighbours of each input position.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.points.len()];
        for (a, b) in self.edges() {
            adj[a].push(b);
            adj[b].push(a);
        }
        for l in &mut adj {
            l.sort_unstable();
            l.dedup();
        }
        adj
    }

    fn alive_tris(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.tris.len()).filter(|&t| self.alive[t])
    }

    fn lift(&self, v: u32) -> [f64; 3] {
        let p = self.jit[v as usize];
        [p.x, p.y, self.z[v as usize]]
    }

    fn j(&self, v: u32) -> Point2 {
        self.jit[v as usize]
    }

    /// True when `v` lies strictly below the plane of triangle `t`.
    fn below(&self, t: usize, v: u32) -> bool {
        let [a, b, c] = self.tris[t];
        orient3d(self.lift(a), self.lift(b), self.lift(c), self.lift(v)) > 0.0
    }

    fn add_tri(&mut self, v: [u32; 3]) -> usize {
        self.tris.push(v);
        self.nbrs.push([NONE; 3]);
        self.alive.push(true);
        self.tris.len() - 1
    }

    fn glue(&mut self, x: usize, y: u32) {
        if y == NONE {
            return;
        }
        let y = y as usize;
        let (tx, ty) = (self.tris[x], self.tris[y]);
        for k in 0..3 {
            let (a, b) = (tx[(k + 1) % 3], tx[(k + 2) % 3]);
            for m in 0..3 {
                if ty[(m + 1) % 3] == b && ty[(m + 2) % 3] == a {
                    self.nbrs[x][k] = y as u32;
                    self.nbrs[y][m] = x as u32;
                    return;
                }
            }
        }
    }

    fn vertex_slot(&self, t: usize, v: u32) -> Option<usize> {
        self.tris[t].iter().position(|&w| w == v)
    }

    /// Index in `u` of the vertex opposite the edge shared with `t`.
    fn opposite_slot(&self, u: usize, t: usize) -> usize {
        self.nbrs[u].iter().position(|&w| w == t as u32).unwrap()
    }

    fn triangulate(&mut self) -> Result<()> {
        let n = self.points.len();
        let mut order: Vec<u32> = (0..n as u32).collect();
        order.sort_by(|&a, &b| self.j(a).lex_cmp(&self.j(b)));
        let hull = self.convex_hull(&order);
        if hull.len() < 3 {
            return Err(Error::DegenerateSites("all sites are collinear".into()));
        }
        let m = hull.len();
        let first = self.tris.len();
        for k in 1..m - 1 {
            self.add_tri([hull[0], hull[k], hull[k + 1]]);
        }
        for t in first..self.tris.len() - 1 {
            self.glue(t, (t + 1) as u32);
        }
        for &v in &hull {
            self.present[v as usize] = true;
        }
        // hull vertices are in convex position, so plain Lawson flipping
        // reaches the regular triangulation
        let stack = self.all_edges();
        self.lawson(stack, usize::MAX);

        let mut on_hull = vec![false; n];
        for &v in &hull {
            on_hull[v as usize] = true;
        }
        let bb = BBox::from_points(&self.jit);
        let span = (bb.max.x - bb.min.x).max(bb.max.y - bb.min.y).max(f64::MIN_POSITIVE);
        let scale = f64::from((1u32 << 16) - 1) / span;
        let mut interior: Vec<(u64, u32)> = (0..n as u32)
            .filter(|&v| !on_hull[v as usize])
            .map(|v| {
                let p = self.j(v);
                let x = ((p.x - bb.min.x) * scale) as u32;
                let y = ((p.y - bb.min.y) * scale) as u32;
                (hilbert_key(x, y), v)
            })
            .collect();
        interior.sort_unstable();
        for (_, v) in interior {
            self.insert(v);
        }
        self.compact();
        Ok(())
    }

    /// Strict convex hull (Andrew's monotone chain), counterclockwise.
    fn convex_hull(&self, sorted: &[u32]) -> Vec<u32> {
        let mut lower: Vec<u32> = Vec::new();
        for &v in sorted {
            while lower.len() >= 2
                && orient2d(
                    self.j(lower[lower.len() - 2]),
                    self.j(lower[lower.len() - 1]),
                    self.j(v),
                ) != Orientation::CounterClockwise
            {
                lower.pop();
            }
            lower.push(v);
        }
        let mut upper: Vec<u32> = Vec::new();
        for &v in sorted.iter().rev() {
            while upper.len() >= 2
                && orient2d(
                    self.j(upper[upper.len() - 2]),
                    self.j(upper[upper.len() - 1]),
                    self.j(v),
                ) != Orientation::CounterClockwise
            {
                upper.pop();
            }
            upper.push(v);
        }
        lower.pop();
        upper.pop();
        lower.extend(upper);
        lower
    }

    fn all_edges(&self) -> Vec<(u32, u32)> {
        let mut s = Vec::with_capacity(3 * self.tris.len());
        for t in self.alive_tris() {
            for k in 0..3 {
                let u = self.nbrs[t][k];
                if u != NONE && (t as u32) < u {
                    s.push((t as u32, self.tris[t][k]));
                }
            }
        }
        s
    }

    /// The neighbour across the edge of `t` opposite `p`, when that edge is
    /// not locally regular: `(k, u, d)` with `d` the far vertex of `u`.
    fn non_regular(&self, t: usize, p: u32) -> Option<(usize, usize, u32)> {
        let k = self.vertex_slot(t, p)?;
        let u = self.nbrs[t][k];
        if u == NONE {
            return None;
        }
        let u = u as usize;
        let d = self.tris[u][self.opposite_slot(u, t)];
        self.below(t, d).then_some((k, u, d))
    }

    fn any_non_regular(&self) -> bool {
        self.all_edges()
            .into_iter()
            .any(|(t, p)| self.non_regular(t as usize, p).is_some())
    }

    /// Flips non-regular convex edges until none remain on the stack. Returns
    /// the edges skipped because their quad is not convex, or `None` when the
    /// flip budget ran out.
    fn lawson(&mut self, mut stack: Vec<(u32, u32)>, cap: usize) -> Option<Vec<(u32, u32)>> {
        let mut stuck = Vec::new();
        let mut budget = cap;
        while let Some((t, p)) = stack.pop() {
            let t = t as usize;
            if !self.alive[t] {
                continue;
            }
            let Some((k, u, d)) = self.non_regular(t, p) else {
                continue;
            };
            let a = self.tris[t][(k + 1) % 3];
            let b = self.tris[t][(k + 2) % 3];
            let convex = orient2d(self.j(p), self.j(d), self.j(a)) == Orientation::Clockwise
                && orient2d(self.j(p), self.j(d), self.j(b)) == Orientation::CounterClockwise;
            if !convex {
                stuck.push((t as u32, p));
                continue;
            }
            if budget == 0 {
                return None;
            }
            budget -= 1;
            let (t1, t2) = self.flip22(t, k, u);
            for tt in [t1, t2] {
                for v in self.tris[tt] {
                    stack.push((tt as u32, v));
                }
            }
        }
        Some(stuck)
    }

    /// Flips the edge of `t` opposite slot `k`; `u` is the triangle across.
    fn flip22(&mut self, t: usize, k: usize, u: usize) -> (usize, usize) {
        let [p, a, b] = [
            self.tris[t][k],
            self.tris[t][(k + 1) % 3],
            self.tris[t][(k + 2) % 3],
        ];
        let j = self.opposite_slot(u, t);
        let d = self.tris[u][j];
        let t_bp = self.nbrs[t][(k + 1) % 3];
        let t_pa = self.nbrs[t][(k + 2) % 3];
        let u_ad = self.nbrs[u][(j + 1) % 3];
        let u_db = self.nbrs[u][(j + 2) % 3];
        self.tris[t] = [p, a, d];
        self.tris[u] = [p, d, b];
        self.nbrs[t] = [NONE; 3];
        self.nbrs[u] = [NONE; 3];
        self.glue(t, t_pa);
        self.glue(t, u_ad);
        self.glue(u, u_db);
        self.glue(u, t_bp);
        self.glue(t, u as u32);
        self.stats.flips += 1;
        (t, u)
    }

    /// Whether absent vertex `v` lies strictly below the current surface.
    fn belongs_on_hull(&mut self, v: u32) -> bool {
        let (t, loc) = self.locate(self.j(v));
        loc != Loc::OnVertex && self.below(t, v)
    }

    fn locate(&mut self, q: Point2) -> (usize, Loc) {
        let mut t = self.hint as usize;
        if t >= self.tris.len() || !self.alive[t] {
            t = self.alive_tris().next().expect("triangulation has a face");
        }
        let cap = 3 * self.tris.len() + 64;
        let mut rot = 0usize;
        for _ in 0..cap {
            let tri = self.tris[t];
            let mut next = None;
            for e in 0..3 {
                let k = (e + rot) % 3;
                let a = self.j(tri[(k + 1) % 3]);
                let b = self.j(tri[(k + 2) % 3]);
                if orient2d(a, b, q) == Orientation::Clockwise {
                    next = Some(self.nbrs[t][k]);
                    break;
                }
            }
            rot += 1;
            match next {
                None => {
                    self.hint = t as u32;
                    return (t, self.classify(t, q));
                }
                Some(NONE) => break,
                Some(u) => t = u as usize,
            }
        }
        // the walk can cycle in non-Delaunay triangulations
        let t = self
            .alive_tris()
            .find(|&t| {
                let tri = self.tris[t];
                (0..3).all(|k| {
                    orient2d(self.j(tri[(k + 1) % 3]), self.j(tri[(k + 2) % 3]), q)
                        != Orientation::Clockwise
                })
            })
            .expect("point inside the triangulated hull");
        self.hint = t as u32;
        (t, self.classify(t, q))
    }

    fn classify(&self, t: usize, q: Point2) -> Loc {
        let tri = self.tris[t];
        let zeros: Vec<usize> = (0..3)
            .filter(|&k| {
                orient2d(self.j(tri[(k + 1) % 3]), self.j(tri[(k + 2) % 3]), q)
                    == Orientation::Collinear
            })
            .collect();
        match zeros.len() {
            0 => Loc::Inside,
            1 => Loc::OnEdge(zeros[0]),
            _ => Loc::OnVertex,
        }
    }

    fn insert(&mut self, p: u32) {
        let (t, loc) = self.locate(self.j(p));
        if loc == Loc::OnVertex || !self.below(t, p) {
            return;
        }
        self.present[p as usize] = true;
        let created = match loc {
            Loc::Inside => self.split13(t, p),
            Loc::OnEdge(k) => self.split_edge(t, k, p),
            Loc::OnVertex => unreachable!(),
        };
        self.legalize(created.into_iter().map(|t| (t as u32, p)).collect());
    }

    fn split13(&mut self, t: usize, p: u32) -> Vec<usize> {
        let [a, b, c] = self.tris[t];
        let [na, nb, nc] = self.nbrs[t];
        self.tris[t] = [p, b, c];
        self.nbrs[t] = [NONE; 3];
        let t1 = self.add_tri([p, c, a]);
        let t2 = self.add_tri([p, a, b]);
        self.glue(t, na);
        self.glue(t1, nb);
        self.glue(t2, nc);
        self.glue(t, t1 as u32);
        self.glue(t1, t2 as u32);
        self.glue(t2, t as u32);
        vec![t, t1, t2]
    }

    fn split_edge(&mut self, t: usize, k: usize, p: u32) -> Vec<usize> {
        let [a, b, c] = [
            self.tris[t][k],
            self.tris[t][(k + 1) % 3],
            self.tris[t][(k + 2) % 3],
        ];
        let t_ca = self.nbrs[t][(k + 1) % 3];
        let t_ab = self.nbrs[t][(k + 2) % 3];
        let u = self.nbrs[t][k];
        self.tris[t] = [a, b, p];
        self.nbrs[t] = [NONE; 3];
        let t2 = self.add_tri([a, p, c]);
        self.glue(t, t_ab);
        self.glue(t2, t_ca);
        self.glue(t, t2 as u32);
        let mut out = vec![t, t2];
        if u != NONE {
            let u = u as usize;
            let j = self.opposite_slot(u, t);
            let d = self.tris[u][j];
            let u_bd = self.nbrs[u][(j + 1) % 3];
            let u_dc = self.nbrs[u][(j + 2) % 3];
            self.tris[u] = [d, c, p];
            self.nbrs[u] = [NONE; 3];
            let u2 = self.add_tri([d, p, b]);
            self.glue(u, u_dc);
            self.glue(u2, u_bd);
            self.glue(u, u2 as u32);
            for x in [t, t2] {
                self.glue(x, u as u32);
                self.glue(x, u2 as u32);
            }
            out.extend([u, u2]);
        }
        out
    }

    /// Restores regularity around a freshly inserted vertex `p`. Each stack
    /// entry names a triangle incident to `p`; its link edge is tested.
    fn legalize(&mut self, mut stack: Vec<(u32, u32)>) {
        while let Some((t, p)) = stack.pop() {
            let t = t as usize;
            if !self.alive[t] {
                continue;
            }
            let Some((k, u, d)) = self.non_regular(t, p) else {
                continue;
            };
            let a = self.tris[t][(k + 1) % 3];
            let b = self.tris[t][(k + 2) % 3];
            let oa = orient2d(self.j(p), self.j(d), self.j(a));
            let ob = orient2d(self.j(p), self.j(d), self.j(b));
            if oa == Orientation::Clockwise && ob == Orientation::CounterClockwise {
                let (t1, t2) = self.flip22(t, k, u);
                stack.push((t1 as u32, p));
                stack.push((t2 as u32, p));
            } else if oa == Orientation::CounterClockwise {
                if let Some(nt) = self.flip31(t, u, p, a, b, d) {
                    stack.push((nt as u32, p));
                }
            } else if ob == Orientation::Clockwise {
                if let Some(nt) = self.flip31(t, u, p, b, a, d) {
                    stack.push((nt as u32, p));
                }
            }
        }
    }

    /// Removes the reflex vertex `r` of the quad `p, r, d, s` when it has
    /// degree three, replacing its three triangles by one.
    fn flip31(&mut self, t: usize, u: usize, p: u32, r: u32, s: u32, d: u32) -> Option<usize> {
        let w1 = self.nbrs[t][self.vertex_slot(t, s)?];
        let w2 = self.nbrs[u][self.vertex_slot(u, s)?];
        if w1 == NONE || w1 != w2 {
            return None;
        }
        let w = w1 as usize;
        let tw = self.tris[w];
        if !(tw.contains(&p) && tw.contains(&r) && tw.contains(&d)) {
            return None;
        }
        let outer = [
            self.nbrs[t][self.vertex_slot(t, r)?],
            self.nbrs[u][self.vertex_slot(u, r)?],
            self.nbrs[w][self.vertex_slot(w, r)?],
        ];
        let tri = if orient2d(self.j(p), self.j(d), self.j(s)) == Orientation::CounterClockwise {
            [p, d, s]
        } else {
            [p, s, d]
        };
        self.tris[t] = tri;
        self.nbrs[t] = [NONE; 3];
        self.alive[u] = false;
        self.alive[w] = false;
        for o in outer {
            self.glue(t, o);
        }
        self.present[r as usize] = false;
        self.stats.removals += 1;
        Some(t)
    }

    fn compact(&mut self) {
        let mut remap = vec![NONE; self.tris.len()];
        let mut next = 0u32;
        for t in 0..self.tris.len() {
            if self.alive[t] {
                remap[t] = next;
                next += 1;
            }
        }
        let mut tris = Vec::with_capacity(next as usize);
        let mut nbrs = Vec::with_capacity(next as usize);
        for t in 0..self.tris.len() {
            if self.alive[t] {
                tris.push(self.tris[t]);
                nbrs.push(self.nbrs[t].map(|u| if u == NONE { NONE } else { remap[u as usize] }));
            }
        }
        self.tris = tris;
        self.nbrs = nbrs;
        self.alive = vec![true; next as usize];
        self.hint = 0;
    }

    /// Checks the half-edge structure and local regularity. Test helper.
    #[doc(hidden)]
    pub fn validate(&self) -> std::result::Result<(), String> {
        for t in self.alive_tris() {
            let tri = self.tris[t];
            if orient2d(self.j(tri[0]), self.j(tri[1]), self.j(tri[2])) != Orientation::CounterClockwise {
                return Err(format!("triangle {t} not ccw"));
            }
            for k in 0..3 {
                let u = self.nbrs[t][k];
                if u == NONE {
                    continue;
                }
                let u = u as usize;
                if !self.alive[u] || !self.nbrs[u].contains(&(t as u32)) {
                    return Err(format!("asymmetric adjacency {t}-{u}"));
                }
                if self.below(t, self.tris[u][self.opposite_slot(u, t)]) {
                    return Err(format!("edge {t}-{u} not regular"));
                }
            }
            for v in tri {
                if !self.present[v as usize] {
                    return Err(format!("vertex {v} used but absent"));
                }
            }
        }
        Ok(())
    }
}
