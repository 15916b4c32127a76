//! Brute-force reference: discretize the source density and solve the
//! resulting transportation problem exactly.

use serde::{Deserialize, Serialize};

use crate::density::DensityMesh;
use crate::error::{Error, Result};
use crate::geometry::{intersect_convex, ConvexPolygon, Point2};
use crate::measure::DiscreteMeasure;

pub const MAX_ATOMS: usize = 5000;
pub const MAX_TARGETS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceAtom {
    pub centroid: Point2,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomizedSource {
    pub atoms: Vec<SourceAtom>,
}

impl AtomizedSource {
    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }
}

/// One atom per nonempty piece of (grid cell ∩ triangle), placed at the
/// piece's centroid and carrying its exact mass.
pub fn atomize(mesh: &DensityMesh, grid_n: usize) -> Result<AtomizedSource> {
    if grid_n == 0 {
        return Err(Error::InvalidInput("grid size must be positive".into()));
    }
    let bb = mesh.domain().bbox();
    let (w, h) = (bb.max.x - bb.min.x, bb.max.y - bb.min.y);
    let cell = |k: usize, l: usize| {
        let fx = |k: usize| if k == grid_n { bb.max.x } else { bb.min.x + w * k as f64 / grid_n as f64 };
        let fy = |l: usize| if l == grid_n { bb.max.y } else { bb.min.y + h * l as f64 / grid_n as f64 };
        ConvexPolygon::rectangle(Point2::new(fx(k), fy(l)), Point2::new(fx(k + 1), fy(l + 1)))
    };
    let index = |v: f64, lo: f64, span: f64| -> usize {
        (((v - lo) / span * grid_n as f64).floor().max(0.0) as usize).min(grid_n - 1)
    };
    let mut atoms = Vec::new();
    for t in 0..mesh.len() {
        let f = mesh.density()[t];
        if f == 0.0 {
            continue;
        }
        let tri = mesh.triangle(t);
        let tb = tri.bbox();
        for l in index(tb.min.y, bb.min.y, h)..=index(tb.max.y, bb.min.y, h) {
            for k in index(tb.min.x, bb.min.x, w)..=index(tb.max.x, bb.min.x, w) {
                let piece = intersect_convex(tri, &cell(k, l));
                let area = piece.area();
                if area > 0.0 {
                    atoms.push(SourceAtom {
                        centroid: piece.centroid(),
                        mass: f * area,
                    });
                }
            }
        }
    }
    Ok(AtomizedSource { atoms })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Objective {
    Min,
    Max,
}

/// A nonzero entry of a transport plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub atom: usize,
    pub target: usize,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    pub cost: f64,
    pub entries: Vec<PlanEntry>,
    pub pivots: usize,
}

/// `½ |x - y|²`.
pub fn quadratic(x: Point2, y: Point2) -> f64 {
    0.5 * (x - y).norm_squared()
}

/// Exact optimum of the balanced transportation problem with cost
/// `½ |x - y|²`.
pub fn lp_transport(source: &AtomizedSource, target: &DiscreteMeasure, objective: Objective) -> Result<TransportPlan> {
    let (m, n) = (source.len(), target.len());
    if m == 0 || n == 0 {
        return Err(Error::Infeasible("empty source or target".into()));
    }
    if m > MAX_ATOMS || n > MAX_TARGETS {
        return Err(Error::InvalidInput(format!(
            "oracle instance {m} x {n} exceeds the {MAX_ATOMS} x {MAX_TARGETS} cap"
        )));
    }
    let supply: Vec<f64> = source.atoms.iter().map(|a| a.mass).collect();
    let (s, d) = (supply.iter().sum::<f64>(), target.total());
    if (s - d).abs() > 1e-9 * s.max(d) {
        return Err(Error::Infeasible(format!("source mass {s} != target mass {d}")));
    }
    // rescale demands so both sides match to the last bit we can manage
    let demand: Vec<f64> = target.weights().iter().map(|w| w * s / d).collect();
    let cost: Vec<f64> = source
        .atoms
        .iter()
        .flat_map(|a| target.points().iter().map(move |&y| quadratic(a.centroid, y)))
        .collect();
    let solve_cost = match objective {
        Objective::Min => cost.clone(),
        Objective::Max => {
            let top = cost.iter().fold(0.0f64, |a, &b| a.max(b));
            cost.iter().map(|c| top - c).collect()
        }
    };
    let mut ns = NetworkSimplex::new(&supply, &demand, solve_cost);
    ns.run()?;
    let entries: Vec<PlanEntry> = ns
        .flows()
        .into_iter()
        .map(|(i, j, x)| PlanEntry {
            atom: i,
            target: j,
            mass: x,
        })
        .collect();
    let total = entries.iter().map(|e| e.mass * cost[e.atom * n + e.target]).sum();
    Ok(TransportPlan {
        cost: total,
        entries,
        pivots: ns.pivots,
    })
}

/// Primal network simplex on the bipartite graph rows → columns with an
/// artificial root. The initial tree routes every row through the root
/// with positive flow, so it is strongly feasible; choosing the last
/// blocking arc along the cycle keeps it so and rules out cycling.
struct NetworkSimplex {
    m: usize,
    n: usize,
    cost: Vec<f64>,
    // per non-root node: tree arc to its parent
    parent: Vec<usize>,
    up: Vec<bool>,
    flow: Vec<f64>,
    arc_cost: Vec<f64>,
    depth: Vec<usize>,
    potential: Vec<f64>,
    children: Vec<Vec<usize>>,
    pivots: usize,
}

impl NetworkSimplex {
    fn new(supply: &[f64], demand: &[f64], cost: Vec<f64>) -> Self {
        let (m, n) = (supply.len(), demand.len());
        let root = m + n;
        let big = 1.0 + cost.iter().fold(0.0f64, |a, &b| a.max(b));
        let nodes = root + 1;
        let mut s = Self {
            m,
            n,
            cost,
            parent: vec![root; nodes],
            up: vec![false; nodes],
            flow: vec![0.0; nodes],
            arc_cost: vec![big; nodes],
            depth: vec![1; nodes],
            potential: vec![0.0; nodes],
            children: vec![Vec::new(); nodes],
            pivots: 0,
        };
        s.depth[root] = 0;
        s.children[root] = (0..root).collect();
        for i in 0..m {
            s.up[i] = true;
            s.flow[i] = supply[i];
            s.potential[i] = -big;
        }
        for j in 0..n {
            s.flow[m + j] = demand[j];
            s.potential[m + j] = big;
        }
        s
    }

    fn root(&self) -> usize {
        self.m + self.n
    }

    fn reduced(&self, i: usize, j: usize) -> f64 {
        self.cost[i * self.n + j] + self.potential[i] - self.potential[self.m + j]
    }

    fn run(&mut self) -> Result<()> {
        let arcs = self.m * self.n;
        let block = ((arcs as f64).sqrt().ceil() as usize).max(self.n);
        let scale = self.arc_cost[0];
        let tol = 1e-12 * scale;
        let limit = 50 * arcs + 1000;
        let mut next = 0usize;
        loop {
            let mut best = (-tol, usize::MAX);
            let mut seen = 0;
            let mut scanned_block = 0;
            while seen < arcs {
                let k = next;
                next = if next + 1 == arcs { 0 } else { next + 1 };
                seen += 1;
                scanned_block += 1;
                let r = self.reduced(k / self.n, k % self.n);
                if r < best.0 {
                    best = (r, k);
                }
                if scanned_block == block {
                    if best.1 != usize::MAX {
                        break;
                    }
                    scanned_block = 0;
                }
            }
            if best.1 == usize::MAX {
                return Ok(());
            }
            self.pivot(best.1 / self.n, best.1 % self.n);
            self.pivots += 1;
            if self.pivots > limit {
                return Err(Error::Infeasible(format!("no optimum after {limit} pivots")));
            }
        }
    }

    /// Enters the arc row `i` → column `j`.
    fn pivot(&mut self, i: usize, j: usize) {
        let jn = self.m + j;
        // climb to the apex, remembering both paths (child nodes of tree arcs)
        let (mut a, mut b) = (i, jn);
        let (mut left, mut right) = (Vec::new(), Vec::new());
        while a != b {
            if self.depth[a] >= self.depth[b] {
                left.push(a);
                a = self.parent[a];
            } else {
                right.push(b);
                b = self.parent[b];
            }
        }
        // cycle order: apex → i (downwards), i → j, j → apex (upwards)
        let mut theta = f64::INFINITY;
        let mut leaving = usize::MAX;
        let mut leaving_on_left = false;
        for &v in left.iter().rev() {
            if self.up[v] && self.flow[v] <= theta {
                theta = self.flow[v];
                leaving = v;
                leaving_on_left = true;
            }
        }
        for &v in &right {
            if !self.up[v] && self.flow[v] <= theta {
                theta = self.flow[v];
                leaving = v;
                leaving_on_left = false;
            }
        }
        debug_assert!(leaving != usize::MAX);
        for &v in &left {
            self.flow[v] += if self.up[v] { -theta } else { theta };
        }
        for &v in &right {
            self.flow[v] += if self.up[v] { theta } else { -theta };
        }

        // re-hang the subtree cut off by the leaving arc from the entering arc
        let (q, other, q_up) = if leaving_on_left { (i, jn, true) } else { (jn, i, false) };
        let mut path = vec![q];
        while *path.last().unwrap() != leaving {
            let v = *path.last().unwrap();
            path.push(self.parent[v]);
        }
        let old_parent = self.parent[leaving];
        remove_child(&mut self.children[old_parent], leaving);
        for t in (1..path.len()).rev() {
            let (child, par) = (path[t - 1], path[t]);
            remove_child(&mut self.children[par], child);
            self.children[child].push(par);
            self.parent[par] = child;
            self.up[par] = !self.up[child];
            self.flow[par] = self.flow[child];
            self.arc_cost[par] = self.arc_cost[child];
        }
        self.parent[q] = other;
        self.up[q] = q_up;
        self.flow[q] = theta;
        self.arc_cost[q] = self.cost[i * self.n + j];
        self.children[other].push(q);

        let mut stack = vec![q];
        while let Some(v) = stack.pop() {
            let p = self.parent[v];
            self.depth[v] = self.depth[p] + 1;
            // tree arcs have zero reduced cost: y_head = y_tail + c
            self.potential[v] = if self.up[v] {
                self.potential[p] - self.arc_cost[v]
            } else {
                self.potential[p] + self.arc_cost[v]
            };
            stack.extend_from_slice(&self.children[v]);
        }
    }

    fn flows(&self) -> Vec<(usize, usize, f64)> {
        let root = self.root();
        let mut out: Vec<(usize, usize, f64)> = (0..root)
            .filter(|&v| self.parent[v] != root && self.flow[v] > 0.0)
            .map(|v| {
                let (a, b) = (v, self.parent[v]);
                let (row, col) = if a < self.m { (a, b) } else { (b, a) };
                (row, col - self.m, self.flow[v])
            })
            .collect();
        out.sort_by_key(|&(i, j, _)| (i, j));
        out
    }
}

fn remove_child(list: &mut Vec<usize>, v: usize) {
    let pos = list.iter().position(|&c| c == v).expect("tree child");
    list.swap_remove(pos);
}
