//! Damped Newton iteration on the height vector.
//!
//! With `pi_i(x) = <q_i, x - a> + h_i`, `q_i = p_i - a`, the energy
//!
//! ```text
//! E(h) = ∫_Ω env_i pi_i(x) f(x) dx - Σ_i h_i ν_i
//! ```
//!
//! (upper envelope for OT, lower envelope for WT) has gradient `w(h) - ν`.
//! It is convex for OT and concave for WT, so OT minimizes and WT maximizes.

use serde::{Deserialize, Serialize};

use crate::density::{build_overlay, mu_cell_volumes, mu_edge_length, quadratic_cost, DensityMesh, Overlay};
use crate::diagram::{project_all_pairs, project_diagram, DiagramMode, PowerDiagram};
use crate::error::{Error, Result};
use crate::geometry::{ConvexPolygon, Orientation, Point2};
use crate::hull::{build_hull, flip_update, HullTriangulation, LiftedPoint};
use crate::linalg::{solve_pinned, SolveRoute, SymmetricMatrix};
use crate::measure::{normalize_into_domain, DiscreteMeasure, Transform};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Ot,
    Wt,
}

impl Mode {
    pub fn diagram_mode(self) -> DiagramMode {
        match self {
            Mode::Ot => DiagramMode::Nearest,
            Mode::Wt => DiagramMode::Farthest,
        }
    }

    /// `+1` where the energy is convex (OT), `-1` where it is concave (WT).
    pub fn curvature_sign(self) -> f64 {
        match self {
            Mode::Ot => 1.0,
            Mode::Wt => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Ot => "ot",
            Mode::Wt => "wt",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ot" => Ok(Mode::Ot),
            "wt" => Ok(Mode::Wt),
            _ => Err(Error::InvalidInput(format!("unknown mode {s:?}, expected ot or wt"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub mode: Mode,
    /// Stop when `max_i |w_i - ν_i| <= epsilon`.
    pub epsilon: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
    /// Reuse the previous hull through edge flips after the first iteration.
    pub use_flips: bool,
    #[serde(skip, default = "default_route")]
    pub linear_solver: SolveRoute,
}

fn default_route() -> SolveRoute {
    SolveRoute::Auto
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Ot,
            epsilon: 1e-7,
            max_iterations: 100,
            max_halvings: 62,
            use_flips: true,
            linear_solver: SolveRoute::Auto,
        }
    }
}

impl SolverConfig {
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidInput("epsilon must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidInput("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// One entry per accepted state; entry 0 is the initial state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `‖w - ν‖∞` after the step.
    pub residual: f64,
    /// Step length `λ` used (0 for the initial state).
    pub step: f64,
    pub halvings: usize,
    pub flips: usize,
    pub energy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransportSolution {
    pub mode: Mode,
    /// Sites in normalized coordinates, after merging duplicates.
    pub sites: Vec<Point2>,
    pub weights: Vec<f64>,
    /// Zero-sum heights of the planes `<p_i - anchor, x - anchor> + h_i`.
    pub heights: Vec<f64>,
    pub anchor: Point2,
    pub cells: Vec<ConvexPolygon>,
    pub cell_masses: Vec<f64>,
    pub cost: f64,
    pub residual: f64,
    pub iterations: usize,
    pub trace: Vec<IterationRecord>,
    pub transform: Transform,
    /// For each input point, the index of the site it was merged into.
    pub site_of_input: Vec<usize>,
}

/// Heights `-|p|²/2` (OT) or `+|p|²/2` (WT), shifted to zero sum.
pub fn init_heights(sites: &[Point2], mode: Mode) -> Vec<f64> {
    let s = -mode.curvature_sign();
    let mut h: Vec<f64> = sites.iter().map(|p| s * p.norm_squared() / 2.0).collect();
    gauge(&mut h);
    h
}

fn gauge(h: &mut [f64]) {
    if h.is_empty() {
        return;
    }
    let mean = h.iter().sum::<f64>() / h.len() as f64;
    for v in h {
        *v -= mean;
    }
}

/// A fixed source, target sites and weights, and mode.
#[derive(Debug, Clone)]
pub struct Problem<'a> {
    pub mesh: &'a DensityMesh,
    pub sites: Vec<Point2>,
    pub weights: Vec<f64>,
    pub mode: Mode,
}

/// Everything computed from one height vector.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub heights: Vec<f64>,
    pub hull: Option<HullTriangulation>,
    pub diagram: PowerDiagram,
    pub overlay: Overlay,
    pub masses: Vec<f64>,
    pub energy: f64,
}

impl Evaluation {
    pub fn gradient(&self, weights: &[f64]) -> Vec<f64> {
        self.masses.iter().zip(weights).map(|(w, v)| w - v).collect()
    }

    pub fn residual(&self, weights: &[f64]) -> f64 {
        self.gradient(weights).iter().fold(0.0, |m, g| m.max(g.abs()))
    }

    /// First site with an empty cell or zero mass.
    pub fn empty_site(&self) -> Option<usize> {
        (0..self.masses.len()).find(|&i| self.diagram.cell(i).is_empty() || !(self.masses[i] > 0.0))
    }
}

impl<'a> Problem<'a> {
    pub fn new(mesh: &'a DensityMesh, sites: Vec<Point2>, weights: Vec<f64>, mode: Mode) -> Self {
        Self {
            mesh,
            sites,
            weights,
            mode,
        }
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    fn lifted(&self, h: &[f64]) -> Vec<LiftedPoint> {
        self.sites
            .iter()
            .zip(h)
            .enumerate()
            .map(|(i, (&p, &h))| LiftedPoint::new(i, p, h))
            .collect()
    }

    /// Evaluates at `h`. With `previous` the hull is moved by flips; a site
    /// that drops off the hull then surfaces as `EmptyCellDetected`.
    pub fn evaluate(&self, h: &[f64], previous: Option<&HullTriangulation>) -> Result<Evaluation> {
        let domain = self.mesh.domain();
        let (hull, diagram) = match previous {
            Some(prev) => {
                let hull = flip_update(prev, h)?;
                let d = project_diagram(&hull, domain);
                (Some(hull), d)
            }
            None => match build_hull(&self.lifted(h), self.mode.diagram_mode().hull_mode()) {
                Ok(hull) => {
                    let d = project_diagram(&hull, domain);
                    (Some(hull), d)
                }
                Err(Error::DegenerateSites(_)) => (
                    None,
                    project_all_pairs(&self.sites, h, domain, self.mode.diagram_mode()),
                ),
                Err(e) => return Err(e),
            },
        };
        let overlay = build_overlay(self.mesh, &diagram);
        let masses = mu_cell_volumes(&overlay, self.mesh, self.len());
        let energy = energy(&overlay, self.mesh, &diagram, h, &self.weights);
        Ok(Evaluation {
            heights: h.to_vec(),
            hull,
            diagram,
            overlay,
            masses,
            energy,
        })
    }

    /// Like [`Problem::evaluate`], but inadmissible states are an error.
    pub fn evaluate_admissible(&self, h: &[f64], previous: Option<&HullTriangulation>) -> Result<Evaluation> {
        let ev = self.evaluate(h, previous)?;
        match ev.empty_site() {
            Some(site) => Err(Error::InadmissibleState { site }),
            None => Ok(ev),
        }
    }
}

/// `E(h)` in closed form over the overlay atoms.
fn energy(overlay: &Overlay, mesh: &DensityMesh, diagram: &PowerDiagram, h: &[f64], nu: &[f64]) -> f64 {
    let a = diagram.domain().centroid();
    let sites = diagram.sites();
    let parts = par::map_slice(&overlay.atoms, |atom| {
        let area = atom.polygon.area();
        let c = atom.polygon.centroid();
        mesh.density()[atom.triangle] * area * ((sites[atom.site] - a).dot(c - a) + h[atom.site])
    });
    let lin: f64 = parts.into_iter().sum();
    lin - h.iter().zip(nu).map(|(h, v)| h * v).sum::<f64>()
}

/// Gradient `w - ν` and Hessian `∂w/∂h` of the energy.
///
/// Off-diagonal entries are `-μlen(i, j)` for OT and `+μlen(i, j)` for WT;
/// each diagonal entry is minus the sum of its row's off-diagonals.
pub fn assemble_system(
    diagram: &PowerDiagram,
    mesh: &DensityMesh,
    nu: &[f64],
    mode: Mode,
) -> Result<(Vec<f64>, SymmetricMatrix)> {
    let overlay = build_overlay(mesh, diagram);
    let w = mu_cell_volumes(&overlay, mesh, diagram.len());
    assemble_from_masses(diagram, mesh, &w, nu, mode)
}

fn assemble_from_masses(
    diagram: &PowerDiagram,
    mesh: &DensityMesh,
    w: &[f64],
    nu: &[f64],
    mode: Mode,
) -> Result<(Vec<f64>, SymmetricMatrix)> {
    if let Some(site) = (0..diagram.len()).find(|&i| diagram.cell(i).is_empty() || !(w[i] > 0.0)) {
        return Err(Error::InadmissibleState { site });
    }
    let n = diagram.len();
    let walls = diagram.walls();
    let lens = par::map_slice(walls, |wall| mu_edge_length(&wall.segment, wall.i, wall.j, diagram.sites(), mesh));
    let s = mode.curvature_sign();
    let mut hess = SymmetricMatrix::new(n);
    for (wall, len) in walls.iter().zip(lens) {
        let len = len?;
        if len == 0.0 {
            continue;
        }
        hess.add_off_diagonal(wall.i, wall.j, -s * len);
        hess.add_diagonal(wall.i, s * len);
        hess.add_diagonal(wall.j, s * len);
    }
    let g = w.iter().zip(nu).map(|(w, v)| w - v).collect();
    Ok((g, hess))
}

/// Solves `H d = g` on the zero-sum subspace.
pub fn newton_direction(gradient: &[f64], hessian: &SymmetricMatrix, mode: Mode) -> Result<Vec<f64>> {
    newton_direction_with(gradient, hessian, mode, SolveRoute::Auto)
}

pub fn newton_direction_with(
    gradient: &[f64],
    hessian: &SymmetricMatrix,
    mode: Mode,
    route: SolveRoute,
) -> Result<Vec<f64>> {
    let s = mode.curvature_sign();
    let rhs: Vec<f64> = gradient.iter().map(|g| s * g).collect();
    solve_pinned(&hessian.scaled(s), &rhs, route)
}

/// Result of [`damped_update`].
#[derive(Debug, Clone)]
pub struct Step {
    pub state: Evaluation,
    pub lambda: f64,
    pub halvings: usize,
}

/// Tries `h + λ d` starting from `λ = -1` and halving until the state is
/// admissible and the energy does not move the wrong way (up for OT, down
/// for WT).
pub fn damped_update(
    problem: &Problem,
    current: &Evaluation,
    d: &[f64],
    max_halvings: usize,
    reuse_hull: bool,
) -> Result<Step> {
    let s = problem.mode.curvature_sign();
    let tol = 1e-13 * (1.0 + current.energy.abs());
    let mut lambda = -1.0;
    for halvings in 0..=max_halvings {
        let mut h: Vec<f64> = current.heights.iter().zip(d).map(|(h, d)| h + lambda * d).collect();
        gauge(&mut h);
        let prev = if reuse_hull { current.hull.as_ref() } else { None };
        match problem.evaluate(&h, prev) {
            Ok(ev) if ev.empty_site().is_none() && s * (ev.energy - current.energy) <= tol => {
                return Ok(Step {
                    state: ev,
                    lambda,
                    halvings,
                });
            }
            Ok(_) | Err(Error::EmptyCellDetected { .. }) => {}
            Err(e) => return Err(e),
        }
        lambda *= 0.5;
    }
    Err(Error::StepExhausted {
        halvings: max_halvings,
    })
}

/// Solves the semi-discrete transport problem from `mesh` to `measure`.
pub fn solve(mesh: &DensityMesh, measure: &DiscreteMeasure, config: &SolverConfig) -> Result<TransportSolution> {
    solve_inner(mesh, measure, config, None)
}

/// As [`solve`], starting from caller-supplied heights (in the anchored
/// frame, one per merged site).
pub fn solve_from(
    mesh: &DensityMesh,
    measure: &DiscreteMeasure,
    config: &SolverConfig,
    initial: &[f64],
) -> Result<TransportSolution> {
    solve_inner(mesh, measure, config, Some(initial))
}

fn solve_inner(
    mesh: &DensityMesh,
    measure: &DiscreteMeasure,
    config: &SolverConfig,
    initial: Option<&[f64]>,
) -> Result<TransportSolution> {
    config.validate()?;
    let source_mass = mesh.total_mass();
    let target_mass = measure.total();
    if (source_mass - target_mass).abs() > 1e-12 * source_mass.max(target_mass) {
        return Err(Error::MassMismatch {
            source_mass,
            target_mass,
        });
    }
    let (merged, site_of_input) = measure.merge_duplicates();
    if merged.len() < measure.len() {
        log::warn!("merged {} duplicate target points", measure.len() - merged.len());
    }
    let domain = mesh.domain();
    let (mut sites, transform) = normalize_into_domain(merged.points(), domain)?;
    nudge_boundary_sites(&mut sites, domain);
    let problem = Problem::new(mesh, sites, merged.weights().to_vec(), config.mode);
    let anchor = domain.centroid();

    let mut state = match initial {
        Some(h0) => {
            if h0.len() != problem.len() {
                return Err(Error::InvalidInput(format!(
                    "{} initial heights for {} sites",
                    h0.len(),
                    problem.len()
                )));
            }
            let mut h = h0.to_vec();
            gauge(&mut h);
            problem.evaluate_admissible(&h, None)?
        }
        None => initial_state(&problem)?,
    };
    let mut residual = state.residual(&problem.weights);
    let mut trace = vec![IterationRecord {
        iteration: 0,
        residual,
        step: 0.0,
        halvings: 0,
        flips: 0,
        energy: state.energy,
    }];
    log::debug!("initial residual {residual:e}");
    let mut best: Option<(f64, Evaluation, usize)> = None;
    let mut iterations = 0;
    while residual > config.epsilon {
        if iterations == config.max_iterations {
            let (r, ev, it) = best.take().unwrap_or((residual, state, iterations));
            let best = finish(&problem, ev, r, it, trace, transform, site_of_input, anchor);
            return Err(Error::MaxIterationsExceeded {
                iterations,
                residual,
                best: Box::new(best),
            });
        }
        if best.as_ref().is_none_or(|b| residual < b.0) {
            best = Some((residual, state.clone(), iterations));
        }
        iterations += 1;
        let (g, hess) = assemble_from_masses(&state.diagram, mesh, &state.masses, &problem.weights, config.mode)?;
        let d = newton_direction_with(&g, &hess, config.mode, config.linear_solver)?;
        let reuse = config.use_flips && iterations > 1;
        let step = damped_update(&problem, &state, &d, config.max_halvings, reuse)?;
        state = step.state;
        residual = state.residual(&problem.weights);
        let flips = state.hull.as_ref().map_or(0, |h| h.stats().flips);
        log::debug!(
            "iteration {iterations}: residual {residual:e}, step {}, halvings {}, flips {flips}",
            step.lambda,
            step.halvings
        );
        trace.push(IterationRecord {
            iteration: iterations,
            residual,
            step: step.lambda,
            halvings: step.halvings,
            flips,
            energy: state.energy,
        });
    }
    Ok(finish(&problem, state, residual, iterations, trace, transform, site_of_input, anchor))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    problem: &Problem,
    state: Evaluation,
    residual: f64,
    iterations: usize,
    trace: Vec<IterationRecord>,
    transform: Transform,
    site_of_input: Vec<usize>,
    anchor: Point2,
) -> TransportSolution {
    let cost = quadratic_cost(&state.overlay, problem.mesh, &problem.sites);
    TransportSolution {
        mode: problem.mode,
        sites: problem.sites.clone(),
        weights: problem.weights.clone(),
        heights: state.heights,
        anchor,
        cells: state.diagram.cells().to_vec(),
        cell_masses: state.masses,
        cost,
        residual,
        iterations,
        trace,
        transform,
        site_of_input,
    }
}

/// Heights `∓|p - a|² / (2β)` for `β = 1, 2, 4, ...` until every cell has
/// mass. `β = 1` is the textbook start; larger `β` pulls every cell towards
/// the anchor, which matters for WT on domains that are not centrally
/// symmetric.
fn initial_state(problem: &Problem) -> Result<Evaluation> {
    let a = problem.mesh.domain().centroid();
    let anchored: Vec<Point2> = problem.sites.iter().map(|&p| p - a).collect();
    let base = init_heights(&anchored, problem.mode);
    let mut first_err = None;
    let mut beta = 1.0;
    for _ in 0..60 {
        let h: Vec<f64> = base.iter().map(|v| v / beta).collect();
        match problem.evaluate_admissible(&h, None) {
            Ok(ev) => {
                if beta > 1.0 {
                    log::info!("initial heights scaled by 1/{beta} to make every cell nonempty");
                }
                return Ok(ev);
            }
            Err(e @ Error::InadmissibleState { .. }) => {
                first_err.get_or_insert(e);
            }
            Err(e) => return Err(e),
        }
        beta *= 2.0;
    }
    Err(first_err.expect("at least one attempt"))
}

/// Moves sites lying on or outside the domain boundary slightly inwards.
fn nudge_boundary_sites(sites: &mut [Point2], domain: &crate::diagram::Domain) {
    let c = domain.centroid();
    let step = 1e-9 * domain.diameter();
    for (i, p) in sites.iter_mut().enumerate() {
        let strictly_inside = domain
            .boundary()
            .edges()
            .all(|e| crate::geometry::orient2d(e.a, e.b, *p) == Orientation::CounterClockwise);
        if !strictly_inside {
            let dir = c - *p;
            let len = dir.norm();
            if len > 0.0 {
                *p = *p + dir * (step / len);
            }
            log::warn!("site {i} on the domain boundary moved inwards by {step:e}");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_heights_examples() {
        let p = [Point2::new(0.25, 0.5)];
        // a single site is gauged to zero, so check the raw formula on a pair
        let pair = [p[0], Point2::new(0.0, 0.0)];
        let ot = init_heights(&pair, Mode::Ot);
        let wt = init_heights(&pair, Mode::Wt);
        assert!((ot[0] - ot[1] - (-0.15625)).abs() < 1e-15);
        assert!((wt[0] - wt[1] - 0.15625).abs() < 1e-15);
        assert_eq!(init_heights(&[Point2::new(0.0, 0.0)], Mode::Ot), vec![0.0]);
        assert_eq!(init_heights(&p, Mode::Wt), vec![0.0]);
    }

    #[test]
    fn two_site_direction_moves_mass_to_first_site() {
        let mesh = DensityMesh::unit_square(1.0, 1.0).unwrap();
        let sites = vec![Point2::new(0.25, 0.5), Point2::new(0.75, 0.5)];
        for mode in [Mode::Ot, Mode::Wt] {
            let problem = Problem::new(&mesh, sites.clone(), vec![0.6, 0.4], mode);
            let ev = problem.evaluate_admissible(&[0.0, 0.0], None).unwrap();
            let (g, hess) = assemble_system(&ev.diagram, &mesh, &problem.weights, mode).unwrap();
            assert!((g[0] + 0.1).abs() < 1e-15 && (g[1] - 0.1).abs() < 1e-15);
            assert!((hess.get(0, 1).abs() - 2.0).abs() < 1e-15);
            let d = newton_direction(&g, &hess, mode).unwrap();
            assert!((d[0].abs() - 0.025).abs() < 1e-15 && (d[0] + d[1]).abs() < 1e-15);
            let step = damped_update(&problem, &ev, &d, 62, false).unwrap();
            assert_eq!(step.lambda, -1.0);
            assert!((step.state.masses[0] - 0.6).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_direction_is_a_fixed_point() {
        let mesh = DensityMesh::unit_square(1.0, 1.0).unwrap();
        let sites = vec![Point2::new(0.25, 0.5), Point2::new(0.75, 0.5)];
        let problem = Problem::new(&mesh, sites, vec![0.5, 0.5], Mode::Wt);
        let ev = problem.evaluate_admissible(&[0.0, 0.0], None).unwrap();
        let step = damped_update(&problem, &ev, &[0.0, 0.0], 62, false).unwrap();
        assert_eq!(step.lambda, -1.0);
        assert_eq!(step.state.heights, vec![0.0, 0.0]);
    }

    #[test]
    fn mass_mismatch_is_rejected() {
        let mesh = DensityMesh::unit_square(1.0, 1.0).unwrap();
        let nu = DiscreteMeasure::new(vec![Point2::new(0.5, 0.5)], vec![0.9]).unwrap();
        assert!(matches!(
            solve(&mesh, &nu, &SolverConfig::default()),
            Err(Error::MassMismatch { .. })
        ));
    }
}
