mod common;

use std::collections::BTreeMap;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use wtot::density::{build_overlay, mu_cell_volumes, naive_overlay, quadratic_cost, DensityMesh, Overlay};
use wtot::diagram::{power_diagram, DiagramMode, PowerDiagram};
use wtot::geometry::{Point2, Segment};

fn by_pair(o: &Overlay) -> BTreeMap<(usize, usize), f64> {
    let mut m = BTreeMap::new();
    for a in &o.atoms {
        *m.entry((a.triangle, a.site)).or_insert(0.0) += a.polygon.area();
    }
    m
}

fn random_diagram(rng: &mut ChaCha8Rng, mesh: &DensityMesh, n: usize) -> PowerDiagram {
    let sites = common::random_sites(rng, mesh.domain(), n);
    let h: Vec<f64> = (0..n).map(|_| rng.random_range(-0.05..0.05)).collect();
    let mode = if rng.random::<bool>() {
        DiagramMode::Nearest
    } else {
        DiagramMode::Farthest
    };
    power_diagram(&sites, &h, mesh.domain(), mode).unwrap()
}

#[test]
fn sweep_matches_pairwise_intersection() {
    let mut rng = common::rng(21);
    for round in 0..100 {
        let mesh = common::random_mesh(&mut rng);
        let n = rng.random_range(1..=15);
        let d = random_diagram(&mut rng, &mesh, n);
        let fast = by_pair(&build_overlay(&mesh, &d));
        let slow = by_pair(&naive_overlay(&mesh, &d));
        let keys: std::collections::BTreeSet<_> = fast.keys().chain(slow.keys()).collect();
        for k in keys {
            let (a, b) = (fast.get(k).copied().unwrap_or(0.0), slow.get(k).copied().unwrap_or(0.0));
            assert!((a - b).abs() <= 1e-9, "round {round} pair {k:?}: {a} vs {b}");
        }
    }
}

#[test]
fn atoms_tile_the_domain_and_conserve_mass() {
    let mut rng = common::rng(22);
    for _ in 0..100 {
        let mesh = common::random_mesh(&mut rng);
        let n = rng.random_range(1..=60);
        let d = random_diagram(&mut rng, &mesh, n);
        let o = build_overlay(&mesh, &d);
        let area = mesh.domain().area();
        assert!((o.total_area() - area).abs() <= 1e-9 * area);
        let w = mu_cell_volumes(&o, &mesh, n);
        let total = mesh.total_mass();
        assert!((w.iter().sum::<f64>() - total).abs() <= 1e-9 * total);
    }
}

#[test]
fn small_examples() {
    let mesh = common::uniform_square();
    let one = power_diagram(&[Point2::new(0.5, 0.5)], &[0.0], mesh.domain(), DiagramMode::Nearest).unwrap();
    let o = build_overlay(&mesh, &one);
    assert_eq!(o.atoms.len(), 2);
    assert!(o.atoms.iter().all(|a| (a.polygon.area() - 0.5).abs() < 1e-15));

    let sites = [Point2::new(0.25, 0.5), Point2::new(0.75, 0.5)];
    let two = power_diagram(&sites, &[0.0, 0.0], mesh.domain(), DiagramMode::Nearest).unwrap();
    let o = build_overlay(&mesh, &two);
    assert_eq!(o.atoms.len(), 4);
    assert!((o.total_area() - 1.0).abs() < 1e-15);
}

#[test]
fn walls_along_mesh_edges_still_match() {
    // vertical walls on the grid lines x = 0.25, 0.5, 0.75 give exact sweep ties
    let mesh = DensityMesh::grid(Point2::new(0.0, 0.0), Point2::new(1.0, 1.0), 4, 4, |c| 1.0 + c.x).unwrap();
    let sites: Vec<Point2> = (0..4).map(|k| Point2::new(0.125 + 0.25 * k as f64, 0.5)).collect();
    let a = mesh.domain().centroid();
    let q: Vec<Point2> = sites.iter().map(|&p| p - a).collect();
    let h = wtot::solver::init_heights(&q, wtot::solver::Mode::Ot);
    let d = power_diagram(&sites, &h, mesh.domain(), DiagramMode::Nearest).unwrap();
    for c in d.cells() {
        assert!((c.area() - 0.25).abs() < 1e-12);
    }
    let o = build_overlay(&mesh, &d);
    assert!(o.tie_events > 0);
    let (fast, slow) = (by_pair(&o), by_pair(&naive_overlay(&mesh, &d)));
    for (k, v) in &slow {
        assert!((fast.get(k).copied().unwrap_or(0.0) - v).abs() < 1e-12);
    }
}

/// Density at `x` by direct lookup, or `None` outside the mesh.
fn density_at(mesh: &DensityMesh, x: Point2) -> Option<f64> {
    (0..mesh.len()).find(|&t| mesh.triangle(t).contains(x)).map(|t| mesh.density()[t])
}

#[test]
fn cell_masses_and_cost_match_monte_carlo() {
    let mut rng = common::rng(23);
    let mesh = common::piecewise_square(&mut rng, 3);
    let n = 8;
    let d = random_diagram(&mut rng, &mesh, n);
    let o = build_overlay(&mesh, &d);
    let w = mu_cell_volumes(&o, &mesh, n);
    let cost = quadratic_cost(&o, &mesh, d.sites());

    const CHUNKS: u64 = 100;
    const PER_CHUNK: usize = 100_000;
    let sums: Vec<(Vec<f64>, Vec<f64>, f64, f64)> = (0..CHUNKS)
        .into_par_iter()
        .map(|c| {
            let mut r = ChaCha8Rng::seed_from_u64(c);
            let mut m = vec![0.0; n];
            let mut m2 = vec![0.0; n];
            let (mut k, mut k2) = (0.0, 0.0);
            for _ in 0..PER_CHUNK {
                let x = Point2::new(r.random(), r.random());
                let f = density_at(&mesh, x).unwrap();
                let i = d.owner(x);
                m[i] += f;
                m2[i] += f * f;
                let g = 0.5 * f * (x - d.sites()[i]).norm_squared();
                k += g;
                k2 += g * g;
            }
            (m, m2, k, k2)
        })
        .collect();
    let total = (CHUNKS as usize * PER_CHUNK) as f64;
    for i in 0..n {
        let s: f64 = sums.iter().map(|c| c.0[i]).sum();
        let s2: f64 = sums.iter().map(|c| c.1[i]).sum();
        let mean = s / total;
        let se = ((s2 / total - mean * mean) / total).sqrt();
        assert!((mean - w[i]).abs() <= 3.0 * se + 1e-12, "cell {i}: {} vs {mean} (se {se})", w[i]);
    }
    let k: f64 = sums.iter().map(|c| c.2).sum::<f64>() / total;
    let k2: f64 = sums.iter().map(|c| c.3).sum::<f64>() / total;
    let se = ((k2 - k * k) / total).sqrt();
    assert!((k - cost).abs() <= 3.0 * se, "cost {cost} vs {k} (se {se})");
}

#[test]
fn line_integral_matches_quadrature() {
    let mut rng = common::rng(24);
    for _ in 0..50 {
        let mesh = common::random_mesh(&mut rng);
        let a = common::interior_point(&mut rng, mesh.domain());
        let b = common::interior_point(&mut rng, mesh.domain());
        let seg = Segment::new(a, b);
        let exact = mesh.line_integral(&seg);
        let m = 200_000;
        let mut q = 0.0;
        for k in 0..m {
            let x = a.lerp(b, (k as f64 + 0.5) / m as f64);
            q += density_at(&mesh, x).unwrap_or(0.0);
        }
        q *= seg.length() / m as f64;
        // midpoint rule error is at most one sample per crossed edge
        let crossings = 3.0 * mesh.len() as f64;
        let bound = crossings * 2.0 * mesh.density().iter().fold(0.0f64, |x, &y| x.max(y)) * seg.length() / m as f64;
        assert!((exact - q).abs() <= bound, "{exact} vs {q}");
    }
}
