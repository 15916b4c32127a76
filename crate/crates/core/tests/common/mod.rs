//! Random instances shared by the integration tests.
#![allow(dead_code)]

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wtot::density::DensityMesh;
use wtot::diagram::Domain;
use wtot::geometry::{convex_hull, Point2};
use wtot::measure::DiscreteMeasure;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_square() -> DensityMesh {
    DensityMesh::unit_square(1.0, 1.0).unwrap()
}

/// Unit square cut into `k x k` cells with independent densities in
/// `[0.2, 2]`, normalized.
pub fn piecewise_square(rng: &mut ChaCha8Rng, k: usize) -> DensityMesh {
    let vals: Vec<f64> = (0..2 * k * k).map(|_| rng.random_range(0.2..2.0)).collect();
    let mesh = DensityMesh::grid(Point2::new(0.0, 0.0), Point2::new(1.0, 1.0), k, k, |c| {
        let i = ((c.x * k as f64) as usize).min(k - 1);
        let j = ((c.y * k as f64) as usize).min(k - 1);
        vals[2 * (j * k + i) + usize::from(c.x > c.y)]
    })
    .unwrap();
    mesh.normalized()
}

/// Random convex polygon fanned from its centroid, random densities.
pub fn random_convex_mesh(rng: &mut ChaCha8Rng) -> DensityMesh {
    let pts: Vec<Point2> = (0..12)
        .map(|_| {
            let t = std::f64::consts::TAU * rng.random::<f64>();
            let r = rng.random_range(0.6..1.0);
            Point2::new(0.5 + 0.5 * r * t.cos(), 0.5 + 0.5 * r * t.sin())
        })
        .collect();
    let hull = convex_hull(&pts);
    let v = hull.vertices();
    let c = hull.centroid();
    let tris: Vec<[Point2; 3]> = (0..v.len()).map(|i| [c, v[i], v[(i + 1) % v.len()]]).collect();
    let dens = (0..tris.len()).map(|_| rng.random_range(0.2..2.0)).collect();
    DensityMesh::from_triangles(&tris, dens).unwrap().normalized()
}

pub fn random_mesh(rng: &mut ChaCha8Rng) -> DensityMesh {
    match rng.random_range(0..3) {
        0 => uniform_square(),
        1 => {
            let k = rng.random_range(1..=4);
            piecewise_square(rng, k)
        }
        _ => random_convex_mesh(rng),
    }
}

/// Uniform point strictly inside `domain`, away from the boundary.
pub fn interior_point(rng: &mut ChaCha8Rng, domain: &Domain) -> Point2 {
    let c = domain.centroid();
    let bb = domain.bbox();
    loop {
        let p = Point2::new(
            rng.random_range(bb.min.x..bb.max.x),
            rng.random_range(bb.min.y..bb.max.y),
        );
        // shrink towards the centroid so the solver's margin is respected
        let q = c + (p - c) * 0.95;
        if domain.contains(q) {
            return q;
        }
    }
}

pub fn random_sites(rng: &mut ChaCha8Rng, domain: &Domain, n: usize) -> Vec<Point2> {
    (0..n).map(|_| interior_point(rng, domain)).collect()
}

pub fn random_measure(rng: &mut ChaCha8Rng, domain: &Domain, n: usize) -> DiscreteMeasure {
    let pts = random_sites(rng, domain, n);
    let w = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    DiscreteMeasure::new(pts, w).unwrap().normalized()
}

pub fn two_site_measure() -> DiscreteMeasure {
    DiscreteMeasure::new(vec![Point2::new(0.25, 0.5), Point2::new(0.75, 0.5)], vec![0.5, 0.5]).unwrap()
}
