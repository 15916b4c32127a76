//! Group comparison of per-subject transport costs, and a synthetic cohort
//! generator.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::density::DensityMesh;
use crate::error::{Error, Result};
use crate::geometry::{orient2d, Orientation, Point2};
use crate::measure::{DiscreteMeasure, ParameterizedMesh};
use crate::par;
use crate::solver::{solve, SolverConfig};

pub const STATISTIC: &str = "difference of group means (a - b)";
pub const ALTERNATIVE: &str = "two-sided";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortResult {
    pub group_a_costs: Vec<f64>,
    pub group_b_costs: Vec<f64>,
    pub statistic: f64,
    /// `(1 + count) / (1 + n_permutations)` when sampling, `count / splits`
    /// when enumerating.
    pub p_value: f64,
    /// `count / n_permutations`, which can be zero.
    pub p_value_raw: f64,
    /// Resamples with `|statistic|` at least the observed one.
    pub exceed_count: u64,
    pub n_permutations: u64,
    pub rng_seed: u64,
    /// All splits were enumerated instead of sampled.
    pub exact: bool,
    /// Every pooled value was identical.
    pub degenerate: bool,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn binomial(n: u64, k: u64) -> Option<u64> {
    let k = k.min(n - k);
    let mut c: u64 = 1;
    for i in 0..k {
        c = c.checked_mul(n - i)? / (i + 1);
    }
    Some(c)
}

/// Statistic from a membership mask over the pooled sample.
fn masked_diff(pooled: &[f64], in_a: &[bool], na: usize) -> f64 {
    let mut sa = 0.0;
    let mut sb = 0.0;
    for (x, &a) in pooled.iter().zip(in_a) {
        if a {
            sa += x;
        } else {
            sb += x;
        }
    }
    sa / na as f64 - sb / (pooled.len() - na) as f64
}

/// Two-sided permutation test on the difference of group means.
///
/// Resample `k` relabels the pooled sample with its own ChaCha stream, so
/// the result does not depend on how resamples are scheduled.
pub fn permutation_test(a: &[f64], b: &[f64], n_perm: u64, seed: u64) -> Result<CohortResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidInput("each group needs at least two values".into()));
    }
    if n_perm == 0 {
        return Err(Error::InvalidInput("n_perm must be at least 1".into()));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("non-finite group value".into()));
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (na, n) = (a.len(), pooled.len());
    let statistic = mean(a) - mean(b);
    let mut result = CohortResult {
        group_a_costs: a.to_vec(),
        group_b_costs: b.to_vec(),
        statistic,
        p_value: 1.0,
        p_value_raw: 1.0,
        exceed_count: n_perm,
        n_permutations: n_perm,
        rng_seed: seed,
        exact: false,
        degenerate: false,
    };
    if pooled.iter().all(|&x| x == pooled[0]) {
        log::warn!("all pooled values identical; p = 1");
        result.degenerate = true;
        return Ok(result);
    }
    // relabelled means round differently; do not let that break ties
    let scale = pooled.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let threshold = statistic.abs() - 1e-12 * scale;

    let splits = binomial(n as u64, na as u64);
    if let Some(total) = splits.filter(|&t| t <= n_perm) {
        let mut count = 0u64;
        let mut combo: Vec<usize> = (0..na).collect();
        let mut mask = vec![false; n];
        loop {
            mask.iter_mut().for_each(|m| *m = false);
            for &c in &combo {
                mask[c] = true;
            }
            if masked_diff(&pooled, &mask, na).abs() >= threshold {
                count += 1;
            }
            // next combination in lexicographic order
            let Some(pos) = (0..na).rev().find(|&i| combo[i] != i + n - na) else {
                break;
            };
            combo[pos] += 1;
            for i in pos + 1..na {
                combo[i] = combo[i - 1] + 1;
            }
        }
        result.exact = true;
        result.n_permutations = total;
        result.exceed_count = count;
        result.p_value = count as f64 / total as f64;
        result.p_value_raw = result.p_value;
        return Ok(result);
    }

    let hits = par::map_range(n_perm as usize, |k| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let mut idx: Vec<usize> = (0..n).collect();
        // partial Fisher-Yates: the first na slots form group a
        for i in 0..na {
            let j = rng.random_range(i..n);
            idx.swap(i, j);
        }
        let mut mask = vec![false; n];
        for &i in &idx[..na] {
            mask[i] = true;
        }
        masked_diff(&pooled, &mask, na).abs() >= threshold
    });
    let count = hits.into_iter().filter(|&h| h).count() as u64;
    result.exceed_count = count;
    result.p_value = (1 + count) as f64 / (1 + n_perm) as f64;
    result.p_value_raw = count as f64 / n_perm as f64;
    Ok(result)
}

/// Transport cost from `template` to each subject. Failures stay per
/// subject.
pub fn batch_costs(template: &DensityMesh, subjects: &[DiscreteMeasure], config: &SolverConfig) -> Vec<Result<f64>> {
    par::map_slice(subjects, |nu| {
        let nu = nu.normalized();
        let mesh = template.normalized();
        solve(&mesh, &nu, config).map(|s| s.cost)
    })
}

/// A flat unit disk triangulated in `rings` concentric rings of `6r`
/// vertices each.
pub fn disk_template(rings: usize) -> ParameterizedMesh {
    let mut pts = vec![Point2::new(0.0, 0.0)];
    let mut start = vec![0usize];
    for r in 1..=rings {
        start.push(pts.len());
        let count = 6 * r;
        let radius = r as f64 / rings as f64;
        for k in 0..count {
            let t = std::f64::consts::TAU * k as f64 / count as f64;
            pts.push(Point2::new(radius * t.cos(), radius * t.sin()));
        }
    }
    let mut faces = Vec::new();
    let mut push = |f: [usize; 3], pts: &[Point2]| {
        if orient2d(pts[f[0]], pts[f[1]], pts[f[2]]) == Orientation::Clockwise {
            faces.push([f[0], f[2], f[1]]);
        } else {
            faces.push(f);
        }
    };
    for k in 0..6.min(pts.len() - 1) {
        push([0, 1 + k, 1 + (k + 1) % 6], &pts);
    }
    for r in 2..=rings {
        let (a, b) = (6 * (r - 1), 6 * r);
        let inner = |i: usize| start[r - 1] + i % a;
        let outer = |o: usize| start[r] + o % b;
        let (mut i, mut o) = (0, 0);
        while i < a || o < b {
            // compare angles (o+1)/b and (i+1)/a exactly
            if i == a || (o < b && (o + 1) * a <= (i + 1) * b) {
                push([inner(i), outer(o), outer(o + 1)], &pts);
                o += 1;
            } else {
                push([inner(i), outer(o), inner(i + 1)], &pts);
                i += 1;
            }
        }
    }
    let v3 = pts.iter().map(|p| [p.x, p.y, 0.0]).collect();
    ParameterizedMesh::new(v3, pts, faces).expect("disk template is valid")
}

pub const TEMPLATE_RINGS: usize = 8;

/// Parameters of [`synthesize_cohort_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub n_subjects: usize,
    /// Height of the shared central dome.
    pub amplitude: f64,
    /// Height scale of per-subject bumps of random sign and position.
    pub nuisance: f64,
    pub seed: u64,
}

/// Subjects on the template's parameterization, each lifted by a smooth
/// central dome of height `amplitude` (scaled per subject by a factor in
/// `[0.8, 1.2]`).
pub fn synthesize_cohort(n_subjects: usize, amplitude: f64, seed: u64) -> Result<Vec<ParameterizedMesh>> {
    synthesize_cohort_with(&CohortSpec {
        n_subjects,
        amplitude,
        nuisance: 0.0,
        seed,
    })
}

pub fn synthesize_cohort_with(spec: &CohortSpec) -> Result<Vec<ParameterizedMesh>> {
    if !(spec.amplitude >= 0.0) || !(spec.nuisance >= 0.0) {
        return Err(Error::InvalidInput("amplitudes must be non-negative".into()));
    }
    let template = disk_template(TEMPLATE_RINGS);
    let subjects = (0..spec.n_subjects)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(k as u64);
            let dome = spec.amplitude * rng.random_range(0.8..1.2);
            let shift = Point2::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05));
            let bumps: Vec<(Point2, f64)> = (0..4)
                .map(|_| {
                    let r = 0.7 * rng.random::<f64>().sqrt();
                    let t = std::f64::consts::TAU * rng.random::<f64>();
                    let h = spec.nuisance * rng.random_range(-1.0..1.0);
                    (Point2::new(r * t.cos(), r * t.sin()), h)
                })
                .collect();
            let v3 = template
                .vertices2d
                .iter()
                .map(|&p| {
                    let mut z = dome * gaussian(p - shift, 0.3);
                    for &(c, h) in &bumps {
                        z += h * gaussian(p - c, 0.15);
                    }
                    [p.x, p.y, z]
                })
                .collect();
            ParameterizedMesh::new(v3, template.vertices2d.clone(), template.faces.clone())
        })
        .collect();
    subjects
}

fn gaussian(d: Point2, sigma: f64) -> f64 {
    (-d.norm_squared() / (2.0 * sigma * sigma)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_groups_give_p_one() {
        let r = permutation_test(&[1.0, 1.0, 1.0], &[1.0, 1.0], 99, 1).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert!(r.degenerate);
    }

    #[test]
    fn exact_enumeration_for_tiny_groups() {
        // C(4, 2) = 6 splits, two of which reach |diff| = 2
        let r = permutation_test(&[0.0, 0.0], &[2.0, 2.0], 1000, 0).unwrap();
        assert!(r.exact);
        assert_eq!(r.n_permutations, 6);
        assert_eq!(r.exceed_count, 2);
        assert!((r.p_value - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn separated_groups_hit_the_floor() {
        let a: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..30).map(|i| 100.0 + i as f64).collect();
        let r = permutation_test(&a, &b, 2000, 3).unwrap();
        assert_eq!(r.exceed_count, 0);
        assert_eq!(r.p_value, 1.0 / 2001.0);
        assert_eq!(r.p_value_raw, 0.0);
    }

    #[test]
    fn rejects_small_groups() {
        assert!(permutation_test(&[1.0], &[1.0, 2.0], 10, 0).is_err());
        assert!(permutation_test(&[1.0, 2.0], &[1.0, 2.0], 0, 0).is_err());
    }

    #[test]
    fn template_counts() {
        let t = disk_template(TEMPLATE_RINGS);
        assert_eq!(t.vertices2d.len(), 217);
        assert_eq!(t.faces.len(), 384);
        let area: f64 = (0..t.faces.len()).map(|f| t.face_area2d(f)).sum();
        // inscribed 48-gon
        let expect = 0.5 * 48.0 * (std::f64::consts::TAU / 48.0).sin();
        assert!((area - expect).abs() < 1e-12);
    }

    #[test]
    fn amplitude_zero_is_the_template() {
        let t = disk_template(TEMPLATE_RINGS);
        for s in synthesize_cohort(3, 0.0, 5).unwrap() {
            assert_eq!(s, t);
        }
    }

    #[test]
    fn cohort_is_seeded() {
        assert_eq!(synthesize_cohort(2, 0.2, 9).unwrap(), synthesize_cohort(2, 0.2, 9).unwrap());
        assert_ne!(synthesize_cohort(2, 0.2, 9).unwrap(), synthesize_cohort(2, 0.2, 10).unwrap());
    }
}
