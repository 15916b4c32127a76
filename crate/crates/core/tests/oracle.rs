mod common;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::RngExt;
use wtot::measure::DiscreteMeasure;
use wtot::oracle::{atomize, lp_transport, quadratic, AtomizedSource, Objective};
use wtot::solver::{solve, Mode, SolverConfig};

/// North-west corner plan after shuffling both sides: feasible, arbitrary.
fn random_plan_cost(src: &AtomizedSource, nu: &DiscreteMeasure, rng: &mut rand_chacha::ChaCha8Rng) -> f64 {
    let mut rows: Vec<usize> = (0..src.len()).collect();
    let mut cols: Vec<usize> = (0..nu.len()).collect();
    rows.shuffle(rng);
    cols.shuffle(rng);
    let scale = src.total_mass() / nu.total();
    let mut supply: Vec<f64> = src.atoms.iter().map(|a| a.mass).collect();
    let mut demand: Vec<f64> = nu.weights().iter().map(|w| w * scale).collect();
    let (mut r, mut c, mut cost) = (0, 0, 0.0);
    while r < rows.len() && c < cols.len() {
        let (i, j) = (rows[r], cols[c]);
        let f = supply[i].min(demand[j]);
        cost += f * quadratic(src.atoms[i].centroid, nu.points()[j]);
        supply[i] -= f;
        demand[j] -= f;
        if supply[i] <= demand[j] {
            r += 1;
        } else {
            c += 1;
        }
    }
    cost
}

#[test]
fn two_site_fixture_costs() {
    let src = atomize(&common::uniform_square(), 64).unwrap();
    let nu = common::two_site_measure();
    let min = lp_transport(&src, &nu, Objective::Min).unwrap().cost;
    let max = lp_transport(&src, &nu, Objective::Max).unwrap().cost;
    assert!((min - 5.0 / 96.0).abs() < 2e-3, "{min}");
    assert!((max - 17.0 / 96.0).abs() < 2e-3, "{max}");
}

#[test]
fn plans_have_the_right_marginals() {
    let mut rng = common::rng(5);
    for _ in 0..10 {
        let mesh = common::random_mesh(&mut rng);
        let n = rng.random_range(2..=12);
        let nu = common::random_measure(&mut rng, mesh.domain(), n);
        let src = atomize(&mesh, 16).unwrap();
        for obj in [Objective::Min, Objective::Max] {
            let plan = lp_transport(&src, &nu, obj).unwrap();
            let mut rows = vec![0.0; src.len()];
            let mut cols = vec![0.0; n];
            let mut cost = 0.0;
            for e in &plan.entries {
                assert!(e.mass > 0.0);
                rows[e.atom] += e.mass;
                cols[e.target] += e.mass;
                cost += e.mass * quadratic(src.atoms[e.atom].centroid, nu.points()[e.target]);
            }
            for (r, a) in rows.iter().zip(&src.atoms) {
                assert!((r - a.mass).abs() < 1e-9);
            }
            for (c, w) in cols.iter().zip(nu.weights()) {
                assert!((c - w).abs() < 1e-9);
            }
            assert!((cost - plan.cost).abs() < 1e-12);
        }
    }
}

#[test]
fn random_feasible_plans_lie_between_min_and_max() {
    let mut rng = common::rng(8);
    let mesh = common::piecewise_square(&mut rng, 3);
    let nu = common::random_measure(&mut rng, mesh.domain(), 7);
    let src = atomize(&mesh, 12).unwrap();
    let min = lp_transport(&src, &nu, Objective::Min).unwrap().cost;
    let max = lp_transport(&src, &nu, Objective::Max).unwrap().cost;
    for _ in 0..100 {
        let c = random_plan_cost(&src, &nu, &mut rng);
        assert!(min <= c + 1e-12 && c <= max + 1e-12, "{min} {c} {max}");
    }
}

#[test]
fn refining_the_grid_changes_little() {
    let mut rng = common::rng(13);
    let mut close = 0;
    let rounds = 20;
    for _ in 0..rounds {
        let mesh = common::random_mesh(&mut rng);
        let n = rng.random_range(3..=12);
        let nu = common::random_measure(&mut rng, mesh.domain(), n);
        let coarse = lp_transport(&atomize(&mesh, 32).unwrap(), &nu, Objective::Min).unwrap().cost;
        let fine = lp_transport(&atomize(&mesh, 64).unwrap(), &nu, Objective::Min).unwrap().cost;
        if (coarse - fine).abs() <= 0.01 * fine {
            close += 1;
        }
    }
    assert!(close * 10 >= rounds * 9, "{close} of {rounds}");
}

#[test]
fn semi_discrete_costs_match_the_oracle() {
    let mut rng = common::rng(2024);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for round in 0..50 {
        let mesh = if round % 2 == 0 {
            common::uniform_square()
        } else {
            let k = rng.random_range(2..=4);
            common::piecewise_square(&mut rng, k)
        };
        let n = rng.random_range(3..=20);
        let nu = common::random_measure(&mut rng, mesh.domain(), n);
        let src = atomize(&mesh, 64).unwrap();
        let ot = solve(&mesh, &nu, &SolverConfig::new(Mode::Ot)).unwrap().cost;
        let wt = solve(&mesh, &nu, &SolverConfig::new(Mode::Wt)).unwrap().cost;
        let min = lp_transport(&src, &nu, Objective::Min).unwrap().cost;
        let max = lp_transport(&src, &nu, Objective::Max).unwrap().cost;
        let (e_ot, e_wt) = ((ot - min).abs() / min, (wt - max).abs() / max);
        worst = worst.max(e_ot).max(e_wt);
        assert!(e_ot <= 0.02, "round {round}: OT {ot} vs {min}");
        assert!(e_wt <= 0.02, "round {round}: WT {wt} vs {max}");
    }
    eprintln!("worst relative gap {worst:.2e} in {:?}", start.elapsed());
    assert!(start.elapsed().as_secs() < 300);
}
