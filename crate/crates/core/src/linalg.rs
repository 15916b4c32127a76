//! Sparse symmetric systems with a one-dimensional null space spanned by the
//! all-ones vector (graph Laplacian structure).
//!
//! The last unknown is pinned to zero and the remaining positive definite
//! system is solved either by a sparse Cholesky factorization under a
//! reverse Cuthill–McKee ordering, or by Jacobi-preconditioned conjugate
//! gradients. The result is then shifted to zero mean.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};

use crate::error::{Error, Result};

/// Largest reduced system handed to the direct solver by default.
pub const DIRECT_LIMIT: usize = 5000;

/// Symmetric matrix stored as a diagonal plus upper off-diagonal triplets.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SymmetricMatrix {
    n: usize,
    diag: Vec<f64>,
    off: Vec<(usize, usize, f64)>,
}

impl SymmetricMatrix {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            diag: vec![0.0; n],
            off: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    /// Off-diagonal entries `(i, j, a_ij)` with `i < j`.
    pub fn off_diagonal(&self) -> &[(usize, usize, f64)] {
        &self.off
    }

    pub fn add_diagonal(&mut self, i: usize, v: f64) {
        self.diag[i] += v;
    }

    /// Adds `v` at `(i, j)` and `(j, i)`.
    pub fn add_off_diagonal(&mut self, i: usize, j: usize, v: f64) {
        assert!(i != j, "diagonal entry passed as off-diagonal");
        self.off.push((i.min(j), i.max(j), v));
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diag[i];
        }
        let (a, b) = (i.min(j), i.max(j));
        self.off
            .iter()
            .filter(|&&(p, q, _)| p == a && q == b)
            .map(|&(_, _, v)| v)
            .sum()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = self.diag.iter().zip(x).map(|(d, v)| d * v).collect();
        for &(i, j, v) in &self.off {
            y[i] += v * x[j];
            y[j] += v * x[i];
        }
        y
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.mul_vec(&vec![1.0; self.n])
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            n: self.n,
            diag: self.diag.iter().map(|d| d * s).collect(),
            off: self.off.iter().map(|&(i, j, v)| (i, j, v * s)).collect(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            m[(i, i)] = self.diag[i];
        }
        for &(i, j, v) in &self.off {
            m[(i, j)] += v;
            m[(j, i)] += v;
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveRoute {
    Auto,
    Direct,
    Iterative,
}

/// Solves `a x = b` on the zero-mean subspace, for positive semidefinite `a`
/// whose kernel is spanned by the all-ones vector.
pub fn solve_pinned(a: &SymmetricMatrix, b: &[f64], route: SolveRoute) -> Result<Vec<f64>> {
    let n = a.dim();
    if b.len() != n {
        return Err(Error::InvalidInput(format!("rhs has length {}, expected {n}", b.len())));
    }
    if n <= 1 {
        return Ok(vec![0.0; n]);
    }
    if b.iter().all(|&v| v == 0.0) {
        return Ok(vec![0.0; n]);
    }
    let m = n - 1;
    let reduced = Reduced::new(a, m);
    let rhs = &b[..m];
    let direct = match route {
        SolveRoute::Auto => m <= DIRECT_LIMIT,
        SolveRoute::Direct => true,
        SolveRoute::Iterative => false,
    };
    let mut x = if direct {
        reduced.cholesky(rhs)?
    } else {
        reduced.pcg(rhs)?
    };
    x.push(0.0);
    let mean = x.iter().sum::<f64>() / n as f64;
    for v in &mut x {
        *v -= mean;
    }
    Ok(x)
}

/// Leading `m x m` block in adjacency form.
struct Reduced {
    m: usize,
    diag: Vec<f64>,
    rows: Vec<Vec<(usize, f64)>>,
}

impl Reduced {
    fn new(a: &SymmetricMatrix, m: usize) -> Self {
        let mut rows = vec![Vec::new(); m];
        for &(i, j, v) in a.off_diagonal() {
            if i < m && j < m {
                rows[i].push((j, v));
                rows[j].push((i, v));
            }
        }
        for r in &mut rows {
            r.sort_unstable_by_key(|e| e.0);
            // merge repeated entries
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(r.len());
            for &(j, v) in r.iter() {
                match merged.last_mut() {
                    Some(last) if last.0 == j => last.1 += v,
                    _ => merged.push((j, v)),
                }
            }
            *r = merged;
        }
        Self {
            m,
            diag: a.diagonal()[..m].to_vec(),
            rows,
        }
    }

    fn mul(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.m {
            let mut s = self.diag[i] * x[i];
            for &(j, v) in &self.rows[i] {
                s += v * x[j];
            }
            y[i] = s;
        }
    }

    /// Reverse Cuthill–McKee order.
    fn rcm(&self) -> Vec<usize> {
        let deg: Vec<usize> = self.rows.iter().map(Vec::len).collect();
        let mut seen = vec![false; self.m];
        let mut order = Vec::with_capacity(self.m);
        let mut by_degree: Vec<usize> = (0..self.m).collect();
        by_degree.sort_by_key(|&i| (deg[i], i));
        for &start in &by_degree {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut queue = VecDeque::from([start]);
            while let Some(v) = queue.pop_front() {
                order.push(v);
                let mut next: Vec<usize> = self.rows[v]
                    .iter()
                    .map(|e| e.0)
                    .filter(|&u| !seen[u])
                    .collect();
                next.sort_by_key(|&u| (deg[u], u));
                for u in next {
                    seen[u] = true;
                    queue.push_back(u);
                }
            }
        }
        order.reverse();
        order
    }

    fn cholesky(&self, b: &[f64]) -> Result<Vec<f64>> {
        let perm = self.rcm();
        let mut inv = vec![0; self.m];
        for (k, &v) in perm.iter().enumerate() {
            inv[v] = k;
        }
        let mut coo = CooMatrix::new(self.m, self.m);
        for i in 0..self.m {
            coo.push(inv[i], inv[i], self.diag[i]);
            for &(j, v) in &self.rows[i] {
                coo.push(inv[i], inv[j], v);
            }
        }
        let csc = CscMatrix::from(&coo);
        let chol = CscCholesky::factor(&csc)
            .map_err(|e| Error::SingularReducedSystem(format!("cholesky: {e:?}")))?;
        let rhs = DMatrix::from_iterator(self.m, 1, perm.iter().map(|&v| b[v]));
        let y = chol.solve(&rhs);
        let mut x = vec![0.0; self.m];
        for (k, &v) in perm.iter().enumerate() {
            x[v] = y[(k, 0)];
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularReducedSystem("non-finite solution".into()));
        }
        Ok(x)
    }

    fn pcg(&self, b: &[f64]) -> Result<Vec<f64>> {
        let m = self.m;
        if self.diag.iter().any(|&d| d <= 0.0) {
            return Err(Error::SingularReducedSystem("non-positive diagonal".into()));
        }
        let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        let bnorm = dot(b, b).sqrt();
        let mut x = vec![0.0; m];
        let mut r = b.to_vec();
        let mut z: Vec<f64> = r.iter().zip(&self.diag).map(|(r, d)| r / d).collect();
        let mut p = z.clone();
        let mut ap = vec![0.0; m];
        let mut rz = dot(&r, &z);
        let tol = 1e-14 * bnorm;
        for _ in 0..(10 * m + 100) {
            if dot(&r, &r).sqrt() <= tol {
                return Ok(x);
            }
            self.mul(&p, &mut ap);
            let pap = dot(&p, &ap);
            if pap <= 0.0 || !pap.is_finite() {
                return Err(Error::SingularReducedSystem("matrix is not positive definite".into()));
            }
            let alpha = rz / pap;
            for k in 0..m {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            for k in 0..m {
                z[k] = r[k] / self.diag[k];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..m {
                p[k] = z[k] + beta * p[k];
            }
        }
        if dot(&r, &r).sqrt() <= 1e-10 * bnorm {
            Ok(x)
        } else {
            Err(Error::SingularReducedSystem("conjugate gradients did not converge".into()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_laplacian(n: usize) -> SymmetricMatrix {
        let mut a = SymmetricMatrix::new(n);
        for i in 0..n - 1 {
            let w = 1.0 + i as f64 * 0.1;
            a.add_off_diagonal(i, i + 1, -w);
            a.add_diagonal(i, w);
            a.add_diagonal(i + 1, w);
        }
        a
    }

    #[test]
    fn two_by_two_hand_solution() {
        // curvature 4, gradient (-0.1, 0.1)
        let mut a = SymmetricMatrix::new(2);
        a.add_off_diagonal(0, 1, -2.0);
        a.add_diagonal(0, 2.0);
        a.add_diagonal(1, 2.0);
        let d = solve_pinned(&a, &[-0.1, 0.1], SolveRoute::Direct).unwrap();
        assert!((d[0] + 0.025).abs() < 1e-15 && (d[1] - 0.025).abs() < 1e-15);
    }

    #[test]
    fn routes_agree_and_satisfy_system() {
        let n = 40;
        let a = path_laplacian(n);
        let mut b: Vec<f64> = (0..n).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let mean = b.iter().sum::<f64>() / n as f64;
        b.iter_mut().for_each(|v| *v -= mean);
        let x1 = solve_pinned(&a, &b, SolveRoute::Direct).unwrap();
        let x2 = solve_pinned(&a, &b, SolveRoute::Iterative).unwrap();
        for (u, v) in x1.iter().zip(&x2) {
            assert!((u - v).abs() < 1e-8);
        }
        assert!(x1.iter().sum::<f64>().abs() < 1e-10);
        let ax = a.mul_vec(&x1);
        for (u, v) in ax.iter().zip(&b) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let a = path_laplacian(5);
        assert_eq!(solve_pinned(&a, &[0.0; 5], SolveRoute::Auto).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn disconnected_system_is_singular() {
        let mut a = SymmetricMatrix::new(4);
        a.add_off_diagonal(0, 1, -1.0);
        a.add_diagonal(0, 1.0);
        a.add_diagonal(1, 1.0);
        a.add_off_diagonal(2, 3, -1.0);
        a.add_diagonal(2, 1.0);
        a.add_diagonal(3, 1.0);
        // pinning site 3 leaves {0, 1} floating
        assert!(matches!(
            solve_pinned(&a, &[1.0, -1.0, 0.5, -0.5], SolveRoute::Direct),
            Err(Error::SingularReducedSystem(_))
        ));
    }
}
