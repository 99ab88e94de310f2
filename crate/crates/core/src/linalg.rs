//! Sparse matrices and the linear solvers behind the Poisson and
//! continuity solves.
//!
//! The direct path is a banded LU factorization without pivoting, run on a
//! bandwidth-reducing ordering. Every matrix the scheme assembles is either
//! symmetric positive definite or a column diagonally dominant M-matrix, so
//! elimination without pivoting is stable and keeps the sign pattern of the
//! factors, which makes the computed densities exactly nonnegative.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearSolverKind {
    #[default]
    Direct,
    /// Jacobi-preconditioned conjugate gradients; symmetric systems only.
    ConjugateGradient,
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    /// Square matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|a| (a.0, a.1));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            debug_assert!(r < n && c < n);
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `(column, value)` pairs of row `i`, sorted by column.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        (0..self.n).all(|i| {
            self.row(i)
                .all(|(j, v)| (v - self.get(j, i)).abs() <= rel_tol * v.abs().max(f64::MIN_POSITIVE))
        })
    }

    /// Positive diagonal and nonpositive off-diagonal entries.
    pub fn has_m_matrix_sign_pattern(&self) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(j, v)| if i == j { v > 0.0 } else { v <= 0.0 }))
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for i in 0..self.n {
            for (j, _) in self.row(i) {
                if i != j {
                    adj[i].push(j);
                    adj[j].push(i);
                }
            }
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        adj
    }
}

/// Permutation used by the banded factorization.
#[derive(Debug, Clone, PartialEq)]
pub struct BandOrdering {
    /// `perm[new] = old`
    perm: Vec<usize>,
    /// `inv[old] = new`
    inv: Vec<usize>,
    bandwidth: usize,
}

impl BandOrdering {
    /// Picks the narrower of the natural ordering and reverse Cuthill-McKee.
    pub fn for_pattern(a: &SparseMatrix) -> Self {
        let natural: Vec<usize> = (0..a.dim()).collect();
        let rcm = reverse_cuthill_mckee(&a.adjacency());
        let nat = Self::from_perm(a, natural);
        let rcm = Self::from_perm(a, rcm);
        if rcm.bandwidth < nat.bandwidth {
            rcm
        } else {
            nat
        }
    }

    fn from_perm(a: &SparseMatrix, perm: Vec<usize>) -> Self {
        let mut inv = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let bandwidth = (0..a.dim())
            .flat_map(|i| a.row(i).map(move |(j, _)| (i, j)))
            .map(|(i, j)| inv[i].abs_diff(inv[j]))
            .max()
            .unwrap_or(0);
        Self { perm, inv, bandwidth }
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }
}

fn reverse_cuthill_mckee(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (adj[i].len(), i));
    for &start in &by_degree {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (adj[w].len(), w));
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// Banded LU factors (unit lower triangle and upper triangle in one array).
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    bw: usize,
    band: Vec<f64>,
    perm: Vec<usize>,
    inv: Vec<usize>,
}

impl BandLu {
    pub fn factor(a: &SparseMatrix, ordering: &BandOrdering) -> Result<Self> {
        let n = a.dim();
        let bw = ordering.bandwidth;
        let w = 2 * bw + 1;
        let mut band = vec![0.0; n * w];
        for i in 0..n {
            let ni = ordering.inv[i];
            for (j, v) in a.row(i) {
                let nj = ordering.inv[j];
                band[ni * w + (nj + bw - ni)] += v;
            }
        }
        for k in 0..n {
            let pivot = band[k * w + bw];
            if !(pivot.abs() > 0.0) || !pivot.is_finite() {
                return Err(Error::Solver {
                    what: "banded LU",
                    residual: pivot,
                });
            }
            let last = (k + bw).min(n - 1);
            for i in k + 1..=last {
                let ik = i * w + (k + bw - i);
                let l = band[ik] / pivot;
                if l == 0.0 {
                    continue;
                }
                band[ik] = l;
                for j in k + 1..=last {
                    band[i * w + (j + bw - i)] -= l * band[k * w + (j + bw - k)];
                }
            }
        }
        Ok(Self {
            n,
            bw,
            band,
            perm: ordering.perm.clone(),
            inv: ordering.inv.clone(),
        })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, bw, w) = (self.n, self.bw, 2 * self.bw + 1);
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut s = y[i];
            for (j, yj) in y.iter().enumerate().take(i).skip(lo) {
                s -= self.band[i * w + (j + bw - i)] * yj;
            }
            y[i] = s;
        }
        for i in (0..n).rev() {
            let hi = (i + bw).min(n - 1);
            let mut s = y[i];
            for j in i + 1..=hi {
                s -= self.band[i * w + (j + bw - i)] * y[j];
            }
            y[i] = s / self.band[i * w + bw];
        }
        (0..n).map(|old| y[self.inv[old]]).collect()
    }
}

/// Relative residual `|b - A x|_2 / |b|_2` (absolute when `b = 0`).
pub fn relative_residual(a: &SparseMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.mul_vec(x);
    let r: f64 = ax.iter().zip(b).map(|(p, q)| (q - p).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nb > 0.0 {
        r / nb
    } else {
        r
    }
}

/// Jacobi-preconditioned conjugate gradients for symmetric positive definite `a`.
pub fn conjugate_gradient(a: &SparseMatrix, b: &[f64], x0: Option<&[f64]>, rel_tol: f64) -> Result<Vec<f64>> {
    let n = a.dim();
    let diag = a.diagonal();
    if diag.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::Solver {
            what: "conjugate gradient (non-positive diagonal)",
            residual: f64::NAN,
        });
    }
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let ax = a.mul_vec(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let target = rel_tol * if nb > 0.0 { nb } else { 1.0 };
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(ri, di)| ri / di).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let max_iter = 10 * n + 100;
    let mut rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    for _ in 0..max_iter {
        if rnorm <= target {
            return Ok(x);
        }
        let ap = a.mul_vec(&p);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    if rnorm <= target {
        Ok(x)
    } else {
        Err(Error::Solver {
            what: "conjugate gradient",
            residual: rnorm / if nb > 0.0 { nb } else { 1.0 },
        })
    }
}

/// Solves `a x = b`, checking the relative residual against `rel_tol`.
pub fn solve(
    a: &SparseMatrix,
    b: &[f64],
    kind: LinearSolverKind,
    ordering: &BandOrdering,
    rel_tol: f64,
) -> Result<Vec<f64>> {
    match kind {
        LinearSolverKind::Direct => {
            let x = BandLu::factor(a, ordering)?.solve(b);
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Solver {
                    what: "banded LU",
                    residual: relative_residual(a, &x, b),
                });
            }
            Ok(x)
        }
        LinearSolverKind::ConjugateGradient => conjugate_gradient(a, b, None, rel_tol),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> SparseMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        SparseMatrix::from_triplets(n, t)
    }

    fn grid_laplacian(nx: usize, ny: usize) -> SparseMatrix {
        let id = |i: usize, j: usize| i + nx * j;
        let mut t = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                let k = id(i, j);
                t.push((k, k, 4.5));
                if i > 0 {
                    t.push((k, id(i - 1, j), -1.0));
                }
                if i + 1 < nx {
                    t.push((k, id(i + 1, j), -1.0));
                }
                if j > 0 {
                    t.push((k, id(i, j - 1), -1.0));
                }
                if j + 1 < ny {
                    t.push((k, id(i, j + 1), -1.0));
                }
            }
        }
        SparseMatrix::from_triplets(nx * ny, t)
    }

    #[test]
    fn triplets_sum_duplicates() {
        let a = SparseMatrix::from_triplets(2, vec![(0, 0, 1.0), (1, 0, 2.0), (0, 0, 3.0)]);
        assert_eq!(a.get(0, 0), 4.0);
        assert_eq!(a.get(1, 0), 2.0);
        assert_eq!(a.get(0, 1), 0.0);
        assert_eq!(a.nnz(), 2);
    }

    #[test]
    fn band_lu_solves_tridiagonal() {
        let a = laplacian_1d(10);
        let ord = BandOrdering::for_pattern(&a);
        assert_eq!(ord.bandwidth(), 1);
        let x_true: Vec<f64> = (0..10).map(|i| (i as f64).sin()).collect();
        let b = a.mul_vec(&x_true);
        let x = BandLu::factor(&a, &ord).unwrap().solve(&b);
        for (p, q) in x.iter().zip(&x_true) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn ordering_prefers_short_direction() {
        let a = grid_laplacian(40, 5);
        let ord = BandOrdering::for_pattern(&a);
        assert!(ord.bandwidth() <= 6, "bandwidth {}", ord.bandwidth());
        let b: Vec<f64> = (0..200).map(|i| 1.0 + (i % 7) as f64).collect();
        let x = BandLu::factor(&a, &ord).unwrap().solve(&b);
        assert!(relative_residual(&a, &x, &b) < 1e-13);
    }

    #[test]
    fn cg_matches_direct() {
        let a = grid_laplacian(9, 11);
        let b: Vec<f64> = (0..99).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let ord = BandOrdering::for_pattern(&a);
        let xd = solve(&a, &b, LinearSolverKind::Direct, &ord, 1e-12).unwrap();
        let xc = solve(&a, &b, LinearSolverKind::ConjugateGradient, &ord, 1e-13).unwrap();
        for (p, q) in xd.iter().zip(&xc) {
            assert!((p - q).abs() < 1e-10);
        }
        assert!(a.is_symmetric(1e-15));
        assert!(a.has_m_matrix_sign_pattern());
    }

    #[test]
    fn singular_pivot_reported() {
        let a = SparseMatrix::from_triplets(2, vec![(0, 0, 0.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]);
        let ord = BandOrdering::for_pattern(&a);
        assert!(matches!(BandLu::factor(&a, &ord), Err(Error::Solver { .. })));
    }

    #[test]
    fn m_matrix_solution_nonnegative() {
        // nonsymmetric, column diagonally dominant M-matrix
        let n = 30;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 3.0));
            if i > 0 {
                t.push((i, i - 1, -0.4));
            }
            if i + 1 < n {
                t.push((i, i + 1, -2.1));
            }
        }
        let a = SparseMatrix::from_triplets(n, t);
        let b: Vec<f64> = (0..n).map(|i| if i % 5 == 0 { 1.0 } else { 0.0 }).collect();
        let x = solve(&a, &b, LinearSolverKind::Direct, &BandOrdering::for_pattern(&a), 1e-12).unwrap();
        assert!(x.iter().all(|&v| v >= 0.0));
        assert!(relative_residual(&a, &x, &b) < 1e-13);
    }
}
