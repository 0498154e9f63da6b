//! Compressed sparse row matrices and an envelope Cholesky factorization
//! for the symmetric positive-definite systems `(I + λL) x = u`.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

#[allow(unused_imports)]
use num_traits::Float;

use crate::geometry::Vec3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("right-hand side has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Square sparse matrix in CSR form with sorted column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Assembles from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|a| (a.0, a.1));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx: Vec<usize> = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(
                r < n && c < n,
                "triplet ({r}, {c}) out of range for n = {n}"
            );
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map(|k| vals[k]).unwrap_or(0.0)
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            let (c, v) = self.row(i);
            c.iter().zip(v).map(move |(&j, &x)| (i, j, x))
        })
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let (c, v) = self.row(i);
                c.iter().zip(v).map(|(&j, &a)| a * x[j]).sum()
            })
            .collect()
    }

    pub fn mul_vec3(&self, x: &[Vec3]) -> Vec<Vec3> {
        (0..self.n)
            .map(|i| {
                let (c, v) = self.row(i);
                c.iter().zip(v).map(|(&j, &a)| x[j] * a).sum()
            })
            .collect()
    }

    pub fn transpose(&self) -> CsrMatrix {
        CsrMatrix::from_triplets(self.n, self.triplets().map(|(i, j, v)| (j, i, v)).collect())
    }

    /// Sparse product `self · other`.
    pub fn matmul(&self, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.n, other.n);
        let mut trip = Vec::new();
        let mut acc = vec![0.0; self.n];
        let mut touched: Vec<usize> = Vec::new();
        for i in 0..self.n {
            let (ci, vi) = self.row(i);
            for (&k, &a) in ci.iter().zip(vi) {
                let (ck, vk) = other.row(k);
                for (&j, &b) in ck.iter().zip(vk) {
                    if acc[j] == 0.0 && !touched.contains(&j) {
                        touched.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                trip.push((i, j, acc[j]));
                acc[j] = 0.0;
            }
            touched.clear();
        }
        CsrMatrix::from_triplets(self.n, trip)
    }

    /// `α·self + β·I`.
    pub fn scaled_plus_identity(&self, alpha: f64, beta: f64) -> CsrMatrix {
        let mut trip: Vec<_> = self.triplets().map(|(i, j, v)| (i, j, alpha * v)).collect();
        trip.extend((0..self.n).map(|i| (i, i, beta)));
        CsrMatrix::from_triplets(self.n, trip)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.triplets()
            .all(|(i, j, v)| (self.get(j, i) - v).abs() <= tol)
    }
}

/// Reverse Cuthill–McKee ordering of the matrix graph. `perm[k]` is the
/// original index placed at position `k`.
pub fn reverse_cuthill_mckee(a: &CsrMatrix) -> Vec<usize> {
    let n = a.dim();
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).0.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut nbrs = Vec::new();
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree[i], i));
    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(a, seed, &degree);
        let mut queue = VecDeque::new();
        visited[start] = true;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            order.push(i);
            nbrs.clear();
            nbrs.extend(a.row(i).0.iter().copied().filter(|&j| !visited[j]));
            nbrs.sort_by_key(|&j| (degree[j], j));
            for &j in &nbrs {
                visited[j] = true;
                queue.push_back(j);
            }
        }
    }
    order.reverse();
    order
}

fn pseudo_peripheral(a: &CsrMatrix, seed: usize, degree: &[usize]) -> usize {
    let mut node = seed;
    let mut ecc = 0;
    for _ in 0..8 {
        let levels = bfs_levels(a, node);
        let depth = *levels.iter().filter(|&&l| l != usize::MAX).max().unwrap();
        if depth <= ecc && ecc > 0 {
            break;
        }
        ecc = depth;
        node = (0..a.dim())
            .filter(|&i| levels[i] == depth)
            .min_by_key(|&i| (degree[i], i))
            .unwrap();
    }
    node
}

fn bfs_levels(a: &CsrMatrix, start: usize) -> Vec<usize> {
    let mut level = vec![usize::MAX; a.dim()];
    let mut queue = VecDeque::new();
    level[start] = 0;
    queue.push_back(start);
    while let Some(i) = queue.pop_front() {
        for &j in a.row(i).0 {
            if level[j] == usize::MAX {
                level[j] = level[i] + 1;
                queue.push_back(j);
            }
        }
    }
    level
}

/// Envelope (skyline) Cholesky factor `P A Pᵀ = L Lᵀ` under an RCM ordering.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    n: usize,
    perm: Vec<usize>,
    /// First stored column of each (permuted) row.
    first: Vec<usize>,
    /// Offset of row `i`'s envelope in `data`; row `i` stores columns `first[i]..=i`.
    offset: Vec<usize>,
    data: Vec<f64>,
}

impl EnvelopeCholesky {
    /// Factors a symmetric positive-definite matrix (only the lower triangle is read).
    pub fn factor(a: &CsrMatrix) -> Result<Self, SolveError> {
        let n = a.dim();
        let perm = reverse_cuthill_mckee(a);
        let mut inv = vec![0usize; n];
        for (k, &i) in perm.iter().enumerate() {
            inv[i] = k;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (i, fi) in first.iter_mut().enumerate() {
            for &j in a.row(perm[i]).0 {
                *fi = (*fi).min(inv[j]);
            }
        }
        let mut offset = Vec::with_capacity(n + 1);
        let mut total = 0;
        for i in 0..n {
            offset.push(total);
            total += i - first[i] + 1;
        }
        offset.push(total);
        let mut data = vec![0.0; total];
        for i in 0..n {
            let (cols, vals) = a.row(perm[i]);
            for (&j, &v) in cols.iter().zip(vals) {
                let jj = inv[j];
                if jj <= i {
                    data[offset[i] + jj - first[i]] += v;
                }
            }
        }

        for i in 0..n {
            let fi = first[i];
            let row_i = offset[i];
            for j in fi..i {
                let fj = first[j];
                let start = fi.max(fj);
                let row_j = offset[j];
                let mut s = data[row_i + j - fi];
                for k in start..j {
                    s -= data[row_i + k - fi] * data[row_j + k - fj];
                }
                data[row_i + j - fi] = s / data[row_j + j - fj];
            }
            let mut d = data[row_i + i - fi];
            for k in fi..i {
                let l = data[row_i + k - fi];
                d -= l * l;
            }
            if !(d > 0.0) {
                return Err(SolveError::NotPositiveDefinite {
                    row: perm[i],
                    pivot: d,
                });
            }
            data[row_i + i - fi] = d.sqrt();
        }
        Ok(EnvelopeCholesky {
            n,
            perm,
            first,
            offset,
            data,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Stored entries in the factor's envelope.
    pub fn envelope_size(&self) -> usize {
        self.data.len()
    }

    /// Solves `A x = b` for three right-hand sides at once.
    pub fn solve_vec3(&self, b: &[Vec3]) -> Result<Vec<Vec3>, SolveError> {
        if b.len() != self.n {
            return Err(SolveError::DimensionMismatch {
                expected: self.n,
                got: b.len(),
            });
        }
        let n = self.n;
        let mut y: Vec<Vec3> = self.perm.iter().map(|&i| b[i]).collect();
        // Forward: L y = P b
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.data[self.offset[i]..self.offset[i + 1]];
            let mut s = y[i];
            for (k, &l) in (fi..i).zip(row) {
                s -= y[k] * l;
            }
            y[i] = s / row[i - fi];
        }
        // Backward: Lᵀ z = y, column-oriented over the row envelopes.
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.offset[i]..self.offset[i + 1]];
            y[i] = y[i] / row[i - fi];
            let yi = y[i];
            for (k, &l) in (fi..i).zip(row) {
                y[k] -= yi * l;
            }
        }
        let mut x = vec![Vec3::ZERO; n];
        for (k, &i) in self.perm.iter().enumerate() {
            x[i] = y[k];
        }
        Ok(x)
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, SolveError> {
        let b3: Vec<Vec3> = b.iter().map(|&v| Vec3::new(v, 0.0, 0.0)).collect();
        Ok(self.solve_vec3(&b3)?.into_iter().map(|v| v.x).collect())
    }
}
