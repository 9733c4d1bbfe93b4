//! Small dense linear algebra: a row-major matrix, LU with partial pivoting,
//! and an incremental column-independence tracker.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<Vec<f64>>", try_from = "Vec<Vec<f64>>")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Builds a matrix from rows; `None` when the rows are ragged.
    pub fn from_rows(rows: &[Vec<f64>]) -> Option<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return None;
        }
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Some(Matrix { rows: rows.len(), cols, data })
    }

    /// Row count is explicit so that empty matrices keep their width.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major buffer has wrong length");
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|r| dot(self.row(r), x)).collect()
    }

    /// `Aᵀ y`.
    pub fn tr_mul_vec(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (r, &yr) in y.iter().enumerate() {
            if yr != 0.0 {
                for (o, a) in out.iter_mut().zip(self.row(r)) {
                    *o += yr * a;
                }
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl From<Matrix> for Vec<Vec<f64>> {
    fn from(m: Matrix) -> Self {
        m.to_rows()
    }
}

impl TryFrom<Vec<Vec<f64>>> for Matrix {
    type Error = String;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, String> {
        Matrix::from_rows(&rows).ok_or_else(|| "ragged matrix rows".to_string())
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Singular;

/// `P A = L U` with unit lower-triangular `L`, stored packed.
#[derive(Clone, Debug)]
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    /// Factors a square matrix given in row-major order.
    pub fn factor(n: usize, mut a: Vec<f64>) -> Result<Lu, Singular> {
        assert_eq!(a.len(), n * n);
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        let tiny = 1e-13 * scale;
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut best = a[k * n + k].abs();
            for i in k + 1..n {
                let v = a[i * n + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= tiny {
                return Err(Singular);
            }
            if p != k {
                for c in 0..n {
                    a.swap(k * n + c, p * n + c);
                }
                perm.swap(k, p);
            }
            let pivot = a[k * n + k];
            for i in k + 1..n {
                let f = a[i * n + k] / pivot;
                if f != 0.0 {
                    a[i * n + k] = f;
                    let (top, bottom) = a.split_at_mut(i * n);
                    let src = &top[k * n + k + 1..k * n + n];
                    let dst = &mut bottom[k + 1..n];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d -= f * s;
                    }
                } else {
                    a[i * n + k] = 0.0;
                }
            }
        }
        Ok(Lu { n, lu: a, perm })
    }

    pub fn from_matrix(m: &Matrix) -> Result<Lu, Singular> {
        assert_eq!(m.rows(), m.cols());
        Lu::factor(m.rows(), m.as_slice().to_vec())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = &self.lu[i * n..i * n + i];
            let s = dot(row, &y[..i]);
            y[i] -= s;
        }
        for i in (0..n).rev() {
            let row = &self.lu[i * n + i + 1..(i + 1) * n];
            let s = dot(row, &y[i + 1..]);
            y[i] = (y[i] - s) / self.lu[i * n + i];
        }
        b.copy_from_slice(&y);
    }

    /// Solves `Aᵀ x = b` in place.
    pub fn solve_transpose(&self, b: &mut [f64]) {
        let n = self.n;
        // Uᵀ w = b
        let mut w = b.to_vec();
        for i in 0..n {
            w[i] /= self.lu[i * n + i];
            let wi = w[i];
            if wi != 0.0 {
                for j in i + 1..n {
                    w[j] -= self.lu[i * n + j] * wi;
                }
            }
        }
        // Lᵀ v = w
        for i in (0..n).rev() {
            let vi = w[i];
            if vi != 0.0 {
                for j in 0..i {
                    w[j] -= self.lu[i * n + j] * vi;
                }
            }
        }
        for (i, &p) in self.perm.iter().enumerate() {
            b[p] = w[i];
        }
    }
}

/// Greedy tracker of linearly independent vectors (modified Gram-Schmidt with
/// one reorthogonalization pass).
#[derive(Clone, Debug)]
pub struct IndependentSet {
    dim: usize,
    basis: Vec<Vec<f64>>,
    tol: f64,
}

impl IndependentSet {
    pub fn new(dim: usize) -> Self {
        IndependentSet { dim, basis: Vec::new(), tol: 1e-9 }
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.basis.len() == self.dim
    }

    /// Adds `v` if it is independent of the vectors accepted so far.
    pub fn try_add(&mut self, v: &[f64]) -> bool {
        if self.is_full() {
            return false;
        }
        let norm0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm0 == 0.0 {
            return false;
        }
        let mut r: Vec<f64> = v.iter().map(|x| x / norm0).collect();
        for _ in 0..2 {
            for q in &self.basis {
                let d = dot(q, &r);
                for (ri, qi) in r.iter_mut().zip(q) {
                    *ri -= d * qi;
                }
            }
        }
        let nr = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nr <= self.tol {
            return false;
        }
        for ri in r.iter_mut() {
            *ri /= nr;
        }
        self.basis.push(r);
        true
    }
}

/// Row rank of a matrix, computed greedily over its columns.
pub fn row_rank(m: &Matrix) -> usize {
    let mut set = IndependentSet::new(m.rows());
    for c in 0..m.cols() {
        set.try_add(&m.column(c));
        if set.is_full() {
            break;
        }
    }
    set.len()
}

/// True when every row owns a column that is nonzero only in that row; such a
/// matrix trivially has full row rank.
pub fn has_unit_column_per_row(m: &Matrix) -> bool {
    let mut covered = vec![false; m.rows()];
    for c in 0..m.cols() {
        let mut only = None;
        let mut count = 0;
        for r in 0..m.rows() {
            if m.get(r, c) != 0.0 {
                count += 1;
                only = Some(r);
                if count > 1 {
                    break;
                }
            }
        }
        if count == 1 {
            covered[only.unwrap()] = true;
        }
    }
    covered.iter().all(|&c| c)
}
