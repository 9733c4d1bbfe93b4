//! Dense revised simplex engine that reports the optimal basic-variable index
//! set and the dual vector, plus a brute-force basis oracle for tests.

mod engine;
mod oracle;

pub use oracle::{enumerate_optimal_bases, vertex_minimum, ORACLE_MAX_VARS};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, row_rank, IndependentSet, Lu, Matrix};
use engine::Engine;

pub const TOL_FEAS: f64 = 1e-9;
pub const TOL_OPT: f64 = 1e-9;

/// Sparse column of a constraint matrix as `(row, value)` pairs.
pub type SparseColumn = Vec<(usize, f64)>;

/// `min cᵀx  s.t.  A x = b,  l ≤ x ≤ u`, with `A` stored by columns.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearProgram {
    objective: Vec<f64>,
    rows: usize,
    columns: Vec<SparseColumn>,
    rhs: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

fn columns_of(matrix: &Matrix) -> Vec<SparseColumn> {
    let mut cols = vec![Vec::new(); matrix.cols()];
    for r in 0..matrix.rows() {
        for (c, &v) in matrix.row(r).iter().enumerate() {
            if v != 0.0 {
                cols[c].push((r, v));
            }
        }
    }
    cols
}

fn unit_column_per_row(rows: usize, columns: &[SparseColumn]) -> bool {
    let mut covered = vec![false; rows];
    for col in columns {
        if let [(r, _)] = col.as_slice() {
            covered[*r] = true;
        }
    }
    covered.iter().all(|&c| c)
}

impl LinearProgram {
    /// Nonnegative variables without upper bounds.
    pub fn new(objective: Vec<f64>, matrix: Matrix, rhs: Vec<f64>) -> Result<Self> {
        let n = objective.len();
        LinearProgram::with_bounds(objective, matrix, rhs, vec![0.0; n], vec![f64::INFINITY; n])
    }

    pub fn with_bounds(
        objective: Vec<f64>,
        matrix: Matrix,
        rhs: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Result<Self> {
        check_dim("objective length", matrix.cols(), objective.len())?;
        let rows = matrix.rows();
        let columns = columns_of(&matrix);
        let lp = LinearProgram::from_columns(objective, rows, columns, rhs, lower, upper)?;
        if !unit_column_per_row(rows, &lp.columns) && row_rank(&matrix) < rows {
            return Err(Error::Construction("constraint matrix is rank deficient".into()));
        }
        Ok(lp)
    }

    /// Builds from sparse columns without a rank check.
    pub fn from_columns(
        objective: Vec<f64>,
        rows: usize,
        columns: Vec<SparseColumn>,
        rhs: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Result<Self> {
        let n = columns.len();
        let m = rows;
        check_dim("objective length", n, objective.len())?;
        check_dim("rhs length", m, rhs.len())?;
        check_dim("lower bound length", n, lower.len())?;
        check_dim("upper bound length", n, upper.len())?;
        if m > n {
            return Err(Error::Construction(format!("{m} constraints exceed {n} variables")));
        }
        for j in 0..n {
            if lower[j].is_nan() || upper[j].is_nan() || lower[j] > upper[j] || lower[j] == f64::INFINITY || upper[j] == f64::NEG_INFINITY {
                return Err(Error::Construction(format!("invalid bounds on variable {j}")));
            }
        }
        if objective.iter().chain(&rhs).any(|v| !v.is_finite())
            || columns.iter().flatten().any(|&(r, v)| !v.is_finite() || r >= m)
        {
            return Err(Error::Construction("non-finite or out-of-range data".into()));
        }
        let lp = LinearProgram { objective, rows, columns, rhs, lower, upper };
        Ok(lp)
    }

    /// Like `from_columns` but also rejects rank-deficient matrices.
    pub fn from_columns_checked(
        objective: Vec<f64>,
        rows: usize,
        columns: Vec<SparseColumn>,
        rhs: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Result<Self> {
        let lp = LinearProgram::from_columns(objective, rows, columns, rhs, lower, upper)?;
        if !unit_column_per_row(rows, &lp.columns) {
            let dense = lp.matrix();
            if row_rank(&dense) < rows {
                return Err(Error::Construction("constraint matrix is rank deficient".into()));
            }
        }
        Ok(lp)
    }

    pub fn num_vars(&self) -> usize {
        self.columns.len()
    }

    pub fn num_cons(&self) -> usize {
        self.rows
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    /// Dense copy of the constraint matrix.
    pub fn matrix(&self) -> Matrix {
        let mut a = Matrix::zeros(self.rows, self.columns.len());
        for (j, col) in self.columns.iter().enumerate() {
            for &(r, v) in col {
                a.set(r, j, v);
            }
        }
        a
    }

    pub fn columns(&self) -> &[SparseColumn] {
        &self.columns
    }

    /// Dense copy of column `j`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.rows];
        for &(r, a) in &self.columns[j] {
            v[r] = a;
        }
        v
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Same program with a different right-hand side (rank is unaffected).
    pub fn with_rhs(&self, rhs: Vec<f64>) -> Result<Self> {
        check_dim("rhs length", self.num_cons(), rhs.len())?;
        if rhs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Construction("non-finite rhs".into()));
        }
        Ok(LinearProgram { rhs, ..self.clone() })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Basic variable indices in ascending order.
    pub basis: Vec<usize>,
    /// One multiplier per constraint; reduced costs are `c − Aᵀy`.
    pub duals: Vec<f64>,
    /// Pivots and bound flips performed.
    pub iterations: usize,
}

impl LpSolution {
    fn non_optimal(status: LpStatus, iterations: usize) -> Self {
        let objective = match status {
            LpStatus::Unbounded => f64::NEG_INFINITY,
            _ => f64::INFINITY,
        };
        LpSolution { status, x: Vec::new(), objective, basis: Vec::new(), duals: Vec::new(), iterations }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    solve_cold(lp, lp.rhs())
}

fn solve_cold(lp: &LinearProgram, rhs: &[f64]) -> Result<LpSolution> {
    let mut engine = Engine::cold(lp, rhs);
    let outcome = engine.run_cold(lp.objective())?;
    Ok(engine.solution(lp, outcome))
}

/// Re-solves with a new right-hand side, reusing `hint` when it is still
/// optimal and warm-starting the dual simplex otherwise.
pub fn resolve_with_rhs(lp: &LinearProgram, new_rhs: &[f64], hint: Option<&[usize]>) -> Result<LpSolution> {
    check_dim("rhs length", lp.num_cons(), new_rhs.len())?;
    if let Some(basis) = hint {
        if let Some(sol) = try_warm(lp, new_rhs, basis, &[])? {
            return Ok(sol);
        }
    }
    solve_cold(lp, new_rhs)
}

/// Solves `lp` starting from `basis` (falls back to a cold start when the
/// basis is unusable).
pub fn solve_from_basis(lp: &LinearProgram, basis: &[usize]) -> Result<LpSolution> {
    match try_warm(lp, lp.rhs(), basis, &[])? {
        Some(sol) => Ok(sol),
        None => solve_lp(lp),
    }
}

/// Like `solve_from_basis`, with the nonbasic variables listed in `at_upper`
/// starting at their upper bound.
pub fn solve_from_start(lp: &LinearProgram, basis: &[usize], at_upper: &[usize]) -> Result<LpSolution> {
    match try_warm(lp, lp.rhs(), basis, at_upper)? {
        Some(sol) => Ok(sol),
        None => solve_lp(lp),
    }
}

fn try_warm(lp: &LinearProgram, rhs: &[f64], basis: &[usize], at_upper: &[usize]) -> Result<Option<LpSolution>> {
    let mut engine = match Engine::warm(lp, rhs, basis, at_upper) {
        Some(e) => e,
        None => return Ok(None),
    };
    match engine.run_warm() {
        Ok(Some(outcome)) => Ok(Some(engine.solution(lp, outcome))),
        Ok(None) => Ok(None),
        Err(Error::Numerical(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Basic solution `x_B = B⁻¹(b − N x_N)` with nonbasic variables at their
/// resting bound; `None` when the basis is singular.
pub fn basic_solution(lp: &LinearProgram, basis: &[usize], rhs: &[f64]) -> Option<Vec<f64>> {
    let m = lp.num_cons();
    if basis.len() != m {
        return None;
    }
    let mut x = vec![0.0; lp.num_vars()];
    let mut is_basic = vec![false; lp.num_vars()];
    for &j in basis {
        is_basic[j] = true;
    }
    for j in 0..lp.num_vars() {
        if !is_basic[j] {
            let (l, u) = (lp.lower()[j], lp.upper()[j]);
            x[j] = if l.is_finite() { l } else if u.is_finite() { u } else { 0.0 };
        }
    }
    let mut dense = vec![0.0; m * m];
    for (c, &j) in basis.iter().enumerate() {
        for &(r, v) in &lp.columns()[j] {
            dense[r * m + c] = v;
        }
    }
    let lu = Lu::factor(m, dense).ok()?;
    let mut v = rhs.to_vec();
    for j in 0..lp.num_vars() {
        if !is_basic[j] && x[j] != 0.0 {
            for &(r, a) in &lp.columns()[j] {
                v[r] -= a * x[j];
            }
        }
    }
    lu.solve(&mut v);
    for (c, &j) in basis.iter().enumerate() {
        x[j] = v[c];
    }
    Some(x)
}

/// Chooses a basis whose basic solution reproduces a given feasible point:
/// variables strictly inside their bounds are forced into the basis, and the
/// remainder is completed with the lowest-index independent columns. Returns
/// `None` when the point is not a vertex.
pub fn crossover_basis(lp: &LinearProgram, point: &[f64], tol: f64) -> Option<Vec<usize>> {
    let m = lp.num_cons();
    let n = lp.num_vars();
    if point.len() != n {
        return None;
    }
    let mut set = IndependentSet::new(m);
    let mut chosen = vec![false; n];
    for j in 0..n {
        let (l, u, v) = (lp.lower()[j], lp.upper()[j], point[j]);
        let interior = (v - l).abs() > tol && (u - v).abs() > tol;
        if interior {
            if !set.try_add(&lp.column(j)) {
                return None;
            }
            chosen[j] = true;
        }
    }
    for j in 0..n {
        if set.is_full() {
            break;
        }
        if !chosen[j] && set.try_add(&lp.column(j)) {
            chosen[j] = true;
        }
    }
    if !set.is_full() {
        return None;
    }
    Some((0..n).filter(|&j| chosen[j]).collect())
}

/// Reduced costs `c − Aᵀy`.
pub fn reduced_costs(lp: &LinearProgram, duals: &[f64]) -> Vec<f64> {
    lp.columns()
        .iter()
        .zip(lp.objective())
        .map(|(col, c)| c - col.iter().map(|&(r, a)| a * duals[r]).sum::<f64>())
        .collect()
}

/// Objective value `cᵀx`.
pub fn objective_value(lp: &LinearProgram, x: &[f64]) -> f64 {
    dot(lp.objective(), x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(c: Vec<f64>, rows: &[Vec<f64>], b: Vec<f64>) -> LinearProgram {
        LinearProgram::new(c, Matrix::from_rows(rows).unwrap(), b).unwrap()
    }

    #[test]
    fn single_variable_identity() {
        let p = lp(vec![1.0], &[vec![1.0]], vec![5.0]);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert_eq!(s.x, vec![5.0]);
        assert_eq!(s.basis, vec![0]);
        assert_eq!(s.duals, vec![1.0]);
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let p = lp(vec![1.0, 2.0, 0.5], &[vec![1.0, 1.0, -1.0], vec![0.0, 1.0, 2.0]], vec![0.0, 0.0]);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert_eq!(s.objective, 0.0);
        assert!(s.x.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let p = lp(vec![1.0, 1.0], &[vec![1.0, 1.0]], vec![-1.0]);
        assert_eq!(solve_lp(&p).unwrap().status, LpStatus::Infeasible);
        let q = lp(vec![-1.0, 0.0], &[vec![1.0, -1.0]], vec![1.0]);
        assert_eq!(solve_lp(&q).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn rank_deficient_rejected() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0]]).unwrap();
        assert!(matches!(LinearProgram::new(vec![0.0; 3], m, vec![1.0, 2.0]), Err(Error::Construction(_))));
    }

    #[test]
    fn free_and_boxed_variables() {
        // min x0 + η  s.t. η − x0 = -2 (η free), x0 in [0, 3]  → x0 = 0, η = −2
        let m = Matrix::from_rows(&[vec![-1.0, 1.0]]).unwrap();
        let p = LinearProgram::with_bounds(vec![1.0, 1.0], m, vec![-2.0], vec![0.0, f64::NEG_INFINITY], vec![3.0, f64::INFINITY]).unwrap();
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective + 2.0).abs() < 1e-12);
        // boxed maximization: min −x0 − x1 s.t. x0 + x2 = 10, x0 ≤ 3, x1 ≤ 4
        let m = Matrix::from_rows(&[vec![1.0, 0.0, 1.0]]).unwrap();
        let p = LinearProgram::with_bounds(vec![-1.0, -1.0, 0.0], m, vec![10.0], vec![0.0; 3], vec![3.0, 4.0, f64::INFINITY]).unwrap();
        let s = solve_lp(&p).unwrap();
        assert!((s.objective + 7.0).abs() < 1e-12);
    }

    #[test]
    fn warm_start_same_rhs_is_pivot_free() {
        let p = lp(vec![1.0, 2.0, 3.0, 0.0], &[vec![1.0, 1.0, 1.0, 0.0], vec![1.0, -1.0, 0.0, 1.0]], vec![4.0, 1.0]);
        let s = solve_lp(&p).unwrap();
        let r = resolve_with_rhs(&p, p.rhs(), Some(&s.basis)).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.basis, s.basis);
        assert_eq!(r.x, s.x);
    }

    #[test]
    fn crossover_recovers_vertex_basis() {
        let p = lp(vec![1.0, 2.0, 3.0, 0.0], &[vec![1.0, 1.0, 1.0, 0.0], vec![1.0, -1.0, 0.0, 1.0]], vec![4.0, 1.0]);
        let s = solve_lp(&p).unwrap();
        let b = crossover_basis(&p, &s.x, 1e-9).unwrap();
        let x = basic_solution(&p, &b, p.rhs()).unwrap();
        for (u, v) in x.iter().zip(&s.x) {
            assert!((u - v).abs() < 1e-12);
        }
    }
}
