//! Single-cut L-Shaped method.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::instance::{recourse_values, TwoStageInstance};
use crate::linalg::{dot, Matrix};
use crate::simplex::{solve_lp, LinearProgram, LpSolution, LpStatus};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutKind {
    Exact,
    SdInSample,
    OutOfSample,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CutOrigin {
    pub solve_id: u64,
    pub iteration: usize,
}

/// Affine minorant `η ≥ α + βᵀx` of the expected recourse.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cut {
    pub alpha: f64,
    pub beta: Vec<f64>,
    pub kind: CutKind,
    pub origin: CutOrigin,
}

impl Cut {
    pub fn value(&self, x: &[f64]) -> f64 {
        self.alpha + dot(&self.beta, x)
    }

    /// Same coefficients within `tol`.
    pub fn same_as(&self, other: &Cut, tol: f64) -> bool {
        (self.alpha - other.alpha).abs() <= tol
            && self.beta.len() == other.beta.len()
            && self.beta.iter().zip(&other.beta).all(|(a, b)| (a - b).abs() <= tol)
    }
}

/// Largest cut value at `x`, `None` for an empty bundle.
pub fn max_cut_value(cuts: &[Cut], x: &[f64]) -> Option<f64> {
    cuts.iter().map(|c| c.value(x)).reduce(f64::max)
}

/// Accumulates `α += w·πᵀh`, `β −= w·Tᵀπ` for one scenario.
pub(crate) fn accumulate_cut(alpha: &mut f64, beta: &mut [f64], weight: f64, pi: &[f64], h: &[f64], t: &Matrix) {
    *alpha += weight * dot(pi, h);
    let tpi = t.tr_mul_vec(pi);
    for (b, v) in beta.iter_mut().zip(tpi) {
        *b -= weight * v;
    }
}

/// Exact aggregated optimality cut at `x`, tight there.
pub fn aggregate_cut(inst: &TwoStageInstance, x: &[f64]) -> Result<Cut> {
    check_dim("x length", inst.d_x(), x.len())?;
    let subs = recourse_values(inst, x)?;
    let mut alpha = 0.0;
    let mut beta = vec![0.0; inst.d_x()];
    for (sc, sp) in inst.scenarios.iter().zip(&subs) {
        accumulate_cut(&mut alpha, &mut beta, sc.probability, &sp.dual, &sc.h, &sc.t);
    }
    Ok(Cut { alpha, beta, kind: CutKind::Exact, origin: CutOrigin::default() })
}

/// LP over `(x, η, s)`: `Ax = b`, `−βⱼᵀx + η − sⱼ = αⱼ`, objective `cᵀx + η`.
/// `η` is free, `x, s ≥ 0`. With no cuts the `η` column is dropped.
pub fn master_lp(c: &[f64], a: &Matrix, cuts: &[Cut], b: &[f64]) -> Result<LinearProgram> {
    let dx = c.len();
    check_dim("A columns", dx, a.cols())?;
    check_dim("b length", a.rows(), b.len())?;
    let m1 = a.rows();
    let k = cuts.len();
    if k == 0 {
        return LinearProgram::new(c.to_vec(), a.clone(), b.to_vec());
    }
    let n = dx + 1 + k;
    let mut mat = Matrix::zeros(m1 + k, n);
    for r in 0..m1 {
        mat.row_mut(r)[..dx].copy_from_slice(a.row(r));
    }
    let mut rhs = b.to_vec();
    for (j, cut) in cuts.iter().enumerate() {
        check_dim("cut slope length", dx, cut.beta.len())?;
        let row = mat.row_mut(m1 + j);
        for (v, bj) in row[..dx].iter_mut().zip(&cut.beta) {
            *v = -bj;
        }
        row[dx] = 1.0;
        row[dx + 1 + j] = -1.0;
        rhs.push(cut.alpha);
    }
    let mut obj = c.to_vec();
    obj.push(1.0);
    obj.extend(std::iter::repeat(0.0).take(k));
    let mut lower = vec![0.0; n];
    lower[dx] = f64::NEG_INFINITY;
    LinearProgram::with_bounds(obj, mat, rhs, lower, vec![f64::INFINITY; n])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LShapedOptions {
    pub tol_gap: f64,
    pub max_iter: usize,
    pub tol_active: f64,
    pub solve_id: u64,
}

impl Default for LShapedOptions {
    fn default() -> Self {
        LShapedOptions { tol_gap: 1e-9, max_iter: 500, tol_active: 1e-6, solve_id: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LShapedResult {
    pub x_star: Vec<f64>,
    pub eta_star: f64,
    pub v_star: f64,
    pub cuts_all: Vec<Cut>,
    pub cuts_active: Vec<Cut>,
    pub iterations: usize,
    pub converged: bool,
    /// Master optimum per iteration.
    pub lower_bounds: Vec<f64>,
    pub upper_bound: f64,
}

fn solve_master(lp: &LinearProgram) -> Result<LpSolution> {
    let sol = solve_lp(lp)?;
    match sol.status {
        LpStatus::Optimal => Ok(sol),
        LpStatus::Infeasible => Err(Error::MasterInfeasible),
        LpStatus::Unbounded => Err(Error::Numerical("master problem is unbounded; first-stage set must be bounded".into())),
    }
}

pub fn solve_lshaped(inst: &TwoStageInstance, b: &[f64], opts: &LShapedOptions) -> Result<LShapedResult> {
    check_dim("b length", inst.m1(), b.len())?;
    let dx = inst.d_x();
    let c = &inst.first_stage.c;
    let a = &inst.first_stage.a;

    let mut cuts: Vec<Cut> = Vec::new();
    let mut lower_bounds = Vec::new();
    // first iterate: minimize cᵀx alone
    let mut x = solve_master(&master_lp(c, a, &cuts, b)?)?.x;
    let mut best_upper = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    let mut eta = f64::NEG_INFINITY;
    while iterations < opts.max_iter {
        iterations += 1;
        let mut cut = aggregate_cut(inst, &x)?;
        cut.origin = CutOrigin { solve_id: opts.solve_id, iteration: iterations };
        let recourse = cut.value(&x);
        let upper = dot(c, &x) + recourse;
        best_upper = best_upper.min(upper);
        let lower = if cuts.is_empty() { f64::NEG_INFINITY } else { dot(c, &x) + eta };
        cuts.push(cut);
        if lower.is_finite() && upper - lower <= opts.tol_gap * (1.0 + lower.abs()) {
            converged = true;
            break;
        }
        if iterations == opts.max_iter {
            break;
        }
        let sol = solve_master(&master_lp(c, a, &cuts, b)?)?;
        lower_bounds.push(sol.objective);
        x = sol.x[..dx].to_vec();
        eta = sol.x[dx];
    }
    let eta_star = max_cut_value(&cuts, &x).expect("at least one cut");
    let v_star = dot(c, &x) + eta_star;
    let cuts_active = cuts.iter().filter(|cut| cut.value(&x) >= eta_star - opts.tol_active).cloned().collect();
    Ok(LShapedResult {
        x_star: x,
        eta_star,
        v_star,
        cuts_all: cuts,
        cuts_active,
        iterations,
        converged,
        lower_bounds,
        upper_bound: best_upper,
    })
}
