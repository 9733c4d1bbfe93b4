//! PLDC policies: consolidated-master cells, the L1 training problem and
//! row-wise max-minus-max evaluation.
//!
//! The training problem separates by output row `k`. Each row is solved
//! through its LP dual with delayed constraint generation: the dual has one
//! row per policy parameter and one column per pairwise inequality, and only
//! violated inequalities are brought in.

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::instance::TwoStageInstance;
use crate::io::{read_json, write_json};
use crate::linalg::{dot, Matrix};
use crate::lshaped::{master_lp, max_cut_value, solve_lshaped, Cut, LShapedOptions, LShapedResult};
use crate::sd::{build_oos_bundle, solve_sd, SdOptions};
use crate::simplex::{
    crossover_basis, solve_from_basis, solve_from_start, solve_lp, LinearProgram, LpStatus, SparseColumn,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointSource {
    LShaped,
    Sd,
    /// Plain LP solve with no recourse.
    Deterministic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingPoint {
    pub b: Vec<f64>,
    pub x_star: Vec<f64>,
    pub eta_star: f64,
    pub v_star: f64,
    pub source: PointSource,
}

/// Solved right-hand sides plus the cut bundle of the consolidated master.
/// An empty bundle means deterministic mode: the master is the plain LP and
/// policies output `x` only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingDataset {
    pub c: Vec<f64>,
    pub a: Matrix,
    pub points: Vec<TrainingPoint>,
    pub bundle: Vec<Cut>,
}

impl TrainingDataset {
    pub fn new(c: Vec<f64>, a: Matrix, bundle: Vec<Cut>) -> Self {
        TrainingDataset { c, a, points: Vec::new(), bundle }
    }

    pub fn d_x(&self) -> usize {
        self.c.len()
    }

    pub fn m1(&self) -> usize {
        self.a.rows()
    }

    /// `d_x + 1` with a bundle, `d_x` without.
    pub fn output_dim(&self) -> usize {
        self.d_x() + usize::from(!self.bundle.is_empty())
    }

    /// `(x*, η*)`, or `x*` in deterministic mode.
    pub fn target(&self, i: usize) -> Vec<f64> {
        let p = &self.points[i];
        let mut y = p.x_star.clone();
        if !self.bundle.is_empty() {
            y.push(p.eta_star);
        }
        y
    }

    pub fn validate(&self) -> Result<()> {
        check_dim("A columns", self.d_x(), self.a.cols())?;
        if self.points.is_empty() {
            return Err(Error::Validation("training dataset has no points".into()));
        }
        for p in &self.points {
            check_dim("training b length", self.m1(), p.b.len())?;
            check_dim("training x length", self.d_x(), p.x_star.len())?;
        }
        for cut in &self.bundle {
            check_dim("cut slope length", self.d_x(), cut.beta.len())?;
        }
        Ok(())
    }

    /// Appends cuts not already present (coefficients within 1e-12).
    pub fn merge_cuts(&mut self, cuts: &[Cut]) {
        for cut in cuts {
            if !self.bundle.iter().any(|c| c.same_as(cut, 1e-12)) {
                self.bundle.push(cut.clone());
            }
        }
    }

    /// Adds one L-Shaped solve: its terminal point and its active cuts.
    pub fn push_lshaped(&mut self, b: &[f64], r: &LShapedResult) {
        self.points.push(TrainingPoint {
            b: b.to_vec(),
            x_star: r.x_star.clone(),
            eta_star: r.eta_star,
            v_star: r.v_star,
            source: PointSource::LShaped,
        });
        self.merge_cuts(&r.cuts_active);
    }

    /// Solves every `b` with L-Shaped (in parallel) and collects the union of
    /// active cuts in point order.
    pub fn from_lshaped(inst: &TwoStageInstance, bs: &[Vec<f64>], opts: &LShapedOptions) -> Result<Self> {
        let results = solve_lshaped_batch(inst, bs, opts, 0)?;
        let mut ds = TrainingDataset::new(inst.first_stage.c.clone(), inst.first_stage.a.clone(), Vec::new());
        for (b, r) in bs.iter().zip(&results) {
            ds.push_lshaped(b, r);
        }
        Ok(ds)
    }

    /// Solves every `b` with SD, then builds one out-of-sample bundle over a
    /// shared sample of size `oos_samples`. `η*` is the bundle maximum at the
    /// incumbent.
    pub fn from_sd(
        inst: &TwoStageInstance,
        bs: &[Vec<f64>],
        opts: &SdOptions,
        oos_samples: usize,
        oos_seed: u64,
    ) -> Result<Self> {
        let results: Vec<_> = bs
            .par_iter()
            .enumerate()
            .map(|(i, b)| {
                let o = SdOptions { seed: opts.seed.wrapping_add(i as u64), solve_id: i as u64, ..opts.clone() };
                solve_sd(inst, b, &o)
            })
            .collect::<Result<_>>()?;
        let pairs: Vec<(Vec<f64>, Vec<f64>)> =
            bs.iter().zip(&results).map(|(b, r)| (b.clone(), r.incumbent.clone())).collect();
        let bundle = build_oos_bundle(inst, &pairs, oos_samples, oos_seed)?;
        let c = &inst.first_stage.c;
        let points = pairs
            .into_iter()
            .map(|(b, x)| {
                let eta = max_cut_value(&bundle, &x).expect("bundle is nonempty");
                TrainingPoint { v_star: dot(c, &x) + eta, b, x_star: x, eta_star: eta, source: PointSource::Sd }
            })
            .collect();
        Ok(TrainingDataset { c: c.clone(), a: inst.first_stage.a.clone(), points, bundle })
    }

    /// Deterministic mode: `min cᵀx, Ax = b, x ≥ 0` at every `b`.
    pub fn from_deterministic(c: &[f64], a: &Matrix, bs: &[Vec<f64>]) -> Result<Self> {
        let points = bs
            .par_iter()
            .enumerate()
            .map(|(i, b)| {
                let sol = solve_lp(&master_lp(c, a, &[], b)?)?;
                match sol.status {
                    LpStatus::Optimal => Ok(TrainingPoint {
                        b: b.clone(),
                        x_star: sol.x,
                        eta_star: 0.0,
                        v_star: sol.objective,
                        source: PointSource::Deterministic,
                    }),
                    LpStatus::Infeasible => Err(Error::InfeasibleRhs(i)),
                    LpStatus::Unbounded => Err(Error::Numerical(format!("LP at right-hand side {i} is unbounded"))),
                }
            })
            .collect::<Result<_>>()?;
        Ok(TrainingDataset { c: c.to_vec(), a: a.clone(), points, bundle: Vec::new() })
    }
}

/// L-Shaped solves in parallel; `solve_id` is `first_id + position`.
pub fn solve_lshaped_batch(
    inst: &TwoStageInstance,
    bs: &[Vec<f64>],
    opts: &LShapedOptions,
    first_id: u64,
) -> Result<Vec<LShapedResult>> {
    bs.par_iter()
        .enumerate()
        .map(|(i, b)| {
            let o = LShapedOptions { solve_id: first_id + i as u64, ..opts.clone() };
            solve_lshaped(inst, b, &o)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKey {
    /// Every basic index of the consolidated master.
    #[default]
    Full,
    /// Basic indices among `(x, η)` only.
    Xeta,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetSource {
    /// Train on the stored `(x*, η*)`.
    #[default]
    Dataset,
    /// Train on the consolidated-master optimum at each `b`.
    Master,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSet {
    #[default]
    All,
    /// Pairs inside one cell, plus pairs whose second point is an anchor.
    WithinCellPlusAnchor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingOptions {
    pub relaxed: bool,
    pub slack_weight: f64,
    pub cell_key: CellKey,
    pub targets: TargetSource,
    pub pairs: PairSet,
    /// Largest violation accepted from a plain-mode fit, relative to `1 + max|y|`.
    pub train_tol: f64,
    pub crossover_tol: f64,
    /// Size guard for `build_training_lp`.
    pub max_literal_vars: usize,
}

impl Default for TrainingOptions {
    fn default() -> Self {
        TrainingOptions {
            relaxed: false,
            slack_weight: 1e3,
            cell_key: CellKey::Full,
            targets: TargetSource::Dataset,
            pairs: PairSet::All,
            train_tol: 1e-6,
            crossover_tol: 1e-7,
            max_literal_vars: 200_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cell {
    pub basis_key: Vec<usize>,
    pub members: Vec<usize>,
    pub anchor: usize,
}

/// LP over `(x, η, s)`; see [`master_lp`].
pub fn build_consolidated_master(c: &[f64], a: &Matrix, bundle: &[Cut], b: &[f64]) -> Result<LinearProgram> {
    if bundle.is_empty() {
        return Err(Error::EmptyBundle);
    }
    master_lp(c, a, bundle, b)
}

struct MasterPoint {
    key: Vec<usize>,
    optimum: Vec<f64>,
}

fn solve_master_points(ds: &TrainingDataset, opts: &TrainingOptions) -> Result<Vec<MasterPoint>> {
    ds.validate()?;
    let dout = ds.output_dim();
    ds.points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let lp = master_lp(&ds.c, &ds.a, &ds.bundle, &p.b)?;
            let mut point = p.x_star.clone();
            if !ds.bundle.is_empty() {
                point.push(p.eta_star);
                point.extend(ds.bundle.iter().map(|cut| p.eta_star - cut.value(&p.x_star)));
            }
            let sol = match crossover_basis(&lp, &point, opts.crossover_tol) {
                Some(basis) => solve_from_basis(&lp, &basis)?,
                None => solve_lp(&lp)?,
            };
            if sol.status != LpStatus::Optimal {
                return Err(Error::CmInfeasible(i));
            }
            let key = match opts.cell_key {
                CellKey::Full => sol.basis,
                CellKey::Xeta => sol.basis.into_iter().filter(|&j| j < dout).collect(),
            };
            Ok(MasterPoint { key, optimum: sol.x[..dout].to_vec() })
        })
        .collect()
}

fn group_cells(keys: Vec<Vec<usize>>) -> Vec<Cell> {
    let mut index: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut cells: Vec<Cell> = Vec::new();
    for (i, key) in keys.into_iter().enumerate() {
        match index.get(&key) {
            Some(&l) => cells[l].members.push(i),
            None => {
                index.insert(key.clone(), cells.len());
                cells.push(Cell { basis_key: key, members: vec![i], anchor: i });
            }
        }
    }
    cells
}

/// Groups points by the optimal basis of the consolidated master at each `b`,
/// warm-started from the stored solution. Cells are ordered by anchor.
pub fn assign_cells(ds: &TrainingDataset, opts: &TrainingOptions) -> Result<Vec<Cell>> {
    let pts = solve_master_points(ds, opts)?;
    Ok(group_cells(pts.into_iter().map(|p| p.key).collect()))
}

/// Input components that vary across the dataset. The others have zero
/// differences in every pairwise inequality, so their slopes are fixed to 0.
fn varying_dims(ds: &TrainingDataset) -> Vec<usize> {
    let first = &ds.points[0].b;
    (0..ds.m1()).filter(|&d| ds.points.iter().any(|p| p.b[d] != first[d])).collect()
}

/// Pairwise inequalities of one output row, with parameters ordered
/// `u (cell-major), v (cell-major), z (per point)`.
struct RowProblem<'a> {
    inputs: &'a [Vec<f64>],
    cell_of: &'a [usize],
    anchors: &'a [usize],
    y: Vec<f64>,
    pairs: PairSet,
    relaxed: bool,
    weight: f64,
}

struct RowFit {
    u: Vec<f64>,
    v: Vec<f64>,
    z: Vec<f64>,
    objective: f64,
    max_violation: f64,
}

const PRICE_TOL: f64 = 1e-9;

struct DualModel {
    cols: Vec<SparseColumn>,
    cost: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    present: Vec<bool>,
}
const MAX_ROUNDS: usize = 2000;

impl RowProblem<'_> {
    fn n(&self) -> usize {
        self.inputs.len()
    }

    fn p(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    fn cells(&self) -> usize {
        self.anchors.len()
    }

    fn num_params(&self) -> usize {
        2 * self.cells() * self.p() + self.n()
    }

    fn allowed(&self, i: usize, j: usize) -> bool {
        i != j
            && match self.pairs {
                PairSet::All => true,
                PairSet::WithinCellPlusAnchor => {
                    self.cell_of[i] == self.cell_of[j] || self.anchors[self.cell_of[j]] == j
                }
            }
    }

    fn id(&self, fam: usize, i: usize, j: usize) -> usize {
        (fam * self.n() + i) * self.n() + j
    }

    fn decode(&self, id: usize) -> (usize, usize, usize) {
        let n = self.n();
        (id / (n * n), (id / n) % n, id % n)
    }

    /// Slope block offset for family `fam` and the cell of `j`.
    fn slope_offset(&self, fam: usize, j: usize) -> usize {
        (fam * self.cells() + self.cell_of[j]) * self.p()
    }

    fn rhs(&self, fam: usize, i: usize, j: usize) -> f64 {
        if fam == 0 {
            self.y[j] - self.y[i]
        } else {
            0.0
        }
    }

    /// `z_i − z_j − s·(bⁱ − bʲ) ≥ r` with `s = u` (family 0) or `v` (family 1).
    fn column(&self, fam: usize, i: usize, j: usize) -> SparseColumn {
        let zb = 2 * self.cells() * self.p();
        let off = self.slope_offset(fam, j);
        let mut col: SparseColumn = Vec::with_capacity(self.p() + 2);
        for (d, (bi, bj)) in self.inputs[i].iter().zip(&self.inputs[j]).enumerate() {
            let delta = bi - bj;
            if delta != 0.0 {
                col.push((off + d, -delta));
            }
        }
        col.push((zb + i, 1.0));
        col.push((zb + j, -1.0));
        col
    }

    fn violation(&self, fam: usize, i: usize, j: usize, w: &[f64]) -> f64 {
        let zb = 2 * self.cells() * self.p();
        let off = self.slope_offset(fam, j);
        let mut lhs = w[zb + i] - w[zb + j];
        for (d, (bi, bj)) in self.inputs[i].iter().zip(&self.inputs[j]).enumerate() {
            lhs -= w[off + d] * (bi - bj);
        }
        self.rhs(fam, i, j) - lhs
    }

    /// Violated constraints not yet in the model, worst first, plus the largest
    /// and total violation over every constraint.
    fn scan(&self, w: &[f64], present: &[bool]) -> (Vec<(f64, usize)>, f64, f64) {
        let n = self.n();
        let mut found = Vec::new();
        let mut worst = 0.0f64;
        let mut total = 0.0;
        for fam in 0..2 {
            for i in 0..n {
                for j in 0..n {
                    if !self.allowed(i, j) {
                        continue;
                    }
                    let viol = self.violation(fam, i, j, w);
                    if viol > 0.0 {
                        worst = worst.max(viol);
                        total += viol;
                    }
                    let id = self.id(fam, i, j);
                    if viol > PRICE_TOL && !present[id] {
                        found.push((viol, id));
                    }
                }
            }
        }
        found.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        (found, worst, total)
    }

    fn split(&self, w: Vec<f64>, max_violation: f64, total: f64) -> RowFit {
        let lp = self.cells() * self.p();
        let objective = w.iter().map(|v| v.abs()).sum::<f64>() + if self.relaxed { self.weight * total } else { 0.0 };
        RowFit {
            u: w[..lp].to_vec(),
            v: w[lp..2 * lp].to_vec(),
            z: w[2 * lp..].to_vec(),
            objective,
            max_violation,
        }
    }

    /// Dual of `min ‖w‖₁ s.t. aᶜ·w ≥ rᶜ`:
    /// `min −Σ rᶜλᶜ s.t. Σ λᶜaᶜ − t = 0, −1 ≤ t ≤ 1, λ ≥ 0` (λ ≤ W when
    /// relaxed). The row duals give `w = −π`.
    fn solve(&self) -> Result<RowFit> {
        let n = self.n();
        let m = self.num_params();
        if n <= 1 {
            return Ok(self.split(vec![0.0; m], 0.0, 0.0));
        }
        let lam_upper = if self.relaxed { self.weight } else { f64::INFINITY };
        let mut model = DualModel {
            cols: (0..m).map(|q| vec![(q, -1.0)]).collect(),
            cost: vec![0.0; m],
            lower: vec![-1.0; m],
            upper: vec![1.0; m],
            present: vec![false; 2 * n * n],
        };
        let add = |model: &mut DualModel, id: usize| {
            let (fam, i, j) = self.decode(id);
            model.present[id] = true;
            model.cols.push(self.column(fam, i, j));
            model.cost.push(-self.rhs(fam, i, j));
            model.lower.push(0.0);
            model.upper.push(lam_upper);
        };
        // affine consistency inside each cell, through its anchor
        for i in 0..n {
            let a = self.anchors[self.cell_of[i]];
            if i != a {
                for fam in 0..2 {
                    add(&mut model, self.id(fam, i, a));
                    add(&mut model, self.id(fam, a, i));
                }
            }
        }
        let cap = n + m;
        let mut basis: Vec<usize> = (0..m).collect();
        let mut at_upper: Vec<usize> = Vec::new();
        for _ in 0..MAX_ROUNDS {
            let lp = LinearProgram::from_columns(
                model.cost.clone(),
                m,
                model.cols.clone(),
                vec![0.0; m],
                model.lower.clone(),
                model.upper.clone(),
            )?;
            let sol = solve_from_start(&lp, &basis, &at_upper)?;
            match sol.status {
                LpStatus::Optimal => {}
                LpStatus::Unbounded if !self.relaxed => return Err(Error::TrainingInfeasible),
                status => return Err(Error::Numerical(format!("training dual ended {status:?}"))),
            }
            let w: Vec<f64> = sol.duals.iter().map(|p| -p).collect();
            let (found, worst, total) = self.scan(&w, &model.present);
            if found.is_empty() {
                return Ok(self.split(w, worst, total));
            }
            let mut is_basic = vec![false; model.cols.len()];
            for &j in &sol.basis {
                is_basic[j] = true;
            }
            at_upper = (0..model.cols.len())
                .filter(|&j| !is_basic[j] && model.upper[j].is_finite() && sol.x[j] >= model.upper[j])
                .collect();
            basis = sol.basis;
            for &(_, id) in found.iter().take(cap) {
                add(&mut model, id);
            }
        }
        Err(Error::Numerical(format!("constraint generation exceeded {MAX_ROUNDS} rounds")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Anchor {
    pub b: Vec<f64>,
    /// `(x*, η*)` at `b`, or `x*` in deterministic mode.
    pub y: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyMetadata {
    pub relaxed: bool,
    pub slack_weight: f64,
    pub train_tol: f64,
    pub cell_key: CellKey,
    pub targets: TargetSource,
    pub pointwise: bool,
    pub num_points: usize,
    /// Training objective summed over output rows.
    pub objective: f64,
    /// Largest pairwise-inequality violation of the fitted parameters.
    pub max_slack: f64,
    pub source: Option<PointSource>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PldcPolicy {
    pub c: Vec<f64>,
    pub a: Matrix,
    pub cells: Vec<Cell>,
    pub anchors: Vec<Anchor>,
    /// Per cell, `output_dim × (m1 + |bundle|)`; the cut-intercept block is zero.
    pub u: Vec<Matrix>,
    pub v: Vec<Matrix>,
    /// Per training point, length `output_dim`.
    pub z: Vec<Vec<f64>>,
    pub bundle: Vec<Cut>,
    pub alpha_stack: Vec<f64>,
    pub metadata: PolicyMetadata,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyOutput {
    pub x_hat: Vec<f64>,
    /// `None` in deterministic mode.
    pub eta_hat: Option<f64>,
}

impl PldcPolicy {
    pub fn m1(&self) -> usize {
        self.a.rows()
    }

    pub fn d_x(&self) -> usize {
        self.c.len()
    }

    pub fn output_dim(&self) -> usize {
        self.d_x() + usize::from(!self.bundle.is_empty())
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    /// The two max terms of row `k` at `b`.
    pub fn max_terms(&self, k: usize, b: &[f64]) -> (f64, f64) {
        let m1 = self.m1();
        let mut first = f64::NEG_INFINITY;
        let mut second = f64::NEG_INFINITY;
        for (l, (cell, anchor)) in self.cells.iter().zip(&self.anchors).enumerate() {
            let urow = &self.u[l].row(k)[..m1];
            let vrow = &self.v[l].row(k)[..m1];
            let mut su = 0.0;
            let mut sv = 0.0;
            for d in 0..m1 {
                let delta = b[d] - anchor.b[d];
                su += urow[d] * delta;
                sv += vrow[d] * delta;
            }
            let z = self.z[cell.anchor][k];
            first = first.max(su + anchor.y[k] + z);
            second = second.max(sv + z);
        }
        (first, second)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let p: PldcPolicy = read_json(path)?;
        p.check()?;
        Ok(p)
    }

    fn check(&self) -> Result<()> {
        if self.cells.is_empty() {
            return Err(Error::EmptyPolicy);
        }
        let width = self.m1() + self.bundle.len();
        let dout = self.output_dim();
        check_dim("A columns", self.d_x(), self.a.cols())?;
        check_dim("anchor count", self.cells.len(), self.anchors.len())?;
        check_dim("u blocks", self.cells.len(), self.u.len())?;
        check_dim("v blocks", self.cells.len(), self.v.len())?;
        for m in self.u.iter().chain(&self.v) {
            check_dim("slope rows", dout, m.rows())?;
            check_dim("slope columns", width, m.cols())?;
        }
        for (cell, anchor) in self.cells.iter().zip(&self.anchors) {
            check_dim("anchor b length", self.m1(), anchor.b.len())?;
            check_dim("anchor target length", dout, anchor.y.len())?;
            if cell.anchor >= self.z.len() {
                return Err(Error::Validation(format!("anchor {} has no offset vector", cell.anchor)));
            }
        }
        for z in &self.z {
            check_dim("offset length", dout, z.len())?;
        }
        Ok(())
    }
}

/// Row-wise `max_ℓ[uℓ(b − bℓ) + yℓ + zℓ] − max_ℓ[vℓ(b − bℓ) + zℓ]`.
pub fn apply_policy(policy: &PldcPolicy, b: &[f64]) -> Result<PolicyOutput> {
    if policy.cells.is_empty() {
        return Err(Error::EmptyPolicy);
    }
    check_dim("b length", policy.m1(), b.len())?;
    let out: Vec<f64> = (0..policy.output_dim())
        .map(|k| {
            let (p, q) = policy.max_terms(k, b);
            p - q
        })
        .collect();
    let dx = policy.d_x();
    Ok(PolicyOutput { eta_hat: out.get(dx).copied(), x_hat: out[..dx].to_vec() })
}

/// `cᵀx̂ + max over the bundle of (α + βᵀx̂)`. A lower bound on the true
/// objective at `x̂` when the cuts are exact.
pub fn corrected_objective(policy: &PldcPolicy, x_hat: &[f64]) -> Result<f64> {
    check_dim("x length", policy.d_x(), x_hat.len())?;
    let top = max_cut_value(&policy.bundle, x_hat).ok_or(Error::EmptyBundle)?;
    Ok(dot(&policy.c, x_hat) + top)
}

fn train(
    ds: &TrainingDataset,
    cells: Vec<Cell>,
    targets: Vec<Vec<f64>>,
    opts: &TrainingOptions,
    pointwise: bool,
) -> Result<PldcPolicy> {
    let n = ds.points.len();
    let dout = ds.output_dim();
    let dims = varying_dims(ds);
    let inputs: Vec<Vec<f64>> = ds.points.iter().map(|p| dims.iter().map(|&d| p.b[d]).collect()).collect();
    let mut cell_of = vec![0; n];
    for (l, cell) in cells.iter().enumerate() {
        for &i in &cell.members {
            cell_of[i] = l;
        }
    }
    let anchors: Vec<usize> = cells.iter().map(|c| c.anchor).collect();
    let rows: Vec<RowFit> = (0..dout)
        .into_par_iter()
        .map(|k| {
            RowProblem {
                inputs: &inputs,
                cell_of: &cell_of,
                anchors: &anchors,
                y: targets.iter().map(|t| t[k]).collect(),
                pairs: opts.pairs,
                relaxed: opts.relaxed,
                weight: opts.slack_weight,
            }
            .solve()
        })
        .collect::<Result<_>>()?;

    let width = ds.m1() + ds.bundle.len();
    let p = dims.len();
    let mut u = vec![Matrix::zeros(dout, width); cells.len()];
    let mut v = vec![Matrix::zeros(dout, width); cells.len()];
    let mut z = vec![vec![0.0; dout]; n];
    for (k, row) in rows.iter().enumerate() {
        for l in 0..cells.len() {
            for (pos, &d) in dims.iter().enumerate() {
                u[l].set(k, d, row.u[l * p + pos]);
                v[l].set(k, d, row.v[l * p + pos]);
            }
        }
        for (i, zi) in z.iter_mut().enumerate() {
            zi[k] = row.z[i];
        }
    }
    let max_slack = rows.iter().map(|r| r.max_violation).fold(0.0, f64::max);
    let scale = 1.0 + targets.iter().flatten().fold(0.0f64, |m, y| m.max(y.abs()));
    if !opts.relaxed && max_slack > opts.train_tol * scale {
        return Err(Error::Numerical(format!("trained parameters violate the training constraints by {max_slack:e}")));
    }
    let source = ds.points.first().map(|p| p.source);
    Ok(PldcPolicy {
        c: ds.c.clone(),
        a: ds.a.clone(),
        anchors: cells.iter().map(|c| Anchor { b: ds.points[c.anchor].b.clone(), y: targets[c.anchor].clone() }).collect(),
        cells,
        u,
        v,
        z,
        alpha_stack: ds.bundle.iter().map(|c| c.alpha).collect(),
        bundle: ds.bundle.clone(),
        metadata: PolicyMetadata {
            relaxed: opts.relaxed,
            slack_weight: opts.slack_weight,
            train_tol: opts.train_tol,
            cell_key: opts.cell_key,
            targets: opts.targets,
            pointwise,
            num_points: n,
            objective: rows.iter().map(|r| r.objective).sum(),
            max_slack,
            source,
            seed: 0,
        },
    })
}

fn targets_for(ds: &TrainingDataset, pts: &[MasterPoint], opts: &TrainingOptions) -> Vec<Vec<f64>> {
    match opts.targets {
        TargetSource::Dataset => (0..ds.points.len()).map(|i| ds.target(i)).collect(),
        TargetSource::Master => pts.iter().map(|p| p.optimum.clone()).collect(),
    }
}

/// Cells from the consolidated master, then the training problem solved row
/// by row. Plain mode fails with `TrainingInfeasible` when no exact fit exists.
pub fn fit_policy(ds: &TrainingDataset, opts: &TrainingOptions) -> Result<PldcPolicy> {
    let pts = solve_master_points(ds, opts)?;
    let targets = targets_for(ds, &pts, opts);
    let cells = group_cells(pts.into_iter().map(|p| p.key).collect());
    train(ds, cells, targets, opts, false)
}

/// Same training problem with one piece per data point.
pub fn fit_pointwise_baseline(ds: &TrainingDataset, opts: &TrainingOptions) -> Result<PldcPolicy> {
    let pts = solve_master_points(ds, opts)?;
    let targets = targets_for(ds, &pts, opts);
    let cells = pts
        .into_iter()
        .enumerate()
        .map(|(i, p)| Cell { basis_key: p.key, members: vec![i], anchor: i })
        .collect();
    train(ds, cells, targets, opts, true)
}

/// The training problem written out in full: split variables
/// `u±, v± (cell, row, b-component), z± (point, row)`, one surplus per
/// inequality and, when relaxed, one penalized slack per inequality.
/// Every ordered pair is present, `i = j` included. Uses dataset targets.
pub fn build_training_lp(ds: &TrainingDataset, cells: &[Cell], opts: &TrainingOptions) -> Result<LinearProgram> {
    ds.validate()?;
    let n = ds.points.len();
    let m1 = ds.m1();
    let dout = ds.output_dim();
    let nc = cells.len();
    let mut cell_of = vec![usize::MAX; n];
    for (l, cell) in cells.iter().enumerate() {
        for &i in &cell.members {
            cell_of[i] = l;
        }
    }
    if cell_of.contains(&usize::MAX) {
        return Err(Error::Validation("cells do not cover every training point".into()));
    }
    let allowed = |i: usize, j: usize| match opts.pairs {
        PairSet::All => true,
        PairSet::WithinCellPlusAnchor => i == j || cell_of[i] == cell_of[j] || cells[cell_of[j]].anchor == j,
    };
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|&(i, j)| allowed(i, j)).collect();
    let block = 4 * nc * m1 + 2 * n;
    let ncons = dout * pairs.len() * 2;
    let nvars = dout * block + ncons * (1 + usize::from(opts.relaxed));
    if nvars > opts.max_literal_vars {
        return Err(Error::TooLarge(nvars, opts.max_literal_vars));
    }
    let targets: Vec<Vec<f64>> = (0..n).map(|i| ds.target(i)).collect();
    let mut cols: Vec<SparseColumn> = vec![Vec::new(); nvars];
    let mut rhs = Vec::with_capacity(ncons);
    let mut row = 0;
    for k in 0..dout {
        let base = k * block;
        for &(i, j) in &pairs {
            let l = cell_of[j];
            for fam in 0..2 {
                let plus = base + 2 * fam * nc * m1 + l * m1;
                let minus = plus + nc * m1;
                for d in 0..m1 {
                    let delta = ds.points[i].b[d] - ds.points[j].b[d];
                    if delta != 0.0 {
                        cols[plus + d].push((row, -delta));
                        cols[minus + d].push((row, delta));
                    }
                }
                if i != j {
                    let zp = base + 4 * nc * m1;
                    let zm = zp + n;
                    cols[zp + i].push((row, 1.0));
                    cols[zm + i].push((row, -1.0));
                    cols[zp + j].push((row, -1.0));
                    cols[zm + j].push((row, 1.0));
                }
                cols[dout * block + row].push((row, -1.0));
                if opts.relaxed {
                    cols[dout * block + ncons + row].push((row, 1.0));
                }
                rhs.push(if fam == 0 { targets[j][k] - targets[i][k] } else { 0.0 });
                row += 1;
            }
        }
    }
    let mut obj = vec![1.0; dout * block];
    obj.extend(std::iter::repeat(0.0).take(ncons));
    if opts.relaxed {
        obj.extend(std::iter::repeat(opts.slack_weight).take(ncons));
    }
    LinearProgram::from_columns(obj, ncons, cols, rhs, vec![0.0; nvars], vec![f64::INFINITY; nvars])
}
