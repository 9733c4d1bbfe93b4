//! Two-stage stochastic LP data model:
//! `min cᵀx + E[Q(x, ω)]` s.t. `Ax = b, x ≥ 0`, with
//! `Q(x, ω) = min qᵀy` s.t. `Wy = h(ω) − T(ω)x, y ≥ 0`.

mod json;
mod smps;
mod synthetic;

use std::collections::BTreeMap;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rayon::prelude::*;

pub use json::{instance_from_json, instance_to_json, write_instance};
pub use smps::{parse_smps, read_smps};
pub use synthetic::{generate_synthetic, mean_value_instance, SyntheticSpec};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, has_unit_column_per_row, row_rank, Matrix};
use crate::simplex::{solve_lp, LinearProgram, LpStatus};

#[derive(Clone, Debug, PartialEq)]
pub struct FirstStage {
    pub c: Vec<f64>,
    pub a: Matrix,
    pub b_nominal: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SecondStage {
    pub q: Vec<f64>,
    pub w: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub probability: f64,
    pub h: Vec<f64>,
    pub t: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TwoStageInstance {
    pub first_stage: FirstStage,
    pub second_stage: SecondStage,
    pub scenarios: Vec<Scenario>,
    pub perturbed_rows: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Subproblem {
    pub value: f64,
    pub dual: Vec<f64>,
    pub y: Vec<f64>,
}

impl TwoStageInstance {
    pub fn d_x(&self) -> usize {
        self.first_stage.c.len()
    }

    pub fn m1(&self) -> usize {
        self.first_stage.a.rows()
    }

    pub fn m2(&self) -> usize {
        self.second_stage.w.rows()
    }

    pub fn n_y(&self) -> usize {
        self.second_stage.q.len()
    }

    pub fn validate(&self) -> Result<()> {
        let fs = &self.first_stage;
        let (m1, dx) = (fs.a.rows(), fs.a.cols());
        check_dim("first-stage cost length", dx, fs.c.len())?;
        check_dim("first-stage rhs length", m1, fs.b_nominal.len())?;
        let ss = &self.second_stage;
        let (m2, ny) = (ss.w.rows(), ss.w.cols());
        check_dim("recourse cost length", ny, ss.q.len())?;
        if self.scenarios.is_empty() {
            return Err(Error::Validation("instance has no scenarios".into()));
        }
        for (k, s) in self.scenarios.iter().enumerate() {
            check_dim(&format!("scenario {k} h length"), m2, s.h.len())?;
            check_dim(&format!("scenario {k} T rows"), m2, s.t.rows())?;
            check_dim(&format!("scenario {k} T cols"), dx, s.t.cols())?;
            if !(s.probability > 0.0 && s.probability <= 1.0) {
                return Err(Error::Validation(format!("scenario {k} probability {} outside (0,1]", s.probability)));
            }
        }
        let total: f64 = self.scenarios.iter().map(|s| s.probability).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Validation(format!("scenario probabilities sum to {total}")));
        }
        for &r in &self.perturbed_rows {
            if r >= m1 {
                return Err(Error::Validation(format!("perturbed row {r} out of range")));
            }
        }
        if !self.perturbed_rows.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Validation("perturbed rows must be strictly increasing".into()));
        }
        if m1 > dx || (!has_unit_column_per_row(&fs.a) && row_rank(&fs.a) < m1) {
            return Err(Error::Validation("first-stage matrix lacks full row rank".into()));
        }
        if m2 > ny || (!has_unit_column_per_row(&ss.w) && row_rank(&ss.w) < m2) {
            return Err(Error::Validation("recourse matrix lacks full row rank".into()));
        }
        Ok(())
    }

    /// First-stage feasibility LP `min cᵀx s.t. Ax = b, x ≥ 0`.
    pub fn first_stage_lp(&self, b: &[f64]) -> Result<LinearProgram> {
        check_dim("b length", self.m1(), b.len())?;
        LinearProgram::new(self.first_stage.c.clone(), self.first_stage.a.clone(), b.to_vec())
    }

    fn recourse_lp(&self, rhs: Vec<f64>) -> Result<LinearProgram> {
        LinearProgram::new(self.second_stage.q.clone(), self.second_stage.w.clone(), rhs)
    }

    /// Expected h and T; used for mean-value problems.
    pub fn mean_scenario(&self) -> Scenario {
        let mut h = vec![0.0; self.m2()];
        let mut t = Matrix::zeros(self.m2(), self.d_x());
        for s in &self.scenarios {
            for (acc, v) in h.iter_mut().zip(&s.h) {
                *acc += s.probability * v;
            }
            for r in 0..self.m2() {
                for c in 0..self.d_x() {
                    t.set(r, c, t.get(r, c) + s.probability * s.t.get(r, c));
                }
            }
        }
        Scenario { probability: 1.0, h, t }
    }
}

pub fn load_instance(path: &Path) -> Result<TwoStageInstance> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let inst = match ext.as_str() {
        "cor" | "core" | "mps" => read_smps(path)?,
        _ => {
            let text = std::fs::read_to_string(path)?;
            instance_from_json(&text).map_err(|e| match e {
                Error::Parse { location, message } => {
                    Error::Parse { location: format!("{}:{}", path.display(), location), message }
                }
                other => other,
            })?
        }
    };
    Ok(inst)
}

/// Block LP over `(x, y¹, …, y^S)` with objective `cᵀx + Σ pˢ qᵀyˢ`.
pub fn build_extensive_form(inst: &TwoStageInstance, b: &[f64]) -> Result<LinearProgram> {
    check_dim("b length", inst.m1(), b.len())?;
    let (dx, ny, m1, m2) = (inst.d_x(), inst.n_y(), inst.m1(), inst.m2());
    let s_count = inst.scenarios.len();
    let rows = m1 + s_count * m2;
    let cols = dx + s_count * ny;
    let mut a = Matrix::zeros(rows, cols);
    let mut rhs = Vec::with_capacity(rows);
    let mut c = inst.first_stage.c.clone();
    for r in 0..m1 {
        a.row_mut(r)[..dx].copy_from_slice(inst.first_stage.a.row(r));
    }
    rhs.extend_from_slice(b);
    for (s, sc) in inst.scenarios.iter().enumerate() {
        let row0 = m1 + s * m2;
        let col0 = dx + s * ny;
        for r in 0..m2 {
            let row = a.row_mut(row0 + r);
            row[..dx].copy_from_slice(sc.t.row(r));
            row[col0..col0 + ny].copy_from_slice(inst.second_stage.w.row(r));
        }
        rhs.extend_from_slice(&sc.h);
        c.extend(inst.second_stage.q.iter().map(|q| sc.probability * q));
    }
    LinearProgram::new(c, a, rhs)
}

/// `h − T x` for one scenario.
pub fn recourse_rhs(inst: &TwoStageInstance, x: &[f64], scenario: usize) -> Vec<f64> {
    let sc = &inst.scenarios[scenario];
    let tx = sc.t.mul_vec(x);
    sc.h.iter().zip(tx).map(|(h, v)| h - v).collect()
}

pub fn solve_subproblem(inst: &TwoStageInstance, x: &[f64], scenario: usize) -> Result<Subproblem> {
    check_dim("x length", inst.d_x(), x.len())?;
    if scenario >= inst.scenarios.len() {
        return Err(Error::Validation(format!("scenario index {scenario} out of range")));
    }
    let rhs = recourse_rhs(inst, x, scenario);
    let lp = inst.recourse_lp(rhs.clone())?;
    let sol = solve_lp(&lp)?;
    match sol.status {
        LpStatus::Optimal => {
            // strong duality pins the value to πᵀ(h − Tx)
            let value = dot(&sol.duals, &rhs);
            Ok(Subproblem { value, dual: sol.duals, y: sol.x })
        }
        LpStatus::Infeasible => Err(Error::SubproblemInfeasible(scenario)),
        LpStatus::Unbounded => Err(Error::SubproblemUnbounded(scenario)),
    }
}

/// Recourse values of every scenario at `x`, in scenario order.
pub fn recourse_values(inst: &TwoStageInstance, x: &[f64]) -> Result<Vec<Subproblem>> {
    (0..inst.scenarios.len()).into_par_iter().map(|s| solve_subproblem(inst, x, s)).collect()
}

pub fn first_stage_objective(inst: &TwoStageInstance, x: &[f64]) -> Result<f64> {
    let subs = recourse_values(inst, x)?;
    let expected: f64 = inst.scenarios.iter().zip(&subs).map(|(s, q)| s.probability * q.value).sum();
    Ok(dot(&inst.first_stage.c, x) + expected)
}

/// `n` scenario indices drawn with replacement according to the scenario
/// probabilities.
pub fn draw_scenarios<R: Rng>(inst: &TwoStageInstance, n: usize, rng: &mut R) -> Vec<usize> {
    let dist = WeightedIndex::new(inst.scenarios.iter().map(|s| s.probability)).expect("validated probabilities");
    (0..n).map(|_| dist.sample(rng)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleAverage {
    pub value: f64,
    /// `Q(x, ωᵗ)` per observation.
    pub per_observation: Vec<f64>,
}

/// `cᵀx + (1/N) Σ_t Q(x, ωᵗ)` over a sample of scenario indices.
pub fn sample_average_objective(inst: &TwoStageInstance, x: &[f64], sample: &[usize]) -> Result<SampleAverage> {
    if sample.is_empty() {
        return Err(Error::Validation("empty sample".into()));
    }
    let mut cache: BTreeMap<usize, f64> = BTreeMap::new();
    let mut per_observation = Vec::with_capacity(sample.len());
    for &s in sample {
        let q = match cache.get(&s) {
            Some(&v) => v,
            None => {
                let v = solve_subproblem(inst, x, s)?.value;
                cache.insert(s, v);
                v
            }
        };
        per_observation.push(q);
    }
    let mean = per_observation.iter().sum::<f64>() / sample.len() as f64;
    Ok(SampleAverage { value: dot(&inst.first_stage.c, x) + mean, per_observation })
}
