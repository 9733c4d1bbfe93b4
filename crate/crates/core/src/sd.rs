//! Simplified stochastic decomposition and out-of-sample cuts.
//!
//! Each iteration draws one scenario, solves one subproblem exactly at the
//! candidate, and forms sample-average minorants from the stored dual
//! vertices. Older cuts fade by `(k−1)/k`, which is valid because every
//! recourse cost is nonnegative (`Q ≥ 0`).

use std::collections::{BTreeMap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::instance::{draw_scenarios, solve_subproblem, TwoStageInstance};
use crate::linalg::dot;
use crate::lshaped::{accumulate_cut, master_lp, Cut, CutKind, CutOrigin};
use crate::qp::Qp;
use crate::simplex::{solve_lp, LpStatus};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SdOptions {
    pub sigma_reg: f64,
    pub gamma: f64,
    pub min_iter: usize,
    pub max_iter: usize,
    pub stall_tol: f64,
    pub window: usize,
    pub seed: u64,
    pub tol_active: f64,
    pub solve_id: u64,
}

impl Default for SdOptions {
    fn default() -> Self {
        SdOptions {
            sigma_reg: 1.0,
            gamma: 0.2,
            min_iter: 100,
            max_iter: 1000,
            stall_tol: 1e-4,
            window: 50,
            seed: 0,
            tol_active: 1e-6,
            solve_id: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SdResult {
    pub incumbent: Vec<f64>,
    /// In-sample objective `cᵀx̂ + max_j (α̂_j + β̂_jᵀx̂)`.
    pub value_estimate: f64,
    pub cuts_active: Vec<Cut>,
    pub dual_vertices: Vec<Vec<f64>>,
    pub observations: Vec<usize>,
    pub iterations: usize,
    pub subproblem_solves: usize,
    /// Number of stored dual vertices after each iteration.
    pub vertex_history: Vec<usize>,
    /// Regularized master objective at (candidate, incumbent) per master solve.
    pub master_values: Vec<(f64, f64)>,
}

/// Cut stored as a `1/born` average; at iteration `k` it is scaled by `born/k`.
#[derive(Clone)]
struct SdCut {
    alpha: f64,
    beta: Vec<f64>,
    born: usize,
}

impl SdCut {
    fn value(&self, x: &[f64], k: usize) -> f64 {
        (self.born as f64 / k as f64) * (self.alpha + dot(&self.beta, x))
    }

    fn scaled(&self, k: usize) -> (f64, Vec<f64>) {
        let s = self.born as f64 / k as f64;
        (s * self.alpha, self.beta.iter().map(|b| s * b).collect())
    }
}

/// Dual vertices with per-scenario cached `πᵀh` and `Tᵀπ`.
struct VertexStore {
    vertices: Vec<Vec<f64>>,
    seen: HashSet<Vec<u64>>,
    cache: Vec<BTreeMap<usize, (f64, Vec<f64>)>>,
}

impl VertexStore {
    fn insert(&mut self, pi: Vec<f64>) {
        // canonicalize −0 so equal vertices hash equally
        let key: Vec<u64> = pi.iter().map(|v| (v + 0.0).to_bits()).collect();
        if self.seen.insert(key) {
            self.vertices.push(pi);
            self.cache.push(BTreeMap::new());
        }
    }

    fn terms(&mut self, inst: &TwoStageInstance, v: usize, s: usize) -> &(f64, Vec<f64>) {
        let pi = &self.vertices[v];
        self.cache[v].entry(s).or_insert_with(|| {
            let sc = &inst.scenarios[s];
            (dot(pi, &sc.h), sc.t.tr_mul_vec(pi))
        })
    }

    /// Sample-average minorant at `x` over observation counts; ties go to the
    /// lowest vertex index.
    fn cut_at(&mut self, inst: &TwoStageInstance, counts: &BTreeMap<usize, usize>, k: usize, x: &[f64]) -> SdCut {
        let mut alpha = 0.0;
        let mut beta = vec![0.0; x.len()];
        for (&s, &cnt) in counts {
            let mut best: Option<(usize, f64)> = None;
            for v in 0..self.vertices.len() {
                let (ph, tp) = self.terms(inst, v, s);
                let val = ph - dot(tp, x);
                if best.map_or(true, |(_, b)| val > b) {
                    best = Some((v, val));
                }
            }
            let (v, _) = best.expect("at least one vertex");
            let (ph, tp) = self.terms(inst, v, s).clone();
            let w = cnt as f64 / k as f64;
            alpha += w * ph;
            for (b, t) in beta.iter_mut().zip(&tp) {
                *b -= w * t;
            }
        }
        SdCut { alpha, beta, born: k }
    }
}

fn check_nonnegative_costs(inst: &TwoStageInstance) -> Result<()> {
    if inst.second_stage.q.iter().any(|&q| q < 0.0) {
        return Err(Error::Validation("stochastic decomposition needs nonnegative recourse costs".into()));
    }
    Ok(())
}

struct Master<'a> {
    inst: &'a TwoStageInstance,
    sigma: f64,
    eq: Vec<Vec<f64>>,
    eq_rhs: Vec<f64>,
}

struct MasterStep {
    x: Vec<f64>,
    /// Indices (into the cut list) with a positive multiplier.
    binding: Vec<usize>,
    at_candidate: f64,
    at_incumbent: f64,
}

impl Master<'_> {
    fn solve(&self, cuts: &[SdCut], k: usize, center: &[f64]) -> Result<MasterStep> {
        let dx = center.len();
        let c = &self.inst.first_stage.c;
        let mut h = vec![self.sigma; dx];
        h.push(0.0);
        let mut g: Vec<f64> = c.iter().zip(center).map(|(ci, xi)| ci - self.sigma * xi).collect();
        g.push(1.0);
        let mut ineq = Vec::with_capacity(cuts.len() + dx);
        let mut rhs = Vec::with_capacity(cuts.len() + dx);
        for cut in cuts {
            let (a, b) = cut.scaled(k);
            let mut row: Vec<f64> = b.iter().map(|v| -v).collect();
            row.push(1.0);
            ineq.push(row);
            rhs.push(a);
        }
        for i in 0..dx {
            let mut row = vec![0.0; dx + 1];
            row[i] = 1.0;
            ineq.push(row);
            rhs.push(0.0);
        }
        let values: Vec<f64> = cuts.iter().map(|cut| cut.value(center, k)).collect();
        let (top, eta0) = values.iter().enumerate().fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
        let mut initial = vec![top];
        initial.extend((0..dx).filter(|&i| center[i] == 0.0).map(|i| cuts.len() + i));
        let mut z0 = center.to_vec();
        z0.push(eta0);
        let qp = Qp { h: &h, g: &g, eq: &self.eq, eq_rhs: &self.eq_rhs, ineq: &ineq, ineq_rhs: &rhs };
        let sol = qp.solve(z0, &initial, 10_000)?;
        let mut x = sol.z[..dx].to_vec();
        for &i in &sol.working {
            if i >= cuts.len() {
                x[i - cuts.len()] = 0.0;
            }
        }
        let eta = sol.z[dx];
        let binding = sol
            .working
            .iter()
            .zip(&sol.multipliers)
            .filter(|&(&i, &l)| i < cuts.len() && l > 0.0)
            .map(|(&i, _)| i)
            .collect();
        let prox: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() * 0.5 * self.sigma;
        Ok(MasterStep {
            at_candidate: dot(c, &x) + eta + prox,
            at_incumbent: dot(c, center) + eta0,
            x,
            binding,
        })
    }
}

fn approx_value(inst: &TwoStageInstance, cuts: &[SdCut], k: usize, x: &[f64]) -> f64 {
    dot(&inst.first_stage.c, x) + cuts.iter().map(|c| c.value(x, k)).fold(f64::NEG_INFINITY, f64::max)
}

pub fn solve_sd(inst: &TwoStageInstance, b: &[f64], opts: &SdOptions) -> Result<SdResult> {
    check_dim("b length", inst.m1(), b.len())?;
    check_nonnegative_costs(inst)?;
    if opts.max_iter == 0 {
        return Err(Error::Config("max_iter must be positive".into()));
    }
    let dx = inst.d_x();
    let first = solve_lp(&master_lp(&inst.first_stage.c, &inst.first_stage.a, &[], b)?)?;
    match first.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err(Error::MasterInfeasible),
        LpStatus::Unbounded => return Err(Error::Numerical("first-stage problem is unbounded".into())),
    }
    let master = Master {
        inst,
        sigma: opts.sigma_reg,
        eq: (0..inst.m1()).map(|r| {
            let mut row = inst.first_stage.a.row(r).to_vec();
            row.push(0.0);
            row
        }).collect(),
        eq_rhs: b.to_vec(),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut incumbent = first.x;
    let mut candidate = incumbent.clone();
    let mut store = VertexStore { vertices: Vec::new(), seen: HashSet::new(), cache: Vec::new() };
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    let mut observations = Vec::new();
    let mut cuts: Vec<SdCut> = Vec::new();
    let mut inc_cut: Option<usize> = None;
    let mut predicted: Option<f64> = None;
    let mut inc_values: Vec<f64> = Vec::new();
    let mut vertex_history = Vec::new();
    let mut master_values = Vec::new();
    let mut subproblem_solves = 0;
    let mut k = 0;
    while k < opts.max_iter {
        k += 1;
        let s = draw_scenarios(inst, 1, &mut rng)[0];
        observations.push(s);
        *counts.entry(s).or_insert(0) += 1;
        let sp = solve_subproblem(inst, &candidate, s)?;
        subproblem_solves += 1;
        store.insert(sp.dual);
        vertex_history.push(store.vertices.len());

        let cand_cut = store.cut_at(inst, &counts, k, &candidate);
        let fresh_inc = store.cut_at(inst, &counts, k, &incumbent);
        match inc_cut {
            Some(i) => cuts[i] = fresh_inc,
            None => {
                cuts.push(fresh_inc);
                inc_cut = Some(cuts.len() - 1);
            }
        }
        cuts.push(cand_cut);
        let cand_idx = cuts.len() - 1;

        if let Some(delta) = predicted {
            let now = approx_value(inst, &cuts, k, &candidate) - approx_value(inst, &cuts, k, &incumbent);
            if delta < 0.0 && now < opts.gamma * delta {
                incumbent = candidate.clone();
                inc_cut = Some(cand_idx);
            }
        }
        let inc_value = approx_value(inst, &cuts, k, &incumbent);
        inc_values.push(inc_value);
        if k >= opts.min_iter && k > opts.window {
            let tail = &inc_values[inc_values.len() - opts.window - 1..];
            let hi = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = tail.iter().cloned().fold(f64::INFINITY, f64::min);
            if hi - lo < opts.stall_tol * (1.0 + inc_value.abs()) {
                break;
            }
        }
        if k == opts.max_iter {
            break;
        }

        let step = master.solve(&cuts, k, &incumbent)?;
        master_values.push((step.at_candidate, step.at_incumbent));
        predicted = Some(approx_value(inst, &cuts, k, &step.x) - step.at_incumbent);
        candidate = step.x;

        // keep binding cuts and the incumbent cut
        let inc = inc_cut.expect("incumbent cut exists");
        let keep: Vec<usize> = (0..cuts.len()).filter(|i| *i == inc || step.binding.contains(i)).collect();
        inc_cut = keep.iter().position(|&i| i == inc);
        cuts = keep.into_iter().map(|i| cuts[i].clone()).collect();
    }

    let value_estimate = approx_value(inst, &cuts, k, &incumbent);
    let top = value_estimate - dot(&inst.first_stage.c, &incumbent);
    let cuts_active = cuts
        .iter()
        .filter(|cut| cut.value(&incumbent, k) >= top - opts.tol_active)
        .map(|cut| {
            let (alpha, beta) = cut.scaled(k);
            Cut { alpha, beta, kind: CutKind::SdInSample, origin: CutOrigin { solve_id: opts.solve_id, iteration: cut.born } }
        })
        .collect();
    debug_assert_eq!(incumbent.len(), dx);
    Ok(SdResult {
        incumbent,
        value_estimate,
        cuts_active,
        dual_vertices: store.vertices,
        observations,
        iterations: k,
        subproblem_solves,
        vertex_history,
        master_values,
    })
}

/// Cut with duals fixed at `x_hat`, averaged over `sample`; a pointwise lower
/// bound on the sample-average recourse everywhere.
pub fn out_of_sample_cut(inst: &TwoStageInstance, x_hat: &[f64], sample: &[usize]) -> Result<Cut> {
    check_dim("x length", inst.d_x(), x_hat.len())?;
    if sample.is_empty() {
        return Err(Error::Validation("out-of-sample cut needs a nonempty sample".into()));
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &s in sample {
        *counts.entry(s).or_insert(0) += 1;
    }
    let mut alpha = 0.0;
    let mut beta = vec![0.0; inst.d_x()];
    let n = sample.len() as f64;
    for (&s, &cnt) in &counts {
        let sp = solve_subproblem(inst, x_hat, s)?;
        let sc = &inst.scenarios[s];
        accumulate_cut(&mut alpha, &mut beta, cnt as f64 / n, &sp.dual, &sc.h, &sc.t);
    }
    Ok(Cut { alpha, beta, kind: CutKind::OutOfSample, origin: CutOrigin::default() })
}

/// One shared sample of size `n`, one cut per incumbent, duplicates removed.
pub fn build_oos_bundle(inst: &TwoStageInstance, incumbents: &[(Vec<f64>, Vec<f64>)], n: usize, seed: u64) -> Result<Vec<Cut>> {
    if n == 0 {
        return Err(Error::Config("out-of-sample size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample = draw_scenarios(inst, n, &mut rng);
    let mut bundle: Vec<Cut> = Vec::new();
    for (i, (_, x_hat)) in incumbents.iter().enumerate() {
        let mut cut = out_of_sample_cut(inst, x_hat, &sample)?;
        cut.origin = CutOrigin { solve_id: i as u64, iteration: 0 };
        if !bundle.iter().any(|c| c.same_as(&cut, 1e-12)) {
            bundle.push(cut);
        }
    }
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{build_extensive_form, first_stage_objective, generate_synthetic, SyntheticSpec};

    #[test]
    fn one_scenario_reaches_extensive_optimum() {
        let spec = SyntheticSpec { num_scenarios: 1, ..SyntheticSpec::pgp2_shape(7) };
        let inst = generate_synthetic(&spec).unwrap();
        let b = inst.first_stage.b_nominal.clone();
        let r = solve_sd(&inst, &b, &SdOptions::default()).unwrap();
        let ef = solve_lp(&build_extensive_form(&inst, &b).unwrap()).unwrap();
        let f = first_stage_objective(&inst, &r.incumbent).unwrap();
        assert!((f - ef.objective).abs() <= 1e-4 * (1.0 + ef.objective.abs()), "{f} vs {}", ef.objective);
    }

    #[test]
    fn deterministic_given_seed() {
        let inst = generate_synthetic(&SyntheticSpec::pgp2_shape(7)).unwrap();
        let b = inst.first_stage.b_nominal.clone();
        let opts = SdOptions { seed: 42, max_iter: 300, ..SdOptions::default() };
        let a = solve_sd(&inst, &b, &opts).unwrap();
        let c = solve_sd(&inst, &b, &opts).unwrap();
        assert_eq!(a.incumbent, c.incumbent);
        assert_eq!(a.observations, c.observations);
    }

    #[test]
    fn one_solve_per_iteration() {
        let inst = generate_synthetic(&SyntheticSpec::pgp2_shape(7)).unwrap();
        let opts = SdOptions { seed: 1, max_iter: 200, ..SdOptions::default() };
        let r = solve_sd(&inst, &inst.first_stage.b_nominal.clone(), &opts).unwrap();
        assert_eq!(r.subproblem_solves, r.iterations);
        assert!(r.vertex_history.windows(2).all(|w| w[0] <= w[1]));
        for (cand, inc) in &r.master_values {
            assert!(cand <= &(inc + 1e-9 * (1.0 + inc.abs())));
        }
    }

    #[test]
    fn single_observation_oos_equals_exact_cut() {
        let spec = SyntheticSpec { num_scenarios: 1, ..SyntheticSpec::pgp2_shape(2) };
        let inst = generate_synthetic(&spec).unwrap();
        let x = vec![1.0, 2.0, 0.5, 0.5];
        let oos = out_of_sample_cut(&inst, &x, &[0]).unwrap();
        let exact = crate::lshaped::aggregate_cut(&inst, &x).unwrap();
        assert!(oos.same_as(&exact, 1e-12));
    }

    #[test]
    fn duplicate_incumbents_collapse() {
        let inst = generate_synthetic(&SyntheticSpec::pgp2_shape(7)).unwrap();
        let x = vec![1.0, 1.0, 0.0, 0.0];
        let b = inst.first_stage.b_nominal.clone();
        let one = build_oos_bundle(&inst, &[(b.clone(), x.clone())], 50, 3).unwrap();
        assert_eq!(one.len(), 1);
        let two = build_oos_bundle(&inst, &[(b.clone(), x.clone()), (b, x)], 50, 3).unwrap();
        assert_eq!(two.len(), 1);
    }
}
