//! Round-based policy refinement: evaluate on a fresh batch, stop once both
//! confidence bounds are small, otherwise append the infeasible and
//! suboptimal solves and refit.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::TwoStageInstance;
use crate::linalg::dot;
use crate::lshaped::{max_cut_value, Cut, LShapedOptions};
use crate::policy::{fit_policy, solve_lshaped_batch, PldcPolicy, PointSource, TrainingDataset, TrainingOptions, TrainingPoint};
use crate::sampling::{sample_rhs, RhsGeneratorConfig};
use crate::sd::{build_oos_bundle, solve_sd, SdOptions};
use crate::stats::{
    ci_upper, feasibility_stats, hypothesis_test_sd_adaptive, suboptimality_stats_lshaped, GapKind, OptimalityStats, EPS_FEAS,
    EPS_OPT_SMALL, Z_95,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    #[default]
    Lshaped,
    Sd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SequentialConfig {
    pub n0: usize,
    pub growth: f64,
    pub z_score: f64,
    /// Threshold on the feasibility bound.
    pub rho: f64,
    /// Threshold on the optimality bound.
    pub epsilon: f64,
    pub eps_feas: f64,
    pub eps_opt: f64,
    pub gap: GapKind,
    pub min_rounds: usize,
    pub max_rounds: usize,
    pub solver: SolverKind,
    /// SD mode: test significance.
    pub nu: f64,
    /// SD mode: first and largest test sample sizes.
    pub m_start: usize,
    pub m_max: usize,
    /// SD mode: out-of-sample cut sample size.
    pub oos_samples: usize,
    pub seed: u64,
    pub lshaped: LShapedOptions,
    pub sd: SdOptions,
    pub training: TrainingOptions,
}

impl Default for SequentialConfig {
    fn default() -> Self {
        SequentialConfig {
            n0: 2,
            growth: 1.1,
            z_score: Z_95,
            rho: 1e-4,
            epsilon: 1e-4,
            eps_feas: EPS_FEAS,
            eps_opt: EPS_OPT_SMALL,
            gap: GapKind::Relative,
            min_rounds: 20,
            max_rounds: 80,
            solver: SolverKind::Lshaped,
            nu: 0.05,
            m_start: 30,
            m_max: 2000,
            oos_samples: 2000,
            seed: 0,
            lshaped: LShapedOptions::default(),
            sd: SdOptions::default(),
            training: TrainingOptions::default(),
        }
    }
}

impl SequentialConfig {
    pub fn check(&self) -> Result<()> {
        if self.n0 == 0 {
            return Err(Error::Config("n0 must be at least 1".into()));
        }
        if !(self.growth > 1.0) {
            return Err(Error::Config("growth must exceed 1".into()));
        }
        for (name, v) in [("rho", self.rho), ("epsilon", self.epsilon)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1)")));
            }
        }
        if self.max_rounds == 0 || self.min_rounds > self.max_rounds {
            return Err(Error::Config("need 0 < max_rounds and min_rounds ≤ max_rounds".into()));
        }
        Ok(())
    }
}

/// Where batches come from.
#[derive(Clone, Debug, PartialEq)]
pub enum RhsSource {
    /// Uniform draws with replacement.
    Pool(Vec<Vec<f64>>),
    /// A fresh design of size `n_t` per round, seeded `seed + round`.
    Generator { config: RhsGeneratorConfig, b_nominal: Vec<f64> },
}

impl RhsSource {
    fn draw(&self, seed: u64, round: usize, n: usize) -> Result<Vec<Vec<f64>>> {
        match self {
            RhsSource::Pool(pool) => {
                if pool.is_empty() {
                    return Err(Error::Config("empty right-hand-side pool".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(round as u64);
                Ok((0..n).map(|_| pool[rng.gen_range(0..pool.len())].clone()).collect())
            }
            RhsSource::Generator { config, b_nominal } => {
                let cfg = RhsGeneratorConfig {
                    horizon: n,
                    seed: config.seed.wrapping_add(round as u64),
                    ..config.clone()
                };
                sample_rhs(&cfg, b_nominal)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoundRecord {
    pub round: usize,
    pub n_t: usize,
    pub infeasible_fraction: f64,
    pub infeasible_ci: f64,
    /// Number of policy-feasible batch points.
    pub m_t: usize,
    /// `p` (L-Shaped) or `r` (SD); `None` when no point was feasible.
    pub suboptimal_fraction: Option<f64>,
    pub suboptimal_ci: Option<f64>,
    pub cells: usize,
    pub bundle_size: usize,
    pub training_size: usize,
    pub appended: usize,
    pub cumulative_observations: usize,
    pub relaxed: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxRounds,
}

#[derive(Clone, Debug)]
pub struct SequentialResult {
    pub policy: PldcPolicy,
    pub dataset: TrainingDataset,
    pub history: Vec<RoundRecord>,
    pub stopped: StopReason,
    /// First round whose feasibility bound was at most `rho`.
    pub t_feas: Option<usize>,
    /// First round whose two bounds were both within threshold.
    pub t_opt: Option<usize>,
}

struct Solved {
    point: TrainingPoint,
    cuts: Vec<Cut>,
}

fn solve_batch(inst: &TwoStageInstance, cfg: &SequentialConfig, bs: &[Vec<f64>], first_id: u64) -> Result<Vec<Solved>> {
    match cfg.solver {
        SolverKind::Lshaped => {
            let results = solve_lshaped_batch(inst, bs, &cfg.lshaped, first_id)?;
            Ok(bs
                .iter()
                .zip(results)
                .map(|(b, r)| Solved {
                    point: TrainingPoint {
                        b: b.clone(),
                        x_star: r.x_star,
                        eta_star: r.eta_star,
                        v_star: r.v_star,
                        source: PointSource::LShaped,
                    },
                    cuts: r.cuts_active,
                })
                .collect())
        }
        SolverKind::Sd => bs
            .par_iter()
            .enumerate()
            .map(|(i, b)| {
                let id = first_id + i as u64;
                let opts = SdOptions { seed: cfg.sd.seed.wrapping_add(id), solve_id: id, ..cfg.sd.clone() };
                let r = solve_sd(inst, b, &opts)?;
                let cuts = build_oos_bundle(inst, &[(b.clone(), r.incumbent.clone())], cfg.oos_samples, cfg.seed ^ id)?;
                let eta = max_cut_value(&cuts, &r.incumbent).expect("one cut");
                Ok(Solved {
                    point: TrainingPoint {
                        b: b.clone(),
                        v_star: dot(&inst.first_stage.c, &r.incumbent) + eta,
                        x_star: r.incumbent,
                        eta_star: eta,
                        source: PointSource::Sd,
                    },
                    cuts,
                })
            })
            .collect(),
    }
}

/// Plain fit, retried in relaxed mode when no exact fit is found.
fn refit(ds: &TrainingDataset, opts: &TrainingOptions) -> Result<(PldcPolicy, bool)> {
    if opts.relaxed {
        return Ok((fit_policy(ds, opts)?, true));
    }
    match fit_policy(ds, opts) {
        Ok(p) => Ok((p, false)),
        Err(Error::TrainingInfeasible) | Err(Error::Numerical(_)) => {
            let relaxed = TrainingOptions { relaxed: true, ..opts.clone() };
            Ok((fit_policy(ds, &relaxed)?, true))
        }
        Err(e) => Err(e),
    }
}

/// `⌈ϱ·n⌉`, ignoring rounding noise in the product (1.1·10 is not 11 in
/// binary).
pub fn next_batch_size(growth: f64, n: usize) -> usize {
    let g = growth * n as f64;
    let r = g.round();
    if (g - r).abs() <= 1e-9 * r.max(1.0) {
        r as usize
    } else {
        g.ceil() as usize
    }
}

fn key(b: &[f64]) -> Vec<u64> {
    b.iter().map(|v| v.to_bits()).collect()
}

/// Initial dataset from `n0` draws (round 0), then the round loop.
pub fn run_sequential(inst: &TwoStageInstance, cfg: &SequentialConfig, source: &RhsSource) -> Result<SequentialResult> {
    cfg.check()?;
    let initial: Vec<Vec<f64>> = source.draw(cfg.seed, 0, cfg.n0)?;
    let solved = solve_batch(inst, cfg, &initial, 0)?;
    let mut ds = TrainingDataset::new(inst.first_stage.c.clone(), inst.first_stage.a.clone(), Vec::new());
    let mut seen = HashSet::new();
    for s in solved {
        if seen.insert(key(&s.point.b)) {
            ds.points.push(s.point);
            ds.merge_cuts(&s.cuts);
        }
    }
    run_sequential_from(inst, cfg, source, ds)
}

/// Round loop starting from an existing dataset.
pub fn run_sequential_from(
    inst: &TwoStageInstance,
    cfg: &SequentialConfig,
    source: &RhsSource,
    mut ds: TrainingDataset,
) -> Result<SequentialResult> {
    cfg.check()?;
    let (mut policy, mut relaxed) = refit(&ds, &cfg.training)?;
    let mut seen: HashSet<Vec<u64>> = ds.points.iter().map(|p| key(&p.b)).collect();
    let mut history = Vec::new();
    let mut observations = ds.points.len();
    let mut n = next_batch_size(cfg.growth, cfg.n0);
    let mut next_id = ds.points.len() as u64;
    let mut t_feas = None;
    let mut t_opt = None;
    let mut stopped = StopReason::MaxRounds;
    for round in 1..=cfg.max_rounds {
        let batch: Vec<Vec<f64>> = source.draw(cfg.seed, round, n)?;
        observations += batch.len();
        let feas = feasibility_stats(&policy, &batch, cfg.eps_feas, cfg.z_score)?;
        let feas_ok = feas.ci_upper <= cfg.rho;
        if feas_ok && t_feas.is_none() {
            t_feas = Some(round);
        }
        // every batch point is solved: appended points need (x*, η*) either way
        let solved = solve_batch(inst, cfg, &batch, next_id)?;
        next_id += batch.len() as u64;
        let feasible_idx: Vec<usize> = (0..batch.len()).filter(|&i| feas.feasible[i]).collect();
        let opt: Option<OptimalityStats> = match cfg.solver {
            SolverKind::Lshaped => {
                let pairs: Vec<(Vec<f64>, f64)> =
                    feasible_idx.iter().map(|&i| (feas.outputs[i].x_hat.clone(), solved[i].point.v_star)).collect();
                suboptimality_stats_lshaped(inst, &pairs, cfg.eps_opt, cfg.gap, cfg.z_score)?
            }
            SolverKind::Sd => {
                let rejected: Vec<bool> = feasible_idx
                    .par_iter()
                    .map(|&i| {
                        let seed = cfg.seed ^ ((round as u64) << 32) ^ i as u64;
                        let test = hypothesis_test_sd_adaptive(
                            inst,
                            &solved[i].point.x_star,
                            &feas.outputs[i].x_hat,
                            cfg.m_start,
                            cfg.m_max,
                            cfg.nu,
                            seed,
                        )?;
                        Ok(!test.accept)
                    })
                    .collect::<Result<_>>()?;
                if rejected.is_empty() {
                    None
                } else {
                    let m = rejected.len();
                    let fraction = rejected.iter().filter(|&&r| r).count() as f64 / m as f64;
                    Some(OptimalityStats {
                        fraction,
                        ci_upper: ci_upper(fraction, m, cfg.z_score),
                        gaps: Vec::new(),
                        suboptimal: rejected,
                    })
                }
            }
        };
        let opt_ok = opt.as_ref().is_some_and(|o| o.ci_upper <= cfg.epsilon);
        let mut record = RoundRecord {
            round,
            n_t: batch.len(),
            infeasible_fraction: feas.r,
            infeasible_ci: feas.ci_upper,
            m_t: feasible_idx.len(),
            suboptimal_fraction: opt.as_ref().map(|o| o.fraction),
            suboptimal_ci: opt.as_ref().map(|o| o.ci_upper),
            cells: policy.num_cells(),
            bundle_size: ds.bundle.len(),
            training_size: ds.points.len(),
            appended: 0,
            cumulative_observations: observations,
            relaxed,
        };
        if feas_ok && opt_ok {
            if t_opt.is_none() {
                t_opt = Some(round);
            }
            if round >= cfg.min_rounds {
                history.push(record);
                stopped = StopReason::Converged;
                break;
            }
        }
        let mut bad = vec![false; batch.len()];
        for (i, b) in bad.iter_mut().enumerate() {
            *b = !feas.feasible[i];
        }
        if let Some(o) = &opt {
            for (pos, &i) in feasible_idx.iter().enumerate() {
                bad[i] |= o.suboptimal[pos];
            }
        }
        let mut appended = 0;
        for (i, s) in solved.into_iter().enumerate() {
            if bad[i] && seen.insert(key(&s.point.b)) {
                ds.points.push(s.point);
                ds.merge_cuts(&s.cuts);
                appended += 1;
            }
        }
        if appended > 0 {
            let (p, r) = refit(&ds, &cfg.training)?;
            policy = p;
            relaxed = r;
        }
        record.appended = appended;
        history.push(record);
        n = next_batch_size(cfg.growth, n);
    }
    Ok(SequentialResult { policy, dataset: ds, history, stopped, t_feas, t_opt })
}
