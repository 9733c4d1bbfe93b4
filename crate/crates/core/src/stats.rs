//! Policy quality statistics: infeasible and suboptimal fractions with their
//! one-sided confidence bounds, and the paired test used with SD solves.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{check_dim, Error, Result};
use crate::instance::{draw_scenarios, first_stage_objective, sample_average_objective, TwoStageInstance};
use crate::linalg::Matrix;
use crate::policy::{apply_policy, PldcPolicy, PolicyOutput};

pub const EPS_FEAS: f64 = 1e-6;
pub const EPS_OPT_SMALL: f64 = 5e-4;
pub const EPS_OPT_LARGE: f64 = 1e-2;
pub const Z_95: f64 = 1.96;

/// `fraction + z / (2√n)`: the binomial variance bound `1/(4n)`.
pub fn ci_upper(fraction: f64, n: usize, z: f64) -> f64 {
    fraction + z / (2.0 * (n as f64).sqrt())
}

/// `max(‖Ax − b‖∞, −min x)`, floored at 0.
pub fn feasibility_gap(a: &Matrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.mul_vec(x);
    let resid = ax.iter().zip(b).fold(0.0f64, |m, (l, r)| m.max((l - r).abs()));
    x.iter().fold(resid, |m, &v| m.max(-v))
}

pub fn is_feasible(a: &Matrix, x: &[f64], b: &[f64], eps: f64) -> bool {
    feasibility_gap(a, x, b) <= eps
}

/// Negative components set to zero before objective evaluation.
pub fn clamp_nonnegative(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeasibilityStats {
    /// Infeasible fraction.
    pub r: f64,
    pub ci_upper: f64,
    pub feasible: Vec<bool>,
    pub gaps: Vec<f64>,
    pub outputs: Vec<PolicyOutput>,
}

pub fn feasibility_stats(policy: &PldcPolicy, batch: &[Vec<f64>], eps_feas: f64, z: f64) -> Result<FeasibilityStats> {
    if batch.is_empty() {
        return Err(Error::Validation("empty evaluation batch".into()));
    }
    let outputs: Vec<PolicyOutput> = batch.par_iter().map(|b| apply_policy(policy, b)).collect::<Result<_>>()?;
    let gaps: Vec<f64> = outputs.iter().zip(batch).map(|(o, b)| feasibility_gap(&policy.a, &o.x_hat, b)).collect();
    let feasible: Vec<bool> = gaps.iter().map(|&g| g <= eps_feas).collect();
    let count = feasible.iter().filter(|&&f| f).count();
    let r = 1.0 - count as f64 / batch.len() as f64;
    Ok(FeasibilityStats { r, ci_upper: ci_upper(r, batch.len(), z), feasible, gaps, outputs })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapKind {
    /// `f − v* > ε·(1 + |v*|)`.
    #[default]
    Relative,
    /// `f − v* > ε`.
    Absolute,
}

pub fn optimality_gap(f: f64, v_star: f64, kind: GapKind) -> f64 {
    match kind {
        GapKind::Relative => (f - v_star) / (1.0 + v_star.abs()),
        GapKind::Absolute => f - v_star,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimalityStats {
    pub fraction: f64,
    pub ci_upper: f64,
    pub suboptimal: Vec<bool>,
    pub gaps: Vec<f64>,
}

fn optimality_from_flags(suboptimal: Vec<bool>, gaps: Vec<f64>, z: f64) -> Option<OptimalityStats> {
    if suboptimal.is_empty() {
        return None;
    }
    let m = suboptimal.len();
    let fraction = suboptimal.iter().filter(|&&s| s).count() as f64 / m as f64;
    Some(OptimalityStats { fraction, ci_upper: ci_upper(fraction, m, z), suboptimal, gaps })
}

/// Exact gaps `f(x̂) − v*` over `(x̂, v*)` pairs (policy-feasible points only).
/// `None` when there are no pairs.
pub fn suboptimality_stats_lshaped(
    inst: &TwoStageInstance,
    pairs: &[(Vec<f64>, f64)],
    eps_opt: f64,
    kind: GapKind,
    z: f64,
) -> Result<Option<OptimalityStats>> {
    let gaps: Vec<f64> = pairs
        .par_iter()
        .map(|(x, v)| Ok(optimality_gap(first_stage_objective(inst, &clamp_nonnegative(x))?, *v, kind)))
        .collect::<Result<_>>()?;
    let flags = gaps.iter().map(|&g| g > eps_opt).collect();
    Ok(optimality_from_flags(flags, gaps, z))
}

#[derive(Clone, Debug, PartialEq)]
pub struct HypothesisTest {
    pub accept: bool,
    pub mean_gap: f64,
    pub std_gap: f64,
    pub m: usize,
}

/// Two-sided t critical value `t_{df, ν/2}`.
pub fn t_critical(df: usize, nu: f64) -> f64 {
    StudentsT::new(0.0, 1.0, df as f64).expect("positive degrees of freedom").inverse_cdf(1.0 - nu / 2.0)
}

fn mean_std(g: &[f64]) -> (f64, f64) {
    let m = g.len() as f64;
    let mean = g.iter().sum::<f64>() / m;
    let var = g.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
    (mean, var.sqrt())
}

/// Decision on per-observation gaps: accept when all are zero, otherwise
/// reject iff `√M·|Ḡ|/S > t_{M−1, ν/2}`.
pub fn paired_t_test(gaps: &[f64], nu: f64) -> Result<HypothesisTest> {
    let m = gaps.len();
    if m < 2 {
        return Err(Error::Config("paired test needs at least 2 observations".into()));
    }
    let (mean, std) = mean_std(gaps);
    if gaps.iter().all(|&g| g == 0.0) {
        return Ok(HypothesisTest { accept: true, mean_gap: 0.0, std_gap: 0.0, m });
    }
    let accept = if std == 0.0 { false } else { (m as f64).sqrt() * mean.abs() / std <= t_critical(m - 1, nu) };
    Ok(HypothesisTest { accept, mean_gap: mean, std_gap: std, m })
}

fn crn_gaps(inst: &TwoStageInstance, x_star: &[f64], x_hat: &[f64], sample: &[usize]) -> Result<Vec<f64>> {
    let a = sample_average_objective(inst, x_star, sample)?;
    let b = sample_average_objective(inst, x_hat, sample)?;
    let ca = a.value - a.per_observation.iter().sum::<f64>() / sample.len() as f64;
    let cb = b.value - b.per_observation.iter().sum::<f64>() / sample.len() as f64;
    Ok(a.per_observation.iter().zip(&b.per_observation).map(|(qa, qb)| (ca + qa) - (cb + qb)).collect())
}

/// Paired test of `f(x*) = f(x̂)` on `m` common scenarios drawn from `seed`.
pub fn hypothesis_test_sd(
    inst: &TwoStageInstance,
    x_star: &[f64],
    x_hat: &[f64],
    m: usize,
    nu: f64,
    seed: u64,
) -> Result<HypothesisTest> {
    check_dim("x length", inst.d_x(), x_star.len())?;
    check_dim("x length", inst.d_x(), x_hat.len())?;
    if m < 2 {
        return Err(Error::Config("paired test needs M ≥ 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample = draw_scenarios(inst, m, &mut rng);
    paired_t_test(&crn_gaps(inst, x_star, &clamp_nonnegative(x_hat), &sample)?, nu)
}

/// Starts at `m_start` and doubles (up to `m_max`) until the variance of the
/// mean gap, `S²/M`, is below `0.01·(|Ḡ| + 1)`. The sample grows as a prefix
/// of one seeded stream.
pub fn hypothesis_test_sd_adaptive(
    inst: &TwoStageInstance,
    x_star: &[f64],
    x_hat: &[f64],
    m_start: usize,
    m_max: usize,
    nu: f64,
    seed: u64,
) -> Result<HypothesisTest> {
    if m_start < 2 || m_max < m_start {
        return Err(Error::Config("need 2 ≤ m_start ≤ m_max".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x_hat = clamp_nonnegative(x_hat);
    let mut sample = draw_scenarios(inst, m_start, &mut rng);
    loop {
        let gaps = crn_gaps(inst, x_star, &x_hat, &sample)?;
        let (mean, std) = mean_std(&gaps);
        let m = sample.len();
        if std * std / m as f64 <= 0.01 * (mean.abs() + 1.0) || m >= m_max {
            return paired_t_test(&gaps, nu);
        }
        let extra = (2 * m).min(m_max) - m;
        sample.extend(draw_scenarios(inst, extra, &mut rng));
    }
}

/// One evaluated right-hand side.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub b_id: usize,
    pub feasible: bool,
    pub feas_gap: f64,
    /// `None` when infeasible or without a reference optimum.
    pub rel_opt_gap: Option<f64>,
    pub wall_micros: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalSummary {
    pub count: usize,
    pub feasible_pct: f64,
    /// Among feasible rows with a reference optimum.
    pub optimal_pct: f64,
    pub max_feas_gap: f64,
    pub max_rel_opt_gap: f64,
}

pub fn summarize(rows: &[EvalRow], eps_opt: f64) -> EvalSummary {
    let count = rows.len();
    let feasible = rows.iter().filter(|r| r.feasible).count();
    let scored: Vec<f64> = rows.iter().filter_map(|r| r.rel_opt_gap).collect();
    let optimal = scored.iter().filter(|&&g| g <= eps_opt).count();
    let pct = |a: usize, b: usize| if b == 0 { 0.0 } else { 100.0 * a as f64 / b as f64 };
    EvalSummary {
        count,
        feasible_pct: pct(feasible, count),
        optimal_pct: pct(optimal, scored.len()),
        max_feas_gap: rows.iter().map(|r| r.feas_gap).fold(0.0, f64::max),
        max_rel_opt_gap: scored.iter().copied().fold(0.0, f64::max),
    }
}

/// Feasibility and, where `v_star` is given, relative optimality gap of the
/// policy at each `b`. `timing` records per-row wall time.
pub fn evaluate_policy(
    policy: &PldcPolicy,
    inst: &TwoStageInstance,
    bs: &[Vec<f64>],
    v_star: Option<&[f64]>,
    eps_feas: f64,
    timing: bool,
) -> Result<Vec<EvalRow>> {
    if let Some(v) = v_star {
        check_dim("reference optimum count", bs.len(), v.len())?;
    }
    bs.par_iter()
        .enumerate()
        .map(|(i, b)| {
            let start = timing.then(std::time::Instant::now);
            let out = apply_policy(policy, b)?;
            let wall_micros = start.map_or(0, |s| s.elapsed().as_micros() as u64);
            let feas_gap = feasibility_gap(&policy.a, &out.x_hat, b);
            let feasible = feas_gap <= eps_feas;
            let rel_opt_gap = match (feasible, v_star) {
                (true, Some(v)) => Some(optimality_gap(
                    first_stage_objective(inst, &clamp_nonnegative(&out.x_hat))?,
                    v[i],
                    GapKind::Relative,
                )),
                _ => None,
            };
            Ok(EvalRow { b_id: i, feasible, feas_gap, rel_opt_gap, wall_micros })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ci_half_width() {
        assert_eq!(ci_upper(0.0, 100, 1.96), 0.098);
        assert_eq!(ci_upper(0.04, 25, 1.96), 0.04 + 1.96 / 10.0);
    }

    #[test]
    fn feasibility_gap_counts_negative_entries() {
        let a = Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        assert_eq!(feasibility_gap(&a, &[1.0, 1.0], &[2.0]), 0.0);
        assert_eq!(feasibility_gap(&a, &[3.0, -1.0], &[2.0]), 1.0);
        assert!((feasibility_gap(&a, &[1.0, 1.5], &[2.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn paired_test_decisions() {
        assert!(paired_t_test(&[0.0; 5], 0.05).unwrap().accept);
        assert!(!paired_t_test(&[-3.0, -3.1, -2.9, -3.0], 0.05).unwrap().accept);
        assert!(!paired_t_test(&[-1.0, -1.0, -1.0], 0.05).unwrap().accept);
        assert!(matches!(paired_t_test(&[1.0], 0.05), Err(Error::Config(_))));
    }

    #[test]
    fn t_critical_matches_table() {
        // t_{29, 0.025} = 2.045
        assert!((t_critical(29, 0.05) - 2.045).abs() < 1e-3);
    }
}
