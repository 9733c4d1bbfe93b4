//! Right-hand-side generators: an order-one linear time series and Latin
//! hypercube sampling over per-row ranges.

use rand::distributions::Open01;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{check_dim, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    TimeSeries,
    LatinHypercube,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    #[default]
    Uniform,
    Midpoint,
}

/// Per-row parameters are indexed like `perturbed_rows`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RhsGeneratorConfig {
    pub mode: SamplingMode,
    pub horizon: usize,
    pub seed: u64,
    pub perturbed_rows: Vec<usize>,
    #[serde(default)]
    pub a0: Vec<f64>,
    #[serde(default)]
    pub a1: Vec<f64>,
    #[serde(default)]
    pub sigma: Vec<f64>,
    #[serde(default)]
    pub lo: Vec<f64>,
    #[serde(default)]
    pub hi: Vec<f64>,
    #[serde(default)]
    pub placement: Placement,
}

impl RhsGeneratorConfig {
    /// Time-series defaults: `a1 = b`, `a0 = 0.001|b|`, `σ = 0.02|b|`.
    pub fn time_series(b_nominal: &[f64], perturbed_rows: &[usize], horizon: usize, seed: u64) -> Self {
        let pick = |f: fn(f64) -> f64| perturbed_rows.iter().map(|&k| f(b_nominal[k])).collect::<Vec<_>>();
        RhsGeneratorConfig {
            mode: SamplingMode::TimeSeries,
            horizon,
            seed,
            perturbed_rows: perturbed_rows.to_vec(),
            a0: pick(|b| 0.001 * b.abs()),
            a1: pick(|b| b),
            sigma: pick(|b| 0.02 * b.abs()),
            lo: Vec::new(),
            hi: Vec::new(),
            placement: Placement::Uniform,
        }
    }

    /// Latin hypercube over `b_k ± spread·|b_k|`.
    pub fn latin_hypercube(b_nominal: &[f64], perturbed_rows: &[usize], spread: f64, horizon: usize, seed: u64) -> Self {
        let lo = perturbed_rows.iter().map(|&k| b_nominal[k] - spread * b_nominal[k].abs()).collect();
        let hi = perturbed_rows.iter().map(|&k| b_nominal[k] + spread * b_nominal[k].abs()).collect();
        RhsGeneratorConfig {
            mode: SamplingMode::LatinHypercube,
            horizon,
            seed,
            perturbed_rows: perturbed_rows.to_vec(),
            a0: Vec::new(),
            a1: Vec::new(),
            sigma: Vec::new(),
            lo,
            hi,
            placement: Placement::Uniform,
        }
    }

    fn check_common(&self, b_nominal: &[f64]) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if let Some(&k) = self.perturbed_rows.iter().find(|&&k| k >= b_nominal.len()) {
            return Err(Error::Config(format!("perturbed row {k} out of range")));
        }
        Ok(())
    }
}

fn row_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `b^i_k = a0_k·i + a1_k + e^i_k`, `i = 1..=T`, `e ~ N(0, σ_k²)`.
pub fn sample_time_series(cfg: &RhsGeneratorConfig, b_nominal: &[f64]) -> Result<Vec<Vec<f64>>> {
    if cfg.mode != SamplingMode::TimeSeries {
        return Err(Error::Config("sample_time_series needs mode time_series".into()));
    }
    cfg.check_common(b_nominal)?;
    let n = cfg.perturbed_rows.len();
    check_dim("a0 length", n, cfg.a0.len())?;
    check_dim("a1 length", n, cfg.a1.len())?;
    check_dim("sigma length", n, cfg.sigma.len())?;
    if cfg.sigma.iter().any(|&s| !(s >= 0.0)) {
        return Err(Error::Config("sigma must be nonnegative".into()));
    }
    let std_normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut out = vec![b_nominal.to_vec(); cfg.horizon];
    for (pos, &k) in cfg.perturbed_rows.iter().enumerate() {
        let mut rng = row_stream(cfg.seed, k as u64);
        for (i, b) in out.iter_mut().enumerate() {
            let u: f64 = rng.sample(Open01);
            let e = if cfg.sigma[pos] == 0.0 { 0.0 } else { cfg.sigma[pos] * std_normal.inverse_cdf(u) };
            b[k] = cfg.a0[pos] * (i + 1) as f64 + cfg.a1[pos] + e;
        }
    }
    Ok(out)
}

/// Bounds of subinterval `j` of `[lo, hi]` split into `t` pieces.
pub fn lhs_interval(lo: f64, hi: f64, t: usize, j: usize) -> (f64, f64) {
    let w = (hi - lo) / t as f64;
    let a = lo + j as f64 * w;
    let b = if j + 1 == t { hi } else { lo + (j + 1) as f64 * w };
    (a, b)
}

pub fn sample_lhs(cfg: &RhsGeneratorConfig, b_nominal: &[f64]) -> Result<Vec<Vec<f64>>> {
    if cfg.mode != SamplingMode::LatinHypercube {
        return Err(Error::Config("sample_lhs needs mode latin_hypercube".into()));
    }
    cfg.check_common(b_nominal)?;
    let n = cfg.perturbed_rows.len();
    check_dim("lo length", n, cfg.lo.len())?;
    check_dim("hi length", n, cfg.hi.len())?;
    if cfg.lo.iter().zip(&cfg.hi).any(|(l, h)| !(l <= h)) {
        return Err(Error::Config("each range needs lo ≤ hi".into()));
    }
    let t = cfg.horizon;
    let mut out = vec![b_nominal.to_vec(); t];
    for (pos, &k) in cfg.perturbed_rows.iter().enumerate() {
        let mut perm_rng = row_stream(cfg.seed, 2 * k as u64);
        let mut place_rng = row_stream(cfg.seed, 2 * k as u64 + 1);
        let mut perm: Vec<usize> = (0..t).collect();
        perm.shuffle(&mut perm_rng);
        for (b, &j) in out.iter_mut().zip(&perm) {
            let (a, z) = lhs_interval(cfg.lo[pos], cfg.hi[pos], t, j);
            let u: f64 = match cfg.placement {
                Placement::Uniform => place_rng.gen(),
                Placement::Midpoint => 0.5,
            };
            let mut v = a + u * (z - a);
            if v >= z {
                v = a;
            }
            b[k] = v;
        }
    }
    Ok(out)
}

pub fn sample_rhs(cfg: &RhsGeneratorConfig, b_nominal: &[f64]) -> Result<Vec<Vec<f64>>> {
    match cfg.mode {
        SamplingMode::TimeSeries => sample_time_series(cfg, b_nominal),
        SamplingMode::LatinHypercube => sample_lhs(cfg, b_nominal),
    }
}
