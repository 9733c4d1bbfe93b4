//! Command-line front end. Every command resolves a [`RunConfig`] from
//! defaults, an optional JSON file and flags (in that order) and embeds it
//! in what it writes.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{
    build_extensive_form, first_stage_objective, generate_synthetic, instance_to_json, load_instance,
    mean_value_instance, SyntheticSpec, TwoStageInstance,
};
use crate::io::{fmt_f64, read_json, to_json, to_json_line};
use crate::linalg::{row_rank, Matrix};
use crate::lshaped::{solve_lshaped, LShapedOptions};
use crate::policy::{apply_policy, fit_pointwise_baseline, fit_policy, PldcPolicy, TrainingDataset, TrainingOptions};
use crate::sampling::{sample_rhs, RhsGeneratorConfig, SamplingMode};
use crate::sd::{solve_sd, SdOptions};
use crate::sequential::{run_sequential, RhsSource, SequentialConfig, SolverKind};
use crate::simplex::{solve_lp, LpStatus};
use crate::stats::{evaluate_policy, summarize, EPS_FEAS, EPS_OPT_SMALL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Extensive,
    #[default]
    Lshaped,
    Sd,
    /// First-stage LP only (`min cᵀx, Ax = b, x ≥ 0`).
    Deterministic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InstanceSection {
    /// JSON instance or SMPS core file; the synthetic spec is used when absent.
    pub path: Option<String>,
    pub synthetic: SyntheticSpec,
    pub mean_value: bool,
}

impl Default for InstanceSection {
    fn default() -> Self {
        InstanceSection { path: None, synthetic: SyntheticSpec::pgp2_shape(0), mean_value: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RhsSection {
    /// CSV file, one right-hand side per line.
    pub path: Option<String>,
    /// A single right-hand side (solve only).
    pub values: Option<Vec<f64>>,
    pub mode: SamplingMode,
    pub count: usize,
    /// Leading draws discarded, so one seeded series can be split.
    pub skip: usize,
    /// Latin hypercube half-width relative to the nominal value.
    pub spread: f64,
    /// Defaults to the run seed.
    pub seed: Option<u64>,
}

impl Default for RhsSection {
    fn default() -> Self {
        RhsSection {
            path: None,
            values: None,
            mode: SamplingMode::TimeSeries,
            count: 50,
            skip: 0,
            spread: 0.1,
            seed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub method: Method,
    pub lshaped: LShapedOptions,
    pub sd: SdOptions,
    pub oos_samples: usize,
    pub eps_feas: f64,
    pub eps_opt: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            method: Method::Lshaped,
            lshaped: LShapedOptions::default(),
            sd: SdOptions::default(),
            oos_samples: 2000,
            eps_feas: EPS_FEAS,
            eps_opt: EPS_OPT_SMALL,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicySection {
    /// Policy to evaluate.
    pub path: Option<String>,
    pub training: TrainingOptions,
    /// One cell per training point.
    pub pointwise: bool,
    pub reference: Option<bool>,
    /// Previously solved training set; replaces the solves when given.
    pub dataset: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub path: Option<String>,
    /// Training report (train) or policy file (sequential).
    pub report: Option<String>,
    pub policy: Option<String>,
    /// Where train writes its solved training set.
    pub dataset: Option<String>,
    pub timing: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub threads: Option<usize>,
    pub instance: InstanceSection,
    pub rhs: RhsSection,
    pub solver: SolverSection,
    pub policy: PolicySection,
    pub sequential: SequentialConfig,
    pub output: OutputSection,
}

#[derive(Parser, Debug)]
#[command(name = "pldc", version, about = "Train and evaluate PLDC policies for two-stage stochastic LPs")]
struct Cli {
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores; 1 runs serially).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(short = 'o', long = "output", global = true)]
    output: Option<PathBuf>,
    /// Record wall-clock times (outputs are then not reproducible).
    #[arg(long, global = true)]
    timing: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic instance.
    Generate(GenerateArgs),
    /// Solve one instance at one right-hand side.
    Solve(SolveArgs),
    /// Fit a policy on a batch of right-hand sides.
    Train(TrainArgs),
    /// Apply a policy to a batch and write a CSV.
    Evaluate(EvaluateArgs),
    /// Run the sequential procedure and write per-round CSV.
    Sequential(SequentialArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    Pgp2Shape,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    scenarios: Option<usize>,
    #[arg(long)]
    d_x: Option<usize>,
    #[arg(long)]
    m1: Option<usize>,
    #[arg(long)]
    m2: Option<usize>,
    /// Collapse the scenarios into their mean.
    #[arg(long)]
    mean_value: bool,
}

#[derive(Args, Debug)]
struct InstanceArgs {
    #[arg(long)]
    instance: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RhsMode {
    TimeSeries,
    Lhs,
}

#[derive(Args, Debug)]
struct RhsArgs {
    #[arg(long)]
    rhs_file: Option<PathBuf>,
    #[arg(long, value_enum)]
    rhs_mode: Option<RhsMode>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    skip: Option<usize>,
    #[arg(long)]
    spread: Option<f64>,
    #[arg(long)]
    rhs_seed: Option<u64>,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long, value_enum)]
    method: Option<Method>,
    /// Comma-separated right-hand side (default: nominal).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    rhs: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[command(flatten)]
    rhs: RhsArgs,
    #[arg(long, value_enum)]
    method: Option<Method>,
    #[arg(long)]
    relaxed: bool,
    #[arg(long)]
    pointwise: bool,
    #[arg(long)]
    report: Option<PathBuf>,
    /// Train on a saved training set instead of solving.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    save_dataset: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[command(flatten)]
    rhs: RhsArgs,
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Skip the reference solves; `rel_opt_gap` is left empty.
    #[arg(long)]
    no_reference: bool,
}

#[derive(Args, Debug)]
struct SequentialArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[command(flatten)]
    rhs: RhsArgs,
    #[arg(long, value_enum)]
    method: Option<Method>,
    #[arg(long)]
    max_rounds: Option<usize>,
    #[arg(long)]
    min_rounds: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    policy_out: Option<PathBuf>,
}

fn path_string(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

impl RhsArgs {
    fn apply(&self, rhs: &mut RhsSection) {
        if let Some(p) = &self.rhs_file {
            rhs.path = Some(path_string(p));
        }
        if let Some(m) = self.rhs_mode {
            rhs.mode = match m {
                RhsMode::TimeSeries => SamplingMode::TimeSeries,
                RhsMode::Lhs => SamplingMode::LatinHypercube,
            };
        }
        rhs.count = self.samples.unwrap_or(rhs.count);
        rhs.skip = self.skip.unwrap_or(rhs.skip);
        rhs.spread = self.spread.unwrap_or(rhs.spread);
        if self.rhs_seed.is_some() {
            rhs.seed = self.rhs_seed;
        }
    }
}

fn set_instance(cfg: &mut RunConfig, args: &InstanceArgs) {
    if let Some(p) = &args.instance {
        cfg.instance.path = Some(path_string(p));
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg: RunConfig = match &cli.config {
        Some(p) => read_json(p)?,
        None => RunConfig::default(),
    };
    cfg.seed = cli.seed.unwrap_or(cfg.seed);
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    if let Some(p) = &cli.output {
        cfg.output.path = Some(path_string(p));
    }
    cfg.output.timing |= cli.timing;
    match &cli.command {
        Command::Generate(g) => {
            let spec = &mut cfg.instance.synthetic;
            if g.preset.is_some() {
                *spec = SyntheticSpec::pgp2_shape(spec.seed);
            }
            spec.num_scenarios = g.scenarios.unwrap_or(spec.num_scenarios);
            spec.d_x = g.d_x.unwrap_or(spec.d_x);
            spec.m1 = g.m1.unwrap_or(spec.m1);
            spec.m2 = g.m2.unwrap_or(spec.m2);
            cfg.instance.mean_value |= g.mean_value;
        }
        Command::Solve(s) => {
            set_instance(&mut cfg, &s.instance);
            cfg.solver.method = s.method.unwrap_or(cfg.solver.method);
            if s.rhs.is_some() {
                cfg.rhs.values = s.rhs.clone();
            }
        }
        Command::Train(t) => {
            set_instance(&mut cfg, &t.instance);
            t.rhs.apply(&mut cfg.rhs);
            cfg.solver.method = t.method.unwrap_or(cfg.solver.method);
            cfg.policy.training.relaxed |= t.relaxed;
            cfg.policy.pointwise |= t.pointwise;
            if let Some(p) = &t.report {
                cfg.output.report = Some(path_string(p));
            }
            if let Some(p) = &t.dataset {
                cfg.policy.dataset = Some(path_string(p));
            }
            if let Some(p) = &t.save_dataset {
                cfg.output.dataset = Some(path_string(p));
            }
        }
        Command::Evaluate(e) => {
            set_instance(&mut cfg, &e.instance);
            e.rhs.apply(&mut cfg.rhs);
            if let Some(p) = &e.policy {
                cfg.policy.path = Some(path_string(p));
            }
            if e.no_reference {
                cfg.policy.reference = Some(false);
            }
        }
        Command::Sequential(s) => {
            set_instance(&mut cfg, &s.instance);
            s.rhs.apply(&mut cfg.rhs);
            let sq = &mut cfg.sequential;
            match s.method {
                Some(Method::Lshaped) => sq.solver = SolverKind::Lshaped,
                Some(Method::Sd) => sq.solver = SolverKind::Sd,
                Some(m) => return Err(Error::Config(format!("sequential runs support lshaped or sd, not {m:?}"))),
                None => {}
            }
            sq.max_rounds = s.max_rounds.unwrap_or(sq.max_rounds);
            sq.min_rounds = s.min_rounds.unwrap_or(sq.min_rounds).min(sq.max_rounds);
            sq.rho = s.rho.unwrap_or(sq.rho);
            sq.epsilon = s.epsilon.unwrap_or(sq.epsilon);
            if let Some(p) = &s.policy_out {
                cfg.output.policy = Some(path_string(p));
            }
        }
    }
    // the run seed drives every component stream
    cfg.instance.synthetic.seed = cfg.seed;
    cfg.solver.sd.seed = cfg.seed;
    cfg.sequential.seed = cfg.seed;
    cfg.sequential.lshaped = cfg.solver.lshaped.clone();
    cfg.sequential.sd = cfg.solver.sd.clone();
    cfg.sequential.training = cfg.policy.training.clone();
    cfg.rhs.seed = Some(cfg.rhs.seed.unwrap_or(cfg.seed));
    Ok(cfg)
}

fn instance(cfg: &RunConfig) -> Result<TwoStageInstance> {
    let inst = match &cfg.instance.path {
        Some(p) => load_instance(Path::new(p))?,
        None => generate_synthetic(&cfg.instance.synthetic)?,
    };
    Ok(if cfg.instance.mean_value { mean_value_instance(&inst) } else { inst })
}

/// Reads right-hand sides from CSV; `#` lines and a non-numeric header are skipped.
pub fn read_rhs_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        match parsed {
            Ok(r) => rows.push(r),
            Err(_) if rows.is_empty() => continue,
            Err(e) => {
                return Err(Error::Parse { location: format!("{}:{}", path.display(), ln + 1), message: e.to_string() })
            }
        }
    }
    Ok(rows)
}

fn rhs_batch(cfg: &RunConfig, inst: &TwoStageInstance) -> Result<Vec<Vec<f64>>> {
    let r = &cfg.rhs;
    let all = match &r.path {
        Some(p) => read_rhs_csv(Path::new(p))?,
        None => {
            if r.count == 0 {
                return Ok(Vec::new());
            }
            let b0 = &inst.first_stage.b_nominal;
            let seed = r.seed.unwrap_or(cfg.seed);
            let horizon = r.skip + r.count;
            let gen = match r.mode {
                SamplingMode::TimeSeries => RhsGeneratorConfig::time_series(b0, &inst.perturbed_rows, horizon, seed),
                SamplingMode::LatinHypercube => {
                    RhsGeneratorConfig::latin_hypercube(b0, &inst.perturbed_rows, r.spread, horizon, seed)
                }
            };
            sample_rhs(&gen, b0)?
        }
    };
    Ok(all.into_iter().skip(r.skip).take(r.count).collect())
}

fn emit(cfg: &RunConfig, text: &str) -> Result<()> {
    match &cfg.output.path {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

#[derive(Serialize)]
struct SolveReport<'a> {
    config: &'a RunConfig,
    method: Method,
    b: Vec<f64>,
    x: Vec<f64>,
    /// `cᵀx + Q(x)` for two-stage methods, `cᵀx` for the deterministic LP.
    objective: f64,
    eta: Option<f64>,
    iterations: Option<usize>,
    cuts: Option<usize>,
    sd_estimate: Option<f64>,
}

fn cmd_solve(cfg: &RunConfig) -> Result<String> {
    let inst = instance(cfg)?;
    let b = cfg.rhs.values.clone().unwrap_or_else(|| inst.first_stage.b_nominal.clone());
    let mut rep = SolveReport {
        config: cfg,
        method: cfg.solver.method,
        b: b.clone(),
        x: Vec::new(),
        objective: 0.0,
        eta: None,
        iterations: None,
        cuts: None,
        sd_estimate: None,
    };
    let lp_only = |lp| -> Result<(Vec<f64>, f64)> {
        let sol = solve_lp(&lp)?;
        match sol.status {
            LpStatus::Optimal => Ok((sol.x, sol.objective)),
            LpStatus::Infeasible => Err(Error::InfeasibleRhs(0)),
            LpStatus::Unbounded => Err(Error::Numerical("problem is unbounded".into())),
        }
    };
    match cfg.solver.method {
        Method::Extensive => {
            let (x, obj) = lp_only(build_extensive_form(&inst, &b)?)?;
            rep.x = x[..inst.d_x()].to_vec();
            rep.objective = obj;
        }
        Method::Deterministic => {
            let (x, obj) = lp_only(inst.first_stage_lp(&b)?)?;
            rep.x = x;
            rep.objective = obj;
        }
        Method::Lshaped => {
            let r = solve_lshaped(&inst, &b, &cfg.solver.lshaped)?;
            rep.objective = r.v_star;
            rep.eta = Some(r.eta_star);
            rep.iterations = Some(r.iterations);
            rep.cuts = Some(r.cuts_active.len());
            rep.x = r.x_star;
        }
        Method::Sd => {
            let r = solve_sd(&inst, &b, &cfg.solver.sd)?;
            rep.objective = first_stage_objective(&inst, &r.incumbent)?;
            rep.sd_estimate = Some(r.value_estimate);
            rep.iterations = Some(r.iterations);
            rep.cuts = Some(r.cuts_active.len());
            rep.x = r.incumbent;
        }
    }
    to_json(&rep)
}

#[derive(Serialize)]
struct TrainReport<'a> {
    config: &'a RunConfig,
    num_points: usize,
    cells: usize,
    cell_sizes: Vec<usize>,
    /// Rank of `b_i − b_anchor` over each cell's members.
    cell_affine_ranks: Vec<usize>,
    bundle_size: usize,
    relaxed: bool,
    objective: f64,
    max_slack: f64,
    /// Largest ∞-norm difference between policy output and target over the training set.
    max_recovery_error: f64,
}

fn affine_rank(ds: &TrainingDataset, members: &[usize], anchor: usize) -> usize {
    let b0 = &ds.points[anchor].b;
    let diffs: Vec<Vec<f64>> = members
        .iter()
        .filter(|&&i| i != anchor)
        .map(|&i| ds.points[i].b.iter().zip(b0).map(|(x, y)| x - y).collect())
        .collect();
    match Matrix::from_rows(&diffs) {
        Some(m) if !diffs.is_empty() => row_rank(&m),
        _ => 0,
    }
}

fn training_dataset(cfg: &RunConfig, inst: &TwoStageInstance, bs: &[Vec<f64>]) -> Result<TrainingDataset> {
    match cfg.solver.method {
        Method::Lshaped => TrainingDataset::from_lshaped(inst, bs, &cfg.solver.lshaped),
        Method::Sd => TrainingDataset::from_sd(inst, bs, &cfg.solver.sd, cfg.solver.oos_samples, cfg.seed),
        Method::Deterministic => TrainingDataset::from_deterministic(&inst.first_stage.c, &inst.first_stage.a, bs),
        Method::Extensive => Err(Error::Config("training needs lshaped, sd or deterministic".into())),
    }
}

fn cmd_train(cfg: &RunConfig) -> Result<(String, String)> {
    let ds: TrainingDataset = match &cfg.policy.dataset {
        Some(p) => read_json(Path::new(p))?,
        None => {
            let inst = instance(cfg)?;
            let bs = rhs_batch(cfg, &inst)?;
            if bs.is_empty() {
                return Err(Error::Config("no training right-hand sides".into()));
            }
            training_dataset(cfg, &inst, &bs)?
        }
    };
    if ds.points.is_empty() {
        return Err(Error::Config("training set has no points".into()));
    }
    if let Some(p) = &cfg.output.dataset {
        std::fs::write(p, to_json(&ds)?)?;
    }
    let mut policy = if cfg.policy.pointwise {
        fit_pointwise_baseline(&ds, &cfg.policy.training)?
    } else {
        fit_policy(&ds, &cfg.policy.training)?
    };
    policy.metadata.seed = cfg.seed;
    let errors: Vec<f64> = (0..ds.points.len())
        .into_par_iter()
        .map(|i| {
            let out = apply_policy(&policy, &ds.points[i].b)?;
            let mut y = out.x_hat;
            y.extend(out.eta_hat);
            Ok(y.iter().zip(ds.target(i)).fold(0.0f64, |m, (a, t)| m.max((a - t).abs())))
        })
        .collect::<Result<_>>()?;
    let rep = TrainReport {
        config: cfg,
        num_points: ds.points.len(),
        cells: policy.num_cells(),
        cell_sizes: policy.cells.iter().map(|c| c.members.len()).collect(),
        cell_affine_ranks: policy.cells.iter().map(|c| affine_rank(&ds, &c.members, c.anchor)).collect(),
        bundle_size: policy.bundle.len(),
        relaxed: policy.metadata.relaxed,
        objective: policy.metadata.objective,
        max_slack: policy.metadata.max_slack,
        max_recovery_error: errors.into_iter().fold(0.0, f64::max),
    };
    Ok((to_json(&policy)?, to_json(&rep)?))
}

fn csv_header(cfg: &RunConfig, columns: &str) -> Result<String> {
    Ok(format!("# {}\n{columns}\n", to_json_line(cfg)?))
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn cmd_evaluate(cfg: &RunConfig) -> Result<String> {
    let inst = instance(cfg)?;
    let path = cfg.policy.path.as_ref().ok_or_else(|| Error::Config("evaluate needs --policy".into()))?;
    let policy = PldcPolicy::load(Path::new(path))?;
    let bs = rhs_batch(cfg, &inst)?;
    if bs.is_empty() {
        return Err(Error::Config("no right-hand sides to evaluate".into()));
    }
    let v_star: Option<Vec<f64>> = if cfg.policy.reference.unwrap_or(true) {
        Some(
            bs.par_iter()
                .map(|b| solve_lshaped(&inst, b, &cfg.solver.lshaped).map(|r| r.v_star))
                .collect::<Result<_>>()?,
        )
    } else {
        None
    };
    let rows = evaluate_policy(&policy, &inst, &bs, v_star.as_deref(), cfg.solver.eps_feas, cfg.output.timing)?;
    let mut out = csv_header(cfg, "b_id,feasible,feas_gap,rel_opt_gap,wall_micros")?;
    for r in &rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.b_id,
            r.feasible as u8,
            fmt_f64(r.feas_gap),
            opt_f64(r.rel_opt_gap),
            r.wall_micros
        ));
    }
    out.push_str(&format!("# summary {}\n", to_json_line(&summarize(&rows, cfg.solver.eps_opt))?));
    Ok(out)
}

#[derive(Serialize)]
struct SequentialSummary {
    stopped: crate::sequential::StopReason,
    rounds: usize,
    t_feas: Option<usize>,
    t_opt: Option<usize>,
    training_size: usize,
    cumulative_observations: usize,
    cells: usize,
}

fn cmd_sequential(cfg: &RunConfig) -> Result<(String, String)> {
    let inst = instance(cfg)?;
    let pool = rhs_batch(cfg, &inst)?;
    if pool.is_empty() {
        return Err(Error::Config("empty right-hand-side pool".into()));
    }
    let res = run_sequential(&inst, &cfg.sequential, &RhsSource::Pool(pool))?;
    let mut out = csv_header(cfg, "round,n_t,R,R_ci,p_or_r,p_ci,cells,cuts,train_size")?;
    for h in &res.history {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            h.round,
            h.n_t,
            fmt_f64(h.infeasible_fraction),
            fmt_f64(h.infeasible_ci),
            opt_f64(h.suboptimal_fraction),
            opt_f64(h.suboptimal_ci),
            h.cells,
            h.bundle_size,
            h.training_size
        ));
    }
    let last = res.history.last();
    let summary = SequentialSummary {
        stopped: res.stopped,
        rounds: res.history.len(),
        t_feas: res.t_feas,
        t_opt: res.t_opt,
        training_size: res.dataset.points.len(),
        cumulative_observations: last.map_or(0, |h| h.cumulative_observations),
        cells: res.policy.num_cells(),
    };
    out.push_str(&format!("# summary {}\n", to_json_line(&summary)?));
    Ok((out, to_json(&res.policy)?))
}

fn execute(cli: &Cli, cfg: RunConfig) -> Result<()> {
    match &cli.command {
        Command::Generate(_) => emit(&cfg, &instance_to_json(&instance(&cfg)?)?),
        Command::Solve(_) => emit(&cfg, &cmd_solve(&cfg)?),
        Command::Evaluate(_) => emit(&cfg, &cmd_evaluate(&cfg)?),
        Command::Train(_) => {
            let (policy, report) = cmd_train(&cfg)?;
            if cfg.output.path.is_none() {
                return Err(Error::Config("train needs -o <policy file>".into()));
            }
            emit(&cfg, &policy)?;
            match &cfg.output.report {
                Some(p) => std::fs::write(p, report)?,
                None => std::io::stdout().write_all(report.as_bytes())?,
            }
            Ok(())
        }
        Command::Sequential(_) => {
            let (csv, policy) = cmd_sequential(&cfg)?;
            emit(&cfg, &csv)?;
            if let Some(p) = &cfg.output.policy {
                std::fs::write(p, policy)?;
            }
            Ok(())
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 64 } else { 0 };
        }
    };
    let result = resolve(&cli).and_then(|cfg| match cfg.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| execute(&cli, cfg)),
            Err(e) => Err(Error::Config(format!("thread pool: {e}"))),
        },
        None => execute(&cli, cfg),
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
