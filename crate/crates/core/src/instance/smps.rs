//! Two-period SMPS subset: free-format CORE, TIME with explicit period
//! starts, STOCH with `INDEP DISCRETE` blocks on RHS and T entries.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use super::{FirstStage, Scenario, SecondStage, TwoStageInstance};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

fn perr(file: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse { location: format!("{file}:{line}"), message: message.into() }
}

#[derive(Clone, Copy, PartialEq, Debug)]
enum RowKind {
    E,
    L,
    G,
}

struct Core {
    objective: String,
    rows: Vec<(String, RowKind)>,
    row_index: HashMap<String, usize>,
    cols: Vec<String>,
    col_index: HashMap<String, usize>,
    /// (row, col) → value, objective row stored as row `usize::MAX`
    coef: HashMap<(usize, usize), f64>,
    rhs: Vec<f64>,
}

fn number(file: &str, line: usize, s: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|_| perr(file, line, format!("bad number '{s}'")))
}

const OBJ: usize = usize::MAX;

fn parse_core(text: &str) -> Result<Core> {
    let f = "CORE";
    let mut core = Core {
        objective: String::new(),
        rows: Vec::new(),
        row_index: HashMap::new(),
        cols: Vec::new(),
        col_index: HashMap::new(),
        coef: HashMap::new(),
        rhs: Vec::new(),
    };
    let mut section = "";
    let mut done = false;
    for (ln, raw) in text.lines().enumerate() {
        let ln = ln + 1;
        if raw.trim().is_empty() || raw.starts_with('*') {
            continue;
        }
        let toks: Vec<&str> = raw.split_whitespace().collect();
        if !raw.starts_with(' ') && !raw.starts_with('\t') {
            section = match toks[0] {
                "NAME" => "NAME",
                "ROWS" => "ROWS",
                "COLUMNS" => "COLUMNS",
                "RHS" => "RHS",
                "BOUNDS" => "BOUNDS",
                "ENDATA" => {
                    done = true;
                    break;
                }
                "RANGES" => return Err(perr(f, ln, "RANGES section is not supported")),
                other => return Err(perr(f, ln, format!("unknown section '{other}'"))),
            };
            continue;
        }
        match section {
            "ROWS" => {
                if toks.len() != 2 {
                    return Err(perr(f, ln, "expected '<type> <name>'"));
                }
                let kind = match toks[0] {
                    "N" => {
                        if !core.objective.is_empty() {
                            return Err(perr(f, ln, "more than one objective row"));
                        }
                        core.objective = toks[1].to_string();
                        continue;
                    }
                    "E" => RowKind::E,
                    "L" => RowKind::L,
                    "G" => RowKind::G,
                    t => return Err(perr(f, ln, format!("unknown row type '{t}'"))),
                };
                if core.row_index.insert(toks[1].to_string(), core.rows.len()).is_some() {
                    return Err(perr(f, ln, format!("duplicate row '{}'", toks[1])));
                }
                core.rows.push((toks[1].to_string(), kind));
                core.rhs.push(0.0);
            }
            "COLUMNS" => {
                if toks.iter().any(|t| t.contains("MARKER")) {
                    return Err(perr(f, ln, "integer markers are not supported"));
                }
                if toks.len() != 3 && toks.len() != 5 {
                    return Err(perr(f, ln, "expected '<col> <row> <value> [<row> <value>]'"));
                }
                let col = if core.cols.last().map(|s| s.as_str()) == Some(toks[0]) {
                    core.cols.len() - 1
                } else if core.col_index.contains_key(toks[0]) {
                    return Err(perr(f, ln, "column entries must be contiguous"));
                } else {
                    core.col_index.insert(toks[0].to_string(), core.cols.len());
                    core.cols.push(toks[0].to_string());
                    core.cols.len() - 1
                };
                for pair in toks[1..].chunks(2) {
                    let v = number(f, ln, pair[1])?;
                    let row = if pair[0] == core.objective {
                        OBJ
                    } else {
                        *core.row_index.get(pair[0]).ok_or_else(|| perr(f, ln, format!("unknown row '{}'", pair[0])))?
                    };
                    core.coef.insert((row, col), v);
                }
            }
            "RHS" => {
                if toks.len() != 3 && toks.len() != 5 {
                    return Err(perr(f, ln, "expected '<set> <row> <value> [<row> <value>]'"));
                }
                for pair in toks[1..].chunks(2) {
                    let v = number(f, ln, pair[1])?;
                    if pair[0] == core.objective {
                        return Err(perr(f, ln, "objective constant is not supported"));
                    }
                    let row = *core.row_index.get(pair[0]).ok_or_else(|| perr(f, ln, format!("unknown row '{}'", pair[0])))?;
                    core.rhs[row] = v;
                }
            }
            "BOUNDS" => {
                let ok = match toks.as_slice() {
                    ["PL", _, _] => true,
                    ["LO", _, _, v] => number(f, ln, v)? == 0.0,
                    _ => false,
                };
                if !ok {
                    return Err(perr(f, ln, "only 'LO <set> <col> 0' and 'PL' bounds are supported"));
                }
            }
            "NAME" => {}
            _ => return Err(perr(f, ln, "data line outside a section")),
        }
    }
    if !done {
        return Err(perr(f, text.lines().count(), "missing ENDATA"));
    }
    if core.objective.is_empty() {
        return Err(perr(f, 0, "no objective row"));
    }
    Ok(core)
}

/// Returns (first stage-2 column, first stage-2 row).
fn parse_time(text: &str, core: &Core) -> Result<(usize, usize)> {
    let f = "TIME";
    let mut periods: Vec<(usize, usize, usize)> = Vec::new();
    let mut in_periods = false;
    for (ln, raw) in text.lines().enumerate() {
        let ln = ln + 1;
        if raw.trim().is_empty() || raw.starts_with('*') {
            continue;
        }
        let toks: Vec<&str> = raw.split_whitespace().collect();
        if !raw.starts_with(' ') && !raw.starts_with('\t') {
            match toks[0] {
                "TIME" => {}
                "PERIODS" => {
                    if toks.get(1).is_some_and(|t| *t != "IMPLICIT" && *t != "LP") {
                        return Err(perr(f, ln, "only implicit PERIODS are supported"));
                    }
                    in_periods = true;
                }
                "ENDATA" => break,
                other => return Err(perr(f, ln, format!("unsupported section '{other}'"))),
            }
            continue;
        }
        if !in_periods || toks.len() != 3 {
            return Err(perr(f, ln, "expected '<col> <row> <period>'"));
        }
        let col = *core.col_index.get(toks[0]).ok_or_else(|| perr(f, ln, format!("unknown column '{}'", toks[0])))?;
        let row = if toks[1] == core.objective {
            return Err(perr(f, ln, "period cannot start at the objective row"));
        } else {
            *core.row_index.get(toks[1]).ok_or_else(|| perr(f, ln, format!("unknown row '{}'", toks[1])))?
        };
        periods.push((col, row, ln));
    }
    if periods.len() != 2 {
        return Err(perr(f, 0, format!("expected exactly two periods, found {}", periods.len())));
    }
    if periods[0].0 != 0 || periods[0].1 != 0 {
        return Err(perr(f, periods[0].2, "first period must start at the first row and column"));
    }
    let (c2, r2, ln) = periods[1];
    if c2 == 0 || r2 == 0 {
        return Err(perr(f, ln, "second period must start after the first"));
    }
    Ok((c2, r2))
}

enum Target {
    H(usize),
    T(usize, usize),
}

struct RandomVar {
    key: (String, String),
    target: Target,
    values: Vec<(f64, f64)>,
}

fn parse_stoch(text: &str, core: &Core, c2: usize, r2: usize) -> Result<Vec<RandomVar>> {
    let f = "STOCH";
    let mut vars: Vec<RandomVar> = Vec::new();
    let mut in_indep = false;
    for (ln, raw) in text.lines().enumerate() {
        let ln = ln + 1;
        if raw.trim().is_empty() || raw.starts_with('*') {
            continue;
        }
        let toks: Vec<&str> = raw.split_whitespace().collect();
        if !raw.starts_with(' ') && !raw.starts_with('\t') {
            match toks[0] {
                "STOCH" => {}
                "INDEP" => {
                    if toks.get(1) != Some(&"DISCRETE") {
                        return Err(perr(f, ln, "only INDEP DISCRETE is supported"));
                    }
                    in_indep = true;
                }
                "ENDATA" => break,
                other => return Err(perr(f, ln, format!("unsupported section '{other}'"))),
            }
            continue;
        }
        if !in_indep {
            return Err(perr(f, ln, "data line outside INDEP section"));
        }
        let (col, row, val, prob) = match toks.as_slice() {
            [c, r, v, p] => (*c, *r, *v, *p),
            [c, r, v, _period, p] => (*c, *r, *v, *p),
            _ => return Err(perr(f, ln, "expected '<col> <row> <value> [<period>] <prob>'")),
        };
        let value = number(f, ln, val)?;
        let p = number(f, ln, prob)?;
        if !(p > 0.0 && p <= 1.0) {
            return Err(perr(f, ln, format!("probability {p} outside (0,1]")));
        }
        let ri = *core.row_index.get(row).ok_or_else(|| perr(f, ln, format!("unknown or objective row '{row}'")))?;
        if ri < r2 {
            return Err(perr(f, ln, "random entries must lie in second-stage rows"));
        }
        let target = match core.col_index.get(col) {
            Some(&cj) if cj < c2 => Target::T(ri - r2, cj),
            Some(_) => return Err(perr(f, ln, "random recourse matrix entries are not supported")),
            None => Target::H(ri - r2),
        };
        let key = (col.to_string(), row.to_string());
        match vars.last_mut() {
            Some(last) if last.key == key => last.values.push((value, p)),
            _ => {
                if vars.iter().any(|v| v.key == key) {
                    return Err(perr(f, ln, "realizations of one entry must be contiguous"));
                }
                vars.push(RandomVar { key, target, values: vec![(value, p)] });
            }
        }
    }
    for v in &vars {
        let s: f64 = v.values.iter().map(|x| x.1).sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!("probabilities of entry {}/{} sum to {s}", v.key.0, v.key.1)));
        }
    }
    Ok(vars)
}

pub fn parse_smps(core_text: &str, time_text: &str, stoch_text: &str) -> Result<TwoStageInstance> {
    let core = parse_core(core_text)?;
    let (c2, r2) = parse_time(time_text, &core)?;
    let vars = parse_stoch(stoch_text, &core, c2, r2)?;

    let nrows = core.rows.len();
    let ncols = core.cols.len();
    for (&(r, c), &v) in &core.coef {
        if r != OBJ && r < r2 && c >= c2 && v != 0.0 {
            return Err(perr("CORE", 0, format!("first-stage row '{}' uses second-stage column '{}'", core.rows[r].0, core.cols[c])));
        }
    }
    // slack columns appended after the structural columns of their stage
    let slack = |r: usize| match core.rows[r].1 {
        RowKind::E => None,
        RowKind::L => Some(1.0),
        RowKind::G => Some(-1.0),
    };
    let s1: Vec<usize> = (0..r2).filter(|&r| slack(r).is_some()).collect();
    let s2: Vec<usize> = (r2..nrows).filter(|&r| slack(r).is_some()).collect();
    let dx = c2 + s1.len();
    let ny = (ncols - c2) + s2.len();
    let m1 = r2;
    let m2 = nrows - r2;
    let get = |r: usize, c: usize| core.coef.get(&(r, c)).copied().unwrap_or(0.0);

    let mut c = vec![0.0; dx];
    let mut a = Matrix::zeros(m1, dx);
    for j in 0..c2 {
        c[j] = get(OBJ, j);
        for r in 0..m1 {
            a.set(r, j, get(r, j));
        }
    }
    for (k, &r) in s1.iter().enumerate() {
        a.set(r, c2 + k, slack(r).unwrap());
    }
    let mut q = vec![0.0; ny];
    let mut w = Matrix::zeros(m2, ny);
    for j in c2..ncols {
        q[j - c2] = get(OBJ, j);
        for r in r2..nrows {
            w.set(r - r2, j - c2, get(r, j));
        }
    }
    for (k, &r) in s2.iter().enumerate() {
        w.set(r - r2, ncols - c2 + k, slack(r).unwrap());
    }
    let mut t0 = Matrix::zeros(m2, dx);
    for r in r2..nrows {
        for j in 0..c2 {
            t0.set(r - r2, j, get(r, j));
        }
    }
    let h0: Vec<f64> = core.rhs[r2..].to_vec();

    // cross product, first random entry varies slowest
    let total: usize = vars.iter().map(|v| v.values.len()).product();
    let mut scenarios = Vec::with_capacity(total);
    let mut idx = vec![0usize; vars.len()];
    for _ in 0..total {
        let mut h = h0.clone();
        let mut t = t0.clone();
        let mut p = 1.0;
        for (v, &i) in vars.iter().zip(&idx) {
            let (val, pr) = v.values[i];
            p *= pr;
            match v.target {
                Target::H(r) => h[r] = val,
                Target::T(r, j) => t.set(r, j, val),
            }
        }
        scenarios.push(Scenario { probability: p, h, t });
        for k in (0..vars.len()).rev() {
            idx[k] += 1;
            if idx[k] < vars[k].values.len() {
                break;
            }
            idx[k] = 0;
        }
    }
    // product probabilities may drift from 1 by a few ulps
    let sum: f64 = scenarios.iter().map(|s| s.probability).sum();
    if (sum - 1.0).abs() <= 1e-9 {
        for s in &mut scenarios {
            s.probability /= sum;
        }
    }

    let inst = TwoStageInstance {
        first_stage: FirstStage { c, a, b_nominal: core.rhs[..r2].to_vec() },
        second_stage: SecondStage { q, w },
        scenarios,
        perturbed_rows: (0..m1).collect(),
    };
    inst.validate()?;
    Ok(inst)
}

fn sibling(path: &Path, exts: &[&str]) -> Result<PathBuf> {
    for e in exts {
        for cand in [e.to_string(), e.to_ascii_uppercase()] {
            let p = path.with_extension(cand);
            if p.exists() {
                return Ok(p);
            }
        }
    }
    Err(Error::Io(format!("no {} file next to {}", exts.join("/"), path.display())))
}

/// Reads `<stem>.cor` together with its `.tim` and `.sto` siblings.
pub fn read_smps(core_path: &Path) -> Result<TwoStageInstance> {
    let core = std::fs::read_to_string(core_path)?;
    let time = std::fs::read_to_string(sibling(core_path, &["tim", "time"])?)?;
    let stoch = std::fs::read_to_string(sibling(core_path, &["sto", "stoch"])?)?;
    parse_smps(&core, &time, &stoch).map_err(|e| match e {
        Error::Parse { location, message } => {
            Error::Parse { location: format!("{} {location}", core_path.display()), message }
        }
        other => other,
    })
}
