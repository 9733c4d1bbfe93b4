//! Exhaustive basis enumeration. Only meant for tiny programs in tests.

use crate::error::{Error, Result};
use crate::linalg::{dot, Lu};

use super::LinearProgram;

pub const ORACLE_MAX_VARS: usize = 12;
const ORACLE_TOL: f64 = 1e-9;

fn check(lp: &LinearProgram) -> Result<()> {
    if lp.num_vars() > ORACLE_MAX_VARS {
        return Err(Error::TooLarge(lp.num_vars(), ORACLE_MAX_VARS));
    }
    let standard = lp.lower().iter().all(|&l| l == 0.0) && lp.upper().iter().all(|u| u.is_infinite());
    if !standard {
        return Err(Error::Construction("oracle supports x ≥ 0 only".into()));
    }
    Ok(())
}

/// Visits every feasible basis in lexicographic order as `(basis, objective)`.
fn for_each_feasible(lp: &LinearProgram, rhs: &[f64], mut visit: impl FnMut(&[usize], f64)) {
    let m = lp.num_cons();
    let n = lp.num_vars();
    let a = &lp.matrix();
    let mut idx: Vec<usize> = (0..m).collect();
    loop {
        let mut dense = vec![0.0; m * m];
        for (c, &j) in idx.iter().enumerate() {
            for r in 0..m {
                dense[r * m + c] = a.get(r, j);
            }
        }
        if let Ok(lu) = Lu::factor(m, dense) {
            let mut xb = rhs.to_vec();
            lu.solve(&mut xb);
            let scale = 1.0 + xb.iter().fold(0.0f64, |s, v| s.max(v.abs()));
            if xb.iter().all(|&v| v >= -ORACLE_TOL * scale) {
                let cb: Vec<f64> = idx.iter().map(|&j| lp.objective()[j]).collect();
                visit(&idx, dot(&cb, &xb));
            }
        }
        // next combination
        let mut i = m;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] < n - m + i {
                idx[i] += 1;
                for k in i + 1..m {
                    idx[k] = idx[k - 1] + 1;
                }
                break;
            }
        }
    }
}

/// For each right-hand side, the lexicographically smallest basis among those
/// attaining the minimum objective.
pub fn enumerate_optimal_bases(lp: &LinearProgram, rhs_list: &[Vec<f64>]) -> Result<Vec<Vec<usize>>> {
    check(lp)?;
    let mut out = Vec::with_capacity(rhs_list.len());
    for (k, rhs) in rhs_list.iter().enumerate() {
        crate::error::check_dim("rhs length", lp.num_cons(), rhs.len())?;
        let mut best: Option<(Vec<usize>, f64)> = None;
        for_each_feasible(lp, rhs, |basis, obj| {
            let replace = match &best {
                None => true,
                Some((_, b)) => obj < b - ORACLE_TOL * (1.0 + b.abs()),
            };
            if replace {
                best = Some((basis.to_vec(), obj));
            }
        });
        match best {
            Some((b, _)) => out.push(b),
            None => return Err(Error::InfeasibleRhs(k)),
        }
    }
    Ok(out)
}

/// Minimum objective over all feasible bases, `None` when no basis is
/// feasible. Equals the optimum whenever the program is bounded.
pub fn vertex_minimum(lp: &LinearProgram, rhs: &[f64]) -> Result<Option<f64>> {
    check(lp)?;
    let mut best: Option<f64> = None;
    for_each_feasible(lp, rhs, |_, obj| {
        best = Some(best.map_or(obj, |b: f64| b.min(obj)));
    });
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    #[test]
    fn infeasible_rhs_reported() {
        let lp = LinearProgram::new(vec![1.0; 3], Matrix::from_rows(&[vec![1.0, 2.0, 1.0]]).unwrap(), vec![1.0]).unwrap();
        assert!(matches!(enumerate_optimal_bases(&lp, &[vec![-1.0]]), Err(Error::InfeasibleRhs(0))));
    }

    #[test]
    fn scaled_column_rhs_picks_cheapest_ratio() {
        // b = 3·a_1; column 2 is a cheaper way to reach the same ray
        let a = Matrix::from_rows(&[vec![1.0, 2.0, 4.0], vec![0.0, 1.0, 2.0]]).unwrap();
        let lp = LinearProgram::new(vec![1.0, 3.0, 5.0], a.clone(), vec![0.0, 0.0]).unwrap();
        let b = enumerate_optimal_bases(&lp, &[vec![6.0, 3.0]]).unwrap();
        assert!(b[0].contains(&2));
    }

    #[test]
    fn too_large_guard() {
        let a = Matrix::from_rows(&[vec![1.0; 13]]).unwrap();
        let lp = LinearProgram::new(vec![1.0; 13], a, vec![1.0]).unwrap();
        assert!(matches!(vertex_minimum(&lp, &[1.0]), Err(Error::TooLarge(13, 12))));
    }
}
