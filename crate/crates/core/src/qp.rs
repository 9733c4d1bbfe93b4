//! Primal active-set method for small dense convex QPs with a diagonal
//! Hessian:
//!
//! `min ½ zᵀ diag(h) z + gᵀz  s.t.  E z = e,  G z ≥ f`.
//!
//! The caller supplies a feasible starting point and a working set whose
//! reduced Hessian is positive definite; every iterate stays feasible and the
//! objective never increases.

use crate::error::{Error, Result};
use crate::linalg::{dot, IndependentSet, Lu};

pub struct Qp<'a> {
    pub h: &'a [f64],
    pub g: &'a [f64],
    pub eq: &'a [Vec<f64>],
    pub eq_rhs: &'a [f64],
    pub ineq: &'a [Vec<f64>],
    pub ineq_rhs: &'a [f64],
}

#[derive(Clone, Debug)]
pub struct QpSolution {
    pub z: Vec<f64>,
    /// Inequality indices active at the solution, ascending.
    pub working: Vec<usize>,
    /// Multipliers of the active inequalities, aligned with `working`.
    pub multipliers: Vec<f64>,
    pub iterations: usize,
}

const STEP_TOL: f64 = 1e-12;
const DUAL_TOL: f64 = 1e-10;

impl Qp<'_> {
    pub fn objective(&self, z: &[f64]) -> f64 {
        z.iter().zip(self.h).map(|(v, h)| 0.5 * h * v * v).sum::<f64>() + dot(self.g, z)
    }

    /// Step for the equality-constrained subproblem on `working`, with the
    /// multipliers of `E` followed by those of the working rows.
    fn eqp(&self, z: &[f64], working: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = z.len();
        let rows: Vec<&Vec<f64>> = self.eq.iter().chain(working.iter().map(|&i| &self.ineq[i])).collect();
        let k = rows.len();
        let dim = n + k;
        let mut kkt = vec![0.0; dim * dim];
        for i in 0..n {
            kkt[i * dim + i] = self.h[i];
        }
        for (r, a) in rows.iter().enumerate() {
            for j in 0..n {
                kkt[j * dim + n + r] = -a[j];
                kkt[(n + r) * dim + j] = a[j];
            }
        }
        let lu = Lu::factor(dim, kkt).map_err(|_| Error::Numerical("singular QP working set".into()))?;
        let mut rhs = vec![0.0; dim];
        for i in 0..n {
            rhs[i] = -(self.h[i] * z[i] + self.g[i]);
        }
        lu.solve(&mut rhs);
        let lambda = rhs.split_off(n);
        Ok((rhs, lambda))
    }

    pub fn solve(&self, z0: Vec<f64>, initial: &[usize], max_iter: usize) -> Result<QpSolution> {
        let n = z0.len();
        let mut z = z0;
        // keep the initial working set linearly independent of E
        let mut set = IndependentSet::new(n);
        for a in self.eq {
            set.try_add(a);
        }
        let mut working: Vec<usize> = Vec::new();
        for &i in initial {
            if set.try_add(&self.ineq[i]) {
                working.push(i);
            }
        }
        let neq = self.eq.len();
        for it in 1..=max_iter {
            let (p, lambda) = self.eqp(&z, &working)?;
            let scale = 1.0 + z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let pnorm = p.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if pnorm <= STEP_TOL * scale {
                let lw = &lambda[neq..];
                let mut worst: Option<(usize, f64)> = None;
                for (pos, &l) in lw.iter().enumerate() {
                    if l < -DUAL_TOL && worst.map_or(true, |(_, w)| l < w) {
                        worst = Some((pos, l));
                    }
                }
                match worst {
                    None => {
                        let mut order: Vec<usize> = (0..working.len()).collect();
                        order.sort_by_key(|&k| working[k]);
                        return Ok(QpSolution {
                            z,
                            working: order.iter().map(|&k| working[k]).collect(),
                            multipliers: order.iter().map(|&k| lw[k]).collect(),
                            iterations: it,
                        });
                    }
                    Some((pos, _)) => {
                        working.remove(pos);
                    }
                }
                continue;
            }
            // ratio test over inactive inequalities
            let mut step = 1.0;
            let mut block: Option<usize> = None;
            for (i, a) in self.ineq.iter().enumerate() {
                if working.contains(&i) {
                    continue;
                }
                let ap = dot(a, &p);
                if ap < -STEP_TOL {
                    let slack = (dot(a, &z) - self.ineq_rhs[i]).max(0.0);
                    let t = slack / -ap;
                    if t < step {
                        step = t;
                        block = Some(i);
                    }
                }
            }
            for (v, d) in z.iter_mut().zip(&p) {
                *v += step * d;
            }
            if let Some(i) = block {
                working.push(i);
            }
        }
        Err(Error::Numerical(format!("QP active-set limit of {max_iter} iterations reached")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_onto_simplex() {
        // min ½‖z − (0.8, 0.6)‖² on z1 + z2 = 1, z ≥ 0 → (0.6, 0.4)
        let h = [1.0, 1.0];
        let g = [-0.8, -0.6];
        let eq = vec![vec![1.0, 1.0]];
        let ineq = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let qp = Qp { h: &h, g: &g, eq: &eq, eq_rhs: &[1.0], ineq: &ineq, ineq_rhs: &[0.0, 0.0] };
        let s = qp.solve(vec![1.0, 0.0], &[1], 50).unwrap();
        assert!((s.z[0] - 0.6).abs() < 1e-12 && (s.z[1] - 0.4).abs() < 1e-12);
        assert!(s.working.is_empty());
    }

    #[test]
    fn bound_becomes_active() {
        // min ½‖z − (2, −1)‖² on z1 + z2 = 1, z ≥ 0 → (1, 0)
        let h = [1.0, 1.0];
        let g = [-2.0, 1.0];
        let eq = vec![vec![1.0, 1.0]];
        let ineq = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let qp = Qp { h: &h, g: &g, eq: &eq, eq_rhs: &[1.0], ineq: &ineq, ineq_rhs: &[0.0, 0.0] };
        let s = qp.solve(vec![0.5, 0.5], &[], 50).unwrap();
        assert!((s.z[0] - 1.0).abs() < 1e-12 && s.z[1].abs() < 1e-12);
        assert_eq!(s.working, vec![1]);
        assert!(s.multipliers[0] > 0.0);
    }

    #[test]
    fn epigraph_of_two_cuts() {
        // min ½x² + |x − 1| in epigraph form; 0 ∈ x + [−1, 1] at x = 1
        let h = [1.0, 0.0];
        let g = [0.0, 1.0];
        let ineq = vec![vec![1.0, 1.0], vec![-1.0, 1.0]];
        let qp = Qp { h: &h, g: &g, eq: &[], eq_rhs: &[], ineq: &ineq, ineq_rhs: &[1.0, -1.0] };
        let s = qp.solve(vec![3.0, 2.0], &[1], 50).unwrap();
        assert!((s.z[0] - 1.0).abs() < 1e-12 && s.z[1].abs() < 1e-12);
        let total: f64 = s.multipliers.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
