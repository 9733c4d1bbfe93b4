//! Capacity-planning generator.
//!
//! First stage buys `p = d_x − m1` capacities under `m1` budget rows
//! `R·cap + s = b`. Second stage routes capacity to `m2 − p` demands with a
//! shortfall penalty; capacity yield `a_i(ω)` and demands `d_r(ω)` are random.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FirstStage, Scenario, SecondStage, TwoStageInstance};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const SHORTFALL_PENALTY: f64 = 5.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub d_x: usize,
    pub m1: usize,
    pub m2: usize,
    pub num_scenarios: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Same first-stage shape as PGP2: 4 variables, 2 constraints.
    pub fn pgp2_shape(seed: u64) -> Self {
        SyntheticSpec { d_x: 4, m1: 2, m2: 5, num_scenarios: 16, seed }
    }

    pub fn check(&self) -> Result<()> {
        if self.m1 == 0 || self.d_x <= self.m1 {
            return Err(Error::Config(format!("need 0 < m1 < d_x (got m1={}, d_x={})", self.m1, self.d_x)));
        }
        if self.m2 <= self.d_x - self.m1 {
            return Err(Error::Config(format!("need m2 > d_x − m1 = {}", self.d_x - self.m1)));
        }
        if self.num_scenarios == 0 {
            return Err(Error::Config("num_scenarios must be at least 1".into()));
        }
        Ok(())
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<TwoStageInstance> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (m1, dx) = (spec.m1, spec.d_x);
    let p = dx - m1;
    let nd = spec.m2 - p;

    let mut a = Matrix::zeros(m1, dx);
    for r in 0..m1 {
        for i in 0..p {
            a.set(r, i, rng.gen_range(0.5..1.5));
        }
        a.set(r, p + r, 1.0);
    }
    let mut c = vec![0.0; dx];
    for ci in c.iter_mut().take(p) {
        *ci = rng.gen_range(1.0..3.0);
    }
    let cap: Vec<f64> = (0..p).map(|_| rng.gen_range(3.0..6.0)).collect();
    // strictly positive slack keeps b in the interior of pos(A)
    let b: Vec<f64> = (0..m1).map(|r| a.row(r)[..p].iter().zip(&cap).map(|(x, y)| x * y).sum::<f64>() + 1.0).collect();

    // y_ir (i-major), then s_i, then u_r
    let ny = p * nd + p + nd;
    let mut q = vec![0.0; ny];
    let mut w = Matrix::zeros(spec.m2, ny);
    for i in 0..p {
        for r in 0..nd {
            let col = i * nd + r;
            q[col] = rng.gen_range(0.2..1.0);
            w.set(i, col, 1.0);
            w.set(p + r, col, 1.0);
        }
        w.set(i, p * nd + i, 1.0);
    }
    for r in 0..nd {
        q[p * nd + p + r] = SHORTFALL_PENALTY;
        w.set(p + r, p * nd + p + r, 1.0);
    }

    let prob = 1.0 / spec.num_scenarios as f64;
    let scenarios = (0..spec.num_scenarios)
        .map(|_| {
            let mut t = Matrix::zeros(spec.m2, dx);
            for i in 0..p {
                t.set(i, i, -rng.gen_range(0.6..1.0));
            }
            let mut h = vec![0.0; spec.m2];
            for hr in h.iter_mut().skip(p) {
                *hr = rng.gen_range(1.0..6.0);
            }
            Scenario { probability: prob, h, t }
        })
        .collect();

    let inst = TwoStageInstance {
        first_stage: FirstStage { c, a, b_nominal: b },
        second_stage: SecondStage { q, w },
        scenarios,
        perturbed_rows: (0..m1).collect(),
    };
    inst.validate()?;
    Ok(inst)
}

/// Replaces the scenario set by its mean.
pub fn mean_value_instance(inst: &TwoStageInstance) -> TwoStageInstance {
    TwoStageInstance { scenarios: vec![inst.mean_scenario()], ..inst.clone() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{build_extensive_form, instance_to_json};
    use crate::simplex::{solve_lp, LpStatus};

    #[test]
    fn pgp2_shape() {
        let inst = generate_synthetic(&SyntheticSpec::pgp2_shape(7)).unwrap();
        assert_eq!((inst.d_x(), inst.m1(), inst.m2(), inst.scenarios.len()), (4, 2, 5, 16));
    }

    #[test]
    fn same_seed_same_bits() {
        let a = generate_synthetic(&SyntheticSpec::pgp2_shape(7)).unwrap();
        let b = generate_synthetic(&SyntheticSpec::pgp2_shape(7)).unwrap();
        assert_eq!(instance_to_json(&a).unwrap(), instance_to_json(&b).unwrap());
        let c = generate_synthetic(&SyntheticSpec::pgp2_shape(8)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn single_scenario_extensive_form() {
        let spec = SyntheticSpec { num_scenarios: 1, ..SyntheticSpec::pgp2_shape(3) };
        let inst = generate_synthetic(&spec).unwrap();
        let lp = build_extensive_form(&inst, &inst.first_stage.b_nominal).unwrap();
        assert_eq!(lp.num_cons(), inst.m1() + inst.m2());
        assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Optimal);
    }

    #[test]
    fn b_outside_cone_is_infeasible() {
        let inst = generate_synthetic(&SyntheticSpec::pgp2_shape(3)).unwrap();
        let lp = build_extensive_form(&inst, &[-1.0, 2.0]).unwrap();
        assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn bad_shape_rejected() {
        let spec = SyntheticSpec { d_x: 2, m1: 2, m2: 3, num_scenarios: 1, seed: 0 };
        assert!(matches!(generate_synthetic(&spec), Err(Error::Config(_))));
    }
}
