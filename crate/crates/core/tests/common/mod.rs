#![allow(dead_code)]

use pldc::linalg::Matrix;
use pldc::simplex::LinearProgram;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random bounded feasible LP in standard form: a random `m × n` block plus a
/// box row `Σx + s = cap` when costs may be negative.
pub fn random_lp(seed: u64, max_vars: usize, max_cons: usize) -> LinearProgram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.gen_range(1..=max_cons);
    let mixed = rng.gen_bool(0.5);
    let rows = if mixed { m + 1 } else { m };
    let n_min = rows + 1;
    let n = rng.gen_range(n_min.min(max_vars)..=max_vars).max(rows);
    let mut a = Matrix::zeros(rows, n);
    for r in 0..m {
        for c in 0..n {
            let v: f64 = rng.gen_range(-1.0..1.0);
            a.set(r, c, if rng.gen_bool(0.2) { 0.0 } else { (v * 8.0).round() / 4.0 });
        }
    }
    if mixed {
        for c in 0..n {
            a.set(m, c, 1.0);
        }
    }
    let x0: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.6) { rng.gen_range(0.0..3.0) } else { 0.0 }).collect();
    let b = a.mul_vec(&x0);
    let c: Vec<f64> = (0..n)
        .map(|_| if mixed { rng.gen_range(-2.0..2.0) } else { rng.gen_range(0.0..2.0) })
        .collect();
    match LinearProgram::new(c.clone(), a.clone(), b.clone()) {
        Ok(lp) => lp,
        // rank-deficient draw: fall back to a slack-augmented copy
        Err(_) => {
            let mut rows_v = a.to_rows();
            for (r, row) in rows_v.iter_mut().enumerate() {
                for k in 0..rows {
                    row.push(if k == r { 1.0 } else { 0.0 });
                }
            }
            let mut c2 = c;
            c2.extend(std::iter::repeat(0.0).take(rows));
            LinearProgram::new(c2, Matrix::from_rows(&rows_v).unwrap(), b).unwrap()
        }
    }
}

/// Synthetic instance with seed-dependent shape and up to 64 scenarios.
pub fn random_instance(seed: u64) -> pldc::instance::TwoStageInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let m1 = rng.gen_range(1..=3);
    let d_x = m1 + rng.gen_range(1..=3);
    let m2 = d_x - m1 + rng.gen_range(1..=3);
    let num_scenarios = rng.gen_range(1..=64);
    pldc::instance::generate_synthetic(&pldc::instance::SyntheticSpec { d_x, m1, m2, num_scenarios, seed }).unwrap()
}

/// `min cᵀx, Ax = b, x ≥ 0` with columns (1,0), (0,1), (1,1), (2,1), (1,2).
pub fn lp_2x5() -> (Vec<f64>, Matrix) {
    let a = Matrix::from_rows(&[vec![1.0, 0.0, 1.0, 2.0, 1.0], vec![0.0, 1.0, 1.0, 1.0, 2.0]]).unwrap();
    (vec![1.0, 1.0, 1.5, 2.4, 2.45], a)
}

/// Right-hand sides in the positive quadrant.
pub fn rhs_2x5(seed: u64, n: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| vec![rng.gen_range(0.5..4.0), rng.gen_range(0.5..4.0)]).collect()
}
