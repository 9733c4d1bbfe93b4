mod common;

use pldc::simplex::{
    enumerate_optimal_bases, reduced_costs, resolve_with_rhs, solve_lp, vertex_minimum, LinearProgram, LpStatus,
};
use pldc::linalg::{Lu, Matrix};
use proptest::prelude::*;

fn check_against_oracle(lp: &LinearProgram) {
    let sol = solve_lp(lp).unwrap();
    let oracle = vertex_minimum(lp, lp.rhs()).unwrap().expect("feasible by construction");
    assert_eq!(sol.status, LpStatus::Optimal);
    assert!((sol.objective - oracle).abs() <= 1e-9 * (1.0 + oracle.abs()), "{} vs {}", sol.objective, oracle);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matches_vertex_enumeration(seed in any::<u64>()) {
        check_against_oracle(&common::random_lp(seed, 10, 4));
    }

    #[test]
    fn complementary_slackness_holds(seed in any::<u64>()) {
        let lp = common::random_lp(seed, 10, 4);
        let sol = solve_lp(&lp).unwrap();
        let d = reduced_costs(&lp, &sol.duals);
        for j in 0..lp.num_vars() {
            let gap = sol.x[j] - lp.lower()[j];
            prop_assert!((d[j] * gap).abs() <= 1e-8, "var {} d={} gap={}", j, d[j], gap);
            prop_assert!(d[j] >= -1e-9 || sol.basis.contains(&j));
        }
        prop_assert_eq!(sol.basis.len(), lp.num_cons());
        prop_assert!(sol.basis.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn warm_start_matches_cold(seed in any::<u64>(), shift in proptest::collection::vec(-1.0f64..1.0, 5)) {
        let lp = common::random_lp(seed, 10, 4);
        let base = solve_lp(&lp).unwrap();
        let b2: Vec<f64> = lp.rhs().iter().zip(shift.iter().cycle()).map(|(b, s)| b + s).collect();
        let cold = solve_lp(&lp.with_rhs(b2.clone()).unwrap()).unwrap();
        let warm = resolve_with_rhs(&lp, &b2, Some(&base.basis)).unwrap();
        prop_assert_eq!(cold.status, warm.status);
        if cold.status == LpStatus::Optimal {
            prop_assert!((cold.objective - warm.objective).abs() <= 1e-9 * (1.0 + cold.objective.abs()));
        }
    }

    #[test]
    fn repeated_solves_are_identical(seed in any::<u64>()) {
        let lp = common::random_lp(seed, 10, 4);
        let a = solve_lp(&lp).unwrap();
        let b = solve_lp(&lp).unwrap();
        prop_assert_eq!(a.basis, b.basis);
        prop_assert_eq!(a.x, b.x);
    }
}

#[test]
fn two_by_five_matches_all_bases() {
    for seed in 0..50u64 {
        let lp = common::random_lp(seed, 5, 2);
        check_against_oracle(&lp);
    }
}

#[test]
fn rhs_inside_sensitivity_range_keeps_basis() {
    let a = Matrix::from_rows(&[vec![1.0, 2.0, 1.0, 0.0, 3.0], vec![2.0, 1.0, 0.0, 1.0, 1.0]]).unwrap();
    let lp = LinearProgram::new(vec![2.0, 3.0, 1.0, 1.5, 4.0], a.clone(), vec![4.0, 5.0]).unwrap();
    let s = solve_lp(&lp).unwrap();
    let b2 = vec![4.2, 5.1];
    let r = resolve_with_rhs(&lp, &b2, Some(&s.basis)).unwrap();
    assert_eq!(r.basis, s.basis);
    assert_eq!(r.iterations, 0);
    // x_B = B⁻¹ b′ by direct solve
    let m = 2;
    let mut dense = vec![0.0; 4];
    for (c, &j) in s.basis.iter().enumerate() {
        for row in 0..m {
            dense[row * m + c] = a.get(row, j);
        }
    }
    let lu = Lu::factor(2, dense).unwrap();
    let mut xb = b2.clone();
    lu.solve(&mut xb);
    assert!(xb.iter().all(|&v| v >= 0.0));
    for (c, &j) in s.basis.iter().enumerate() {
        assert!((r.x[j] - xb[c]).abs() < 1e-12);
    }
}

#[test]
fn rhs_outside_range_changes_basis_and_matches_cold() {
    let a = Matrix::from_rows(&[vec![1.0, 2.0, 1.0, 0.0, 3.0], vec![2.0, 1.0, 0.0, 1.0, 1.0]]).unwrap();
    let lp = LinearProgram::new(vec![2.0, 3.0, 1.0, 1.5, 4.0], a, vec![4.0, 5.0]).unwrap();
    let s = solve_lp(&lp).unwrap();
    let b2 = vec![0.5, 10.0];
    let warm = resolve_with_rhs(&lp, &b2, Some(&s.basis)).unwrap();
    let cold = solve_lp(&lp.with_rhs(b2).unwrap()).unwrap();
    assert_ne!(warm.basis, s.basis);
    assert!((warm.objective - cold.objective).abs() <= 1e-9);
}

#[test]
fn oracle_groups_rhs_in_one_cone() {
    let a = Matrix::from_rows(&[vec![1.0, 2.0, 1.0, 0.0, 3.0], vec![2.0, 1.0, 0.0, 1.0, 1.0]]).unwrap();
    let lp = LinearProgram::new(vec![2.0, 3.0, 1.0, 1.5, 4.0], a, vec![4.0, 5.0]).unwrap();
    let rhs = vec![vec![4.0, 5.0], vec![4.1, 5.2], vec![3.9, 4.8]];
    let bases = enumerate_optimal_bases(&lp, &rhs).unwrap();
    assert_eq!(bases[0], bases[1]);
    assert_eq!(bases[1], bases[2]);
    let s = solve_lp(&lp).unwrap();
    assert_eq!(s.basis, bases[0]);
}
