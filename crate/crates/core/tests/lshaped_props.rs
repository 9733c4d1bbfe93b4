mod common;

use pldc::instance::{build_extensive_form, first_stage_objective, recourse_values, solve_subproblem};
use pldc::lshaped::{aggregate_cut, max_cut_value, solve_lshaped, LShapedOptions};
use pldc::linalg::dot;
use pldc::simplex::solve_lp;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn expected_recourse(inst: &pldc::instance::TwoStageInstance, x: &[f64]) -> f64 {
    first_stage_objective(inst, x).unwrap() - dot(&inst.first_stage.c, x)
}

fn random_x(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.gen_range(0.0..10.0)).collect()
}

#[test]
fn matches_extensive_form_on_twenty_instances() {
    for seed in 0..20u64 {
        let inst = common::random_instance(seed);
        let b = inst.first_stage.b_nominal.clone();
        let r = solve_lshaped(&inst, &b, &LShapedOptions::default()).unwrap();
        let ef = solve_lp(&build_extensive_form(&inst, &b).unwrap()).unwrap();
        assert!(r.converged && r.iterations < 500, "seed {seed}");
        assert!((r.v_star - ef.objective).abs() <= 1e-7 * (1.0 + ef.objective.abs()), "seed {seed}: {} vs {}", r.v_star, ef.objective);
        let f = first_stage_objective(&inst, &r.x_star).unwrap();
        assert!((f - r.v_star).abs() <= 1e-7 * (1.0 + f.abs()));
        assert!((r.v_star - dot(&inst.first_stage.c, &r.x_star) - r.eta_star).abs() <= 1e-12 * (1.0 + r.v_star.abs()));
        let top = max_cut_value(&r.cuts_active, &r.x_star).unwrap();
        assert!((top - r.eta_star).abs() <= 1e-6);
    }
}

#[test]
fn lower_bounds_never_decrease() {
    for seed in 0..20u64 {
        let inst = common::random_instance(seed);
        let r = solve_lshaped(&inst, &inst.first_stage.b_nominal.clone(), &LShapedOptions::default()).unwrap();
        for w in r.lower_bounds.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * (1.0 + w[0].abs()), "seed {seed}: {:?}", r.lower_bounds);
        }
    }
}

#[test]
fn exact_cuts_are_valid_minorants() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for seed in 0..5u64 {
        let inst = common::random_instance(seed);
        let r = solve_lshaped(&inst, &inst.first_stage.b_nominal.clone(), &LShapedOptions::default()).unwrap();
        let probes: Vec<Vec<f64>> = (0..100).map(|_| random_x(&mut rng, inst.d_x())).collect();
        let truth: Vec<f64> = probes.iter().map(|x| expected_recourse(&inst, x)).collect();
        for cut in &r.cuts_all {
            for (x, q) in probes.iter().zip(&truth) {
                assert!(cut.value(x) <= q + 1e-8 * (1.0 + q.abs()), "seed {seed}");
            }
        }
    }
}

#[test]
fn aggregate_cut_is_tight() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for seed in 0..10u64 {
        let inst = common::random_instance(seed);
        let x = random_x(&mut rng, inst.d_x());
        let cut = aggregate_cut(&inst, &x).unwrap();
        let q = expected_recourse(&inst, &x);
        assert!((cut.value(&x) - q).abs() <= 1e-8 * (1.0 + q.abs()));
    }
}

#[test]
fn single_scenario_cut_uses_raw_duals() {
    let mut inst = common::random_instance(4);
    let mut s = inst.scenarios[0].clone();
    s.probability = 1.0;
    inst.scenarios = vec![s];
    let x = vec![1.0; inst.d_x()];
    let cut = aggregate_cut(&inst, &x).unwrap();
    let sp = solve_subproblem(&inst, &x, 0).unwrap();
    assert_eq!(cut.alpha, dot(&sp.dual, &inst.scenarios[0].h));
    let tpi = inst.scenarios[0].t.tr_mul_vec(&sp.dual);
    for (b, v) in cut.beta.iter().zip(tpi) {
        assert_eq!(*b, -v);
    }
}

#[test]
fn subproblem_strong_duality_on_many_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut count = 0;
    for seed in 0..40u64 {
        let inst = common::random_instance(seed);
        for _ in 0..25 {
            let x = random_x(&mut rng, inst.d_x());
            let s = rng.gen_range(0..inst.scenarios.len());
            let sp = solve_subproblem(&inst, &x, s).unwrap();
            let sc = &inst.scenarios[s];
            let rhs: Vec<f64> = sc.h.iter().zip(sc.t.mul_vec(&x)).map(|(h, t)| h - t).collect();
            let primal = dot(&inst.second_stage.q, &sp.y);
            assert!((sp.value - dot(&sp.dual, &rhs)).abs() <= 1e-8);
            assert!((sp.value - primal).abs() <= 1e-8 * (1.0 + primal.abs()));
            count += 1;
        }
    }
    assert_eq!(count, 1000);
}

#[test]
fn subproblem_matches_extensive_form_block() {
    let inst = common::random_instance(8);
    let b = inst.first_stage.b_nominal.clone();
    let ef = solve_lp(&build_extensive_form(&inst, &b).unwrap()).unwrap();
    let dx = inst.d_x();
    let ny = inst.n_y();
    let x = &ef.x[..dx];
    let subs = recourse_values(&inst, x).unwrap();
    for (s, sp) in subs.iter().enumerate() {
        let y = &ef.x[dx + s * ny..dx + (s + 1) * ny];
        let block = dot(&inst.second_stage.q, y);
        assert!((sp.value - block).abs() <= 1e-7 * (1.0 + block.abs()), "scenario {s}");
    }
}
