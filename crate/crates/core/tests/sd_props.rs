mod common;

use pldc::instance::{draw_scenarios, first_stage_objective, generate_synthetic, sample_average_objective, SyntheticSpec};
use pldc::linalg::dot;
use pldc::lshaped::{solve_lshaped, LShapedOptions};
use pldc::sd::{build_oos_bundle, out_of_sample_cut, solve_sd, SdOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn sd_incumbents_near_lshaped_optimum() {
    let inst = generate_synthetic(&SyntheticSpec::pgp2_shape(7)).unwrap();
    let b = inst.first_stage.b_nominal.clone();
    let ls = solve_lshaped(&inst, &b, &LShapedOptions::default()).unwrap();
    let mut good = 0;
    for seed in 0..10u64 {
        let r = solve_sd(&inst, &b, &SdOptions { seed: 42 + seed, ..SdOptions::default() }).unwrap();
        let f = first_stage_objective(&inst, &r.incumbent).unwrap();
        let rel = (f - ls.v_star).abs() / ls.v_star.abs().max(1.0);
        if rel <= 0.01 {
            good += 1;
        }
    }
    assert!(good >= 9, "{good}/10");
}

fn incumbents(inst: &pldc::instance::TwoStageInstance) -> Vec<(Vec<f64>, Vec<f64>)> {
    let base = inst.first_stage.b_nominal.clone();
    (0..5u64)
        .map(|i| {
            let b: Vec<f64> = base.iter().map(|v| v * (0.9 + 0.05 * i as f64)).collect();
            let r = solve_sd(inst, &b, &SdOptions { seed: i, max_iter: 150, ..SdOptions::default() }).unwrap();
            (b, r.incumbent)
        })
        .collect()
}

#[test]
fn oos_cuts_lower_bound_sample_average() {
    let inst = generate_synthetic(&SyntheticSpec::pgp2_shape(7)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let sample = draw_scenarios(&inst, 400, &mut rng);
    let mut violations = 0;
    for (_, x_hat) in incumbents(&inst) {
        let cut = out_of_sample_cut(&inst, &x_hat, &sample).unwrap();
        let at_hat = sample_average_objective(&inst, &x_hat, &sample).unwrap().value - dot(&inst.first_stage.c, &x_hat);
        assert!((cut.value(&x_hat) - at_hat).abs() <= 1e-8 * (1.0 + at_hat.abs()));
        for _ in 0..50 {
            let x: Vec<f64> = (0..inst.d_x()).map(|_| rng.gen_range(0.0..8.0)).collect();
            let avg = sample_average_objective(&inst, &x, &sample).unwrap().value - dot(&inst.first_stage.c, &x);
            if cut.value(&x) > avg + 1e-8 {
                violations += 1;
            }
        }
    }
    assert_eq!(violations, 0);
}

#[test]
fn oos_bundle_within_clt_band_of_expected_recourse() {
    let inst = generate_synthetic(&SyntheticSpec::pgp2_shape(7)).unwrap();
    let incs = incumbents(&inst);
    let bundle = build_oos_bundle(&inst, &incs, 2000, 9).unwrap();
    assert!(bundle.len() <= incs.len());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sample = draw_scenarios(&inst, 2000, &mut ChaCha8Rng::seed_from_u64(9));
    for _ in 0..50 {
        let x: Vec<f64> = (0..inst.d_x()).map(|_| rng.gen_range(0.0..8.0)).collect();
        let exact = first_stage_objective(&inst, &x).unwrap() - dot(&inst.first_stage.c, &x);
        let per = sample_average_objective(&inst, &x, &sample).unwrap().per_observation;
        let n = per.len() as f64;
        let mean = per.iter().sum::<f64>() / n;
        let se = (per.iter().map(|q| (q - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
        for cut in &bundle {
            assert!(cut.value(&x) <= exact + 3.0 * se + 1e-8);
        }
    }
}
