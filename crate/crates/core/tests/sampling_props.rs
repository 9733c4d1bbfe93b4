use pldc::sampling::{lhs_interval, sample_lhs, sample_rhs, sample_time_series, RhsGeneratorConfig};
use proptest::prelude::*;

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    for (rank, &i) in idx.iter().enumerate() {
        r[i] = rank as f64;
    }
    r
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

proptest! {
    #[test]
    fn lhs_stratifies_every_row(seed in any::<u64>(), t in 1usize..60, lo in -50.0f64..50.0, width in 0.001f64..100.0) {
        let b = vec![1.0, 2.0, 3.0];
        let mut cfg = RhsGeneratorConfig::latin_hypercube(&b, &[0, 2], 0.1, t, seed);
        cfg.lo = vec![lo, -lo];
        cfg.hi = vec![lo + width, -lo + 2.0 * width];
        let out = sample_lhs(&cfg, &b).unwrap();
        prop_assert_eq!(out.len(), t);
        for (pos, &k) in cfg.perturbed_rows.iter().enumerate() {
            let mut v: Vec<f64> = out.iter().map(|x| x[k]).collect();
            v.sort_by(f64::total_cmp);
            for (j, x) in v.iter().enumerate() {
                let (a, z) = lhs_interval(cfg.lo[pos], cfg.hi[pos], t, j);
                prop_assert!(*x >= a && *x < z, "row {} value {} not in [{}, {})", k, x, a, z);
            }
        }
        prop_assert!(out.iter().all(|x| x[1].to_bits() == 2.0f64.to_bits()));
    }

    #[test]
    fn generators_are_reproducible(seed in any::<u64>(), t in 1usize..40) {
        let b = vec![10.0, -4.0, 0.5];
        let ts = RhsGeneratorConfig::time_series(&b, &[0, 1], t, seed);
        prop_assert_eq!(sample_rhs(&ts, &b).unwrap(), sample_rhs(&ts, &b).unwrap());
        let lhs = RhsGeneratorConfig::latin_hypercube(&b, &[1, 2], 0.3, t, seed);
        prop_assert_eq!(sample_rhs(&lhs, &b).unwrap(), sample_rhs(&lhs, &b).unwrap());
        for x in sample_time_series(&ts, &b).unwrap() {
            prop_assert_eq!(x[2].to_bits(), b[2].to_bits());
        }
    }
}

#[test]
fn lhs_rows_are_uncorrelated() {
    let b = vec![5.0, 5.0];
    let cfg = RhsGeneratorConfig::latin_hypercube(&b, &[0, 1], 0.5, 100, 2024);
    let out = sample_lhs(&cfg, &b).unwrap();
    let r0 = ranks(&out.iter().map(|x| x[0]).collect::<Vec<_>>());
    let r1 = ranks(&out.iter().map(|x| x[1]).collect::<Vec<_>>());
    let rho = pearson(&r0, &r1);
    assert!(rho.abs() < 0.3, "rank correlation {rho}");
}
