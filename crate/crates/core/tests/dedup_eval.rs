mod common;

use common::rng;
use mrcast::decode::ForecastBundle;
use mrcast::dedup::{assign_codes, deduplicate, DedupConfig, DedupItem, SimHasher};
use mrcast::eval::{aggregate, compute_metrics, shifted_geometric_mean, AggregationMode, HorizonReport, MetricSet, GEOMETRIC_SHIFT};
use mrcast::model::{default_quantiles, pinball};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn items(n: usize, dim: usize, seed: u64) -> Vec<DedupItem> {
    let mut r = rng(seed);
    let bases: Vec<Vec<f64>> = (0..5).map(|_| (0..dim).map(|_| r.sample(StandardNormal)).collect()).collect();
    (0..n)
        .map(|i| DedupItem { id: format!("i{i}"), feature: bases[i % 5].iter().map(|v| v + 0.2 * r.sample::<f64, _>(StandardNormal)).collect() })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn codes_do_not_depend_on_sharding(n in 1usize..300, shards in 1usize..40, seed in any::<u64>()) {
        let items = items(n, 32, seed);
        let hasher = SimHasher::new(16, 32, seed);
        prop_assert_eq!(assign_codes(&items, &hasher, 1).unwrap(), assign_codes(&items, &hasher, shards).unwrap());
    }

    #[test]
    fn dedup_never_grows_clusters(n in 1usize..400, seed in any::<u64>()) {
        let items = items(n, 32, seed);
        let (kept, report) = deduplicate(&items, &DedupConfig::default(), seed, 3).unwrap();
        prop_assert_eq!(kept.len(), report.kept_windows);
        prop_assert!(report.sizes_after.first() <= report.sizes_before.first());
        prop_assert!(kept.windows(2).all(|p| p[0] < p[1]));
        let (again, _) = deduplicate(&items, &DedupConfig::default(), seed, 7).unwrap();
        prop_assert_eq!(kept, again);
    }

    #[test]
    fn metrics_are_scale_invariant(seed in any::<u64>(), c in 1e-3f64..1e3) {
        let mut r = rng(seed);
        let h = r.random_range(1..30);
        let levels = default_quantiles();
        let mut quantiles: Vec<Vec<f64>> = levels.iter().map(|_| (0..h).map(|_| r.random_range(0.5..3.0)).collect()).collect();
        for t in 0..h {
            let mut col: Vec<f64> = quantiles.iter().map(|q| q[t]).collect();
            col.sort_by(f64::total_cmp);
            quantiles.iter_mut().zip(col).for_each(|(q, v)| q[t] = v);
        }
        let actual: Vec<f64> = (0..h).map(|_| r.random_range(0.5..3.0)).collect();
        let context: Vec<f64> = (0..20).map(|_| r.random_range(0.5..3.0)).collect();
        let f = ForecastBundle { mean: quantiles[4].clone(), levels: levels.clone(), quantiles: quantiles.clone() };
        let scaled = |v: &[f64]| v.iter().map(|x| c * x).collect::<Vec<f64>>();
        let g = ForecastBundle { mean: scaled(&f.mean), levels, quantiles: quantiles.iter().map(|q| scaled(q)).collect() };
        let a = compute_metrics(&f, &actual, &context, 3).unwrap();
        let b = compute_metrics(&g, &scaled(&actual), &scaled(&context), 3).unwrap();
        let near = |x: f64, y: f64| (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1e-300);
        prop_assert!(near(a.mase.unwrap(), b.mase.unwrap()));
        prop_assert!(near(a.smape, b.smape));
        prop_assert!(near(a.msis.unwrap(), b.msis.unwrap()));
        prop_assert!(near(a.ncrps.unwrap(), b.ncrps.unwrap()));
        prop_assert!(near(a.mse * c * c, b.mse));
        prop_assert!(near(a.mae * c, b.mae));
    }
}

#[test]
fn crps_matches_direct_pinball_sum() {
    let mut r = rng(12);
    for _ in 0..50 {
        let h = r.random_range(1..12);
        let levels = default_quantiles();
        let quantiles: Vec<Vec<f64>> = levels.iter().map(|_| (0..h).map(|_| r.sample(StandardNormal)).collect()).collect();
        let actual: Vec<f64> = (0..h).map(|_| r.sample(StandardNormal)).collect();
        let f = ForecastBundle { mean: quantiles[4].clone(), levels: levels.clone(), quantiles: quantiles.clone() };
        let got = compute_metrics(&f, &actual, &[0.0, 1.0], 1).unwrap().crps;
        let mut total = 0.0;
        for (k, &tau) in levels.iter().enumerate() {
            for t in 0..h {
                total += pinball(tau, actual[t], quantiles[k][t]);
            }
        }
        let want = 2.0 * total / (h * levels.len()) as f64;
        assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
    }
}

fn report(id: &str, dataset: &str, mae: f64) -> HorizonReport {
    let metrics = MetricSet { mse: mae * mae, mae, mase: Some(mae), smape: mae, msis: None, crps: mae, ncrps: Some(mae) };
    HorizonReport { id: id.into(), dataset: dataset.into(), metrics }
}

#[test]
fn mode_b_on_two_datasets_is_the_shifted_geometric_mean() {
    let model = [report("a", "x", 1.0), report("b", "y", 4.0)];
    let base = [report("a", "x", 2.0), report("b", "y", 2.0)];
    let r = aggregate(&model, &base, AggregationMode::ShiftedGeometric, "naive").unwrap();
    let e = GEOMETRIC_SHIFT;
    let want = ((0.5 + e) * (2.0 + e)).sqrt() - e;
    assert!((r.normalized["mae"].unwrap() - want).abs() < 1e-15);
    assert!((shifted_geometric_mean(&[0.5, 2.0], e) - want).abs() < 1e-15);
    assert_eq!(r.normalized["msis"], None);
    assert_eq!(r.excluded["msis"].count, 2);
    let a = aggregate(&model, &base, AggregationMode::ArithmeticNormalized, "naive").unwrap();
    assert!((a.normalized["mae"].unwrap() - 1.25).abs() < 1e-15);
}

#[test]
fn mode_a_self_normalization_is_exactly_one() {
    let reports: Vec<HorizonReport> = (0..40).map(|i| report(&format!("h{i}"), "d", 0.1 + i as f64 * 0.37)).collect();
    let r = aggregate(&reports, &reports, AggregationMode::ArithmeticNormalized, "self").unwrap();
    for (name, v) in &r.normalized {
        assert!(v.is_none_or(|v| v == 1.0), "{name}");
    }
}
