mod common;

use common::rng;
use mrcast::curate::{curate, CurationPolicy};
use mrcast::dataops::sampling::{acceptance_probabilities, empirical_density, l1_distance, padding_fraction};
use mrcast::dataops::stats::{longest_flat_run, unique_count};
use mrcast::dataops::{
    compute_window_stats, entropy_downsample, filter_window, padding_mix_sampler, sliding_windows, spectral_entropy, temporal_split, SplitFractions,
    TargetProfile, WindowGeometry,
};
use mrcast::series::{aggregate_to_coarse, build_multires_window, difference, impute_last_value, MultiResWindow, Series};
use mrcast::synth::{generate_corpus, SynthConfig};
use proptest::prelude::*;
use rand::Rng;

fn series(values: Vec<f64>) -> Series {
    Series::new("s", 1_000, 60, values)
}

#[test]
fn full_context_history_pads_coarse_by_index_arithmetic() {
    for (c, h, k) in [(64, 16, 4), (512, 128, 60), (30, 5, 7)] {
        let s = series((0..c + h).map(|i| i as f64).collect());
        let w = build_multires_window(&s, c + h, c, h, k).unwrap();
        assert_eq!(w.fine_padding(), 0);
        let real = c / k;
        assert_eq!(w.coarse_padding(), c - real);
        assert_eq!(w.coarse_mask.iter().filter(|&&m| m == 1).count(), c - real);
    }
}

#[test]
fn series_one_stride_past_minimum_gives_two_windows() {
    let geometry = WindowGeometry { min_context: 1, ..WindowGeometry::new(32, 8, 4) };
    // with fine-only padding allowed the first end index is H + 1
    let first_end = 8 + 1;
    for stride in [1, 3, 10] {
        let len = first_end + stride;
        let windows = sliding_windows(&series((0..len).map(|i| (i as f64).sin()).collect()), stride, &geometry).unwrap();
        assert_eq!(windows.len(), 2, "stride {stride}");
    }
}

/// Entropy histogram the two-pass rule should produce: accepted mass per bin is
/// empirical * min(1, target / empirical), renormalized.
fn expected_downsampled(values: &[f64], profile: &TargetProfile) -> Vec<f64> {
    let emp = empirical_density(values, profile);
    let target = profile.density();
    let kept: Vec<f64> = emp.iter().zip(&target).map(|(&e, &t)| if e > 0.0 { e * (t / e).min(1.0) } else { 0.0 }).collect();
    let z: f64 = kept.iter().sum();
    kept.iter().map(|k| k / z).collect()
}

#[test]
fn entropy_downsampling_tracks_the_two_pass_histogram() {
    let profile = TargetProfile::low_entropy_trapezoid(10);
    let mut r = rng(1);
    // skewed toward high entropy
    let values: Vec<f64> = (0..20_000).map(|_| 1.0 - r.random::<f64>().powi(3)).collect();
    let items: Vec<(usize, f64)> = values.iter().copied().enumerate().collect();
    let kept = entropy_downsample(items, &profile, 3).unwrap();
    assert!(kept.len() >= 10_000 / 4);
    let out: Vec<f64> = kept.iter().map(|&i| values[i]).collect();
    let l1 = l1_distance(&empirical_density(&out, &profile), &expected_downsampled(&values, &profile));
    assert!(l1 <= 0.1, "L1 {l1}");
}

#[test]
fn entropy_downsampling_reaches_target_from_a_nearby_histogram() {
    let profile = TargetProfile::uniform(10);
    let mut r = rng(2);
    // 12k values: uniform plus a 10% surplus in the top bin
    let mut values: Vec<f64> = (0..12_000).map(|_| r.random::<f64>()).collect();
    values.extend((0..1_200).map(|_| 0.9 + 0.1 * r.random::<f64>()));
    let before = l1_distance(&empirical_density(&values, &profile), &profile.density());
    let items: Vec<(f64, f64)> = values.iter().map(|&v| (v, v)).collect();
    let out = entropy_downsample(items, &profile, 4).unwrap();
    let after = l1_distance(&empirical_density(&out, &profile), &profile.density());
    assert!(after <= 0.1 && after < before, "L1 before {before}, after {after}");
}

#[test]
fn single_bin_against_uniform_accepts_one_tenth() {
    let profile = TargetProfile::uniform(10);
    let emp = empirical_density(&vec![0.95; 1000], &profile);
    let acc = acceptance_probabilities(&emp, &profile.density());
    assert!((acc[9] - 0.1).abs() < 1e-12);
}

fn unpadded_windows(n: usize, c: usize, seed: u64) -> Vec<MultiResWindow> {
    let mut r = rng(seed);
    let values: Vec<f64> = (0..n + c + 8).map(|_| r.random::<f64>()).collect();
    let s = series(values);
    (0..n).map(|i| build_multires_window(&s, c + 8 + i, c, 8, 4).unwrap()).collect()
}

#[test]
fn padding_mix_matches_target_on_ten_thousand_windows() {
    for (name, profile) in [("uniform", TargetProfile::uniform(10)), ("half padded", TargetProfile { weights: vec![0.5, 0.0, 0.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0, 0.0] })] {
        let windows = unpadded_windows(10_000, 40, 5);
        let out = padding_mix_sampler(windows, &profile, 6).unwrap();
        let fractions: Vec<f64> = out.iter().map(padding_fraction).collect();
        let l1 = l1_distance(&empirical_density(&fractions, &profile), &profile.density());
        assert!(l1 <= 0.1, "{name}: L1 {l1}");
        for w in &out {
            w.validate().unwrap();
            let pad = w.fine_padding();
            assert!(w.fine[..pad].iter().all(|&v| v == 0.0));
        }
    }
}

#[test]
fn curated_windows_pass_their_own_filter() {
    let corpus = generate_corpus(&SynthConfig { count: 6, length: 900, seed: 2, sawtooth_fraction: 0.5, max_kernels: 3 }).unwrap();
    let policy = CurationPolicy { context_len: 64, horizon_len: 16, ratio: 4, min_context: 32, ..Default::default() };
    let curated = curate(&corpus, &policy, 4, SplitFractions::new(0.8, 0.1, 0.1).unwrap(), 1).unwrap();
    assert!(!curated.windows.is_empty());
    for w in &curated.windows {
        assert!(filter_window(&compute_window_stats(w).unwrap(), &policy.filter).is_keep(), "{}", w.meta.id);
    }
}

proptest! {
    #[test]
    fn aggregation_preserves_the_mean(values in prop::collection::vec(-1e6f64..1e6, 1..300), k in 1usize..20) {
        let out = aggregate_to_coarse(&values, k);
        prop_assume!(!out.is_empty());
        let complete = &values[..out.len() * k];
        let a = out.iter().sum::<f64>() / out.len() as f64;
        let b = complete.iter().sum::<f64>() / complete.len() as f64;
        let scale = complete.iter().map(|v| v.abs()).sum::<f64>() / complete.len() as f64;
        prop_assert!((a - b).abs() <= 1e-12 * scale.max(1e-300));
    }

    #[test]
    fn coarse_entries_are_means_of_their_aligned_fine_blocks(len in 20usize..400, end_back in 0usize..20, c in 4usize..40, h in 1usize..16, k in 1usize..9, seed in any::<u64>()) {
        let mut r = rng(seed);
        let values: Vec<f64> = (0..len).map(|_| r.random_range(-50.0..50.0)).collect();
        let end = len - end_back.min(len - h - 1);
        let w = build_multires_window(&series(values.clone()), end, c, h, k).unwrap();
        let hs = end - h;
        prop_assert_eq!(&w.horizon[..], &values[hs..end]);
        for i in 0..c {
            if w.coarse_mask[i] == 0 {
                let blocks_back = c - i;
                let start = hs - blocks_back * k;
                let mean = values[start..start + k].iter().sum::<f64>() / k as f64;
                prop_assert!((w.coarse[i] - mean).abs() <= 1e-9 * mean.abs().max(1.0));
            }
            if w.fine_mask[i] == 0 {
                prop_assert_eq!(w.fine[i], values[hs - (c - i)]);
            }
        }
        prop_assert_eq!(w.coarse_padding(), c - c.min(hs / k));
        prop_assert_eq!(w.fine_padding(), c - c.min(hs));
    }

    #[test]
    fn impute_is_identity_without_gaps_and_difference_kills_constants(values in prop::collection::vec(-1e3f64..1e3, 2..100), level in -1e3f64..1e3) {
        let s = series(values);
        prop_assert_eq!(impute_last_value(&s).unwrap().values, s.values.clone());
        let flat = difference(&series(vec![level; s.len()])).unwrap();
        prop_assert!(flat.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn statistics_are_shift_and_scale_invariant(seed in any::<u64>(), a in 1e-3f64..1e3, b in -1e4f64..1e4, pad in 0usize..50) {
        let mut r = rng(seed);
        let x: Vec<f64> = (0..64).map(|_| r.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        prop_assert!((spectral_entropy(&x) - spectral_entropy(&y)).abs() < 1e-9);
        prop_assert_eq!(longest_flat_run(&x), longest_flat_run(&y));
        prop_assert_eq!(unique_count(&x), unique_count(&y));
        let window = |v: &[f64]| {
            let s = series(v.to_vec());
            let mut w = build_multires_window(&s, 64, 48, 16, 4).unwrap();
            for i in 0..pad.min(46) {
                w.fine[i] = 0.0;
                w.fine_mask[i] = 1;
            }
            w
        };
        let (sx, sy) = (compute_window_stats(&window(&x)).unwrap(), compute_window_stats(&window(&y)).unwrap());
        let ratio = |s: &mrcast::dataops::WindowStats| s.horizon_mad / s.context_mad;
        prop_assert!((ratio(&sx) - ratio(&sy)).abs() <= 1e-9 * ratio(&sx).max(1.0));
    }

    #[test]
    fn temporal_split_is_leak_free(len in 200usize..800, stride in 1usize..9) {
        let s = series((0..len).map(|i| (i as f64 * 0.3).sin() + i as f64 * 0.01).collect());
        let windows = sliding_windows(&s, stride, &WindowGeometry::new(16, 8, 2)).unwrap();
        if let Ok(split) = temporal_split(&windows, SplitFractions::new(0.7, 0.15, 0.15).unwrap()) {
            use mrcast::dataops::Split;
            let of = |sp: Split| windows.iter().zip(&split.labels).filter(move |(_, l)| **l == Some(sp)).map(|(w, _)| w);
            let last_train = of(Split::Train).map(|w| w.meta.horizon_end_index).max();
            let first_val = of(Split::Validation).map(|w| w.fine_start_index()).min();
            let first_test = of(Split::Test).map(|w| w.fine_start_index()).min();
            let last_val = of(Split::Validation).map(|w| w.meta.horizon_end_index).max();
            if let (Some(t), Some(v)) = (last_train, first_val) { prop_assert!(t <= v); }
            if let (Some(v), Some(t)) = (last_val, first_test) { prop_assert!(v <= t); }
        }
    }
}
