use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::MultiResWindow;

/// Window-level statistics used by the curation filters. All are computed on
/// the unpadded fine context, except `horizon_mad`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub longest_flat_run_normalized: f64,
    pub unique_value_count: usize,
    pub context_mad: f64,
    pub horizon_mad: f64,
    pub spectral_entropy: f64,
}

pub fn compute_window_stats(window: &MultiResWindow) -> Result<WindowStats> {
    let ctx = window.fine_observed();
    if ctx.len() < 2 {
        return Err(Error::DegenerateWindow(format!(
            "window `{}` has {} unpadded fine points",
            window.meta.id,
            ctx.len()
        )));
    }
    Ok(WindowStats {
        longest_flat_run_normalized: longest_flat_run(ctx) as f64 / ctx.len() as f64,
        unique_value_count: unique_count(ctx),
        context_mad: max_abs_deviation_from_median(ctx),
        horizon_mad: max_abs_deviation_from_median(&window.horizon),
        spectral_entropy: spectral_entropy(ctx),
    })
}

/// Length of the longest run of consecutive equal values.
pub fn longest_flat_run(x: &[f64]) -> usize {
    if x.is_empty() {
        return 0;
    }
    let (mut best, mut run) = (1, 1);
    for w in x.windows(2) {
        if w[1] == w[0] {
            run += 1;
            best = best.max(run);
        } else {
            run = 1;
        }
    }
    best
}

pub fn unique_count(x: &[f64]) -> usize {
    let mut v: Vec<f64> = x.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| a == b);
    v.len()
}

pub fn median(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// `max |x - median(x)|`.
pub fn max_abs_deviation_from_median(x: &[f64]) -> f64 {
    let m = median(x);
    x.iter().map(|v| (v - m).abs()).fold(0.0, f64::max)
}

/// Shannon entropy of the normalized periodogram of the mean-removed series over
/// frequency bins `1..=n/2`, divided by `ln(n/2)`. Zero for constant input.
pub fn spectral_entropy(x: &[f64]) -> f64 {
    let n = x.len();
    let bins = n / 2;
    if bins < 2 {
        return 0.0;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(v - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let power: Vec<f64> = buf[1..=bins].iter().map(|c| c.norm_sqr()).collect();
    let total: f64 = power.iter().sum();
    if !(total > 0.0) {
        return 0.0;
    }
    let h: f64 = power
        .iter()
        .map(|p| p / total)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum();
    (h / (bins as f64).ln()).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // direct O(n^2) DFT, independent of the FFT path
    fn dft_entropy(x: &[f64]) -> f64 {
        let n = x.len();
        let mean = x.iter().sum::<f64>() / n as f64;
        let bins = n / 2;
        let power: Vec<f64> = (1..=bins)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (t, v) in x.iter().enumerate() {
                    let ang = -2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64;
                    re += (v - mean) * ang.cos();
                    im += (v - mean) * ang.sin();
                }
                re * re + im * im
            })
            .collect();
        let total: f64 = power.iter().sum();
        let h: f64 = power.iter().map(|p| p / total).filter(|&p| p > 0.0).map(|p| -p * p.ln()).sum();
        h / (bins as f64).ln()
    }

    #[test]
    fn flat_and_unique_on_constant() {
        let x = vec![3.0; 40];
        assert_eq!(longest_flat_run(&x), 40);
        assert_eq!(unique_count(&x), 1);
        assert_eq!(max_abs_deviation_from_median(&x), 0.0);
        assert_eq!(spectral_entropy(&x), 0.0);
    }

    #[test]
    fn sinusoid_has_low_entropy() {
        let x: Vec<f64> = (0..512).map(|t| (2.0 * std::f64::consts::PI * 8.0 * t as f64 / 512.0).sin()).collect();
        let oracle = dft_entropy(&x);
        let fast = spectral_entropy(&x);
        assert!(oracle < 0.35);
        assert!((oracle - fast).abs() < 1e-6, "oracle {oracle} fft {fast}");
        assert!(fast < 0.35);
    }

    #[test]
    fn uniform_noise_has_high_entropy() {
        let mut high = 0;
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..512).map(|_| rng.random::<f64>()).collect();
            let e = spectral_entropy(&x);
            if seed < 5 {
                assert!((e - dft_entropy(&x)).abs() < 1e-9);
            }
            if e > 0.9 {
                high += 1;
            }
        }
        assert!(high >= 198, "{high}/200 above 0.9");
    }

    #[test]
    fn entropy_is_shift_and_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..300).map(|t| (t as f64 * 0.1).sin() + rng.random::<f64>()).collect();
        let shifted: Vec<f64> = x.iter().map(|v| v + 123.0).collect();
        let scaled: Vec<f64> = x.iter().map(|v| 7.5 * v).collect();
        let e = spectral_entropy(&x);
        assert!((e - spectral_entropy(&shifted)).abs() < 1e-9);
        assert!((e - spectral_entropy(&scaled)).abs() < 1e-9);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(max_abs_deviation_from_median(&[0.0, 1.0, 10.0]), 9.0);
    }
}
