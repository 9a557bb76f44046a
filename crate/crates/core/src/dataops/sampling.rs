//! Two-pass histogram-matching samplers: a first pass measures the empirical
//! histogram, a second pass accepts each item with probability
//! `min(1, target / empirical)` for its bin.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::MultiResWindow;

/// Histogram over `[0, 1]` with equal-width bins; weights are normalized on use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetProfile {
    pub weights: Vec<f64>,
}

impl TargetProfile {
    pub fn uniform(bins: usize) -> Self {
        Self { weights: vec![1.0; bins] }
    }

    /// Flat over the lower half, then falling linearly to a quarter of that
    /// height at the highest bin.
    pub fn low_entropy_trapezoid(bins: usize) -> Self {
        let half = bins / 2;
        let tail = (bins - half).max(1);
        let weights = (0..bins)
            .map(|i| {
                if i < half {
                    1.0
                } else {
                    let frac = (i - half + 1) as f64 / tail as f64;
                    1.0 - 0.75 * frac
                }
            })
            .collect();
        Self { weights }
    }

    pub fn bins(&self) -> usize {
        self.weights.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.is_empty() || self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument("target profile needs finite non-negative weights".into()));
        }
        if !(self.weights.iter().sum::<f64>() > 0.0) {
            return Err(Error::InvalidArgument("target profile has zero total weight".into()));
        }
        Ok(())
    }

    pub fn density(&self) -> Vec<f64> {
        let total: f64 = self.weights.iter().sum();
        self.weights.iter().map(|w| w / total).collect()
    }

    pub fn bin_of(&self, value: f64) -> usize {
        let n = self.bins();
        ((value.clamp(0.0, 1.0) * n as f64).floor() as usize).min(n - 1)
    }
}

/// Normalized histogram of `values` over the profile's bins.
pub fn empirical_density(values: &[f64], profile: &TargetProfile) -> Vec<f64> {
    let mut counts = vec![0.0; profile.bins()];
    for &v in values {
        counts[profile.bin_of(v)] += 1.0;
    }
    let n = values.len().max(1) as f64;
    counts.iter().map(|c| c / n).collect()
}

/// Per-bin acceptance `min(1, target / empirical)`; empty bins accept everything.
/// Ratios within 1e-12 of one round up so a matching target is an exact identity.
pub fn acceptance_probabilities(empirical: &[f64], target: &[f64]) -> Vec<f64> {
    empirical
        .iter()
        .zip(target)
        .map(|(&e, &t)| {
            if e > 0.0 && t / e < 1.0 - 1e-12 {
                t / e
            } else {
                1.0
            }
        })
        .collect()
}

pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Downsamples `items` so their entropy histogram moves toward `profile`.
/// Each item is paired with its spectral entropy in `[0, 1]`.
pub fn entropy_downsample<T>(items: Vec<(T, f64)>, profile: &TargetProfile, seed: u64) -> Result<Vec<T>> {
    profile.validate()?;
    if items.is_empty() {
        return Ok(Vec::new());
    }
    let values: Vec<f64> = items.iter().map(|(_, e)| *e).collect();
    let accept = acceptance_probabilities(&empirical_density(&values, profile), &profile.density());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (item, e) in items {
        let p = accept[profile.bin_of(e)];
        let u: f64 = rng.random();
        if p >= 1.0 || u < p {
            out.push(item);
        }
    }
    Ok(out)
}

pub fn padding_fraction(window: &MultiResWindow) -> f64 {
    window.fine_padding() as f64 / window.context_len() as f64
}

/// Left-truncates the window so `fine_pad` fine entries are padded. The coarse
/// context loses every block no longer covered by the remaining fine history.
pub fn truncate_context(window: &MultiResWindow, fine_pad: usize) -> MultiResWindow {
    let c = window.context_len();
    let fine_pad = fine_pad.clamp(window.fine_padding(), c - 1);
    let mut out = window.clone();
    for i in 0..fine_pad {
        out.fine[i] = 0.0;
        out.fine_mask[i] = 1;
    }
    let coarse_real = (c - fine_pad) / window.ratio;
    let coarse_pad = (window.coarse.len() - coarse_real.min(window.coarse.len())).max(window.coarse_padding());
    for i in 0..coarse_pad {
        out.coarse[i] = 0.0;
        out.coarse_mask[i] = 1;
    }
    out.meta.id = format!("{}#pad{}", window.meta.id, fine_pad);
    out
}

/// Rebalances the fine-context padding mix toward `profile`.
///
/// Windows rejected from over-represented bins are not discarded outright: each
/// is re-emitted as a truncated variant landing in an under-represented bin with
/// more padding, chosen in proportion to that bin's deficit. Rejected windows
/// with no reachable deficit bin are dropped.
pub fn padding_mix_sampler(windows: Vec<MultiResWindow>, profile: &TargetProfile, seed: u64) -> Result<Vec<MultiResWindow>> {
    profile.validate()?;
    if windows.is_empty() {
        return Ok(Vec::new());
    }
    let fractions: Vec<f64> = windows.iter().map(padding_fraction).collect();
    let empirical = empirical_density(&fractions, profile);
    let target = profile.density();
    let accept = acceptance_probabilities(&empirical, &target);
    let deficit: Vec<f64> = target.iter().zip(&empirical).map(|(t, e)| (t - e).max(0.0)).collect();
    let n_bins = profile.bins();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(windows.len());
    for (window, frac) in windows.into_iter().zip(fractions) {
        let bin = profile.bin_of(frac);
        let p = accept[bin];
        let u: f64 = rng.random();
        if p >= 1.0 || u < p {
            out.push(window);
            continue;
        }
        let c = window.context_len();
        let current = window.fine_padding();
        // pad counts reachable in each deficit bin above the current one
        let options: Vec<(usize, f64, Vec<usize>)> = (bin + 1..n_bins)
            .filter(|&b| deficit[b] > 0.0)
            .map(|b| {
                let counts: Vec<usize> = (current + 1..c).filter(|&k| profile.bin_of(k as f64 / c as f64) == b).collect();
                (b, deficit[b], counts)
            })
            .filter(|(_, _, counts)| !counts.is_empty())
            .collect();
        let total: f64 = options.iter().map(|(_, d, _)| d).sum();
        if options.is_empty() || !(total > 0.0) {
            continue;
        }
        let mut pick = rng.random::<f64>() * total;
        let mut chosen = &options[options.len() - 1];
        for opt in &options {
            if pick < opt.1 {
                chosen = opt;
                break;
            }
            pick -= opt.1;
        }
        let pad = chosen.2[rng.random_range(0..chosen.2.len())];
        out.push(truncate_context(&window, pad));
    }
    Ok(out)
}
