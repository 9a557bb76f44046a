//! Autoregressive multiresolution decoding.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{denormalize, forward_cached, normalize_context, tokenize, HeadRows, ModelConfig, ModelParams};
use crate::series::{aggregate_to_coarse, MultiResWindow, NormalizationStats};

/// Cap on `steps * output_patch_len`.
pub const MAX_DECODE_POINTS: usize = 1 << 20;

/// Forecast in original units. `quantiles[k]` is the path for `levels[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastBundle {
    pub mean: Vec<f64>,
    pub levels: Vec<f64>,
    pub quantiles: Vec<Vec<f64>>,
}

impl ForecastBundle {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Path of the level closest to `q`.
    pub fn quantile(&self, q: f64) -> Option<&[f64]> {
        self.levels
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - q).abs().total_cmp(&(b.1 - q).abs()))
            .filter(|(_, l)| (*l - q).abs() < 1e-9)
            .map(|(k, _)| self.quantiles[k].as_slice())
    }

    /// The median path, falling back to the mean.
    pub fn point(&self) -> &[f64] {
        self.quantile(0.5).unwrap_or(&self.mean)
    }

    pub fn truncate(&mut self, len: usize) {
        self.mean.truncate(len);
        self.quantiles.iter_mut().for_each(|q| q.truncate(len));
    }
}

/// What one decode step saw and appended.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeStep {
    /// Window fed to the model, before normalization.
    pub input: MultiResWindow,
    pub stats: NormalizationStats,
    pub appended_fine: Vec<f64>,
    pub appended_coarse: Vec<f64>,
}

/// Sorts the quantile values at each horizon step so paths never cross.
pub fn rearrange_quantiles(paths: &mut [Vec<f64>]) {
    let len = paths.first().map_or(0, |p| p.len());
    let mut column = vec![0.0; paths.len()];
    for t in 0..len {
        for (c, p) in column.iter_mut().zip(paths.iter()) {
            *c = p[t];
        }
        column.sort_by(f64::total_cmp);
        for (c, p) in column.iter().zip(paths.iter_mut()) {
            p[t] = *c;
        }
    }
}

fn append_and_slide(values: &mut Vec<f64>, mask: &mut Vec<u8>, new: &[f64], keep: usize) {
    values.extend_from_slice(new);
    mask.extend(std::iter::repeat_n(0u8, new.len()));
    let excess = values.len().saturating_sub(keep);
    values.drain(..excess);
    mask.drain(..excess);
}

/// Decodes `steps` output patches, recording each step.
pub fn decode_traced(window: &MultiResWindow, params: &ModelParams, config: &ModelConfig, steps: usize) -> Result<(ForecastBundle, Vec<DecodeStep>)> {
    if steps == 0 {
        return Err(Error::InvalidArgument("decode needs at least one step".into()));
    }
    let l = config.output_patch_len;
    match steps.checked_mul(l) {
        Some(n) if n <= MAX_DECODE_POINTS => {}
        _ => return Err(Error::InvalidArgument(format!("{steps} steps of {l} points exceeds the decode limit of {MAX_DECODE_POINTS}"))),
    }
    window.validate()?;
    let c = config.context_len;
    let k = window.ratio;
    let nq = config.quantiles.len();
    let mut current = window.clone();
    let mut bundle = ForecastBundle { mean: Vec::with_capacity(steps * l), levels: config.quantiles.clone(), quantiles: vec![Vec::with_capacity(steps * l); nq] };
    let mut trace = Vec::with_capacity(steps);
    for _ in 0..steps {
        let (norm, stats) = normalize_context(&current, config.input_patch_len);
        let tokens = tokenize(&norm, params, config)?;
        let (pred, _) = forward_cached(&tokens, params, config, HeadRows::Last)?;
        let mean = denormalize(pred.mean(0), &stats);
        let mut paths: Vec<Vec<f64>> = (0..nq).map(|q| denormalize(pred.quantile(0, q), &stats)).collect();
        rearrange_quantiles(&mut paths);
        let coarse_new = aggregate_to_coarse(&mean, k);

        let input = current.clone();
        append_and_slide(&mut current.fine, &mut current.fine_mask, &mean, c);
        append_and_slide(&mut current.coarse, &mut current.coarse_mask, &coarse_new, c);
        current.horizon.clear();

        bundle.mean.extend_from_slice(&mean);
        for (dst, src) in bundle.quantiles.iter_mut().zip(&paths) {
            dst.extend_from_slice(src);
        }
        trace.push(DecodeStep { input, stats, appended_fine: mean, appended_coarse: coarse_new });
    }
    Ok((bundle, trace))
}

pub fn decode(window: &MultiResWindow, params: &ModelParams, config: &ModelConfig, steps: usize) -> Result<ForecastBundle> {
    decode_traced(window, params, config, steps).map(|(b, _)| b)
}

/// Decodes contexts in parallel; output order follows input order.
pub fn decode_batch(windows: &[MultiResWindow], params: &ModelParams, config: &ModelConfig, steps: usize) -> Result<Vec<ForecastBundle>> {
    windows.par_iter().map(|w| decode(w, params, config, steps)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rearrangement_sorts_each_step() {
        let mut paths = vec![vec![3.0, 0.0], vec![1.0, 1.0], vec![2.0, -1.0]];
        rearrange_quantiles(&mut paths);
        assert_eq!(paths, vec![vec![1.0, -1.0], vec![2.0, 0.0], vec![3.0, 1.0]]);
    }

    #[test]
    fn sliding_keeps_newest_points() {
        let mut v = vec![1.0, 2.0, 3.0];
        let mut m = vec![1, 0, 0];
        append_and_slide(&mut v, &mut m, &[4.0, 5.0], 3);
        assert_eq!(v, vec![3.0, 4.0, 5.0]);
        assert_eq!(m, vec![0, 0, 0]);
    }
}
