//! Series-to-shard curation: imputation, counter differencing, windowing,
//! leak-free temporal splits, filtering and distribution rebalancing.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataops::{
    compute_window_stats, entropy_downsample, filter_window, global_time_split, padding_mix_sampler, sliding_windows, temporal_split,
    FilterDecision, FilterPolicy, Split, SplitFractions, TargetProfile, WindowGeometry,
};
use crate::error::{Error, Result};
use crate::series::{difference, impute_last_value, MetricType, MultiResWindow, Series};
use crate::synth::child_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurationPolicy {
    pub context_len: usize,
    pub horizon_len: usize,
    pub ratio: usize,
    /// Fewest real fine-context points per window.
    pub min_context: usize,
    pub filter: FilterPolicy,
    /// Spectral-entropy target for training windows.
    pub entropy_target: Option<TargetProfile>,
    /// Fine-padding target for training windows.
    pub padding_target: Option<TargetProfile>,
    /// Difference counter series before windowing.
    pub difference_counters: bool,
    /// Corpus-wide test start; `None` splits each series by fractions.
    pub test_start_epoch: Option<i64>,
}

impl Default for CurationPolicy {
    fn default() -> Self {
        Self {
            context_len: crate::series::DEFAULT_CONTEXT_LEN,
            horizon_len: crate::series::DEFAULT_HORIZON_LEN,
            ratio: crate::series::DEFAULT_RATIO,
            min_context: crate::series::DEFAULT_CONTEXT_LEN,
            filter: FilterPolicy::default(),
            entropy_target: None,
            padding_target: None,
            difference_counters: true,
            test_start_epoch: None,
        }
    }
}

impl CurationPolicy {
    pub fn geometry(&self) -> WindowGeometry {
        WindowGeometry { context_len: self.context_len, horizon_len: self.horizon_len, ratio: self.ratio, min_context: self.min_context }
    }

    pub fn validate(&self) -> Result<()> {
        if self.context_len == 0 || self.horizon_len == 0 || self.ratio == 0 {
            return Err(Error::InvalidArgument("curation policy: context_len, horizon_len and ratio must be positive".into()));
        }
        if self.min_context == 0 || self.min_context > self.context_len {
            return Err(Error::InvalidArgument("curation policy: min_context must lie in 1..=context_len".into()));
        }
        for t in [&self.entropy_target, &self.padding_target].into_iter().flatten() {
            t.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CurationSummary {
    pub series: usize,
    pub skipped_series: BTreeMap<String, String>,
    pub windows_cut: usize,
    pub dropped_at_boundary: usize,
    pub dropped_by_filter: BTreeMap<String, usize>,
    pub dropped_by_entropy: usize,
    pub padding_variants: usize,
}

#[derive(Debug, Clone)]
pub struct Curated {
    pub windows: Vec<MultiResWindow>,
    pub splits: Vec<Option<Split>>,
    pub summary: CurationSummary,
}

fn prepare(series: &Series, policy: &CurationPolicy) -> Result<Series> {
    let imputed = impute_last_value(series)?;
    if policy.difference_counters && imputed.metric_type != MetricType::Gauge {
        difference(&imputed)
    } else {
        Ok(imputed)
    }
}

/// Curates a corpus. Output order is deterministic: series order, then horizon end.
pub fn curate(series: &[Series], policy: &CurationPolicy, stride: usize, fractions: SplitFractions, seed: u64) -> Result<Curated> {
    policy.validate()?;
    let geometry = policy.geometry();
    type PerSeries = std::result::Result<(Vec<MultiResWindow>, Vec<Option<Split>>), String>;
    let per_series: Vec<PerSeries> = series
        .par_iter()
        .map(|s| {
            let prepared = prepare(s, policy).map_err(|e| e.to_string())?;
            let mut windows = sliding_windows(&prepared, stride, &geometry).map_err(|e| e.to_string())?;
            for w in &mut windows {
                w.meta.dataset = s.dataset_name().to_string();
            }
            let assignment = match policy.test_start_epoch {
                Some(epoch) => global_time_split(&windows, fractions, epoch),
                None => temporal_split(&windows, fractions),
            }
            .map_err(|e| e.to_string())?;
            Ok((windows, assignment.labels))
        })
        .collect();

    let mut summary = CurationSummary { series: series.len(), ..Default::default() };
    let mut kept: Vec<(MultiResWindow, Split)> = Vec::new();
    for (s, result) in series.iter().zip(per_series) {
        let (windows, labels) = match result {
            Ok(v) => v,
            Err(reason) => {
                log::warn!("skipping series {}: {reason}", s.id);
                summary.skipped_series.insert(s.id.clone(), reason);
                continue;
            }
        };
        summary.windows_cut += windows.len();
        for (w, label) in windows.into_iter().zip(labels) {
            let Some(split) = label else {
                summary.dropped_at_boundary += 1;
                continue;
            };
            let decision = compute_window_stats(&w).map(|st| filter_window(&st, &policy.filter));
            match decision {
                Ok(FilterDecision::Keep) => kept.push((w, split)),
                Ok(FilterDecision::Drop(reason)) => *summary.dropped_by_filter.entry(format!("{reason:?}")).or_default() += 1,
                Err(_) => *summary.dropped_by_filter.entry("Degenerate".into()).or_default() += 1,
            }
        }
    }

    let (mut train, rest): (Vec<_>, Vec<_>) = kept.into_iter().partition(|(_, s)| *s == Split::Train);
    if let Some(target) = &policy.entropy_target {
        let before = train.len();
        let items: Vec<((MultiResWindow, Split), f64)> = train
            .into_iter()
            .map(|pair| {
                let e = compute_window_stats(&pair.0).map_or(0.0, |st| st.spectral_entropy);
                (pair, e)
            })
            .collect();
        train = entropy_downsample(items, target, child_seed(seed, 1))?;
        summary.dropped_by_entropy = before - train.len();
    }
    if let Some(target) = &policy.padding_target {
        let windows: Vec<MultiResWindow> = train.into_iter().map(|(w, _)| w).collect();
        let mixed = padding_mix_sampler(windows, target, child_seed(seed, 2))?;
        summary.padding_variants = mixed.iter().filter(|w| w.meta.id.contains("#pad")).count();
        train = mixed.into_iter().map(|w| (w, Split::Train)).collect();
    }
    let (windows, splits): (Vec<_>, Vec<_>) = train.into_iter().chain(rest).map(|(w, s)| (w, Some(s))).unzip();
    Ok(Curated { windows, splits, summary })
}
