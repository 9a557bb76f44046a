use serde::{Deserialize, Serialize};

use super::stats::WindowStats;

/// Thresholds for window-level filtering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterPolicy {
    /// Maximum tolerated normalized length of the longest flat run.
    pub max_flat: f64,
    pub min_unique: usize,
    /// Maximum of `horizon_mad / max(context_mad, mad_epsilon)`.
    pub max_mad_ratio: f64,
    pub mad_epsilon: f64,
}

impl Default for FilterPolicy {
    fn default() -> Self {
        Self { max_flat: 0.5, min_unique: 8, max_mad_ratio: 5.0, mad_epsilon: 1e-12 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    FlatSpot,
    MinUnique,
    MadRatio,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FilterDecision {
    Keep,
    Drop(DropReason),
}

impl FilterDecision {
    pub fn is_keep(self) -> bool {
        self == FilterDecision::Keep
    }
}

pub fn mad_ratio(stats: &WindowStats, policy: &FilterPolicy) -> f64 {
    stats.horizon_mad / stats.context_mad.max(policy.mad_epsilon)
}

/// Applies the rules in order and reports the first one that fails.
pub fn filter_window(stats: &WindowStats, policy: &FilterPolicy) -> FilterDecision {
    if stats.longest_flat_run_normalized > policy.max_flat {
        FilterDecision::Drop(DropReason::FlatSpot)
    } else if stats.unique_value_count < policy.min_unique {
        FilterDecision::Drop(DropReason::MinUnique)
    } else if mad_ratio(stats, policy) > policy.max_mad_ratio {
        FilterDecision::Drop(DropReason::MadRatio)
    } else {
        FilterDecision::Keep
    }
}
