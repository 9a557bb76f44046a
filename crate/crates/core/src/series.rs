//! Series and multiresolution window types, plus the index-space operations that
//! turn one into the other.
//!
//! All alignment happens in index space. A window's coarse context is anchored
//! at the horizon start and walks backwards in complete blocks of `ratio` fine
//! steps, so the newest coarse point always covers the newest `ratio` fine points.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Default context length per resolution.
pub const DEFAULT_CONTEXT_LEN: usize = 512;
/// Default fine-resolution horizon.
pub const DEFAULT_HORIZON_LEN: usize = 128;
/// Coarse-to-fine resolution ratio.
pub const DEFAULT_RATIO: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MetricType {
    #[default]
    Gauge,
    Counter,
    CumulativeCounter,
}

/// A timestamped univariate sequence. `NaN` marks a missing observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub id: String,
    pub start_epoch: i64,
    pub resolution_seconds: u64,
    #[serde(serialize_with = "ser_nullable", deserialize_with = "de_nullable")]
    pub values: Vec<f64>,
    #[serde(default)]
    pub metric_type: MetricType,
    /// Dataset grouping used by per-dataset aggregation. Absent means `"default"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
}

fn ser_nullable<S: Serializer>(values: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(values.len()))?;
    for v in values {
        if v.is_finite() {
            seq.serialize_element(v)?;
        } else {
            seq.serialize_element(&Option::<f64>::None)?;
        }
    }
    seq.end()
}

fn de_nullable<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    let raw: Vec<Option<f64>> = Vec::deserialize(d)?;
    Ok(raw.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect())
}

impl Series {
    pub fn new(id: impl Into<String>, start_epoch: i64, resolution_seconds: u64, values: Vec<f64>) -> Self {
        Self {
            id: id.into(),
            start_epoch,
            resolution_seconds,
            values,
            metric_type: MetricType::Gauge,
            dataset: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution_seconds == 0 {
            return Err(Error::InvalidArgument(format!("series `{}`: resolution_seconds must be positive", self.id)));
        }
        if self.values.is_empty() {
            return Err(Error::TooShort { needed: 1, got: 0 });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dataset_name(&self) -> &str {
        self.dataset.as_deref().unwrap_or("default")
    }

    /// Epoch of the observation at `index`.
    pub fn epoch_at(&self, index: usize) -> i64 {
        self.start_epoch + index as i64 * self.resolution_seconds as i64
    }
}

/// Per-context normalization statistics, kept for inverting the forecast.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mu_c: f64,
    pub sigma_c: f64,
    pub mu_f: f64,
    pub sigma_f: f64,
}

/// Identity of a window within its source corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct WindowMeta {
    pub id: String,
    pub series_id: String,
    pub dataset: String,
    /// Exclusive index, in the source series, where the horizon ends.
    pub horizon_end_index: usize,
    pub horizon_start_epoch: i64,
    pub resolution_seconds: u64,
}

/// Paired coarse/fine contexts with the fine-resolution horizon that follows them.
///
/// Masks use 1 for padded entries. Padding is always a contiguous prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiResWindow {
    pub meta: WindowMeta,
    pub coarse: Vec<f64>,
    pub coarse_mask: Vec<u8>,
    pub fine: Vec<f64>,
    pub fine_mask: Vec<u8>,
    pub horizon: Vec<f64>,
    pub ratio: usize,
}

impl MultiResWindow {
    pub fn context_len(&self) -> usize {
        self.fine.len()
    }

    pub fn horizon_len(&self) -> usize {
        self.horizon.len()
    }

    pub fn fine_padding(&self) -> usize {
        self.fine_mask.iter().filter(|&&m| m != 0).count()
    }

    pub fn coarse_padding(&self) -> usize {
        self.coarse_mask.iter().filter(|&&m| m != 0).count()
    }

    /// Unpadded suffix of the fine context.
    pub fn fine_observed(&self) -> &[f64] {
        &self.fine[self.fine_padding()..]
    }

    /// Unpadded suffix of the coarse context.
    pub fn coarse_observed(&self) -> &[f64] {
        &self.coarse[self.coarse_padding()..]
    }

    /// Index of the first fine context point in the source series.
    pub fn fine_start_index(&self) -> usize {
        self.meta.horizon_end_index - self.horizon.len() - (self.fine.len() - self.fine_padding())
    }

    pub fn horizon_start_index(&self) -> usize {
        self.meta.horizon_end_index - self.horizon.len()
    }

    /// Checks mask lengths and the prefix-padding invariant.
    pub fn validate(&self) -> Result<()> {
        if self.coarse.len() != self.coarse_mask.len() || self.fine.len() != self.fine_mask.len() {
            return Err(Error::Shape("mask length differs from its context".into()));
        }
        if self.ratio == 0 {
            return Err(Error::InvalidArgument("resolution ratio must be positive".into()));
        }
        for (name, mask) in [("coarse", &self.coarse_mask), ("fine", &self.fine_mask)] {
            let pad = mask.iter().take_while(|&&m| m != 0).count();
            if mask[pad..].iter().any(|&m| m != 0) {
                return Err(Error::Format(format!("{name} padding is not a contiguous prefix")));
            }
        }
        Ok(())
    }
}

/// Replaces each missing value with the most recent preceding observation.
/// Leading gaps take the first observed value.
pub fn impute_last_value(series: &Series) -> Result<Series> {
    let first = series
        .values
        .iter()
        .copied()
        .find(|v| !v.is_nan())
        .ok_or_else(|| Error::AllMissing(series.id.clone()))?;
    let mut last = first;
    let values = series
        .values
        .iter()
        .map(|&v| {
            if !v.is_nan() {
                last = v;
            }
            last
        })
        .collect();
    Ok(Series { values, ..series.clone() })
}

/// First differences. The result starts one resolution step later.
pub fn difference(series: &Series) -> Result<Series> {
    if series.values.len() < 2 {
        return Err(Error::TooShort { needed: 2, got: series.values.len() });
    }
    let values = series.values.windows(2).map(|w| w[1] - w[0]).collect();
    Ok(Series {
        values,
        start_epoch: series.start_epoch + series.resolution_seconds as i64,
        ..series.clone()
    })
}

/// Means of consecutive non-overlapping blocks of length `ratio`; a trailing
/// partial block is dropped. Sums accumulate left to right.
pub fn aggregate_to_coarse(fine: &[f64], ratio: usize) -> Vec<f64> {
    assert!(ratio >= 1, "ratio must be at least 1");
    fine.chunks_exact(ratio)
        .map(|block| block.iter().fold(0.0, |acc, &v| acc + v) / ratio as f64)
        .collect()
}

/// Builds the multiresolution window whose horizon ends (exclusively) at
/// `horizon_end_index`.
pub fn build_multires_window(
    series: &Series,
    horizon_end_index: usize,
    context_len: usize,
    horizon_len: usize,
    ratio: usize,
) -> Result<MultiResWindow> {
    if context_len == 0 || horizon_len == 0 || ratio == 0 {
        return Err(Error::InvalidArgument("context, horizon and ratio must be positive".into()));
    }
    if horizon_end_index > series.len() {
        return Err(Error::TooShort { needed: horizon_end_index, got: series.len() });
    }
    if horizon_end_index < horizon_len + 1 {
        return Err(Error::TooShort { needed: horizon_len + 1, got: horizon_end_index });
    }
    let values = &series.values;
    let horizon_start = horizon_end_index - horizon_len;

    let fine_real = context_len.min(horizon_start);
    let fine_pad = context_len - fine_real;
    let mut fine = vec![0.0; fine_pad];
    fine.extend_from_slice(&values[horizon_start - fine_real..horizon_start]);
    let mut fine_mask = vec![1u8; fine_pad];
    fine_mask.resize(context_len, 0);

    let coarse_real = context_len.min(horizon_start / ratio);
    let coarse_pad = context_len - coarse_real;
    let coarse_src = &values[horizon_start - coarse_real * ratio..horizon_start];
    let mut coarse = vec![0.0; coarse_pad];
    coarse.extend(aggregate_to_coarse(coarse_src, ratio));
    let mut coarse_mask = vec![1u8; coarse_pad];
    coarse_mask.resize(context_len, 0);

    let meta = WindowMeta {
        id: format!("{}@{}", series.id, horizon_end_index),
        series_id: series.id.clone(),
        dataset: series.dataset_name().to_string(),
        horizon_end_index,
        horizon_start_epoch: series.epoch_at(horizon_start),
        resolution_seconds: series.resolution_seconds,
    };
    Ok(MultiResWindow {
        meta,
        coarse,
        coarse_mask,
        fine,
        fine_mask,
        horizon: values[horizon_start..horizon_end_index].to_vec(),
        ratio,
    })
}
