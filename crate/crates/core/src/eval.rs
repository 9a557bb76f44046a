//! Forecast metrics, naive baselines and cross-horizon aggregation.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decode::ForecastBundle;
use crate::error::{Error, Result};
use crate::model::pinball;
use crate::series::MultiResWindow;

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const MSIS_ALPHA: f64 = 0.05;
/// Interval bounds fed to the MSIS.
pub const MSIS_LOWER: f64 = 0.1;
pub const MSIS_UPPER: f64 = 0.9;
pub const GEOMETRIC_SHIFT: f64 = 1e-3;

pub const METRIC_NAMES: [&str; 7] = ["mse", "mae", "mase", "smape", "msis", "crps", "ncrps"];

fn degenerate(value: f64, horizon: usize, levels: &[f64]) -> ForecastBundle {
    ForecastBundle { mean: vec![value; horizon], levels: levels.to_vec(), quantiles: vec![vec![value; horizon]; levels.len()] }
}

/// Repeats the last observed fine value; every quantile equals it.
pub fn naive_forecast(window: &MultiResWindow, horizon: usize, levels: &[f64]) -> Result<ForecastBundle> {
    let observed = window.fine_observed();
    let last = *observed.last().ok_or_else(|| Error::DegenerateWindow(format!("{}: fine context is fully padded", window.meta.id)))?;
    debug_assert_eq!(window.fine_mask.last(), Some(&0), "padding is a prefix, never a suffix");
    Ok(degenerate(last, horizon, levels))
}

fn seasonal_path(context: &[f64], season: usize, horizon: usize) -> Result<Vec<f64>> {
    if season == 0 {
        return Err(Error::InvalidArgument("season must be at least 1".into()));
    }
    let c = context.len();
    if season > c {
        return Err(Error::InvalidArgument(format!("season {season} exceeds the {c} observed context points")));
    }
    Ok((0..horizon).map(|t| context[c - season + t % season]).collect())
}

/// `mean[t] = context[C - season + (t mod season)]` over the observed fine context.
pub fn seasonal_naive_forecast(window: &MultiResWindow, season: usize, horizon: usize, levels: &[f64]) -> Result<ForecastBundle> {
    let path = seasonal_path(window.fine_observed(), season, horizon)?;
    Ok(ForecastBundle { quantiles: vec![path.clone(); levels.len()], mean: path, levels: levels.to_vec() })
}

/// Raw per-horizon metrics. Scaled metrics are `None` when their denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub mse: f64,
    pub mae: f64,
    pub mase: Option<f64>,
    pub smape: f64,
    pub msis: Option<f64>,
    pub crps: f64,
    /// CRPS divided by the mean absolute actual value.
    pub ncrps: Option<f64>,
}

impl MetricSet {
    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "mse" => Some(self.mse),
            "mae" => Some(self.mae),
            "mase" => self.mase,
            "smape" => Some(self.smape),
            "msis" => self.msis,
            "crps" => Some(self.crps),
            "ncrps" => self.ncrps,
            _ => None,
        }
    }
}

/// Scores `forecast` against `actual`. The median is the point forecast; the
/// scale for MASE and MSIS is the MAE of the seasonal-naive forecast built
/// from `context` over the same horizon.
pub fn compute_metrics(forecast: &ForecastBundle, actual: &[f64], context: &[f64], season: usize) -> Result<MetricSet> {
    let h = actual.len();
    if h == 0 || forecast.len() != h || forecast.quantiles.iter().any(|q| q.len() != h) {
        return Err(Error::Shape(format!("forecast length {} does not match {h} actual values", forecast.len())));
    }
    let point = forecast.point();
    let n = h as f64;
    let mse = point.iter().zip(actual).map(|(f, y)| (f - y) * (f - y)).sum::<f64>() / n;
    let mae = point.iter().zip(actual).map(|(f, y)| (f - y).abs()).sum::<f64>() / n;
    let smape = point
        .iter()
        .zip(actual)
        .map(|(f, y)| {
            let den = f.abs() + y.abs();
            if den == 0.0 {
                0.0
            } else {
                2.0 * (f - y).abs() / den
            }
        })
        .sum::<f64>()
        / n;

    let snaive = seasonal_path(context, season, h)?;
    let scale = snaive.iter().zip(actual).map(|(f, y)| (f - y).abs()).sum::<f64>() / n;
    let scaled = |v: f64| (scale > 0.0).then(|| v / scale);

    let interval = forecast.quantile(MSIS_LOWER).zip(forecast.quantile(MSIS_UPPER));
    let msis = interval.and_then(|(lo, hi)| {
        let raw = (0..h)
            .map(|t| {
                let (l, u, y) = (lo[t], hi[t], actual[t]);
                let mut s = u - l;
                if y < l {
                    s += 2.0 / MSIS_ALPHA * (l - y);
                }
                if y > u {
                    s += 2.0 / MSIS_ALPHA * (y - u);
                }
                s
            })
            .sum::<f64>()
            / n;
        scaled(raw)
    });

    let nq = forecast.levels.len().max(1) as f64;
    let crps = 2.0
        * forecast
            .levels
            .iter()
            .zip(&forecast.quantiles)
            .map(|(&tau, q)| q.iter().zip(actual).map(|(&qv, &y)| pinball(tau, y, qv)).sum::<f64>() / n)
            .sum::<f64>()
        / nq;
    let mean_abs = actual.iter().map(|y| y.abs()).sum::<f64>() / n;
    let ncrps = (mean_abs > 0.0).then(|| crps / mean_abs);
    Ok(MetricSet { mse, mae, mase: scaled(mae), smape, msis, crps, ncrps })
}

/// Metrics for one forecast horizon, tagged for pairing and per-dataset grouping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonReport {
    pub id: String,
    pub dataset: String,
    pub metrics: MetricSet,
}

/// Scores each forecast against its window's horizon, in parallel, preserving order.
pub fn evaluate_horizons(forecasts: &[ForecastBundle], windows: &[MultiResWindow], season: usize) -> Result<Vec<HorizonReport>> {
    if forecasts.len() != windows.len() {
        return Err(Error::Shape(format!("{} forecasts for {} windows", forecasts.len(), windows.len())));
    }
    forecasts
        .par_iter()
        .zip(windows.par_iter())
        .map(|(f, w)| {
            let mut f = f.clone();
            if f.len() < w.horizon_len() {
                return Err(Error::Shape(format!("{}: forecast has {} points, horizon {}", w.meta.id, f.len(), w.horizon_len())));
            }
            f.truncate(w.horizon_len());
            Ok(HorizonReport { id: w.meta.id.clone(), dataset: w.meta.dataset.clone(), metrics: compute_metrics(&f, &w.horizon, w.fine_observed(), season)? })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AggregationMode {
    /// Arithmetic mean over horizons, divided by the baseline's mean.
    #[serde(rename = "A")]
    ArithmeticNormalized,
    /// Per-dataset ratio to the baseline, then a shifted geometric mean over datasets.
    #[serde(rename = "B")]
    ShiftedGeometric,
}

impl AggregationMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "A" | "a" => Some(Self::ArithmeticNormalized),
            "B" | "b" => Some(Self::ShiftedGeometric),
            _ => None,
        }
    }
}

/// `exp(mean(ln(x + eps))) - eps`; identical inputs return that value exactly.
pub fn shifted_geometric_mean(values: &[f64], eps: f64) -> f64 {
    if let Some(&first) = values.first() {
        if values.iter().all(|&v| v == first) {
            return first;
        }
    }
    let n = values.len() as f64;
    (values.iter().map(|v| (v + eps).ln()).sum::<f64>() / n).exp() - eps
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub count: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub schema_version: u32,
    pub mode: AggregationMode,
    pub baseline: String,
    pub horizons: usize,
    /// Normalized score per metric; `None` when no horizon had a defined value.
    pub normalized: BTreeMap<String, Option<f64>>,
    /// Arithmetic means of the model's raw metrics over included horizons.
    pub model_raw: BTreeMap<String, Option<f64>>,
    pub baseline_raw: BTreeMap<String, Option<f64>>,
    /// Per-dataset ratios (mode B only).
    pub per_dataset: BTreeMap<String, BTreeMap<String, Option<f64>>>,
    pub excluded: BTreeMap<String, Exclusion>,
}

fn exclusion_reason(metric: &str) -> &'static str {
    match metric {
        "mase" | "msis" => "seasonal-naive scale is zero on the horizon",
        "ncrps" => "mean absolute actual value is zero",
        _ => "undefined",
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn ratio(model: Option<f64>, base: Option<f64>) -> Option<f64> {
    match (model, base) {
        (Some(m), Some(b)) if m == b => Some(1.0),
        (Some(m), Some(b)) if b != 0.0 => Some(m / b),
        _ => None,
    }
}

/// Aggregates model horizons against baseline horizons paired by position and id.
pub fn aggregate(reports: &[HorizonReport], baseline: &[HorizonReport], mode: AggregationMode, baseline_name: &str) -> Result<MetricReport> {
    if reports.len() != baseline.len() {
        return Err(Error::Shape(format!("{} model horizons but {} baseline horizons", reports.len(), baseline.len())));
    }
    if let Some((r, b)) = reports.iter().zip(baseline).find(|(r, b)| r.id != b.id) {
        return Err(Error::InvalidArgument(format!("baseline horizon `{}` does not match model horizon `{}`", b.id, r.id)));
    }
    if reports.is_empty() {
        return Err(Error::InvalidArgument("nothing to aggregate".into()));
    }
    let mut report = MetricReport {
        schema_version: REPORT_SCHEMA_VERSION,
        mode,
        baseline: baseline_name.to_string(),
        horizons: reports.len(),
        normalized: BTreeMap::new(),
        model_raw: BTreeMap::new(),
        baseline_raw: BTreeMap::new(),
        per_dataset: BTreeMap::new(),
        excluded: BTreeMap::new(),
    };
    let included = |metric: &str, idx: &[usize]| -> (Vec<f64>, Vec<f64>) {
        idx.iter()
            .filter_map(|&i| reports[i].metrics.get(metric).zip(baseline[i].metrics.get(metric)))
            .unzip()
    };
    let all: Vec<usize> = (0..reports.len()).collect();
    let mut datasets: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in reports.iter().enumerate() {
        datasets.entry(r.dataset.as_str()).or_default().push(i);
    }
    for metric in METRIC_NAMES {
        let (m, b) = included(metric, &all);
        let dropped = reports.len() - m.len();
        if dropped > 0 {
            report.excluded.insert(metric.to_string(), Exclusion { count: dropped, reason: exclusion_reason(metric).to_string() });
        }
        report.model_raw.insert(metric.to_string(), mean(&m));
        report.baseline_raw.insert(metric.to_string(), mean(&b));
        let value = match mode {
            AggregationMode::ArithmeticNormalized => ratio(mean(&m), mean(&b)),
            AggregationMode::ShiftedGeometric => {
                let mut ratios = Vec::new();
                for (name, idx) in &datasets {
                    let (dm, db) = included(metric, idx);
                    let r = ratio(mean(&dm), mean(&db));
                    report.per_dataset.entry(name.to_string()).or_default().insert(metric.to_string(), r);
                    ratios.extend(r);
                }
                (!ratios.is_empty()).then(|| shifted_geometric_mean(&ratios, GEOMETRIC_SHIFT))
            }
        };
        report.normalized.insert(metric.to_string(), value);
    }
    Ok(report)
}
