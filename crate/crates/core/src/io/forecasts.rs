use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decode::ForecastBundle;
use crate::error::{Error, Result};

/// One line of a forecast file. Quantile keys are the levels printed as decimals ("0.1").
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub id: String,
    pub mean: Vec<f64>,
    pub quantiles: BTreeMap<String, Vec<f64>>,
}

pub fn quantile_key(q: f64) -> String {
    format!("{q}")
}

impl ForecastRecord {
    pub fn from_bundle(id: impl Into<String>, bundle: &ForecastBundle) -> Self {
        Self {
            id: id.into(),
            mean: bundle.mean.clone(),
            quantiles: bundle.levels.iter().zip(&bundle.quantiles).map(|(&q, v)| (quantile_key(q), v.clone())).collect(),
        }
    }

    /// Rebuilds a bundle with quantile rows in ascending level order.
    pub fn to_bundle(&self) -> Result<ForecastBundle> {
        let mut levels: Vec<(f64, &Vec<f64>)> = self
            .quantiles
            .iter()
            .map(|(k, v)| k.parse::<f64>().map(|q| (q, v)).map_err(|_| Error::Format(format!("{}: bad quantile key `{k}`", self.id))))
            .collect::<Result<_>>()?;
        levels.sort_by(|a, b| a.0.total_cmp(&b.0));
        if levels.iter().any(|(_, v)| v.len() != self.mean.len()) {
            return Err(Error::Shape(format!("{}: quantile lengths differ from the mean", self.id)));
        }
        Ok(ForecastBundle {
            mean: self.mean.clone(),
            levels: levels.iter().map(|(q, _)| *q).collect(),
            quantiles: levels.into_iter().map(|(_, v)| v.clone()).collect(),
        })
    }
}

pub fn write_forecasts(path: &Path, records: &[ForecastRecord]) -> Result<()> {
    super::write_jsonl(path, records)
}

pub fn read_forecasts(path: &Path) -> Result<Vec<ForecastRecord>> {
    super::read_jsonl(path)
}
