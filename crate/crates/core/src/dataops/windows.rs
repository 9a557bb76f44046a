use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{build_multires_window, MultiResWindow, Series};

/// Geometry of the windows cut from a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowGeometry {
    pub context_len: usize,
    pub horizon_len: usize,
    pub ratio: usize,
    /// Fewest real fine-context points a window may have; `context_len` forbids fine padding.
    pub min_context: usize,
}

impl WindowGeometry {
    pub fn new(context_len: usize, horizon_len: usize, ratio: usize) -> Self {
        Self { context_len, horizon_len, ratio, min_context: context_len }
    }
}

/// Windows whose horizon ends advance by `stride`, starting from the first end
/// index with `min_context` real fine points. Too-short series yield nothing.
pub fn sliding_windows(series: &Series, stride: usize, geometry: &WindowGeometry) -> Result<Vec<MultiResWindow>> {
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be at least 1".into()));
    }
    let first_end = geometry.horizon_len + geometry.min_context.clamp(1, geometry.context_len);
    (first_end..=series.len())
        .step_by(stride)
        .map(|end| build_multires_window(series, end, geometry.context_len, geometry.horizon_len, geometry.ratio))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Split> {
        Split::ALL.get(code as usize).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl SplitFractions {
    pub fn new(train: f64, validation: f64, test: f64) -> Result<Self> {
        let f = Self { train, validation, test };
        if [train, validation, test].iter().any(|v| !(*v > 0.0)) || ((train + validation + test) - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("split fractions must be positive and sum to 1, got {train},{validation},{test}")));
        }
        Ok(f)
    }
}

/// Split labels for one series' windows. `None` marks a window dropped because
/// its fine context reaches back across a split boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub labels: Vec<Option<Split>>,
    /// Exclusive series index where training data ends.
    pub train_boundary: usize,
    /// Exclusive series index where validation data ends.
    pub validation_boundary: usize,
}

impl SplitAssignment {
    pub fn count(&self, split: Split) -> usize {
        self.labels.iter().filter(|l| **l == Some(split)).count()
    }

    pub fn dropped(&self) -> usize {
        self.labels.iter().filter(|l| l.is_none()).count()
    }
}

/// Assigns one series' windows to train/validation/test in temporal order.
///
/// Windows are ordered by horizon end. The earliest `train` fraction goes to
/// training, the next `validation` fraction to validation, the rest to test.
/// A validation (test) window is dropped when its fine context starts before
/// the end of the last training (validation) horizon.
pub fn temporal_split(windows: &[MultiResWindow], fractions: SplitFractions) -> Result<SplitAssignment> {
    let n = windows.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (windows[i].meta.horizon_end_index, i));

    let n_train = (fractions.train * n as f64).round() as usize;
    let n_val = ((fractions.train + fractions.validation) * n as f64).round() as usize - n_train.min(n);
    let n_train = n_train.min(n);
    let n_val = n_val.min(n - n_train);
    let n_test = n - n_train - n_val;
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(Error::InsufficientSplit(format!(
            "{n} windows give train={n_train} validation={n_val} test={n_test}; every split needs at least one"
        )));
    }

    let mut labels = vec![None; n];
    let end = |i: usize| windows[i].meta.horizon_end_index;
    let train_boundary = order[..n_train].iter().map(|&i| end(i)).max().unwrap_or(0);
    let validation_boundary = order[n_train..n_train + n_val].iter().map(|&i| end(i)).max().unwrap_or(train_boundary);
    for (rank, &i) in order.iter().enumerate() {
        let start = windows[i].fine_start_index();
        labels[i] = if rank < n_train {
            Some(Split::Train)
        } else if rank < n_train + n_val {
            (start >= train_boundary).then_some(Split::Validation)
        } else {
            (start >= validation_boundary).then_some(Split::Test)
        };
    }
    let assignment = SplitAssignment { labels, train_boundary, validation_boundary };
    let short: Vec<&str> = Split::ALL.iter().filter(|s| assignment.count(**s) == 0).map(|s| s.as_str()).collect();
    if !short.is_empty() {
        return Err(Error::InsufficientSplit(format!(
            "no leak-free windows left for {} after dropping {} boundary-crossing windows",
            short.join(", "),
            assignment.dropped()
        )));
    }
    Ok(assignment)
}

/// Splits against a corpus-wide test start epoch instead of per-series
/// fractions: horizons starting at or after `test_start_epoch` are test data,
/// earlier windows are divided between train and validation by the ratio of
/// their fractions, and windows straddling either boundary are dropped.
pub fn global_time_split(windows: &[MultiResWindow], fractions: SplitFractions, test_start_epoch: i64) -> Result<SplitAssignment> {
    let fine_start_epoch = |w: &MultiResWindow| {
        w.meta.horizon_start_epoch - (w.context_len() - w.fine_padding()) as i64 * w.meta.resolution_seconds as i64
    };
    let horizon_end_epoch = |w: &MultiResWindow| w.meta.horizon_start_epoch + w.horizon_len() as i64 * w.meta.resolution_seconds as i64;
    let past: Vec<usize> = (0..windows.len()).filter(|&i| horizon_end_epoch(&windows[i]) <= test_start_epoch).collect();
    let mut labels = vec![None; windows.len()];
    for (i, w) in windows.iter().enumerate() {
        if fine_start_epoch(w) >= test_start_epoch {
            labels[i] = Some(Split::Test);
        }
    }
    let mut train_boundary = 0;
    let mut validation_boundary = 0;
    if past.len() >= 2 {
        let share = fractions.train / (fractions.train + fractions.validation);
        let past_windows: Vec<MultiResWindow> = past.iter().map(|&i| windows[i].clone()).collect();
        let mut order: Vec<usize> = (0..past.len()).collect();
        order.sort_by_key(|&i| (past_windows[i].meta.horizon_end_index, i));
        let n_train = ((share * past.len() as f64).round() as usize).clamp(1, past.len() - 1);
        train_boundary = order[..n_train].iter().map(|&i| past_windows[i].meta.horizon_end_index).max().unwrap_or(0);
        validation_boundary = order.iter().map(|&i| past_windows[i].meta.horizon_end_index).max().unwrap_or(0);
        for (rank, &i) in order.iter().enumerate() {
            labels[past[i]] = if rank < n_train {
                Some(Split::Train)
            } else {
                (past_windows[i].fine_start_index() >= train_boundary).then_some(Split::Validation)
            };
        }
    }
    let assignment = SplitAssignment { labels, train_boundary, validation_boundary };
    let short: Vec<&str> = Split::ALL.iter().filter(|s| assignment.count(**s) == 0).map(|s| s.as_str()).collect();
    if !short.is_empty() {
        return Err(Error::InsufficientSplit(format!("global split leaves no windows for {}", short.join(", "))));
    }
    Ok(assignment)
}
