//! A checkpoint is a directory holding `tensors.bin` (named float arrays,
//! optimizer moments included), `model_config.json` and `train_state.json`.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::{check_magic, read_f64s, read_str, write_f64s, write_str};
use crate::error::{Error, Result};
use crate::model::{Mat, ModelConfig, ModelParams};

const MAGIC: &[u8; 4] = b"MRCK";
const VERSION: u32 = 1;
const TENSORS: &str = "tensors.bin";
const CONFIG: &str = "model_config.json";
const STATE: &str = "train_state.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrainState {
    pub format_version: u32,
    pub epoch: usize,
    /// Optimizer steps taken so far.
    pub step: usize,
    pub total_steps: usize,
    pub lr: f64,
    pub train_loss: Option<f64>,
    pub validation_loss: Option<f64>,
    pub seed: u64,
}

/// AdamW moments and step count.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub t: u64,
    pub m: ModelParams,
    pub v: ModelParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub state: TrainState,
    pub optimizer: Option<OptimizerState>,
}

fn write_tensors(path: &Path, named: &[(String, &Mat)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(named.len() as u32)?;
    for (name, m) in named {
        write_str(&mut w, name)?;
        w.write_u32::<LittleEndian>(m.rows as u32)?;
        w.write_u32::<LittleEndian>(m.cols as u32)?;
        write_f64s(&mut w, &m.data)?;
    }
    w.flush()?;
    Ok(())
}

fn read_tensors(path: &Path) -> Result<Vec<(String, Mat)>> {
    let mut r = BufReader::new(File::open(path)?);
    check_magic(&mut r, MAGIC, VERSION)?;
    let n = r.read_u32::<LittleEndian>()? as usize;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let name = read_str(&mut r)?;
        let rows = r.read_u32::<LittleEndian>()? as usize;
        let cols = r.read_u32::<LittleEndian>()? as usize;
        let data = read_f64s(&mut r, rows * cols)?;
        out.push((name, Mat::from_vec(rows, cols, data)));
    }
    Ok(out)
}

pub fn save_checkpoint(dir: &Path, checkpoint: &Checkpoint) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut named = checkpoint.params.tensors();
    if let Some(opt) = &checkpoint.optimizer {
        named.extend(opt.m.tensors().into_iter().map(|(n, m)| (format!("adam_m.{n}"), m)));
        named.extend(opt.v.tensors().into_iter().map(|(n, m)| (format!("adam_v.{n}"), m)));
    }
    write_tensors(&dir.join(TENSORS), &named)?;
    fs::write(dir.join(CONFIG), serde_json::to_vec_pretty(&checkpoint.config)?)?;
    let state = TrainState { format_version: VERSION, ..checkpoint.state.clone() };
    let mut state_json = serde_json::to_value(&state)?;
    if let Some(opt) = &checkpoint.optimizer {
        state_json["adam_t"] = opt.t.into();
    }
    fs::write(dir.join(STATE), serde_json::to_vec_pretty(&state_json)?)?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    if !dir.is_dir() {
        return Err(Error::Format(format!("{} is not a checkpoint directory", dir.display())));
    }
    let config: ModelConfig = serde_json::from_slice(&fs::read(dir.join(CONFIG))?)?;
    config.validate()?;
    let state_json: serde_json::Value = serde_json::from_slice(&fs::read(dir.join(STATE))?)?;
    let state: TrainState = serde_json::from_value(state_json.clone())?;
    let named = read_tensors(&dir.join(TENSORS))?;
    let params = ModelParams::from_named(&config, &named)?;
    let strip = |prefix: &str| -> Vec<(String, Mat)> {
        named.iter().filter_map(|(n, m)| n.strip_prefix(prefix).map(|n| (n.to_string(), m.clone()))).collect()
    };
    let (m, v) = (strip("adam_m."), strip("adam_v."));
    let optimizer = if m.is_empty() {
        None
    } else {
        Some(OptimizerState {
            t: state_json.get("adam_t").and_then(|t| t.as_u64()).unwrap_or(0),
            m: ModelParams::from_named(&config, &m)?,
            v: ModelParams::from_named(&config, &v)?,
        })
    };
    if !params.all_finite() {
        return Err(Error::Format(format!("{}: checkpoint holds non-finite parameters", dir.display())));
    }
    Ok(Checkpoint { config, params, state, optimizer })
}
