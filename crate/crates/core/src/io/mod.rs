//! On-disk formats: series JSONL, binary window shards, checkpoints and forecast JSONL.

pub mod checkpoint;
pub mod forecasts;
pub mod shard;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, OptimizerState, TrainState};
pub use forecasts::{read_forecasts, write_forecasts, ForecastRecord};
pub use shard::{read_shard, write_shard, ShardManifest};

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::series::Series;

/// One JSON object per line; blank lines are skipped.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (no, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), no + 1)))?);
    }
    Ok(out)
}

pub fn write_jsonl<T: serde::Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_series_jsonl(path: &Path) -> Result<Vec<Series>> {
    let series: Vec<Series> = read_jsonl(path)?;
    for s in &series {
        s.validate()?;
    }
    Ok(series)
}

pub fn write_series_jsonl(path: &Path, series: &[Series]) -> Result<()> {
    write_jsonl(path, series)
}

pub(crate) fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_u32::<LittleEndian>(s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

pub(crate) fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let len = r.read_u32::<LittleEndian>()? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Format(format!("invalid utf-8 string: {e}")))
}

pub(crate) fn write_f64s<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    for &v in values {
        w.write_f64::<LittleEndian>(v)?;
    }
    Ok(())
}

pub(crate) fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; n];
    r.read_f64_into::<LittleEndian>(&mut out)?;
    Ok(out)
}

pub(crate) fn check_magic<R: Read>(r: &mut R, magic: &[u8; 4], supported: u32) -> Result<()> {
    let mut got = [0u8; 4];
    r.read_exact(&mut got).map_err(|_| Error::Format("file too short for header".into()))?;
    if &got != magic {
        return Err(Error::Format(format!("bad magic {:?}, expected {:?}", String::from_utf8_lossy(&got), String::from_utf8_lossy(magic))));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != supported {
        return Err(Error::Format(format!("unsupported format version {version}, expected {supported}")));
    }
    Ok(())
}
