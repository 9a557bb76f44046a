use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::{check_magic, read_f64s, read_str, write_f64s, write_str};
use crate::dataops::Split;
use crate::error::{Error, Result};
use crate::series::{MultiResWindow, WindowMeta};

const MAGIC: &[u8; 4] = b"MRWS";
const VERSION: u32 = 1;
const NO_SPLIT: u8 = u8::MAX;

/// Sidecar summary written next to every shard as `<shard>.manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShardManifest {
    pub format_version: u32,
    pub windows: usize,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub unassigned: usize,
    pub context_len: usize,
    pub horizon_len: usize,
    pub ratio: usize,
    /// Hex SHA-256 of the curation policy that produced the shard.
    pub policy_hash: String,
    pub seed: u64,
}

pub fn manifest_path(shard: &Path) -> PathBuf {
    let mut name = shard.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn write_window<W: Write>(w: &mut W, window: &MultiResWindow, split: Option<Split>) -> Result<()> {
    w.write_u8(split.map_or(NO_SPLIT, Split::code))?;
    write_str(w, &window.meta.id)?;
    write_str(w, &window.meta.series_id)?;
    write_str(w, &window.meta.dataset)?;
    w.write_u64::<LittleEndian>(window.meta.horizon_end_index as u64)?;
    w.write_i64::<LittleEndian>(window.meta.horizon_start_epoch)?;
    w.write_u64::<LittleEndian>(window.meta.resolution_seconds)?;
    w.write_u32::<LittleEndian>(window.ratio as u32)?;
    w.write_u32::<LittleEndian>(window.context_len() as u32)?;
    w.write_u32::<LittleEndian>(window.horizon_len() as u32)?;
    write_f64s(w, &window.coarse)?;
    w.write_all(&window.coarse_mask)?;
    write_f64s(w, &window.fine)?;
    w.write_all(&window.fine_mask)?;
    write_f64s(w, &window.horizon)?;
    Ok(())
}

fn read_window<R: Read>(r: &mut R) -> Result<(MultiResWindow, Option<Split>)> {
    let code = r.read_u8()?;
    let split = if code == NO_SPLIT {
        None
    } else {
        Some(Split::from_code(code).ok_or_else(|| Error::Format(format!("unknown split code {code}")))?)
    };
    let meta = WindowMeta {
        id: read_str(r)?,
        series_id: read_str(r)?,
        dataset: read_str(r)?,
        horizon_end_index: r.read_u64::<LittleEndian>()? as usize,
        horizon_start_epoch: r.read_i64::<LittleEndian>()?,
        resolution_seconds: r.read_u64::<LittleEndian>()?,
    };
    let ratio = r.read_u32::<LittleEndian>()? as usize;
    let c = r.read_u32::<LittleEndian>()? as usize;
    let h = r.read_u32::<LittleEndian>()? as usize;
    let coarse = read_f64s(r, c)?;
    let mut coarse_mask = vec![0u8; c];
    r.read_exact(&mut coarse_mask)?;
    let fine = read_f64s(r, c)?;
    let mut fine_mask = vec![0u8; c];
    r.read_exact(&mut fine_mask)?;
    let horizon = read_f64s(r, h)?;
    let window = MultiResWindow { meta, coarse, coarse_mask, fine, fine_mask, horizon, ratio };
    window.validate()?;
    Ok((window, split))
}

/// Writes windows with their split labels. `splits` must be empty or match `windows` in length.
pub fn write_shard(path: &Path, windows: &[MultiResWindow], splits: &[Option<Split>]) -> Result<()> {
    if !splits.is_empty() && splits.len() != windows.len() {
        return Err(Error::Shape(format!("{} split labels for {} windows", splits.len(), windows.len())));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u64::<LittleEndian>(windows.len() as u64)?;
    for (i, window) in windows.iter().enumerate() {
        write_window(&mut w, window, splits.get(i).copied().flatten())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_shard(path: &Path) -> Result<Vec<(MultiResWindow, Option<Split>)>> {
    let mut r = BufReader::new(File::open(path)?);
    check_magic(&mut r, MAGIC, VERSION)?;
    let n = r.read_u64::<LittleEndian>()? as usize;
    (0..n).map(|_| read_window(&mut r)).collect()
}
