//! Statistical deduplication.
//!
//! Stage one labels every window with a SimHash code (sign of random Gaussian
//! projections of its z-scored fine context); the code is the cluster label.
//! Stage two shrinks the largest half of the clusters. Each cluster is profiled
//! from a sample (medoid plus a histogram of distances from it); clusters whose
//! histogram spikes near zero are sampled by distance rank so near-copies of the
//! medoid are suppressed, the rest uniformly.
//!
//! Code assignment needs no coordination between shards. Cluster membership is
//! always ordered by window id and every per-cluster random stream is seeded
//! from `(seed, code)`, so results do not depend on how the input was sharded.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::MultiResWindow;
use crate::synth::child_seed;

pub const DEFAULT_BITS: usize = 16;
pub const DEFAULT_SAMPLE_SIZE: usize = 64;
pub const DEFAULT_HISTOGRAM_BINS: usize = 32;
pub const DEFAULT_SPIKE_THRESHOLD: f64 = 0.25;

/// Fixed-width binary code, packed little-endian into 64-bit words.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SimHashCode {
    pub width: usize,
    pub words: Vec<u64>,
}

impl SimHashCode {
    pub fn bit(&self, b: usize) -> bool {
        self.words[b / 64] >> (b % 64) & 1 == 1
    }

    pub fn hamming(&self, other: &SimHashCode) -> u32 {
        self.words.iter().zip(&other.words).map(|(a, b)| (a ^ b).count_ones()).sum()
    }

    pub fn to_hex(&self) -> String {
        self.words.iter().rev().map(|w| format!("{w:016x}")).collect()
    }

    fn seed_mix(&self) -> u64 {
        self.words.iter().fold(self.width as u64, |acc, &w| child_seed(acc, w))
    }
}

/// `bits` random hyperplanes in `dim` dimensions, drawn from a seeded stream.
#[derive(Debug, Clone)]
pub struct SimHasher {
    bits: usize,
    dim: usize,
    planes: Vec<f64>,
}

impl SimHasher {
    pub fn new(bits: usize, dim: usize, seed: u64) -> Self {
        assert!(bits >= 1 && dim >= 1, "simhash needs at least one bit and dimension");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let planes = (0..bits * dim).map(|_| rng.sample(StandardNormal)).collect();
        Self { bits, dim, planes }
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Bit `b` is set iff the projection onto hyperplane `b` is non-negative.
    pub fn code(&self, feature: &[f64]) -> Result<SimHashCode> {
        if feature.len() != self.dim {
            return Err(Error::Shape(format!("simhash feature has {} dims, hasher expects {}", feature.len(), self.dim)));
        }
        if feature.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("simhash feature is not finite".into()));
        }
        let mut words = vec![0u64; self.bits.div_ceil(64)];
        for (b, plane) in self.planes.chunks_exact(self.dim).enumerate() {
            let dot: f64 = plane.iter().zip(feature).map(|(p, x)| p * x).sum();
            if dot >= 0.0 {
                words[b / 64] |= 1 << (b % 64);
            }
        }
        Ok(SimHashCode { width: self.bits, words })
    }

    pub fn code_window(&self, window: &MultiResWindow) -> Result<SimHashCode> {
        self.code(&zscore_feature(window))
    }
}

/// Fine context z-scored over its unpadded points; padded entries become 0.
/// A zero-variance context maps to all zeros.
pub fn zscore_feature(window: &MultiResWindow) -> Vec<f64> {
    let obs = window.fine_observed();
    let n = obs.len().max(1) as f64;
    let mean = obs.iter().sum::<f64>() / n;
    let sd = (obs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let pad = window.fine_padding();
    window
        .fine
        .iter()
        .enumerate()
        .map(|(i, v)| if i < pad || !(sd > 0.0) { 0.0 } else { (v - mean) / sd })
        .collect()
}

/// One window as seen by the dedup stages.
#[derive(Debug, Clone, PartialEq)]
pub struct DedupItem {
    pub id: String,
    pub feature: Vec<f64>,
}

impl DedupItem {
    pub fn from_window(window: &MultiResWindow) -> Self {
        Self { id: window.meta.id.clone(), feature: zscore_feature(window) }
    }
}

/// Codes every item; items are split into `shards` contiguous chunks processed independently.
pub fn assign_codes(items: &[DedupItem], hasher: &SimHasher, shards: usize) -> Result<Vec<SimHashCode>> {
    let chunk = items.len().div_ceil(shards.max(1)).max(1);
    let per_shard: Vec<Result<Vec<SimHashCode>>> = items
        .par_chunks(chunk)
        .map(|shard| shard.iter().map(|it| hasher.code(&it.feature)).collect())
        .collect();
    let mut out = Vec::with_capacity(items.len());
    for shard in per_shard {
        out.extend(shard?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DedupConfig {
    pub bits: usize,
    pub sample_size: usize,
    pub histogram_bins: usize,
    pub spike_threshold: f64,
    /// Equalization target; `None` uses the median size of the top-half clusters.
    pub target: Option<usize>,
}

impl Default for DedupConfig {
    fn default() -> Self {
        Self {
            bits: DEFAULT_BITS,
            sample_size: DEFAULT_SAMPLE_SIZE,
            histogram_bins: DEFAULT_HISTOGRAM_BINS,
            spike_threshold: DEFAULT_SPIKE_THRESHOLD,
            target: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterProfile {
    pub code: SimHashCode,
    pub size: usize,
    pub medoid_id: String,
    pub distance_histogram: Vec<usize>,
    pub histogram_max: f64,
    pub spike_flag: bool,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Index (into `points`) minimizing the summed Euclidean distance to all points; ties go to the lowest index.
pub fn medoid(points: &[&[f64]]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, p) in points.iter().enumerate() {
        let total: f64 = points.iter().map(|q| euclidean(p, q)).sum();
        if total < best.1 {
            best = (i, total);
        }
    }
    best.0
}

fn sample_indices(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let k = k.min(n);
    for i in 0..k {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

/// Groups items by code; members of each cluster are ordered by id.
pub fn group_by_code(items: &[DedupItem], codes: &[SimHashCode]) -> BTreeMap<SimHashCode, Vec<usize>> {
    let mut groups: BTreeMap<SimHashCode, Vec<usize>> = BTreeMap::new();
    for (i, code) in codes.iter().enumerate() {
        groups.entry(code.clone()).or_default().push(i);
    }
    for members in groups.values_mut() {
        members.sort_by(|&a, &b| items[a].id.cmp(&items[b].id));
    }
    groups
}

fn profile_cluster(code: &SimHashCode, members: &[usize], items: &[DedupItem], config: &DedupConfig, seed: u64) -> ClusterProfile {
    let mut rng = ChaCha8Rng::seed_from_u64(child_seed(seed, code.seed_mix()));
    let sample: Vec<usize> = sample_indices(members.len(), config.sample_size.max(2), &mut rng)
        .into_iter()
        .map(|i| members[i])
        .collect();
    let points: Vec<&[f64]> = sample.iter().map(|&i| items[i].feature.as_slice()).collect();
    let m = medoid(&points);
    let distances: Vec<f64> = points.iter().map(|p| euclidean(p, points[m])).collect();
    let max = distances.iter().copied().fold(0.0, f64::max);
    let bins = config.histogram_bins.max(1);
    let mut hist = vec![0usize; bins];
    for d in &distances {
        let b = if max > 0.0 { ((d / max) * bins as f64).floor() as usize } else { 0 };
        hist[b.min(bins - 1)] += 1;
    }
    let spike_flag = hist[0] as f64 / sample.len() as f64 > config.spike_threshold;
    ClusterProfile {
        code: code.clone(),
        size: members.len(),
        medoid_id: items[sample[m]].id.clone(),
        distance_histogram: hist,
        histogram_max: max,
        spike_flag,
    }
}

/// Profiles each cluster from a sample of at most `config.sample_size` members.
pub fn cluster_and_profile(
    items: &[DedupItem],
    groups: &BTreeMap<SimHashCode, Vec<usize>>,
    config: &DedupConfig,
    seed: u64,
) -> BTreeMap<SimHashCode, ClusterProfile> {
    groups
        .par_iter()
        .map(|(code, members)| (code.clone(), profile_cluster(code, members, items, config, seed)))
        .collect()
}

/// Ranks with ties sharing the lowest rank, starting at 1.
fn competition_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        for &k in &order[i..=j] {
            ranks[k] = (i + 1) as f64;
        }
        i = j + 1;
    }
    ranks
}

fn sample_cluster(
    profile: &ClusterProfile,
    members: &[usize],
    items: &[DedupItem],
    id_index: &HashMap<&str, usize>,
    target: usize,
    seed: u64,
) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(child_seed(seed ^ 0x5A5A_5A5A, profile.code.seed_mix()));
    if profile.spike_flag {
        let medoid = &items[id_index[profile.medoid_id.as_str()]].feature;
        let distances: Vec<f64> = members.iter().map(|&i| euclidean(&items[i].feature, medoid)).collect();
        let ranks = competition_ranks(&distances);
        // weighted sampling without replacement: keep the `target` largest u^(1/w)
        let mut keyed: Vec<(f64, usize)> = members
            .iter()
            .zip(&ranks)
            .map(|(&i, &w)| (rng.random::<f64>().ln() / w, i))
            .collect();
        keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        keyed.truncate(target);
        keyed.into_iter().map(|(_, i)| i).collect()
    } else {
        sample_indices(members.len(), target, &mut rng).into_iter().map(|i| members[i]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DedupReport {
    pub bits: usize,
    pub seed: u64,
    pub input_windows: usize,
    pub kept_windows: usize,
    pub clusters: usize,
    pub target: usize,
    pub spike_clusters: usize,
    /// Cluster sizes, largest first.
    pub sizes_before: Vec<usize>,
    pub sizes_after: Vec<usize>,
    /// Cluster-size histograms with power-of-two bins: entry `k` counts sizes in `[2^k, 2^(k+1))`.
    pub size_histogram_before: Vec<usize>,
    pub size_histogram_after: Vec<usize>,
}

fn log2_histogram(sizes: &[usize]) -> Vec<usize> {
    let mut hist = Vec::new();
    for &s in sizes.iter().filter(|&&s| s > 0) {
        let k = (usize::BITS - 1 - s.leading_zeros()) as usize;
        if hist.len() <= k {
            hist.resize(k + 1, 0);
        }
        hist[k] += 1;
    }
    hist
}

/// Two-stage sampling over profiled clusters. Returns surviving item indices in
/// ascending order.
pub fn dedup_sample(
    items: &[DedupItem],
    groups: &BTreeMap<SimHashCode, Vec<usize>>,
    profiles: &BTreeMap<SimHashCode, ClusterProfile>,
    target: Option<usize>,
    seed: u64,
) -> (Vec<usize>, usize) {
    let mut by_size: Vec<&SimHashCode> = groups.keys().collect();
    by_size.sort_by(|a, b| groups[*b].len().cmp(&groups[*a].len()).then(a.cmp(b)));
    let top = by_size.len().div_ceil(2);
    let target = target.unwrap_or_else(|| {
        let mut sizes: Vec<usize> = by_size[..top].iter().map(|c| groups[*c].len()).collect();
        sizes.sort_unstable();
        sizes.get(sizes.len().saturating_sub(1) / 2).copied().unwrap_or(1)
    });
    let target = target.max(1);
    let id_index: HashMap<&str, usize> = items.iter().enumerate().map(|(i, it)| (it.id.as_str(), i)).collect();
    let kept: Vec<Vec<usize>> = by_size
        .par_iter()
        .enumerate()
        .map(|(rank, code)| {
            let members = &groups[*code];
            if rank >= top || members.len() <= target {
                members.clone()
            } else {
                sample_cluster(&profiles[*code], members, items, &id_index, target, seed)
            }
        })
        .collect();
    let mut out: Vec<usize> = kept.into_iter().flatten().collect();
    out.sort_unstable();
    (out, target)
}

/// Full pipeline over `items`, coding them in `shards` independent shards.
pub fn deduplicate(items: &[DedupItem], config: &DedupConfig, seed: u64, shards: usize) -> Result<(Vec<usize>, DedupReport)> {
    if items.is_empty() {
        return Ok((Vec::new(), empty_report(config, seed)));
    }
    let dim = items[0].feature.len();
    let hasher = SimHasher::new(config.bits, dim, seed);
    let codes = assign_codes(items, &hasher, shards)?;
    let groups = group_by_code(items, &codes);
    let profiles = cluster_and_profile(items, &groups, config, seed);
    let (kept, target) = dedup_sample(items, &groups, &profiles, config.target, seed);

    let mut sizes_before: Vec<usize> = groups.values().map(Vec::len).collect();
    sizes_before.sort_unstable_by(|a, b| b.cmp(a));
    let mut after: HashMap<&SimHashCode, usize> = HashMap::new();
    for &i in &kept {
        *after.entry(&codes[i]).or_default() += 1;
    }
    let mut sizes_after: Vec<usize> = after.into_values().collect();
    sizes_after.sort_unstable_by(|a, b| b.cmp(a));
    let report = DedupReport {
        bits: config.bits,
        seed,
        input_windows: items.len(),
        kept_windows: kept.len(),
        clusters: groups.len(),
        target,
        spike_clusters: profiles.values().filter(|p| p.spike_flag).count(),
        size_histogram_before: log2_histogram(&sizes_before),
        size_histogram_after: log2_histogram(&sizes_after),
        sizes_before,
        sizes_after,
    };
    Ok((kept, report))
}

fn empty_report(config: &DedupConfig, seed: u64) -> DedupReport {
    DedupReport {
        bits: config.bits,
        seed,
        input_windows: 0,
        kept_windows: 0,
        clusters: 0,
        target: config.target.unwrap_or(1),
        spike_clusters: 0,
        sizes_before: Vec::new(),
        sizes_after: Vec::new(),
        size_histogram_before: Vec::new(),
        size_histogram_after: Vec::new(),
    }
}
