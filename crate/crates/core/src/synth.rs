//! KernelSynth-style synthetic series: random compositions of a small kernel bank,
//! sampled as Gaussian-process paths over integer time indices.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::Series;

/// Periods (in steps) available to periodic leaves. Short periods suit
/// high-resolution operational data.
pub const PERIOD_SET: [f64; 4] = [12.0, 24.0, 60.0, 168.0];

/// Longest path `synthesize` will factor.
pub const MAX_LENGTH: usize = 4096;

const JITTER_START: f64 = 1e-8;
const JITTER_MAX: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    Linear,
    Periodic,
    Rbf,
    WhiteNoise,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafKernel {
    pub kind: KernelKind,
    /// Period in steps; only read by periodic leaves.
    pub period: f64,
    pub length_scale: f64,
    pub amplitude: f64,
}

impl LeafKernel {
    fn eval(&self, t: f64, s: f64, n: f64) -> f64 {
        let a2 = self.amplitude * self.amplitude;
        match self.kind {
            KernelKind::Linear => a2 * (0.1 + (t / n) * (s / n)),
            KernelKind::Periodic => {
                let sin = (std::f64::consts::PI * (t - s).abs() / self.period).sin();
                a2 * (-2.0 * sin * sin / (self.length_scale * self.length_scale)).exp()
            }
            KernelKind::Rbf => {
                let d = t - s;
                a2 * (-d * d / (2.0 * self.length_scale * self.length_scale)).exp()
            }
            KernelKind::WhiteNoise => {
                if t == s {
                    a2
                } else {
                    0.0
                }
            }
            KernelKind::Constant => a2,
        }
    }
}

/// A composite kernel: a binary tree of add/multiply nodes over leaf kernels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelSpec {
    Leaf(LeafKernel),
    Add(Box<KernelSpec>, Box<KernelSpec>),
    Mul(Box<KernelSpec>, Box<KernelSpec>),
}

impl KernelSpec {
    pub fn leaf(kind: KernelKind, period: f64, length_scale: f64, amplitude: f64) -> Self {
        KernelSpec::Leaf(LeafKernel { kind, period, length_scale, amplitude })
    }

    pub fn leaves(&self) -> Vec<&LeafKernel> {
        match self {
            KernelSpec::Leaf(l) => vec![l],
            KernelSpec::Add(a, b) | KernelSpec::Mul(a, b) => {
                let mut out = a.leaves();
                out.extend(b.leaves());
                out
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        for leaf in self.leaves() {
            if !(leaf.amplitude > 0.0) {
                return Err(Error::InvalidArgument("kernel amplitude must be positive".into()));
            }
            if leaf.kind == KernelKind::Periodic && leaf.period < 2.0 {
                return Err(Error::InvalidArgument("kernel period must be at least 2 steps".into()));
            }
            if matches!(leaf.kind, KernelKind::Periodic | KernelKind::Rbf) && !(leaf.length_scale > 0.0) {
                return Err(Error::InvalidArgument("kernel length scale must be positive".into()));
            }
        }
        Ok(())
    }

    fn sort_key(&self) -> String {
        serde_json::to_string(self).expect("kernel specs always serialize")
    }

    /// Same kernel with the operands of every commutative node in sorted order.
    pub fn canonical(&self) -> KernelSpec {
        match self {
            KernelSpec::Leaf(_) => self.clone(),
            KernelSpec::Add(a, b) | KernelSpec::Mul(a, b) => {
                let (mut a, mut b) = (a.canonical(), b.canonical());
                if b.sort_key() < a.sort_key() {
                    std::mem::swap(&mut a, &mut b);
                }
                match self {
                    KernelSpec::Add(..) => KernelSpec::Add(Box::new(a), Box::new(b)),
                    _ => KernelSpec::Mul(Box::new(a), Box::new(b)),
                }
            }
        }
    }

    pub fn eval(&self, t: f64, s: f64, n: f64) -> f64 {
        match self {
            KernelSpec::Leaf(l) => l.eval(t, s, n),
            KernelSpec::Add(a, b) => a.eval(t, s, n) + b.eval(t, s, n),
            KernelSpec::Mul(a, b) => a.eval(t, s, n) * b.eval(t, s, n),
        }
    }

    /// Dense covariance over `0..length`, evaluated on the canonical tree.
    pub fn covariance(&self, length: usize) -> DMatrix<f64> {
        let spec = self.canonical();
        let n = length as f64;
        DMatrix::from_fn(length, length, |i, j| spec.eval(i as f64, j as f64, n))
    }
}

fn sample_leaf(rng: &mut ChaCha8Rng) -> LeafKernel {
    let kinds = [
        KernelKind::Linear,
        KernelKind::Periodic,
        KernelKind::Rbf,
        KernelKind::WhiteNoise,
        KernelKind::Constant,
    ];
    let kind = kinds[rng.random_range(0..kinds.len())];
    let period = PERIOD_SET[rng.random_range(0..PERIOD_SET.len())];
    let length_scale = match kind {
        KernelKind::Rbf => [5.0, 20.0, 80.0][rng.random_range(0..3)],
        _ => rng.random_range(0.5..2.0),
    };
    let amplitude = match kind {
        KernelKind::WhiteNoise => rng.random_range(0.05..0.3),
        _ => rng.random_range(0.5..2.0),
    };
    LeafKernel { kind, period, length_scale, amplitude }
}

/// Samples between 1 and `max_kernels` leaves and folds them together with
/// randomly chosen add/multiply nodes.
pub fn sample_kernel_spec(seed: u64, max_kernels: usize) -> KernelSpec {
    assert!(max_kernels >= 1, "max_kernels must be at least 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.random_range(1..=max_kernels);
    let mut spec = KernelSpec::Leaf(sample_leaf(&mut rng));
    for _ in 1..count {
        let leaf = Box::new(KernelSpec::Leaf(sample_leaf(&mut rng)));
        spec = if rng.random_bool(0.5) {
            KernelSpec::Add(Box::new(spec), leaf)
        } else {
            KernelSpec::Mul(Box::new(spec), leaf)
        };
    }
    spec
}

/// Draws one zero-mean GP path with this kernel's covariance.
pub fn synthesize(spec: &KernelSpec, length: usize, seed: u64) -> Result<Series> {
    if length < 2 {
        return Err(Error::TooShort { needed: 2, got: length });
    }
    if length > MAX_LENGTH {
        return Err(Error::InvalidArgument(format!("synthetic length {length} exceeds {MAX_LENGTH}")));
    }
    spec.validate()?;
    let cov = spec.covariance(length);
    let scale = (cov.trace() / length as f64).max(1.0);
    let mut jitter = JITTER_START;
    let chol = loop {
        let mut m = cov.clone();
        for i in 0..length {
            m[(i, i)] += jitter * scale;
        }
        if let Some(c) = m.cholesky() {
            break c;
        }
        jitter *= 10.0;
        if jitter > JITTER_MAX * (1.0 + 1e-9) {
            return Err(Error::Factorization { jitter: jitter / 10.0 });
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z: Vec<f64> = (0..length).map(|_| rng.sample(StandardNormal)).collect();
    let l = chol.l();
    let values = (0..length)
        .map(|i| (0..=i).fold(0.0, |acc, j| acc + l[(i, j)] * z[j]))
        .collect();
    Ok(Series::new(format!("synth-{seed}"), 0, 60, values))
}

/// Ramp-and-reset series with additive Gaussian noise: `amplitude * ((t + phase) mod period) / period`.
pub fn sawtooth(length: usize, period: usize, amplitude: f64, noise_sd: f64, phase: usize, seed: u64) -> Series {
    assert!(period >= 2, "sawtooth period must be at least 2");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..length)
        .map(|t| {
            let ramp = ((t + phase) % period) as f64 / period as f64;
            let noise: f64 = rng.sample(StandardNormal);
            amplitude * ramp + noise_sd * noise
        })
        .collect();
    Series::new(format!("sawtooth-{seed}"), 0, 60, values)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub count: usize,
    pub length: usize,
    pub seed: u64,
    pub sawtooth_fraction: f64,
    pub max_kernels: usize,
}

/// Per-series seed derived from the run seed (splitmix64 finalizer).
pub fn child_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generates a corpus of KernelSynth and sawtooth series. Parallel across series,
/// deterministic in `config.seed`.
pub fn generate_corpus(config: &SynthConfig) -> Result<Vec<Series>> {
    if !(0.0..=1.0).contains(&config.sawtooth_fraction) {
        return Err(Error::InvalidArgument("sawtooth fraction must lie in [0, 1]".into()));
    }
    (0..config.count)
        .into_par_iter()
        .map(|i| {
            let seed = child_seed(config.seed, i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut series = if rng.random_bool(config.sawtooth_fraction) {
                let period = rng.random_range(24..=240);
                let phase = rng.random_range(0..period);
                let amplitude = rng.random_range(1.0..10.0);
                sawtooth(config.length, period, amplitude, 0.05 * amplitude, phase, seed)
            } else {
                let spec = sample_kernel_spec(seed, config.max_kernels.max(1));
                synthesize(&spec, config.length, seed)?
            };
            series.id = format!("synth-{i:06}");
            series.dataset = Some("synthetic".into());
            Ok(series)
        })
        .collect()
}
