#![allow(dead_code)]

use std::f64::consts::TAU;

use mrcast::model::{window_loss, window_loss_and_grad, ModelConfig, ModelParams};
use mrcast::series::{build_multires_window, MultiResWindow, Series, WindowMeta};
use mrcast::synth::{child_seed, sawtooth};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn prefix_mask(len: usize, pad: usize) -> Vec<u8> {
    let mut m = vec![1u8; pad];
    m.resize(len, 0);
    m
}

/// Window with uniform values in [3, 5) and the given padding prefixes.
pub fn random_window(c: usize, h: usize, coarse_pad: usize, fine_pad: usize, ratio: usize, rng: &mut ChaCha8Rng) -> MultiResWindow {
    let vals = |pad: usize, rng: &mut ChaCha8Rng| (0..c).map(|i| if i < pad { 0.0 } else { 3.0 + rng.random::<f64>() * 2.0 }).collect::<Vec<f64>>();
    MultiResWindow {
        meta: WindowMeta::default(),
        coarse: vals(coarse_pad, rng),
        coarse_mask: prefix_mask(c, coarse_pad),
        fine: vals(fine_pad, rng),
        fine_mask: prefix_mask(c, fine_pad),
        horizon: (0..h).map(|_| 3.0 + rng.random::<f64>() * 2.0).collect(),
        ratio,
    }
}

pub fn tiny_config(c: usize, p: usize, l: usize, d: usize, heads: usize, ratio: usize) -> ModelConfig {
    ModelConfig { context_len: c, input_patch_len: p, output_patch_len: l, model_dim: d, num_layers: 2, num_heads: heads, resolution_ratio: ratio, ..Default::default() }
}

/// Largest relative error between analytic and central-difference gradients
/// over every parameter.
pub fn max_relative_error(config: &ModelConfig, params: &ModelParams, window: &MultiResWindow) -> f64 {
    let (_, grad) = window_loss_and_grad(params, config, window).unwrap();
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
    let grads = grad.tensors();
    for (ti, name) in names.iter().enumerate() {
        let g = grads[ti].1;
        for i in 0..g.len() {
            let mut up = params.clone();
            up.get_mut(name).unwrap().data[i] += h;
            let mut dn = params.clone();
            dn.get_mut(name).unwrap().data[i] -= h;
            let fd = (window_loss(&up, config, window).unwrap() - window_loss(&dn, config, window).unwrap()) / (2.0 * h);
            let an = g.data[i];
            let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
            if err > worst {
                worst = err;
                if err > 1e-4 {
                    eprintln!("{name}[{i}]: fd {fd:.6e} analytic {an:.6e}");
                }
            }
        }
    }
    worst
}

/// Sawtooth series (period 96..=192) with a period-8 wiggle whose block
/// means vanish at ratio 8, cut into windows with C=64, H=32, K=8.
/// With `pad_coarse` the coarse context is replaced by full padding.
pub fn sawtooth_windows(n_series: usize, seed: u64, pad_coarse: bool) -> Vec<MultiResWindow> {
    let mut out = Vec::new();
    for s in 0..n_series {
        let ss = child_seed(seed, s as u64);
        let mut rng = rng(ss);
        let period = rng.random_range(96..=192);
        let amp = rng.random_range(1.0..10.0);
        let phase = rng.random_range(0..period);
        let mut series = sawtooth(1200, period, amp, 0.05 * amp, phase, ss);
        let wiggle = amp * rng.random_range(0.3..0.7);
        for (t, v) in series.values.iter_mut().enumerate() {
            *v += wiggle * (TAU * t as f64 / 8.0).sin();
        }
        let mut end = 544 + rng.random_range(0..16);
        while end <= series.len() {
            let mut w = build_multires_window(&series, end, 64, 32, 8).unwrap();
            if pad_coarse {
                w.coarse.iter_mut().for_each(|v| *v = 0.0);
                w.coarse_mask.iter_mut().for_each(|m| *m = 1);
            }
            out.push(w);
            end += 48;
        }
    }
    out
}

/// 32 fixed windows (C=64, H=32, K=8): short-period sinusoids plus a slow
/// component, random level and amplitude.
pub fn overfit_windows() -> Vec<MultiResWindow> {
    (0..32u64)
        .map(|i| {
            let mut rng = rng(child_seed(11, i));
            let period = [4.0, 8.0][(i % 2) as usize];
            let amp = rng.random_range(0.5..5.0);
            let level = rng.random_range(-10.0..10.0);
            let phase = rng.random_range(0.0..6.3);
            let values: Vec<f64> = (0..640)
                .map(|t| {
                    let t = t as f64;
                    level + amp * (TAU * t / period + phase).sin() + 0.3 * amp * (TAU * t / 64.0).sin() + 0.05 * amp * rng.random_range(-1.0..1.0)
                })
                .collect();
            let s = Series::new(format!("s{i}"), 0, 60, values);
            build_multires_window(&s, 560 + i as usize, 64, 32, 8).unwrap()
        })
        .collect()
}

pub fn overfit_config() -> ModelConfig {
    tiny_config(64, 8, 32, 32, 4, 8)
}

pub fn mean_abs_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}
