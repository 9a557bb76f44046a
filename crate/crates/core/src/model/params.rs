use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::ModelConfig;
use super::tensor::Mat;
use crate::error::{Error, Result};

/// `W_o silu(W_h u + b_h) + b_o + W_r u`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlock {
    pub w_hidden: Mat,
    pub b_hidden: Mat,
    pub w_out: Mat,
    pub b_out: Mat,
    pub w_residual: Mat,
}

impl ResidualBlock {
    fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Self {
            w_hidden: Mat::zeros(input, hidden),
            b_hidden: Mat::zeros(1, hidden),
            w_out: Mat::zeros(hidden, output),
            b_out: Mat::zeros(1, output),
            w_residual: Mat::zeros(input, output),
        }
    }
}

/// Pre-norm decoder layer: causal multi-head attention then a SiLU MLP.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub attn_norm: Mat,
    pub w_q: Mat,
    pub w_k: Mat,
    pub w_v: Mat,
    pub w_o: Mat,
    pub mlp_norm: Mat,
    pub w_up: Mat,
    pub b_up: Mat,
    pub w_down: Mat,
    pub b_down: Mat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub input_block: ResidualBlock,
    pub special_token: Mat,
    /// Row 0 labels fine tokens and the special token, row 1 coarse tokens.
    pub resolution_embedding: Mat,
    pub layers: Vec<LayerParams>,
    pub final_norm: Mat,
    pub output_block: ResidualBlock,
}

fn fill_normal(m: &mut Mat, std: f64, rng: &mut ChaCha8Rng) {
    for v in &mut m.data {
        *v = std * rng.sample::<f64, _>(StandardNormal);
    }
}

fn fill(m: &mut Mat, value: f64) {
    m.data.iter_mut().for_each(|v| *v = value);
}

impl ModelParams {
    /// All-zero parameters with the shapes `config` implies (norm gains included).
    pub fn zeros(config: &ModelConfig) -> Self {
        let d = config.model_dim;
        let p = config.input_patch_len;
        let layer = LayerParams {
            attn_norm: Mat::zeros(1, d),
            w_q: Mat::zeros(d, d),
            w_k: Mat::zeros(d, d),
            w_v: Mat::zeros(d, d),
            w_o: Mat::zeros(d, d),
            mlp_norm: Mat::zeros(1, d),
            w_up: Mat::zeros(d, config.mlp_dim()),
            b_up: Mat::zeros(1, config.mlp_dim()),
            w_down: Mat::zeros(config.mlp_dim(), d),
            b_down: Mat::zeros(1, d),
        };
        Self {
            input_block: ResidualBlock::zeros(p, d, d),
            special_token: Mat::zeros(1, d),
            resolution_embedding: Mat::zeros(2, d),
            layers: vec![layer; config.num_layers],
            final_norm: Mat::zeros(1, d),
            output_block: ResidualBlock::zeros(d, d, config.output_dim()),
        }
    }

    /// Scaled-normal initialization, deterministic in `seed`.
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let mut params = Self::zeros(config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.model_dim as f64;
        let depth = (2.0 * config.num_layers.max(1) as f64).sqrt();
        let p = config.input_patch_len as f64;
        let ib = &mut params.input_block;
        fill_normal(&mut ib.w_hidden, 1.0 / p.sqrt(), &mut rng);
        fill_normal(&mut ib.w_out, 1.0 / d.sqrt(), &mut rng);
        fill_normal(&mut ib.w_residual, 1.0 / p.sqrt(), &mut rng);
        fill_normal(&mut params.special_token, 0.5, &mut rng);
        fill_normal(&mut params.resolution_embedding, 0.5, &mut rng);
        let mlp = config.mlp_dim() as f64;
        for layer in &mut params.layers {
            fill(&mut layer.attn_norm, 1.0);
            fill(&mut layer.mlp_norm, 1.0);
            fill_normal(&mut layer.w_q, 1.0 / d.sqrt(), &mut rng);
            fill_normal(&mut layer.w_k, 1.0 / d.sqrt(), &mut rng);
            fill_normal(&mut layer.w_v, 1.0 / d.sqrt(), &mut rng);
            fill_normal(&mut layer.w_o, 1.0 / (d.sqrt() * depth), &mut rng);
            fill_normal(&mut layer.w_up, 1.0 / d.sqrt(), &mut rng);
            fill_normal(&mut layer.w_down, 1.0 / (mlp.sqrt() * depth), &mut rng);
        }
        fill(&mut params.final_norm, 1.0);
        let ob = &mut params.output_block;
        fill_normal(&mut ob.w_hidden, 1.0 / d.sqrt(), &mut rng);
        fill_normal(&mut ob.w_out, 0.1 / d.sqrt(), &mut rng);
        fill_normal(&mut ob.w_residual, 0.1 / d.sqrt(), &mut rng);
        params
    }

    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        out.for_each_mut(|_, m| m.data.iter_mut().for_each(|v| *v = 0.0));
        out
    }

    /// Named tensors in a fixed canonical order.
    pub fn tensors(&self) -> Vec<(String, &Mat)> {
        fn block<'a>(prefix: &str, b: &'a ResidualBlock, out: &mut Vec<(String, &'a Mat)>) {
            out.push((format!("{prefix}.w_hidden"), &b.w_hidden));
            out.push((format!("{prefix}.b_hidden"), &b.b_hidden));
            out.push((format!("{prefix}.w_out"), &b.w_out));
            out.push((format!("{prefix}.b_out"), &b.b_out));
            out.push((format!("{prefix}.w_residual"), &b.w_residual));
        }
        let mut out = Vec::new();
        block("input_block", &self.input_block, &mut out);
        out.push(("special_token".into(), &self.special_token));
        out.push(("resolution_embedding".into(), &self.resolution_embedding));
        for (i, l) in self.layers.iter().enumerate() {
            for (name, m) in [
                ("attn_norm", &l.attn_norm),
                ("w_q", &l.w_q),
                ("w_k", &l.w_k),
                ("w_v", &l.w_v),
                ("w_o", &l.w_o),
                ("mlp_norm", &l.mlp_norm),
                ("w_up", &l.w_up),
                ("b_up", &l.b_up),
                ("w_down", &l.w_down),
                ("b_down", &l.b_down),
            ] {
                out.push((format!("layers.{i}.{name}"), m));
            }
        }
        out.push(("final_norm".into(), &self.final_norm));
        block("output_block", &self.output_block, &mut out);
        out
    }

    /// Mutable counterpart of [`ModelParams::tensors`], same order.
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Mat)> {
        fn block<'a>(prefix: &str, b: &'a mut ResidualBlock, out: &mut Vec<(String, &'a mut Mat)>) {
            out.push((format!("{prefix}.w_hidden"), &mut b.w_hidden));
            out.push((format!("{prefix}.b_hidden"), &mut b.b_hidden));
            out.push((format!("{prefix}.w_out"), &mut b.w_out));
            out.push((format!("{prefix}.b_out"), &mut b.b_out));
            out.push((format!("{prefix}.w_residual"), &mut b.w_residual));
        }
        let mut out = Vec::new();
        block("input_block", &mut self.input_block, &mut out);
        out.push(("special_token".into(), &mut self.special_token));
        out.push(("resolution_embedding".into(), &mut self.resolution_embedding));
        for (i, l) in self.layers.iter_mut().enumerate() {
            for (name, m) in [
                ("attn_norm", &mut l.attn_norm),
                ("w_q", &mut l.w_q),
                ("w_k", &mut l.w_k),
                ("w_v", &mut l.w_v),
                ("w_o", &mut l.w_o),
                ("mlp_norm", &mut l.mlp_norm),
                ("w_up", &mut l.w_up),
                ("b_up", &mut l.b_up),
                ("w_down", &mut l.w_down),
                ("b_down", &mut l.b_down),
            ] {
                out.push((format!("layers.{i}.{name}"), m));
            }
        }
        out.push(("final_norm".into(), &mut self.final_norm));
        block("output_block", &mut self.output_block, &mut out);
        out
    }

    pub fn for_each_mut(&mut self, mut f: impl FnMut(&str, &mut Mat)) {
        for (name, m) in self.tensors_mut() {
            f(&name, m);
        }
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Mat> {
        self.tensors_mut().into_iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.len()).sum()
    }

    pub fn add_assign(&mut self, other: &ModelParams) {
        for ((_, m), (_, o)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (a, b) in m.data.iter_mut().zip(&o.data) {
                *a += b;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.for_each_mut(|_, m| m.data.iter_mut().for_each(|v| *v *= factor));
    }

    pub fn norm(&self) -> f64 {
        self.tensors().iter().flat_map(|(_, m)| m.data.iter()).map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, m)| m.data.iter().all(|v| v.is_finite()))
    }

    /// Rebuilds parameters for `config` from named tensors, checking every shape.
    pub fn from_named(config: &ModelConfig, named: &[(String, Mat)]) -> Result<Self> {
        let mut params = Self::zeros(config);
        let mut missing = Vec::new();
        let mut shape_err = None;
        params.for_each_mut(|name, m| match named.iter().find(|(n, _)| n == name) {
            Some((_, src)) if src.shape() == m.shape() => m.data.copy_from_slice(&src.data),
            Some((_, src)) => shape_err = Some(format!("{name}: expected {:?}, found {:?}", m.shape(), src.shape())),
            None => missing.push(name.to_string()),
        });
        if let Some(e) = shape_err {
            return Err(Error::Shape(e));
        }
        if !missing.is_empty() {
            return Err(Error::Format(format!("checkpoint is missing tensors: {}", missing.join(", "))));
        }
        Ok(params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_order_matches_mutable_visit() {
        let cfg = ModelConfig { context_len: 16, input_patch_len: 4, output_patch_len: 4, model_dim: 8, num_heads: 2, ..Default::default() };
        let mut p = ModelParams::init(&cfg, 1);
        let names: Vec<String> = p.tensors().into_iter().map(|(n, _)| n).collect();
        let mut visited = Vec::new();
        p.for_each_mut(|n, _| visited.push(n.to_string()));
        assert_eq!(names, visited);
        assert!(p.get_mut("layers.1.w_up").is_some());
        assert!(p.get_mut("nope").is_none());
    }

    #[test]
    fn init_is_deterministic_and_named_round_trip_is_exact() {
        let cfg = ModelConfig { context_len: 16, input_patch_len: 4, output_patch_len: 4, model_dim: 8, num_heads: 2, ..Default::default() };
        let p = ModelParams::init(&cfg, 7);
        assert_eq!(p, ModelParams::init(&cfg, 7));
        let named: Vec<(String, Mat)> = p.tensors().into_iter().map(|(n, m)| (n, m.clone())).collect();
        assert_eq!(ModelParams::from_named(&cfg, &named).unwrap(), p);
        assert!(ModelParams::from_named(&cfg, &named[1..]).is_err());
    }
}
