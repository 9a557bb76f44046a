//! Tokenization, the causal transformer stack and the output head, with a
//! hand-written reverse pass.

use super::config::ModelConfig;
use super::normalize::NormalizedWindow;
use super::params::{ModelParams, ResidualBlock};
use super::tensor::{linear, linear_backward, rmsnorm, rmsnorm_backward, silu, silu_grad, Mat};
use crate::error::{Error, Result};

/// Which fusion mechanisms tokenization applies. Normally derived from the
/// configured variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mechanisms {
    pub resolution_embedding: bool,
    pub special_token: bool,
}

impl Mechanisms {
    pub fn of(config: &ModelConfig) -> Self {
        Self {
            resolution_embedding: config.variant.uses_resolution_embedding(),
            special_token: config.variant.uses_special_token(),
        }
    }
}

/// Embedded tokens: coarse patches, then the special token (if any), then fine patches.
#[derive(Debug, Clone)]
pub struct TokenSequence {
    pub tokens: Mat,
    /// 1 for a token whose whole patch is padding. The special token is never padded.
    pub padding_mask: Vec<u8>,
    /// 1 for coarse tokens, 0 for fine tokens and the special token.
    pub resolution: Vec<u8>,
    pub special_index: Option<usize>,
    mechanisms: Mechanisms,
    /// Masked patch values, one row per patch token.
    patches: Mat,
    patch_token: Vec<usize>,
    hidden_pre: Vec<f64>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.rows
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.rows == 0
    }
}

fn residual_block_forward(block: &ResidualBlock, x: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let pre = linear(x, n, &block.w_hidden, Some(&block.b_hidden));
    let act: Vec<f64> = pre.iter().map(|&z| silu(z)).collect();
    let mut out = linear(&act, n, &block.w_out, Some(&block.b_out));
    let res = linear(x, n, &block.w_residual, None);
    for (o, r) in out.iter_mut().zip(res) {
        *o += r;
    }
    (out, pre)
}

/// Accumulates block gradients; returns the gradient with respect to the input when asked.
fn residual_block_backward(
    block: &ResidualBlock,
    x: &[f64],
    n: usize,
    pre: &[f64],
    dy: &[f64],
    grad: &mut ResidualBlock,
    want_dx: bool,
) -> Option<Vec<f64>> {
    let act: Vec<f64> = pre.iter().map(|&z| silu(z)).collect();
    let mut d_act = vec![0.0; act.len()];
    linear_backward(&act, n, &block.w_out, dy, &mut grad.w_out, Some(&mut grad.b_out), Some(&mut d_act));
    let d_pre: Vec<f64> = d_act.iter().zip(pre).map(|(d, &z)| d * silu_grad(z)).collect();
    let mut dx = want_dx.then(|| vec![0.0; x.len()]);
    linear_backward(x, n, &block.w_residual, dy, &mut grad.w_residual, None, dx.as_deref_mut());
    linear_backward(x, n, &block.w_hidden, &d_pre, &mut grad.w_hidden, Some(&mut grad.b_hidden), dx.as_deref_mut());
    dx
}

pub fn tokenize(window: &NormalizedWindow, params: &ModelParams, config: &ModelConfig) -> Result<TokenSequence> {
    tokenize_with(window, params, config, Mechanisms::of(config))
}

/// Tokenizes with explicitly chosen mechanisms, independent of `config.variant`.
pub fn tokenize_with(window: &NormalizedWindow, params: &ModelParams, config: &ModelConfig, mechanisms: Mechanisms) -> Result<TokenSequence> {
    let c = config.context_len;
    let p = config.input_patch_len;
    let d = config.model_dim;
    for (name, len) in [
        ("coarse", window.coarse.len()),
        ("coarse mask", window.coarse_mask.len()),
        ("fine", window.fine.len()),
        ("fine mask", window.fine_mask.len()),
    ] {
        if len != c {
            return Err(Error::Shape(format!("{name} context has length {len}, model expects {c}")));
        }
    }
    let n_patches = c / p;
    let total = 2 * n_patches + usize::from(mechanisms.special_token);
    let mut patches = Mat::zeros(2 * n_patches, p);
    let mut patch_token = Vec::with_capacity(2 * n_patches);
    let mut padding_mask = vec![0u8; total];
    let mut resolution = vec![0u8; total];
    let special_index = mechanisms.special_token.then_some(n_patches);

    for (res_idx, (values, mask)) in [(&window.coarse, &window.coarse_mask), (&window.fine, &window.fine_mask)].into_iter().enumerate() {
        for k in 0..n_patches {
            let row = res_idx * n_patches + k;
            let token = if res_idx == 0 { k } else { k + n_patches + usize::from(mechanisms.special_token) };
            let span = k * p..(k + 1) * p;
            for (dst, (&v, &m)) in patches.row_mut(row).iter_mut().zip(values[span.clone()].iter().zip(&mask[span.clone()])) {
                *dst = if m == 0 { v } else { 0.0 };
            }
            padding_mask[token] = u8::from(mask[span].iter().all(|&m| m != 0));
            resolution[token] = u8::from(res_idx == 0);
            patch_token.push(token);
        }
    }

    let (embedded, hidden_pre) = residual_block_forward(&params.input_block, &patches.data, patches.rows);
    let mut tokens = Mat::zeros(total, d);
    for (row, &token) in patch_token.iter().enumerate() {
        tokens.row_mut(token).copy_from_slice(&embedded[row * d..(row + 1) * d]);
    }
    if let Some(s) = special_index {
        tokens.row_mut(s).copy_from_slice(&params.special_token.data);
    }
    if mechanisms.resolution_embedding {
        for t in 0..total {
            let emb = params.resolution_embedding.row(resolution[t] as usize);
            for (v, e) in tokens.row_mut(t).iter_mut().zip(emb) {
                *v += e;
            }
        }
    }
    Ok(TokenSequence { tokens, padding_mask, resolution, special_index, mechanisms, patches, patch_token, hidden_pre })
}

/// Which token positions the output head is evaluated at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadRows {
    All,
    Last,
}

/// Head outputs in normalized space, one row per evaluated position. Each row
/// is a mean block followed by one block per quantile, each `output_patch_len` long.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub positions: Vec<usize>,
    pub values: Mat,
    pub output_patch_len: usize,
}

impl Predictions {
    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }

    pub fn mean(&self, i: usize) -> &[f64] {
        &self.values.row(i)[..self.output_patch_len]
    }

    pub fn quantile(&self, i: usize, k: usize) -> &[f64] {
        let l = self.output_patch_len;
        &self.values.row(i)[(k + 1) * l..(k + 2) * l]
    }

    pub fn last_row(&self) -> usize {
        self.positions.len() - 1
    }
}

struct LayerCache {
    x_in: Vec<f64>,
    n1: Vec<f64>,
    inv1: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// heads x T x T attention weights.
    probs: Vec<f64>,
    ctx: Vec<f64>,
    x_mid: Vec<f64>,
    n2: Vec<f64>,
    inv2: Vec<f64>,
    up_pre: Vec<f64>,
    up_act: Vec<f64>,
}

/// Activations retained for the reverse pass.
pub struct ForwardCache {
    layers: Vec<LayerCache>,
    rows: Vec<usize>,
    final_in: Vec<f64>,
    final_inv: Vec<f64>,
    head_in: Vec<f64>,
    head_pre: Vec<f64>,
}

fn attention(q: &[f64], k: &[f64], v: &[f64], pad: &[u8], config: &ModelConfig) -> (Vec<f64>, Vec<f64>) {
    let t = pad.len();
    let d = config.model_dim;
    let dh = config.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let mut probs = vec![0.0; config.num_heads * t * t];
    let mut ctx = vec![0.0; t * d];
    for h in 0..config.num_heads {
        let off = h * dh;
        for i in 0..t {
            if pad[i] != 0 {
                continue;
            }
            let qi = &q[i * d + off..i * d + off + dh];
            let p = &mut probs[(h * t + i) * t..(h * t + i + 1) * t];
            let mut max = f64::NEG_INFINITY;
            for j in 0..=i {
                if pad[j] == 0 {
                    let s: f64 = qi.iter().zip(&k[j * d + off..j * d + off + dh]).map(|(a, b)| a * b).sum::<f64>() * scale;
                    p[j] = s;
                    max = max.max(s);
                }
            }
            let mut sum = 0.0;
            for j in 0..=i {
                if pad[j] == 0 {
                    p[j] = (p[j] - max).exp();
                    sum += p[j];
                }
            }
            let out = &mut ctx[i * d + off..i * d + off + dh];
            for j in 0..=i {
                if pad[j] == 0 {
                    p[j] /= sum;
                    for (o, &vv) in out.iter_mut().zip(&v[j * d + off..j * d + off + dh]) {
                        *o += p[j] * vv;
                    }
                }
            }
        }
    }
    (ctx, probs)
}

fn attention_backward(
    cache: &LayerCache,
    d_ctx: &[f64],
    pad: &[u8],
    config: &ModelConfig,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let t = pad.len();
    let d = config.model_dim;
    let dh = config.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let (mut dq, mut dk, mut dv) = (vec![0.0; t * d], vec![0.0; t * d], vec![0.0; t * d]);
    let mut dp = vec![0.0; t];
    for h in 0..config.num_heads {
        let off = h * dh;
        for i in 0..t {
            if pad[i] != 0 {
                continue;
            }
            let p = &cache.probs[(h * t + i) * t..(h * t + i + 1) * t];
            let dci = &d_ctx[i * d + off..i * d + off + dh];
            let mut weighted = 0.0;
            for j in 0..=i {
                if pad[j] == 0 {
                    dp[j] = dci.iter().zip(&cache.v[j * d + off..j * d + off + dh]).map(|(a, b)| a * b).sum();
                    weighted += p[j] * dp[j];
                    for (g, &dc) in dv[j * d + off..j * d + off + dh].iter_mut().zip(dci) {
                        *g += p[j] * dc;
                    }
                }
            }
            for j in 0..=i {
                if pad[j] == 0 {
                    let ds = p[j] * (dp[j] - weighted) * scale;
                    for c in 0..dh {
                        dq[i * d + off + c] += ds * cache.k[j * d + off + c];
                        dk[j * d + off + c] += ds * cache.q[i * d + off + c];
                    }
                }
            }
        }
    }
    (dq, dk, dv)
}

fn check_finite(x: &[f64], layer: usize) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteActivation { layer })
    }
}

/// Runs the transformer stack and output head, keeping activations for [`backward`].
pub fn forward_cached(tokens: &TokenSequence, params: &ModelParams, config: &ModelConfig, heads: HeadRows) -> Result<(Predictions, ForwardCache)> {
    let t = tokens.len();
    if t == 0 {
        return Err(Error::Shape("token sequence is empty".into()));
    }
    let d = config.model_dim;
    let pad = &tokens.padding_mask;
    let mut x = tokens.tokens.data.clone();
    check_finite(&x, 0)?;
    let mut caches = Vec::with_capacity(params.layers.len());
    for (li, layer) in params.layers.iter().enumerate() {
        let (n1, inv1) = rmsnorm(&x, t, &layer.attn_norm, config.norm_eps);
        let q = linear(&n1, t, &layer.w_q, None);
        let k = linear(&n1, t, &layer.w_k, None);
        let v = linear(&n1, t, &layer.w_v, None);
        let (ctx, probs) = attention(&q, &k, &v, pad, config);
        let attn = linear(&ctx, t, &layer.w_o, None);
        let x_mid: Vec<f64> = x.iter().zip(&attn).map(|(a, b)| a + b).collect();
        let (n2, inv2) = rmsnorm(&x_mid, t, &layer.mlp_norm, config.norm_eps);
        let up_pre = linear(&n2, t, &layer.w_up, Some(&layer.b_up));
        let up_act: Vec<f64> = up_pre.iter().map(|&z| silu(z)).collect();
        let down = linear(&up_act, t, &layer.w_down, Some(&layer.b_down));
        let x_out: Vec<f64> = x_mid.iter().zip(&down).map(|(a, b)| a + b).collect();
        check_finite(&x_out, li + 1)?;
        caches.push(LayerCache { x_in: x, n1, inv1, q, k, v, probs, ctx, x_mid, n2, inv2, up_pre, up_act });
        x = x_out;
    }
    let rows: Vec<usize> = match heads {
        HeadRows::All => (0..t).collect(),
        HeadRows::Last => vec![t - 1],
    };
    let final_in: Vec<f64> = rows.iter().flat_map(|&r| x[r * d..(r + 1) * d].iter().copied()).collect();
    let (head_in, final_inv) = rmsnorm(&final_in, rows.len(), &params.final_norm, config.norm_eps);
    let (out, head_pre) = residual_block_forward(&params.output_block, &head_in, rows.len());
    check_finite(&out, params.layers.len() + 1)?;
    let preds = Predictions {
        values: Mat::from_vec(rows.len(), config.output_dim(), out),
        positions: rows.clone(),
        output_patch_len: config.output_patch_len,
    };
    Ok((preds, ForwardCache { layers: caches, rows, final_in, final_inv, head_in, head_pre }))
}

/// Normalized predictions at every token position.
pub fn forward(tokens: &TokenSequence, params: &ModelParams, config: &ModelConfig) -> Result<Predictions> {
    forward_cached(tokens, params, config, HeadRows::All).map(|(p, _)| p)
}

/// Reverse pass. `d_out` holds the loss gradient for each evaluated head row.
pub fn backward(tokens: &TokenSequence, cache: &ForwardCache, params: &ModelParams, config: &ModelConfig, d_out: &Mat) -> ModelParams {
    let t = tokens.len();
    let d = config.model_dim;
    let pad = &tokens.padding_mask;
    let mut grad = params.zeros_like();
    let n_rows = cache.rows.len();

    let d_head_in = residual_block_backward(&params.output_block, &cache.head_in, n_rows, &cache.head_pre, &d_out.data, &mut grad.output_block, true)
        .expect("input gradient requested");
    let d_final = rmsnorm_backward(&cache.final_in, n_rows, &params.final_norm, &cache.final_inv, &d_head_in, &mut grad.final_norm);
    let mut dx = vec![0.0; t * d];
    for (i, &r) in cache.rows.iter().enumerate() {
        dx[r * d..(r + 1) * d].copy_from_slice(&d_final[i * d..(i + 1) * d]);
    }

    for (li, layer) in params.layers.iter().enumerate().rev() {
        let c = &cache.layers[li];
        let g = &mut grad.layers[li];
        let mut d_act = vec![0.0; c.up_act.len()];
        linear_backward(&c.up_act, t, &layer.w_down, &dx, &mut g.w_down, Some(&mut g.b_down), Some(&mut d_act));
        let d_up: Vec<f64> = d_act.iter().zip(&c.up_pre).map(|(a, &z)| a * silu_grad(z)).collect();
        let mut d_n2 = vec![0.0; t * d];
        linear_backward(&c.n2, t, &layer.w_up, &d_up, &mut g.w_up, Some(&mut g.b_up), Some(&mut d_n2));
        let d_mid_norm = rmsnorm_backward(&c.x_mid, t, &layer.mlp_norm, &c.inv2, &d_n2, &mut g.mlp_norm);
        let d_mid: Vec<f64> = dx.iter().zip(&d_mid_norm).map(|(a, b)| a + b).collect();

        let mut d_ctx = vec![0.0; t * d];
        linear_backward(&c.ctx, t, &layer.w_o, &d_mid, &mut g.w_o, None, Some(&mut d_ctx));
        let (dq, dk, dv) = attention_backward(c, &d_ctx, pad, config);
        let mut d_n1 = vec![0.0; t * d];
        linear_backward(&c.n1, t, &layer.w_q, &dq, &mut g.w_q, None, Some(&mut d_n1));
        linear_backward(&c.n1, t, &layer.w_k, &dk, &mut g.w_k, None, Some(&mut d_n1));
        linear_backward(&c.n1, t, &layer.w_v, &dv, &mut g.w_v, None, Some(&mut d_n1));
        let d_in_norm = rmsnorm_backward(&c.x_in, t, &layer.attn_norm, &c.inv1, &d_n1, &mut g.attn_norm);
        dx = d_mid.iter().zip(&d_in_norm).map(|(a, b)| a + b).collect();
    }

    if tokens.mechanisms.resolution_embedding {
        for tk in 0..t {
            let row = tokens.resolution[tk] as usize;
            for (g, &v) in grad.resolution_embedding.row_mut(row).iter_mut().zip(&dx[tk * d..(tk + 1) * d]) {
                *g += v;
            }
        }
    }
    if let Some(s) = tokens.special_index {
        for (g, &v) in grad.special_token.data.iter_mut().zip(&dx[s * d..(s + 1) * d]) {
            *g += v;
        }
    }
    let d_embedded: Vec<f64> = tokens.patch_token.iter().flat_map(|&tk| dx[tk * d..(tk + 1) * d].iter().copied()).collect();
    residual_block_backward(
        &params.input_block,
        &tokens.patches.data,
        tokens.patches.rows,
        &tokens.hidden_pre,
        &d_embedded,
        &mut grad.input_block,
        false,
    );
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::Variant;

    fn cfg(variant: Variant) -> ModelConfig {
        ModelConfig {
            context_len: 16,
            input_patch_len: 4,
            output_patch_len: 4,
            model_dim: 8,
            num_layers: 2,
            num_heads: 2,
            variant,
            ..Default::default()
        }
    }

    fn window(c: usize, coarse_pad: usize) -> NormalizedWindow {
        let mut coarse_mask = vec![1u8; coarse_pad];
        coarse_mask.resize(c, 0);
        NormalizedWindow {
            coarse: (0..c).map(|i| if i < coarse_pad { 0.0 } else { (i as f64 * 0.7).sin() }).collect(),
            coarse_mask,
            fine: (0..c).map(|i| (i as f64 * 0.3).cos()).collect(),
            fine_mask: vec![0; c],
            horizon: vec![0.0; 4],
        }
    }

    #[test]
    fn zero_parameters_give_zero_tokens() {
        let c = cfg(Variant::ReSt);
        let params = ModelParams::zeros(&c);
        let tokens = tokenize(&window(16, 0), &params, &c).unwrap();
        assert!(tokens.tokens.data.iter().all(|&v| v == 0.0));

        let mut with_re = params.clone();
        with_re.resolution_embedding.row_mut(1).iter_mut().for_each(|v| *v = 2.0);
        let tokens = tokenize(&window(16, 0), &with_re, &c).unwrap();
        for t in 0..tokens.len() {
            let expect = if tokens.resolution[t] == 1 { 2.0 } else { 0.0 };
            assert!(tokens.tokens.row(t).iter().all(|&v| v == expect));
        }
    }

    #[test]
    fn special_token_sits_between_streams() {
        let c = ModelConfig { context_len: 512, input_patch_len: 32, model_dim: 8, num_heads: 2, ..Default::default() };
        let params = ModelParams::init(&c, 0);
        let w = NormalizedWindow {
            coarse: vec![0.1; 512],
            coarse_mask: vec![0; 512],
            fine: vec![0.2; 512],
            fine_mask: vec![0; 512],
            horizon: vec![],
        };
        let tokens = tokenize(&w, &params, &c).unwrap();
        assert_eq!(tokens.len(), 33);
        assert_eq!(tokens.special_index, Some(16));
        assert_eq!(tokens.padding_mask[16], 0);
        assert_eq!(tokens.tokens.row(16), params.special_token.data.iter().zip(params.resolution_embedding.row(0)).map(|(a, b)| a + b).collect::<Vec<_>>().as_slice());
        assert!(tokens.resolution[..16].iter().all(|&r| r == 1));
        assert!(tokens.resolution[16..].iter().all(|&r| r == 0));
    }

    #[test]
    fn fully_padded_patch_is_present_but_masked() {
        let c = cfg(Variant::ReSt);
        let tokens = tokenize(&window(16, 6), &ModelParams::init(&c, 1), &c).unwrap();
        assert_eq!(tokens.len(), 9);
        assert_eq!(&tokens.padding_mask[..4], &[1, 0, 0, 0]);
    }

    #[test]
    fn wrong_context_length_is_a_shape_error() {
        let c = cfg(Variant::Concat);
        assert!(matches!(tokenize(&window(12, 0), &ModelParams::init(&c, 1), &c), Err(Error::Shape(_))));
    }

    #[test]
    fn outputs_are_causal() {
        let c = cfg(Variant::ReSt);
        let params = ModelParams::init(&c, 3);
        let base = window(16, 0);
        let out0 = forward(&tokenize(&base, &params, &c).unwrap(), &params, &c).unwrap();
        for j in 0..4 {
            let mut w = base.clone();
            for v in &mut w.fine[j * 4..(j + 1) * 4] {
                *v += 0.5;
            }
            let out = forward(&tokenize(&w, &params, &c).unwrap(), &params, &c).unwrap();
            let token = 5 + j;
            for pos in 0..out.positions.len() {
                let changed = out.row(pos).iter().zip(out0.row(pos)).any(|(a, b)| a != b);
                assert_eq!(changed, pos >= token, "patch {j} position {pos}");
            }
        }
    }

    #[test]
    fn padded_values_do_not_matter() {
        let c = cfg(Variant::ReSt);
        let params = ModelParams::init(&c, 4);
        let base = window(16, 6);
        let out0 = forward(&tokenize(&base, &params, &c).unwrap(), &params, &c).unwrap();
        let mut w = base;
        for v in &mut w.coarse[..6] {
            *v = 1e3;
        }
        let out = forward(&tokenize(&w, &params, &c).unwrap(), &params, &c).unwrap();
        for pos in 0..out.positions.len() {
            for (a, b) in out.row(pos).iter().zip(out0.row(pos)) {
                assert!((a - b).abs() <= 1e-9);
            }
        }
    }
}
