use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which context-fusion mechanisms are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Coarse and fine tokens concatenated with no marker.
    #[serde(rename = "CONCAT")]
    Concat,
    /// Resolution embeddings only.
    #[serde(rename = "RE")]
    Re,
    /// Special token only.
    #[serde(rename = "ST")]
    St,
    /// Resolution embeddings and special token.
    #[serde(rename = "RE+ST")]
    ReSt,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Concat, Variant::Re, Variant::St, Variant::ReSt];

    pub fn uses_resolution_embedding(self) -> bool {
        matches!(self, Variant::Re | Variant::ReSt)
    }

    pub fn uses_special_token(self) -> bool {
        matches!(self, Variant::St | Variant::ReSt)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Concat => "CONCAT",
            Variant::Re => "RE",
            Variant::St => "ST",
            Variant::ReSt => "RE+ST",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| v.name().eq_ignore_ascii_case(s))
    }
}

pub fn default_quantiles() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Points per resolution in the context.
    pub context_len: usize,
    pub input_patch_len: usize,
    pub output_patch_len: usize,
    pub model_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    /// MLP hidden width as a multiple of `model_dim`.
    pub mlp_ratio: usize,
    pub quantiles: Vec<f64>,
    pub variant: Variant,
    pub resolution_ratio: usize,
    /// Squared-error contributions are capped at this value in normalized space.
    pub loss_clip: f64,
    pub norm_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            context_len: 512,
            input_patch_len: 32,
            output_patch_len: 128,
            model_dim: 64,
            num_layers: 2,
            num_heads: 4,
            mlp_ratio: 4,
            quantiles: default_quantiles(),
            variant: Variant::ReSt,
            resolution_ratio: 60,
            loss_clip: 25.0,
            norm_eps: 1e-6,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("model config: {m}")));
        if self.model_dim == 0 || self.num_heads == 0 || self.model_dim % self.num_heads != 0 {
            return bad("model_dim must be a positive multiple of num_heads");
        }
        if self.input_patch_len == 0 || self.context_len == 0 || self.context_len % self.input_patch_len != 0 {
            return bad("input_patch_len must divide context_len");
        }
        if self.output_patch_len == 0 || self.resolution_ratio == 0 || self.mlp_ratio == 0 {
            return bad("output_patch_len, resolution_ratio and mlp_ratio must be positive");
        }
        if self.quantiles.iter().any(|q| !(*q > 0.0 && *q < 1.0)) {
            return bad("quantiles must lie strictly between 0 and 1");
        }
        Ok(())
    }

    pub fn patches_per_context(&self) -> usize {
        self.context_len / self.input_patch_len
    }

    pub fn num_tokens(&self) -> usize {
        2 * self.patches_per_context() + usize::from(self.variant.uses_special_token())
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.num_heads
    }

    pub fn mlp_dim(&self) -> usize {
        self.model_dim * self.mlp_ratio
    }

    /// Output width per token: a mean block followed by one block per quantile.
    pub fn output_dim(&self) -> usize {
        self.output_patch_len * (1 + self.quantiles.len())
    }
}
