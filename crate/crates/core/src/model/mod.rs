//! The multiresolution forecaster.

pub mod config;
pub mod loss;
pub mod network;
pub mod normalize;
pub mod params;
pub mod tensor;

pub use config::{default_quantiles, ModelConfig, Variant};
pub use loss::{composite_loss, pinball};
pub use network::{backward, forward, forward_cached, tokenize, tokenize_with, HeadRows, Mechanisms, Predictions, TokenSequence};
pub use normalize::{denormalize, normalize_context, NormalizedWindow};
pub use params::{LayerParams, ModelParams, ResidualBlock};
pub use tensor::Mat;

use crate::error::{Error, Result};
use crate::series::MultiResWindow;

fn training_target<'a>(window: &'a NormalizedWindow, config: &ModelConfig) -> Result<&'a [f64]> {
    let l = config.output_patch_len;
    if window.horizon.len() < l {
        return Err(Error::Shape(format!("horizon has {} points, training needs {l}", window.horizon.len())));
    }
    let target = &window.horizon[..l];
    if target.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("training target contains non-finite values".into()));
    }
    Ok(target)
}

/// Loss of one window: the head at the last fine position predicts the first
/// `output_patch_len` horizon points in normalized space.
pub fn window_loss(params: &ModelParams, config: &ModelConfig, window: &MultiResWindow) -> Result<f64> {
    let (norm, _) = normalize_context(window, config.input_patch_len);
    let target = training_target(&norm, config)?;
    let tokens = tokenize(&norm, params, config)?;
    let (pred, _) = forward_cached(&tokens, params, config, HeadRows::Last)?;
    Ok(composite_loss(pred.row(0), target, &config.quantiles, config.loss_clip).0)
}

/// [`window_loss`] together with its gradient for every parameter.
pub fn window_loss_and_grad(params: &ModelParams, config: &ModelConfig, window: &MultiResWindow) -> Result<(f64, ModelParams)> {
    let (norm, _) = normalize_context(window, config.input_patch_len);
    let target = training_target(&norm, config)?;
    let tokens = tokenize(&norm, params, config)?;
    let (pred, cache) = forward_cached(&tokens, params, config, HeadRows::Last)?;
    let (loss, g) = composite_loss(pred.row(0), target, &config.quantiles, config.loss_clip);
    let grad = backward(&tokens, &cache, params, config, &Mat::from_vec(1, g.len(), g));
    Ok((loss, grad))
}
