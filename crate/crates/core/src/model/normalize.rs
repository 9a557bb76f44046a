use crate::series::{MultiResWindow, NormalizationStats};

/// A window in normalized space, ready for tokenization. Padded entries are 0.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedWindow {
    pub coarse: Vec<f64>,
    pub coarse_mask: Vec<u8>,
    pub fine: Vec<f64>,
    pub fine_mask: Vec<u8>,
    /// Horizon scaled with the fine statistics.
    pub horizon: Vec<f64>,
}

/// `sigma` floored at `1e-6 * max(|mu|, 1) + 1e-12`.
pub fn floor_sigma(mu: f64, sigma: f64) -> f64 {
    sigma.max(1e-6 * mu.abs().max(1.0) + 1e-12)
}

/// Mean and population standard deviation of the unpadded entries among the
/// first `patch_len` points; if all of those are padded, of the first
/// `patch_len` unpadded points. A fully padded context gives `(0, 1)`.
pub fn leading_stats(values: &[f64], mask: &[u8], patch_len: usize) -> (f64, f64) {
    let head: Vec<f64> = values
        .iter()
        .zip(mask)
        .take(patch_len)
        .filter(|(_, &m)| m == 0)
        .map(|(&v, _)| v)
        .collect();
    let sample: Vec<f64> = if head.is_empty() {
        values.iter().zip(mask).filter(|(_, &m)| m == 0).map(|(&v, _)| v).take(patch_len).collect()
    } else {
        head
    };
    if sample.is_empty() {
        return (0.0, 1.0);
    }
    let n = sample.len() as f64;
    let mu = sample.iter().sum::<f64>() / n;
    let var = sample.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
    (mu, floor_sigma(mu, var.sqrt()))
}

fn scale(values: &[f64], mask: &[u8], mu: f64, sigma: f64) -> Vec<f64> {
    values.iter().zip(mask).map(|(&v, &m)| if m == 0 { (v - mu) / sigma } else { 0.0 }).collect()
}

/// Standardizes each context with its own leading statistics; the horizon uses the fine ones.
pub fn normalize_context(window: &MultiResWindow, patch_len: usize) -> (NormalizedWindow, NormalizationStats) {
    let (mu_c, sigma_c) = leading_stats(&window.coarse, &window.coarse_mask, patch_len);
    let (mu_f, sigma_f) = leading_stats(&window.fine, &window.fine_mask, patch_len);
    let normalized = NormalizedWindow {
        coarse: scale(&window.coarse, &window.coarse_mask, mu_c, sigma_c),
        coarse_mask: window.coarse_mask.clone(),
        fine: scale(&window.fine, &window.fine_mask, mu_f, sigma_f),
        fine_mask: window.fine_mask.clone(),
        horizon: window.horizon.iter().map(|v| (v - mu_f) / sigma_f).collect(),
    };
    (normalized, NormalizationStats { mu_c, sigma_c, mu_f, sigma_f })
}

pub fn denormalize(values: &[f64], stats: &NormalizationStats) -> Vec<f64> {
    values.iter().map(|v| stats.mu_f + stats.sigma_f * v).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::WindowMeta;

    fn window(coarse: Vec<f64>, fine: Vec<f64>, horizon: Vec<f64>, coarse_pad: usize) -> MultiResWindow {
        let mut coarse_mask = vec![1u8; coarse_pad];
        coarse_mask.resize(coarse.len(), 0);
        MultiResWindow {
            meta: WindowMeta::default(),
            fine_mask: vec![0; fine.len()],
            coarse,
            coarse_mask,
            fine,
            horizon,
            ratio: 4,
        }
    }

    #[test]
    fn horizon_uses_fine_statistics() {
        // first 32 fine points alternate 8 and 12: mean 10, sd 2
        let mut fine: Vec<f64> = (0..32).map(|i| if i % 2 == 0 { 8.0 } else { 12.0 }).collect();
        fine.extend(vec![100.0; 32]);
        let (n, stats) = normalize_context(&window(vec![1.0; 64], fine, vec![14.0], 0), 32);
        assert_eq!((stats.mu_f, stats.sigma_f), (10.0, 2.0));
        assert_eq!(n.horizon, vec![2.0]);
    }

    #[test]
    fn constant_contexts_normalize_to_zero() {
        let (n, stats) = normalize_context(&window(vec![5.0; 16], vec![3.0; 16], vec![3.0; 4], 0), 8);
        assert!(n.fine.iter().chain(&n.coarse).all(|v| v.abs() < 1e-9));
        assert!(stats.sigma_f > 0.0 && stats.sigma_c > 0.0);
    }

    #[test]
    fn denormalize_inverts_normalize() {
        let fine: Vec<f64> = (0..16).map(|i| 3.0 + (i as f64).sin()).collect();
        let horizon: Vec<f64> = (0..4).map(|i| 2.0 + i as f64 * 0.1).collect();
        let (n, stats) = normalize_context(&window(vec![0.0; 16], fine, horizon.clone(), 0), 8);
        for (a, b) in denormalize(&n.horizon, &stats).iter().zip(&horizon) {
            assert!(((a - b) / b).abs() < 1e-9);
        }
    }

    #[test]
    fn padded_prefix_is_excluded_and_falls_back() {
        let coarse: Vec<f64> = (0..16).map(|i| i as f64).collect();
        // 4 of the first 8 padded: stats over indices 4..8
        let (_, s) = normalize_context(&window(coarse.clone(), vec![1.0; 16], vec![1.0], 4), 8);
        assert_eq!(s.mu_c, 5.5);
        // whole first patch padded: fall back to the first 8 unpadded points, 10..16 here only 6 exist
        let (n, s) = normalize_context(&window(coarse.clone(), vec![1.0; 16], vec![1.0], 10), 8);
        assert_eq!(s.mu_c, 12.5);
        assert!(n.coarse[..10].iter().all(|&v| v == 0.0));
        let (_, s) = normalize_context(&window(coarse, vec![1.0; 16], vec![1.0], 16), 8);
        assert_eq!((s.mu_c, s.sigma_c), (0.0, 1.0));
    }
}
