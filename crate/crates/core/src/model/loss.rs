/// Quantile (pinball) loss of prediction `q` for target `y` at level `tau`.
pub fn pinball(tau: f64, y: f64, q: f64) -> f64 {
    let e = y - q;
    (tau * e).max((tau - 1.0) * e)
}

/// Mean squared error (each term capped at `clip`) plus the mean over
/// quantile levels of the mean pinball loss. `row` is one head row:
/// `L` means followed by `L` values per quantile. Returns the loss and its
/// gradient with respect to `row`.
pub fn composite_loss(row: &[f64], target: &[f64], quantiles: &[f64], clip: f64) -> (f64, Vec<f64>) {
    let l = target.len();
    debug_assert_eq!(row.len(), l * (1 + quantiles.len()));
    let n = l as f64;
    let nq = quantiles.len().max(1) as f64;
    let mut grad = vec![0.0; row.len()];
    let mut mse = 0.0;
    for i in 0..l {
        let e = row[i] - target[i];
        let sq = e * e;
        if sq < clip {
            mse += sq;
            grad[i] = 2.0 * e / n;
        } else {
            mse += clip;
        }
    }
    let mut ql = 0.0;
    for (k, &tau) in quantiles.iter().enumerate() {
        let block = (k + 1) * l;
        for i in 0..l {
            let q = row[block + i];
            let y = target[i];
            ql += pinball(tau, y, q);
            // d/dq of max(tau(y-q), (tau-1)(y-q)); at the kink take the subgradient -tau
            grad[block + i] = if y >= q { -tau } else { 1.0 - tau } / (n * nq);
        }
    }
    (mse / n + ql / (n * nq), grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::default_quantiles;

    fn exact_row(target: &[f64]) -> Vec<f64> {
        std::iter::repeat_n(target, 10).flatten().copied().collect()
    }

    #[test]
    fn exact_prediction_has_zero_loss() {
        let target = vec![0.3, -1.0, 2.0, 0.0];
        assert_eq!(composite_loss(&exact_row(&target), &target, &default_quantiles(), 25.0).0, 0.0);
    }

    #[test]
    fn mean_error_is_clipped() {
        let target = vec![0.0; 8];
        for (delta, expect) in [(3.0, 9.0 / 8.0), (6.0, 25.0 / 8.0)] {
            let mut row = exact_row(&target);
            row[2] = delta;
            let (loss, _) = composite_loss(&row, &target, &default_quantiles(), 25.0);
            assert!((loss - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn pinball_under_prediction() {
        assert!((pinball(0.9, 1.0, 0.0) - 0.9).abs() < 1e-15);
        assert!((pinball(0.9, 0.0, 1.0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_difference_quotient() {
        let target = vec![0.4, -0.2, 1.5];
        let qs = default_quantiles();
        let row: Vec<f64> = (0..30).map(|i| ((i * 7 % 11) as f64 - 5.0) * 0.37 + 0.011).collect();
        let (_, g) = composite_loss(&row, &target, &qs, 25.0);
        for i in 0..row.len() {
            let h = 1e-7;
            let mut up = row.clone();
            up[i] += h;
            let mut dn = row.clone();
            dn[i] -= h;
            let fd = (composite_loss(&up, &target, &qs, 25.0).0 - composite_loss(&dn, &target, &qs, 25.0).0) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6, "index {i}: {fd} vs {}", g[i]);
        }
    }
}
