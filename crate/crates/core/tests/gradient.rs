mod common;

use common::{max_relative_error, random_window, rng, tiny_config};
use mrcast::model::{ModelParams, Variant};

#[test]
fn analytic_gradients_match_finite_differences() {
    for (variant, coarse_pad, fine_pad) in [(Variant::ReSt, 20, 3), (Variant::Concat, 0, 0), (Variant::St, 64, 0)] {
        let mut config = tiny_config(64, 8, 8, 8, 2, 4);
        config.variant = variant;
        let params = ModelParams::init(&config, 5);
        let window = random_window(64, 8, coarse_pad, fine_pad, 4, &mut rng(11));
        let err = max_relative_error(&config, &params, &window);
        assert!(err < 1e-4, "{variant:?}: max relative error {err:e}");
    }
}

#[test]
fn gradient_check_with_clipped_terms_and_longer_horizon() {
    let mut config = tiny_config(32, 8, 8, 8, 4, 4);
    config.loss_clip = 0.5;
    let params = ModelParams::init(&config, 9);
    let window = random_window(32, 12, 5, 9, 4, &mut rng(2));
    assert!(max_relative_error(&config, &params, &window) < 1e-4);
}
