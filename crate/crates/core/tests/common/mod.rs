//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use phasekit::mdn::{batch_gradient, Architecture, FeatureMap, NetworkWeights, Sample};
use phasekit::rng::rng_for;
use rand::Rng;

pub const FD_STEP: f64 = 1e-4;

pub fn random_net(seed: u64) -> (NetworkWeights<f64>, Vec<Sample<f64>>) {
    let mut rng = rng_for(seed, &[]);
    let kernel = if rng.random_bool(0.5) { 3 } else { 5 };
    // receptive field fixed at 9 so every sample is a 9×9 patch
    let layers = 8 / (kernel - 1);
    let in_channels = rng.random_range(1..=3);
    let channels = (0..layers).map(|_| rng.random_range(1..=8)).collect();
    let arch = Architecture {
        in_channels,
        kernel,
        channels,
        elu_alpha: 1.0,
        dropout_rate: 0.3,
    };
    assert_eq!(arch.receptive_field(), 9);
    let n = arch.param_count();
    let mut params: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
    // keep exp(s) clear of the σ clamp, where the loss has a kink
    let (_, hb) = arch.head_ranges();
    params[hb.start + 2] = -1.2;
    params[hb.start + 3] = -0.8;
    let w = NetworkWeights::from_params(arch, params).unwrap();

    let samples = (0..3)
        .map(|s| {
            let data = (0..81 * in_channels).map(|_| rng.random_range(-1.0..1.0)).collect();
            let phi: f64 = rng.random_range(-3.0..3.0);
            Sample {
                input: FeatureMap::new(9, 9, in_channels, data).unwrap(),
                target: (phi.cos(), phi.sin()),
                dropout_seed: seed * 10 + s,
            }
        })
        .collect();
    (w, samples)
}

pub fn loss_at(w: &NetworkWeights<f64>, samples: &[Sample<f64>]) -> f64 {
    batch_gradient(w, samples, true).unwrap().loss
}

/// Largest relative error between the analytic gradient and central
/// differences over every parameter of the network built from `seed`.
pub fn worst_gradient_error(seed: u64) -> f64 {
    let (w, samples) = random_net(seed);
    let analytic = batch_gradient(&w, &samples, true).unwrap().grad;
    let mut worst = 0.0f64;
    for (i, &a) in analytic.iter().enumerate() {
        let mut up = w.clone();
        up.params_mut()[i] += FD_STEP;
        let mut dn = w.clone();
        dn.params_mut()[i] -= FD_STEP;
        let numeric = (loss_at(&up, &samples) - loss_at(&dn, &samples)) / (2.0 * FD_STEP);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}
