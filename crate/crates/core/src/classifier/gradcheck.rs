use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::network::Network;
use crate::encoder::FeatureVector;
use crate::repair::ClassId;

pub const FD_STEP: f64 = 1e-5;

/// Denominator floor for the relative error, so parameters whose true
/// gradient is ~0 are judged on absolute error instead.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub inputs: usize,
    pub hidden: usize,
    pub classes: usize,
    pub batch: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub params_checked: usize,
}

/// Compares the analytic cross-entropy gradient of a random f64 network
/// (dropout off) with central finite differences over every parameter.
pub fn gradient_check(cfg: &GradCheckConfig) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, 0.7).unwrap();
    let mut net = Network::<f64>::zeros(cfg.inputs, cfg.hidden, cfg.classes);
    for p in net.params_mut() {
        *p = normal.sample(&mut rng);
    }

    let xs: Vec<FeatureVector> = (0..cfg.batch)
        .map(|_| {
            let active = (0..cfg.inputs as u32).filter(|_| rng.random_bool(0.5)).collect();
            FeatureVector::from_active(cfg.inputs, active)
        })
        .collect();
    let batch: Vec<(&FeatureVector, ClassId)> = xs
        .iter()
        .map(|x| (x, rng.random_range(0..cfg.classes) as ClassId))
        .collect();

    let (_, analytic) = net.loss_and_grad(&batch, None);
    let mut max_rel = 0.0f64;
    for (i, &a) in analytic.iter().enumerate() {
        let orig = net.params()[i];
        net.params_mut()[i] = orig + FD_STEP;
        let plus = net.loss(&batch);
        net.params_mut()[i] = orig - FD_STEP;
        let minus = net.loss(&batch);
        net.params_mut()[i] = orig;

        let numeric = (plus - minus) / (2.0 * FD_STEP);
        let denom = a.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
        max_rel = max_rel.max((a - numeric).abs() / denom);
    }
    GradCheckReport {
        max_relative_error: max_rel,
        params_checked: analytic.len(),
    }
}
