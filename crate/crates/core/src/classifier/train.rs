use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::eval::pred_at_k;
use super::network::{dropout_mask, Network};
use crate::encoder::FeatureVector;
use crate::repair::ClassId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.70,
            validation: 0.10,
            test: 0.20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub hidden_units: usize,
    pub dropout_rate: f32,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    pub adam_beta1: f32,
    pub adam_beta2: f32,
    pub adam_epsilon: f32,
    pub seed: u64,
    pub split: SplitRatios,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden_units: 512,
            dropout_rate: 0.2,
            epochs: 6,
            batch_size: 32,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 0,
            split: SplitRatios::default(),
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: &str| Err(TrainError::Config(msg.to_string()));
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must be in [0, 1)");
        }
        if self.hidden_units == 0 || self.epochs == 0 || self.batch_size == 0 {
            return bad("hidden_units, epochs and batch_size must be >= 1");
        }
        let s = self.split;
        if [s.train, s.validation, s.test].iter().any(|r| *r < 0.0) || (s.train + s.validation + s.test - 1.0).abs() > 1e-9 {
            return bad("split ratios must be non-negative and sum to 1");
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return bad("learning_rate must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("invalid network config: {0}")]
    Config(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("class {0} has no member in the training split")]
    ClassMissing(ClassId),
    #[error("example {index}: {reason}")]
    BadExample { index: usize, reason: String },
}

/// Dataset indices assigned to each partition, ascending.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Per-class shuffled split. Classes with at least five members get rounded
/// validation/test shares; smaller classes are split proportionally with at
/// least one member kept for training.
pub fn stratified_split(
    labels: &[ClassId],
    num_classes: usize,
    ratios: SplitRatios,
    rng: &mut ChaCha8Rng,
) -> Split {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &c) in labels.iter().enumerate() {
        if let Some(members) = by_class.get_mut(c as usize) {
            members.push(i);
        }
    }
    let mut split = Split::default();
    for mut members in by_class {
        let n = members.len();
        if n == 0 {
            continue;
        }
        members.shuffle(rng);
        let share = |r: f64| (n as f64 * r).round() as usize;
        let (n_train, n_val) = if n >= 5 {
            let n_test = share(ratios.test);
            let n_val = share(ratios.validation);
            let n_train = n.saturating_sub(n_test + n_val).max(1);
            (n_train, n_val.min(n - n_train))
        } else {
            let n_train = share(ratios.train).clamp(1, n);
            (n_train, share(ratios.validation).min(n - n_train))
        };
        split.train.extend_from_slice(&members[..n_train]);
        split.validation.extend_from_slice(&members[n_train..n_train + n_val]);
        split.test.extend_from_slice(&members[n_train + n_val..]);
    }
    split.train.sort_unstable();
    split.validation.sort_unstable();
    split.test.sort_unstable();
    split
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_pred_at_1: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network<f32>,
    /// 1-based epoch of the returned snapshot.
    pub best_epoch: usize,
    pub history: Vec<EpochStats>,
    pub split: Split,
}

struct Adam {
    m: Vec<f32>,
    v: Vec<f32>,
    step: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    fn update(&mut self, params: &mut [f32], grad: &[f32], cfg: &NetworkConfig) {
        self.step += 1;
        let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_epsilon);
        }
    }
}

/// Minibatch Adam on softmax cross-entropy. Deterministic for a given
/// dataset and config. Returns the epoch snapshot with the best validation
/// Pred@1 (earliest on ties; the last epoch when there is no validation data).
pub fn train(
    dataset: &[(FeatureVector, ClassId)],
    num_classes: usize,
    config: &NetworkConfig,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let Some((first, _)) = dataset.first() else {
        return Err(TrainError::EmptyDataset);
    };
    let inputs = first.len();
    for (index, (x, y)) in dataset.iter().enumerate() {
        if x.len() != inputs {
            return Err(TrainError::BadExample {
                index,
                reason: format!("feature length {} != {inputs}", x.len()),
            });
        }
        if *y as usize >= num_classes {
            return Err(TrainError::BadExample {
                index,
                reason: format!("class {y} >= {num_classes}"),
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let labels: Vec<ClassId> = dataset.iter().map(|(_, y)| *y).collect();
    let split = stratified_split(&labels, num_classes, config.split, &mut rng);
    let mut present = vec![false; num_classes];
    for &i in &split.train {
        present[labels[i] as usize] = true;
    }
    if let Some(missing) = present.iter().position(|p| !p) {
        return Err(TrainError::ClassMissing(missing as ClassId));
    }

    let mut net = Network::he_init(inputs, config.hidden_units, num_classes, &mut rng);
    let mut adam = Adam::new(net.params().len());
    let validation: Vec<(&FeatureVector, ClassId)> =
        split.validation.iter().map(|&i| (&dataset[i].0, dataset[i].1)).collect();

    let mut order = split.train.clone();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, Network<f32>)> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0f64;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(&FeatureVector, ClassId)> =
                chunk.iter().map(|&i| (&dataset[i].0, dataset[i].1)).collect();
            let masks: Option<Vec<Vec<f32>>> = (config.dropout_rate > 0.0).then(|| {
                chunk
                    .iter()
                    .map(|_| dropout_mask(config.hidden_units, config.dropout_rate, &mut rng))
                    .collect()
            });
            let (loss, grad) = net.loss_and_grad(&batch, masks.as_deref());
            loss_sum += f64::from(loss) * chunk.len() as f64;
            adam.update(net.params_mut(), &grad, config);
        }
        let train_loss = loss_sum / order.len() as f64;

        let val_acc = (!validation.is_empty()).then(|| pred_at_k(&net, &validation, 1));
        tracing::debug!(epoch, train_loss, ?val_acc, "epoch done");
        history.push(EpochStats {
            epoch,
            train_loss,
            validation_pred_at_1: val_acc,
        });

        let improves = match (&best, val_acc) {
            (None, _) | (_, None) => true,
            (Some((best_score, _, _)), Some(score)) => score > *best_score,
        };
        if improves {
            best = Some((val_acc.unwrap_or(0.0), epoch, net.clone()));
        }
    }

    let (_, best_epoch, network) = best.expect("at least one epoch runs");
    Ok(TrainOutcome {
        network,
        best_epoch,
        history,
        split,
    })
}
