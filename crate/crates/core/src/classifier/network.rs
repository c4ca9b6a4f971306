use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::encoder::FeatureVector;
use crate::repair::ClassId;

/// Single-hidden-layer network: `relu(W1·x + b1)` → (dropout) → softmax(`W2·h + b2`).
///
/// Parameters live in one flat buffer laid out as `W1 | b1 | W2 | b2`, with
/// `W1` hidden×inputs and `W2` classes×hidden, both row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    inputs: usize,
    hidden: usize,
    classes: usize,
    params: Vec<T>,
}

/// Activations of one forward pass.
#[derive(Debug, Clone)]
pub struct Forward<T> {
    pub pre_hidden: Vec<T>,
    /// Post-ReLU, post-dropout hidden activations.
    pub hidden: Vec<T>,
    pub probs: Vec<T>,
}

pub fn param_count(inputs: usize, hidden: usize, classes: usize) -> usize {
    hidden * inputs + hidden + classes * hidden + classes
}

impl<T: Float> Network<T> {
    pub fn zeros(inputs: usize, hidden: usize, classes: usize) -> Self {
        Self {
            inputs,
            hidden,
            classes,
            params: vec![T::zero(); param_count(inputs, hidden, classes)],
        }
    }

    pub fn from_params(inputs: usize, hidden: usize, classes: usize, params: Vec<T>) -> Option<Self> {
        (params.len() == param_count(inputs, hidden, classes)).then_some(Self {
            inputs,
            hidden,
            classes,
            params,
        })
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.hidden * self.inputs;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.classes * self.hidden;
        (b1, w2, b2)
    }

    pub fn w1(&self) -> &[T] {
        let (b1, _, _) = self.offsets();
        &self.params[..b1]
    }

    pub fn b1(&self) -> &[T] {
        let (b1, w2, _) = self.offsets();
        &self.params[b1..w2]
    }

    pub fn w2(&self) -> &[T] {
        let (_, w2, b2) = self.offsets();
        &self.params[w2..b2]
    }

    pub fn b2(&self) -> &[T] {
        let (_, _, b2) = self.offsets();
        &self.params[b2..]
    }

    /// Forward pass. `dropout_mask`, when given, multiplies the hidden
    /// activations element-wise (0 for dropped units, `1/(1-p)` for kept).
    pub fn forward(&self, x: &FeatureVector, dropout_mask: Option<&[T]>) -> Forward<T> {
        assert_eq!(x.len(), self.inputs, "feature vector length != network inputs");
        let (h, k) = (self.hidden, self.classes);
        let w1 = self.w1();

        let mut pre_hidden = self.b1().to_vec();
        for &i in x.active() {
            let i = i as usize;
            for (u, z) in pre_hidden.iter_mut().enumerate() {
                *z = *z + w1[u * self.inputs + i];
            }
        }
        let mut hidden: Vec<T> = pre_hidden.iter().map(|&z| z.max(T::zero())).collect();
        if let Some(mask) = dropout_mask {
            assert_eq!(mask.len(), h, "dropout mask length != hidden units");
            for (a, &m) in hidden.iter_mut().zip(mask) {
                *a = *a * m;
            }
        }

        let w2 = self.w2();
        let mut logits = self.b2().to_vec();
        for (c, logit) in logits.iter_mut().enumerate() {
            let row = &w2[c * h..(c + 1) * h];
            *logit = row
                .iter()
                .zip(&hidden)
                .fold(*logit, |acc, (&w, &a)| acc + w * a);
        }
        debug_assert_eq!(logits.len(), k);
        Forward {
            pre_hidden,
            hidden,
            probs: softmax(&logits),
        }
    }

    pub fn predict_proba(&self, x: &FeatureVector) -> Vec<T> {
        self.forward(x, None).probs
    }

    /// Mean cross-entropy over the batch and its gradient with respect to
    /// every parameter, in the flat parameter layout.
    pub fn loss_and_grad(
        &self,
        batch: &[(&FeatureVector, ClassId)],
        masks: Option<&[Vec<T>]>,
    ) -> (T, Vec<T>) {
        let mut grad = vec![T::zero(); self.params.len()];
        if batch.is_empty() {
            return (T::zero(), grad);
        }
        let (h, k, v) = (self.hidden, self.classes, self.inputs);
        let (ob1, ow2, ob2) = self.offsets();
        let w2 = self.w2();
        let scale = T::one() / T::from(batch.len()).unwrap();
        let mut loss = T::zero();
        let mut d_hidden = vec![T::zero(); h];

        for (n, &(x, label)) in batch.iter().enumerate() {
            let mask = masks.map(|m| m[n].as_slice());
            let fwd = self.forward(x, mask);
            let label = label as usize;
            loss = loss - fwd.probs[label].max(T::min_positive_value()).ln();

            // d logits = p - onehot
            let mut d_logits = fwd.probs;
            d_logits[label] = d_logits[label] - T::one();

            d_hidden.iter_mut().for_each(|d| *d = T::zero());
            for c in 0..k {
                let g = d_logits[c] * scale;
                grad[ob2 + c] = grad[ob2 + c] + g;
                let row = ow2 + c * h;
                for u in 0..h {
                    grad[row + u] = grad[row + u] + g * fwd.hidden[u];
                    d_hidden[u] = d_hidden[u] + w2[c * h + u] * g;
                }
            }
            for u in 0..h {
                let mut d = d_hidden[u];
                if let Some(mask) = mask {
                    d = d * mask[u];
                }
                if fwd.pre_hidden[u] <= T::zero() {
                    continue;
                }
                grad[ob1 + u] = grad[ob1 + u] + d;
                for &i in x.active() {
                    let idx = u * v + i as usize;
                    grad[idx] = grad[idx] + d;
                }
            }
        }
        (loss * scale, grad)
    }

    pub fn loss(&self, batch: &[(&FeatureVector, ClassId)]) -> T {
        if batch.is_empty() {
            return T::zero();
        }
        let total = batch.iter().fold(T::zero(), |acc, &(x, y)| {
            acc - self.predict_proba(x)[y as usize].max(T::min_positive_value()).ln()
        });
        total / T::from(batch.len()).unwrap()
    }
}

impl Network<f32> {
    /// He-normal weights (`std = sqrt(2 / fan_in)`), zero biases.
    pub fn he_init<R: Rng + ?Sized>(inputs: usize, hidden: usize, classes: usize, rng: &mut R) -> Self {
        let mut net = Self::zeros(inputs, hidden, classes);
        let (ob1, ow2, ob2) = net.offsets();
        let n1 = Normal::new(0.0f32, (2.0 / inputs.max(1) as f32).sqrt()).unwrap();
        let n2 = Normal::new(0.0f32, (2.0 / hidden.max(1) as f32).sqrt()).unwrap();
        for p in &mut net.params[..ob1] {
            *p = n1.sample(rng);
        }
        for p in &mut net.params[ow2..ob2] {
            *p = n2.sample(rng);
        }
        net
    }
}

pub fn softmax<T: Float>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum = exps.iter().copied().fold(T::zero(), |a, b| a + b);
    exps.into_iter().map(|e| e / sum).collect()
}

/// The `k` most probable classes, by descending probability with ties
/// broken by ascending class id.
pub fn top_k<T: Float>(probs: &[T], k: usize) -> Vec<(ClassId, T)> {
    let mut ranked: Vec<(ClassId, T)> = probs
        .iter()
        .enumerate()
        .map(|(i, &p)| (i as ClassId, p))
        .collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    ranked.truncate(k.min(probs.len()));
    ranked
}

/// Inverted-dropout mask: each unit kept with probability `1 - rate` and
/// scaled by `1 / (1 - rate)`.
pub fn dropout_mask<R: Rng + ?Sized>(units: usize, rate: f32, rng: &mut R) -> Vec<f32> {
    let keep = 1.0 - rate;
    let scale = 1.0 / keep;
    (0..units)
        .map(|_| if rng.random::<f32>() < keep { scale } else { 0.0 })
        .collect()
}
