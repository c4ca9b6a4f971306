use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::network::{top_k, Network};
use crate::encoder::FeatureVector;
use crate::repair::ClassId;

pub const REPORTED_K: [usize; 3] = [1, 3, 5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class_id: ClassId,
    pub precision: f64,
    pub recall: f64,
    pub support: usize,
    /// Most frequent wrong top-1 prediction for this true class.
    pub top_confusion: Option<ClassId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub pred_at_k: BTreeMap<usize, f64>,
    /// Classes that occur in the test set or were predicted for it.
    pub per_class: Vec<ClassMetrics>,
    pub test_size: usize,
}

impl EvalReport {
    pub fn pred_at(&self, k: usize) -> f64 {
        self.pred_at_k.get(&k).copied().unwrap_or(0.0)
    }
}

/// Fraction of items whose true class is among the `k` most probable.
pub fn pred_at_k(net: &Network<f32>, items: &[(&FeatureVector, ClassId)], k: usize) -> f64 {
    if items.is_empty() {
        return 0.0;
    }
    let hits = items
        .iter()
        .filter(|(x, y)| top_k(&net.predict_proba(x), k).iter().any(|(c, _)| c == y))
        .count();
    hits as f64 / items.len() as f64
}

pub fn evaluate(net: &Network<f32>, test: &[(&FeatureVector, ClassId)]) -> EvalReport {
    let k_max = net.classes();
    let mut hits = [0usize; REPORTED_K.len()];
    // confusion[true][predicted]
    let mut confusion: BTreeMap<ClassId, BTreeMap<ClassId, usize>> = BTreeMap::new();
    let mut predicted_count: BTreeMap<ClassId, usize> = BTreeMap::new();

    for (x, y) in test {
        let ranked = top_k(&net.predict_proba(x), k_max.min(*REPORTED_K.last().unwrap()));
        for (slot, &k) in REPORTED_K.iter().enumerate() {
            if ranked.iter().take(k).any(|(c, _)| c == y) {
                hits[slot] += 1;
            }
        }
        let top = ranked[0].0;
        *confusion.entry(*y).or_default().entry(top).or_default() += 1;
        *predicted_count.entry(top).or_default() += 1;
    }

    let n = test.len().max(1) as f64;
    let pred_at_k = REPORTED_K
        .iter()
        .zip(hits)
        .map(|(&k, h)| (k, h as f64 / n))
        .collect();

    let mut classes: Vec<ClassId> = confusion.keys().chain(predicted_count.keys()).copied().collect();
    classes.sort_unstable();
    classes.dedup();
    let per_class = classes
        .into_iter()
        .map(|c| {
            let row = confusion.get(&c);
            let support: usize = row.map(|r| r.values().sum()).unwrap_or(0);
            let tp = row.and_then(|r| r.get(&c)).copied().unwrap_or(0);
            let predicted = predicted_count.get(&c).copied().unwrap_or(0);
            let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
            let top_confusion = row.and_then(|r| {
                r.iter()
                    .filter(|(&p, _)| p != c)
                    .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                    .map(|(&p, _)| p)
            });
            ClassMetrics {
                class_id: c,
                precision: ratio(tp, predicted),
                recall: ratio(tp, support),
                support,
                top_confusion,
            }
        })
        .collect();

    EvalReport {
        pred_at_k,
        per_class,
        test_size: test.len(),
    }
}
