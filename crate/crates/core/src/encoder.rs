//! Feature tokens and presence encoding.

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use crate::abstraction::AbstractLine;
use crate::diagnostics::TemplateId;
use crate::repair::ClassId;

pub const ERR: &str = "<ERR>";
pub const UNI: &str = "<UNI>";
pub const BI: &str = "<BI>";
pub const EOS: &str = "<EOS>";

pub const SENTINELS: [&str; 4] = [ERR, UNI, BI, EOS];

pub fn is_sentinel(tok: &str) -> bool {
    SENTINELS.contains(&tok)
}

pub fn template_token(id: TemplateId) -> String {
    format!("E_{id}")
}

/// `<ERR> E.. <UNI> unigrams.. <BI> bigrams.. <EOS>`; error tokens are
/// emitted once each in ascending id order.
pub fn feature_tokens(line: &AbstractLine, templates: &[TemplateId]) -> Vec<String> {
    let ids: BTreeSet<TemplateId> = templates.iter().copied().collect();
    let bigrams = line.tokens.len().saturating_sub(1);
    let mut out = Vec::with_capacity(4 + ids.len() + line.len() + bigrams);
    out.push(ERR.to_string());
    out.extend(ids.into_iter().map(template_token));
    out.push(UNI.to_string());
    out.extend(line.tokens.iter().cloned());
    out.push(BI.to_string());
    out.extend(line.tokens.windows(2).map(|w| format!("{}_{}", w[0], w[1])));
    out.push(EOS.to_string());
    out
}

/// Frozen token → index map. Sentinels are never members.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FeatureVocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl FeatureVocabulary {
    /// Vocabulary of every non-sentinel token in `sequences`, indexed in
    /// sorted token order.
    pub fn build<'a, I, S>(sequences: I) -> Self
    where
        I: IntoIterator<Item = &'a S>,
        S: AsRef<[String]> + 'a + ?Sized,
    {
        let mut all = BTreeSet::new();
        for seq in sequences {
            for tok in seq.as_ref() {
                if !is_sentinel(tok) {
                    all.insert(tok.clone());
                }
            }
        }
        Self::from_tokens(all.into_iter().collect())
    }

    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn index_of(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn vectorize(&self, tokens: &[String]) -> FeatureVector {
        let mut active: Vec<u32> = tokens.iter().filter_map(|t| self.index_of(t)).collect();
        active.sort_unstable();
        active.dedup();
        FeatureVector {
            len: self.len(),
            active,
        }
    }
}

/// Binary presence vector, stored as its sorted set of 1-positions.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FeatureVector {
    len: usize,
    active: Vec<u32>,
}

impl FeatureVector {
    pub fn from_active(len: usize, mut active: Vec<u32>) -> Self {
        active.sort_unstable();
        active.dedup();
        assert!(
            active.last().is_none_or(|&i| (i as usize) < len),
            "feature index out of range"
        );
        Self { len, active }
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            len,
            active: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn active(&self) -> &[u32] {
        &self.active
    }

    pub fn weight(&self) -> usize {
        self.active.len()
    }

    pub fn to_dense(&self) -> Vec<f32> {
        let mut v = vec![0.0; self.len];
        for &i in &self.active {
            v[i as usize] = 1.0;
        }
        v
    }
}

pub fn vectorize(tokens: &[String], vocab: &FeatureVocabulary) -> FeatureVector {
    vocab.vectorize(tokens)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("class id {class_id} out of range for {num_classes} classes")]
pub struct LabelError {
    pub class_id: ClassId,
    pub num_classes: usize,
}

pub fn encode_label(class_id: ClassId, num_classes: usize) -> Result<Vec<f32>, LabelError> {
    if class_id as usize >= num_classes {
        return Err(LabelError {
            class_id,
            num_classes,
        });
    }
    let mut v = vec![0.0; num_classes];
    v[class_id as usize] = 1.0;
    Ok(v)
}
