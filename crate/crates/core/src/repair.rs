//! Repair-token sets and error-repair classes.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abstraction::AbstractLine;
use crate::diagnostics::{ErrorGroup, GroupedErrors, TemplateId};

pub type ClassId = u32;

/// Signed abstract tokens: what a repair inserted and deleted.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RepairTokenSet {
    pub insertions: BTreeSet<String>,
    pub deletions: BTreeSet<String>,
}

impl RepairTokenSet {
    pub fn new<I, D, S, T>(insertions: I, deletions: D) -> Self
    where
        I: IntoIterator<Item = S>,
        D: IntoIterator<Item = T>,
        S: Into<String>,
        T: Into<String>,
    {
        Self {
            insertions: insertions.into_iter().map(Into::into).collect(),
            deletions: deletions.into_iter().map(Into::into).collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.insertions.is_empty() && self.deletions.is_empty()
    }
}

impl fmt::Display for RepairTokenSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let signed = self
            .insertions
            .iter()
            .map(|t| format!("+{t}"))
            .chain(self.deletions.iter().map(|t| format!("-{t}")));
        let parts: Vec<String> = signed.collect();
        f.write_str(&parts.join(" "))
    }
}

/// Token-level diff of an erroneous and a repaired abstract line.
///
/// Tokens are aligned by a longest common subsequence; unaligned tokens of
/// `good` are insertions and unaligned tokens of `bad` are deletions. The
/// sets depend only on which common subsequence is aligned, not where, so
/// when several are maximal the lexicographically smallest is used. That
/// choice does not depend on argument order, which keeps the diff
/// antisymmetric.
pub fn diff_repair(bad: &AbstractLine, good: &AbstractLine) -> RepairTokenSet {
    let common = min_lcs(&bad.tokens, &good.tokens);
    RepairTokenSet {
        insertions: unmatched(&good.tokens, &common),
        deletions: unmatched(&bad.tokens, &common),
    }
}

/// Tokens of `line` left over after removing the multiset `common`.
fn unmatched(line: &[String], common: &[&str]) -> BTreeSet<String> {
    let mut budget: HashMap<&str, usize> = HashMap::new();
    for t in common {
        *budget.entry(t).or_default() += 1;
    }
    let mut out = BTreeSet::new();
    for t in line {
        match budget.get_mut(t.as_str()) {
            Some(n) if *n > 0 => *n -= 1,
            _ => {
                out.insert(t.clone());
            }
        }
    }
    out
}

/// Lexicographically smallest longest common subsequence.
fn min_lcs<'a>(a: &'a [String], b: &[String]) -> Vec<&'a str> {
    let (n, m) = (a.len(), b.len());
    let w = m + 1;
    // suffix[i * w + j] = LCS length of a[i..] and b[j..]
    let mut suffix = vec![0usize; (n + 1) * w];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            suffix[i * w + j] = if a[i] == b[j] {
                1 + suffix[(i + 1) * w + j + 1]
            } else {
                suffix[(i + 1) * w + j].max(suffix[i * w + j + 1])
            };
        }
    }

    let mut out = Vec::with_capacity(suffix[0]);
    let (mut i, mut j) = (0, 0);
    let mut remaining = suffix[0];
    while remaining > 0 {
        // The earliest occurrences of a token in both suffixes dominate any
        // later pair, so only those need checking.
        let mut best: Option<(&str, usize, usize)> = None;
        for pi in i..n {
            let tok = a[pi].as_str();
            if best.is_some_and(|(t, _, _)| tok >= t) || a[i..pi].iter().any(|x| x == tok) {
                continue;
            }
            let Some(pj) = (j..m).find(|&pj| b[pj] == tok) else {
                continue;
            };
            if suffix[(pi + 1) * w + pj + 1] == remaining - 1 {
                best = Some((tok, pi, pj));
            }
        }
        let (tok, pi, pj) = best.expect("an optimal next token exists while LCS length remains");
        out.push(tok);
        i = pi + 1;
        j = pj + 1;
        remaining -= 1;
    }
    out
}

/// Canonical identity of an error-repair class.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClassKey {
    pub templates: ErrorGroup,
    pub repair: RepairTokenSet,
}

impl ClassKey {
    pub fn new(templates: ErrorGroup, repair: RepairTokenSet) -> Self {
        Self { templates, repair }
    }

    pub fn map_templates(&self, f: impl FnMut(TemplateId) -> TemplateId) -> ClassKey {
        ClassKey {
            templates: self.templates.map_ids(f),
            repair: self.repair.clone(),
        }
    }
}

impl fmt::Display for ClassKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let errs: Vec<String> = self.templates.ids().iter().map(|id| format!("E_{id}")).collect();
        write!(f, "{} {}", errs.join(" \u{2227} "), self.repair)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClassifyError {
    #[error("whitespace-only edit: repair token set is empty")]
    EmptyRepair,
}

/// Class key for an edit at `line_no`: the line's own error group when the
/// compiler reported that line, the program-level group otherwise.
pub fn classify_pair(
    line_no: u32,
    errors: &GroupedErrors,
    repair: &RepairTokenSet,
) -> Result<ClassKey, ClassifyError> {
    if repair.is_empty() {
        return Err(ClassifyError::EmptyRepair);
    }
    let templates = errors.line(line_no).unwrap_or(&errors.program).clone();
    Ok(ClassKey::new(templates, repair.clone()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRepairClass {
    pub class_id: ClassId,
    pub key: ClassKey,
    pub frequency: usize,
}

/// Frozen class table; ids run 0..K in descending frequency order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClassTable {
    classes: Vec<ErrorRepairClass>,
    index: HashMap<ClassKey, ClassId>,
}

impl ClassTable {
    /// Keeps keys with at least `min_class_size` members and numbers them by
    /// descending count, ties by ascending key.
    pub fn from_counts<I>(counts: I, min_class_size: usize) -> Self
    where
        I: IntoIterator<Item = (ClassKey, usize)>,
    {
        let mut kept: Vec<(ClassKey, usize)> = counts
            .into_iter()
            .filter(|(_, n)| *n >= min_class_size)
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Self::from_classes(kept)
    }

    /// Table in the given order; entry `i` gets class id `i`.
    pub fn from_classes(classes: Vec<(ClassKey, usize)>) -> Self {
        let classes: Vec<ErrorRepairClass> = classes
            .into_iter()
            .enumerate()
            .map(|(i, (key, frequency))| ErrorRepairClass {
                class_id: i as ClassId,
                key,
                frequency,
            })
            .collect();
        let index = classes.iter().map(|c| (c.key.clone(), c.class_id)).collect();
        Self { classes, index }
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn get(&self, id: ClassId) -> Option<&ErrorRepairClass> {
        self.classes.get(id as usize)
    }

    pub fn id_of(&self, key: &ClassKey) -> Option<ClassId> {
        self.index.get(key).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ErrorRepairClass> {
        self.classes.iter()
    }
}
