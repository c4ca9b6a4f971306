//! Example index and per-line feedback for buggy programs.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abstraction::{abstract_line, build_symbol_table};
use crate::classifier::predict_topk;
use crate::corpus::LabeledExample;
use crate::diagnostics::{group_errors, CompileError, Compiler};
use crate::encoder::feature_tokens;
use crate::model::TrainedModel;
use crate::repair::ClassId;

/// Most examples ever served for one line, across all pages.
pub const MAX_EXAMPLES_PER_LINE: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexedExample {
    pub erroneous: String,
    pub repaired: String,
    /// How often the abstract form of `repaired` occurs in the corpus.
    pub frequency: usize,
}

/// Concrete example lines per class, best first.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleIndex {
    classes: BTreeMap<ClassId, Vec<IndexedExample>>,
}

impl ExampleIndex {
    /// Ranks each class's examples by descending abstract-repaired-line
    /// frequency, then repaired line, then erroneous line; duplicate
    /// concrete pairs are kept once.
    pub fn build(examples: &[LabeledExample]) -> Self {
        let mut freq: HashMap<&[String], usize> = HashMap::new();
        for ex in examples {
            *freq.entry(&ex.abstract_repaired.tokens).or_default() += 1;
        }
        let mut classes: BTreeMap<ClassId, Vec<IndexedExample>> = BTreeMap::new();
        for ex in examples {
            classes.entry(ex.class_id).or_default().push(IndexedExample {
                erroneous: ex.edit.buggy_line.trim().to_string(),
                repaired: ex.edit.repaired_line.trim().to_string(),
                frequency: freq[ex.abstract_repaired.tokens.as_slice()],
            });
        }
        for list in classes.values_mut() {
            list.sort_by(|a, b| {
                b.frequency
                    .cmp(&a.frequency)
                    .then_with(|| a.repaired.cmp(&b.repaired))
                    .then_with(|| a.erroneous.cmp(&b.erroneous))
            });
            list.dedup_by(|a, b| a.erroneous == b.erroneous && a.repaired == b.repaired);
        }
        Self { classes }
    }

    pub fn examples(&self, class_id: ClassId) -> &[IndexedExample] {
        self.classes.get(&class_id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ClassId, &[IndexedExample])> {
        self.classes.iter().map(|(&c, v)| (c, v.as_slice()))
    }

    /// Drops every example of `class_id`.
    pub fn remove_class(&mut self, class_id: ClassId) {
        self.classes.remove(&class_id);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuggestOptions {
    /// Ranked predictions reported per line.
    pub top_k: usize,
    pub examples_per_page: usize,
    /// How many top-ranked classes may supply examples.
    pub class_fallback_n: usize,
    /// Serve repaired lines without the erroneous line.
    pub repaired_only: bool,
}

impl Default for SuggestOptions {
    fn default() -> Self {
        Self {
            top_k: 3,
            examples_per_page: 1,
            class_fallback_n: 3,
            repaired_only: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class_id: ClassId,
    pub probability: f32,
    /// Human-readable class key, e.g. `E_1 +;`.
    pub class_key: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExamplePair {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub erroneous: Option<String>,
    pub repaired: String,
    pub frequency: usize,
}

/// Where the examples for one line come from; enough to fetch later pages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExampleCursor {
    pub class_id: Option<ClassId>,
    pub page_size: usize,
    pub repaired_only: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub line_no: u32,
    pub diagnostics: Vec<String>,
    pub predicted: Vec<Prediction>,
    /// Class the examples were drawn from.
    pub example_class: Option<ClassId>,
    pub examples: Vec<ExamplePair>,
    pub has_more: bool,
    #[serde(skip)]
    pub cursor: Option<ExampleCursor>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExamplePage {
    pub examples: Vec<ExamplePair>,
    pub has_more: bool,
}

#[derive(Debug, Error)]
pub enum SuggestError {
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error("example offset {0} is past the per-line cap of {MAX_EXAMPLES_PER_LINE}")]
    CapReached(usize),
}

fn page(index: &ExampleIndex, cursor: &ExampleCursor, offset: usize) -> ExamplePage {
    let pool = match cursor.class_id {
        Some(c) => index.examples(c),
        None => &[],
    };
    let limit = pool.len().min(MAX_EXAMPLES_PER_LINE);
    let start = offset.min(limit);
    let end = (offset + cursor.page_size).min(limit);
    ExamplePage {
        examples: pool[start..end]
            .iter()
            .map(|e| ExamplePair {
                erroneous: (!cursor.repaired_only).then(|| e.erroneous.clone()),
                repaired: e.repaired.clone(),
                frequency: e.frequency,
            })
            .collect(),
        has_more: end < limit,
    }
}

/// Page of examples starting at `offset` for a line served earlier.
pub fn more_examples(
    index: &ExampleIndex,
    cursor: &ExampleCursor,
    offset: usize,
) -> Result<ExamplePage, SuggestError> {
    if offset >= MAX_EXAMPLES_PER_LINE {
        return Err(SuggestError::CapReached(offset));
    }
    Ok(page(index, cursor, offset))
}

/// Compiles `source` and, for every line the compiler reports (ascending),
/// predicts its error-repair class and serves the first page of examples
/// from the best-ranked class that has any. A clean compile yields no
/// suggestions.
pub fn suggest(
    source: &str,
    model: &TrainedModel,
    compiler: &Compiler,
    options: &SuggestOptions,
) -> Result<Vec<Suggestion>, SuggestError> {
    let output = compiler.compile(source)?;
    Ok(suggest_from_diagnostics(source, &output.diagnostics, model, options))
}

/// [`suggest`] for diagnostics obtained elsewhere.
pub fn suggest_from_diagnostics(
    source: &str,
    diagnostics: &[crate::diagnostics::RawDiagnostic],
    model: &TrainedModel,
    options: &SuggestOptions,
) -> Vec<Suggestion> {
    if diagnostics.is_empty() {
        return Vec::new();
    }
    let grouped = group_errors(diagnostics, |p| model.templates.lookup(p));
    let symtab = build_symbol_table(source);
    let lines: Vec<&str> = source.lines().collect();
    let k = model.classes.len();
    let rank_depth = options.top_k.max(options.class_fallback_n).clamp(1, k.max(1));

    grouped
        .per_line
        .iter()
        .map(|(&line_no, group)| {
            let text = line_no
                .checked_sub(1)
                .and_then(|i| lines.get(i as usize))
                .copied()
                .unwrap_or("");
            let tokens = feature_tokens(&abstract_line(text, &symtab), group.ids());
            let x = model.vocab.vectorize(&tokens);
            let ranked = predict_topk(&model.network, &x, rank_depth);

            let example_class = ranked
                .iter()
                .take(options.class_fallback_n.max(1))
                .map(|(c, _)| *c)
                .find(|&c| !model.examples.examples(c).is_empty());
            let cursor = ExampleCursor {
                class_id: example_class,
                page_size: options.examples_per_page.max(1),
                repaired_only: options.repaired_only,
            };
            let first = page(&model.examples, &cursor, 0);

            Suggestion {
                line_no,
                diagnostics: diagnostics
                    .iter()
                    .filter(|d| d.line == line_no)
                    .map(|d| d.message.clone())
                    .collect(),
                predicted: ranked
                    .iter()
                    .take(options.top_k)
                    .map(|&(class_id, probability)| Prediction {
                        class_id,
                        probability,
                        class_key: model
                            .classes
                            .get(class_id)
                            .map(|c| c.key.to_string())
                            .unwrap_or_default(),
                    })
                    .collect(),
                example_class,
                examples: first.examples,
                has_more: first.has_more,
                cursor: Some(cursor),
            }
        })
        .collect()
}
