//! Program-pair corpus ingestion and the labeling pipeline.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abstraction::{abstract_line, build_symbol_table, AbstractLine};
use crate::diagnostics::{
    group_errors, CompileError, Compiler, ErrorGroup, RawDiagnostic, TemplateId, TemplateRegistry,
};
use crate::repair::{diff_repair, ClassId, ClassKey, ClassTable, RepairTokenSet};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramPair {
    pub pair_id: String,
    #[serde(rename = "buggy")]
    pub buggy_source: String,
    #[serde(rename = "repaired")]
    pub repaired_source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assignment_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SingleLineEdit {
    pub pair_id: String,
    /// 1-based.
    pub line_no: u32,
    pub buggy_line: String,
    pub repaired_line: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub edit: SingleLineEdit,
    pub abstract_buggy: AbstractLine,
    pub abstract_repaired: AbstractLine,
    pub error_templates: ErrorGroup,
    pub repair: RepairTokenSet,
    pub class_id: ClassId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SkipReason {
    Malformed,
    DuplicateId,
    EmptySource,
    NotSingleLine,
    NoError,
    Unlocalized,
    WhitespaceOnly,
    CompileFailed,
    SmallClass,
    UnknownClass,
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SkipReason::Malformed => "malformed",
            SkipReason::DuplicateId => "duplicate-id",
            SkipReason::EmptySource => "empty-source",
            SkipReason::NotSingleLine => "not-single-line",
            SkipReason::NoError => "no-error",
            SkipReason::Unlocalized => "unlocalized",
            SkipReason::WhitespaceOnly => "whitespace-only",
            SkipReason::CompileFailed => "compile-failed",
            SkipReason::SmallClass => "small-class",
            SkipReason::UnknownClass => "unknown-class",
        };
        f.write_str(s)
    }
}

/// One line of the skip report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub pair_id: String,
    pub reason: SkipReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl SkipRecord {
    fn new(pair_id: impl Into<String>, reason: SkipReason) -> Self {
        Self {
            pair_id: pair_id.into(),
            reason,
            detail: None,
        }
    }
}

pub fn write_skip_report(records: &[SkipRecord], path: &Path) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

#[derive(Debug, Clone, Default)]
pub struct LoadedCorpus {
    pub pairs: Vec<ProgramPair>,
    pub skipped: Vec<SkipRecord>,
}

/// Reads a JSONL corpus. Malformed, empty and duplicate-id records go to the
/// skip report; malformed lines are identified as `line:N`.
pub fn load_corpus(path: &Path) -> std::io::Result<LoadedCorpus> {
    read_corpus(BufReader::new(File::open(path)?))
}

pub fn read_corpus(reader: impl BufRead) -> std::io::Result<LoadedCorpus> {
    let mut out = LoadedCorpus::default();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let pair: ProgramPair = match serde_json::from_str(&line) {
            Ok(p) => p,
            Err(e) => {
                out.skipped.push(SkipRecord {
                    pair_id: format!("line:{}", idx + 1),
                    reason: SkipReason::Malformed,
                    detail: Some(e.to_string()),
                });
                continue;
            }
        };
        if pair.buggy_source.trim().is_empty() || pair.repaired_source.trim().is_empty() {
            out.skipped.push(SkipRecord::new(pair.pair_id, SkipReason::EmptySource));
        } else if !seen.insert(pair.pair_id.clone()) {
            out.skipped.push(SkipRecord::new(pair.pair_id, SkipReason::DuplicateId));
        } else {
            out.pairs.push(pair);
        }
    }
    Ok(out)
}

pub fn write_corpus(pairs: &[ProgramPair], path: &Path) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(File::create(path)?);
    for p in pairs {
        serde_json::to_writer(&mut out, p)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// The single differing line of two programs with equal line counts,
/// comparing lines with trailing whitespace removed.
pub fn detect_single_line_edit(pair: &ProgramPair) -> Option<SingleLineEdit> {
    let buggy: Vec<&str> = pair.buggy_source.lines().collect();
    let repaired: Vec<&str> = pair.repaired_source.lines().collect();
    if buggy.len() != repaired.len() {
        return None;
    }
    let mut diffs = buggy
        .iter()
        .zip(&repaired)
        .enumerate()
        .filter(|(_, (b, r))| b.trim_end() != r.trim_end());
    let (idx, (b, r)) = diffs.next()?;
    if diffs.next().is_some() {
        return None;
    }
    Some(SingleLineEdit {
        pair_id: pair.pair_id.clone(),
        line_no: idx as u32 + 1,
        buggy_line: b.trim_end().to_string(),
        repaired_line: r.trim_end().to_string(),
    })
}

/// What to do when the compiler does not report the edited line.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalizationPolicy {
    /// Exclude the pair as `unlocalized`.
    #[default]
    Strict,
    /// Label with the program-level error group instead.
    ProgramFallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetOptions {
    pub min_class_size: usize,
    pub localization: LocalizationPolicy,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            min_class_size: 10,
            localization: LocalizationPolicy::Strict,
        }
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("min_class_size must be at least 1")]
    MinClassSize,
    #[error("pair {pair_id}: {source}")]
    Compiler {
        pair_id: String,
        #[source]
        source: CompileError,
    },
}

/// Labeled examples with their frozen class table and template registry.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub examples: Vec<LabeledExample>,
    pub classes: ClassTable,
    pub templates: TemplateRegistry,
    pub skipped: Vec<SkipRecord>,
}

enum Compiled {
    Ok(SingleLineEdit, Vec<RawDiagnostic>),
    Skip(SkipRecord),
}

/// Labels every pair with its class key. `registry` interns new patterns
/// unless frozen, in which case unseen patterns become the unknown id.
type Labeled = (Vec<(LabeledExample, ClassKey)>, Vec<SkipRecord>);

/// Compilation runs in parallel; everything else is a sequential pass in
/// input order, so the result does not depend on scheduling.
fn label_pairs(
    pairs: &[ProgramPair],
    compiler: &Compiler,
    registry: &mut TemplateRegistry,
    policy: LocalizationPolicy,
) -> Result<Labeled, DatasetError> {
    let compiled: Vec<Result<Compiled, DatasetError>> = pairs
        .par_iter()
        .map(|pair| {
            let Some(edit) = detect_single_line_edit(pair) else {
                return Ok(Compiled::Skip(SkipRecord::new(&pair.pair_id, SkipReason::NotSingleLine)));
            };
            match compiler.compile(&pair.buggy_source) {
                Ok(out) => Ok(Compiled::Ok(edit, out.diagnostics)),
                Err(e @ (CompileError::Timeout(_) | CompileError::FixtureMiss(_))) => {
                    Ok(Compiled::Skip(SkipRecord {
                        pair_id: pair.pair_id.clone(),
                        reason: SkipReason::CompileFailed,
                        detail: Some(e.to_string()),
                    }))
                }
                Err(source) => Err(DatasetError::Compiler {
                    pair_id: pair.pair_id.clone(),
                    source,
                }),
            }
        })
        .collect();

    let mut skipped = Vec::new();
    let mut labeled = Vec::new();
    for (pair, result) in pairs.iter().zip(compiled) {
        let (edit, diags) = match result? {
            Compiled::Skip(rec) => {
                skipped.push(rec);
                continue;
            }
            Compiled::Ok(edit, diags) => (edit, diags),
        };
        if diags.is_empty() {
            skipped.push(SkipRecord::new(&pair.pair_id, SkipReason::NoError));
            continue;
        }
        let grouped = group_errors(&diags, |p| registry.intern(p));
        let templates = match (grouped.line(edit.line_no), policy) {
            (Some(g), _) => g.clone(),
            (None, LocalizationPolicy::ProgramFallback) => grouped.program.clone(),
            (None, LocalizationPolicy::Strict) => {
                skipped.push(SkipRecord::new(&pair.pair_id, SkipReason::Unlocalized));
                continue;
            }
        };

        let abstract_buggy = abstract_line(&edit.buggy_line, &build_symbol_table(&pair.buggy_source));
        let abstract_repaired =
            abstract_line(&edit.repaired_line, &build_symbol_table(&pair.repaired_source));
        let repair = diff_repair(&abstract_buggy, &abstract_repaired);
        if repair.is_empty() {
            skipped.push(SkipRecord::new(&pair.pair_id, SkipReason::WhitespaceOnly));
            continue;
        }
        let key = ClassKey::new(templates.clone(), repair.clone());
        labeled.push((
            LabeledExample {
                edit,
                abstract_buggy,
                abstract_repaired,
                error_templates: templates,
                repair,
                class_id: 0,
            },
            key,
        ));
    }
    Ok((labeled, skipped))
}

/// Runs diagnostics, localization, abstraction, diffing and class
/// construction over `pairs`.
///
/// Template ids are renumbered by how many surviving examples carry each
/// template, and class ids by descending class size (ties by class key).
pub fn build_dataset(
    pairs: &[ProgramPair],
    compiler: &Compiler,
    options: &DatasetOptions,
) -> Result<Dataset, DatasetError> {
    if options.min_class_size == 0 {
        return Err(DatasetError::MinClassSize);
    }
    let mut registry = TemplateRegistry::new();
    let (candidates, mut skipped) = label_pairs(pairs, compiler, &mut registry, options.localization)?;

    let mut class_sizes: HashMap<&ClassKey, usize> = HashMap::new();
    for (_, key) in &candidates {
        *class_sizes.entry(key).or_default() += 1;
    }
    let keep: Vec<bool> = candidates
        .iter()
        .map(|(_, key)| class_sizes[key] >= options.min_class_size)
        .collect();

    let mut template_counts: HashMap<TemplateId, usize> = HashMap::new();
    for ((ex, _), &kept) in candidates.iter().zip(&keep) {
        if kept {
            for &id in ex.error_templates.ids() {
                *template_counts.entry(id).or_default() += 1;
            }
        }
    }
    let (templates, remap) = registry.freeze_by_frequency(&template_counts);

    let mut final_counts: BTreeMap<ClassKey, usize> = BTreeMap::new();
    let mut survivors = Vec::new();
    for ((mut ex, key), kept) in candidates.into_iter().zip(keep) {
        if !kept {
            skipped.push(SkipRecord::new(&ex.edit.pair_id, SkipReason::SmallClass));
            continue;
        }
        let key = key.map_templates(|id| remap[&id]);
        ex.error_templates = key.templates.clone();
        *final_counts.entry(key.clone()).or_default() += 1;
        survivors.push((ex, key));
    }
    let classes = ClassTable::from_counts(final_counts, options.min_class_size);
    let examples = survivors
        .into_iter()
        .map(|(mut ex, key)| {
            ex.class_id = classes.id_of(&key).expect("surviving key has a class");
            ex
        })
        .collect();

    Ok(Dataset {
        examples,
        classes,
        templates,
        skipped,
    })
}

/// Labels `pairs` against an existing frozen registry and class table.
/// Pairs whose class key is not in `classes` are skipped as `unknown-class`.
pub fn label_with_classes(
    pairs: &[ProgramPair],
    compiler: &Compiler,
    templates: &TemplateRegistry,
    classes: &ClassTable,
    policy: LocalizationPolicy,
) -> Result<(Vec<LabeledExample>, Vec<SkipRecord>), DatasetError> {
    let mut registry = templates.clone();
    let (labeled, mut skipped) = label_pairs(pairs, compiler, &mut registry, policy)?;
    let mut examples = Vec::with_capacity(labeled.len());
    for (mut ex, key) in labeled {
        match classes.id_of(&key) {
            Some(id) => {
                ex.class_id = id;
                examples.push(ex);
            }
            None => skipped.push(SkipRecord::new(&ex.edit.pair_id, SkipReason::UnknownClass)),
        }
    }
    Ok((examples, skipped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::FixtureSet;
    use proptest::prelude::*;

    fn pair(id: &str, buggy: &str, repaired: &str) -> ProgramPair {
        ProgramPair {
            pair_id: id.into(),
            buggy_source: buggy.into(),
            repaired_source: repaired.into(),
            assignment_id: None,
        }
    }

    fn diag(line: u32, message: &str) -> RawDiagnostic {
        RawDiagnostic {
            line,
            column: 1,
            message: message.into(),
        }
    }

    #[test]
    fn loads_valid_and_reports_malformed() {
        let text = r#"{"pair_id":"a","buggy":"int x","repaired":"int x;"}
{"pair_id":"b","buggy":
{"pair_id":"c","buggy":"x","repaired":"y","assignment_id":"hw1"}
"#;
        let corpus = read_corpus(text.as_bytes()).unwrap();
        assert_eq!(corpus.pairs.len(), 2);
        assert_eq!(corpus.pairs[1].assignment_id.as_deref(), Some("hw1"));
        assert_eq!(corpus.skipped.len(), 1);
        assert_eq!(corpus.skipped[0].pair_id, "line:2");
        assert_eq!(corpus.skipped[0].reason, SkipReason::Malformed);
        assert!(read_corpus(&b""[..]).unwrap().pairs.is_empty());
    }

    #[test]
    fn duplicate_and_empty_records_are_skipped() {
        let text = r#"{"pair_id":"a","buggy":"x","repaired":"y"}
{"pair_id":"a","buggy":"x","repaired":"z"}
{"pair_id":"e","buggy":"  ","repaired":"z"}
"#;
        let corpus = read_corpus(text.as_bytes()).unwrap();
        assert_eq!(corpus.pairs.len(), 1);
        let reasons: Vec<_> = corpus.skipped.iter().map(|r| r.reason).collect();
        assert_eq!(reasons, [SkipReason::DuplicateId, SkipReason::EmptySource]);
    }

    #[test]
    fn skip_record_json_shape() {
        let json = serde_json::to_string(&SkipRecord::new("p1", SkipReason::NoError)).unwrap();
        assert_eq!(json, r#"{"pair_id":"p1","reason":"no-error"}"#);
    }

    #[test]
    fn single_line_edit_detection() {
        let base = "a\nb\nc\nd\ne\n";
        assert_eq!(detect_single_line_edit(&pair("p", base, base)), None);
        let edit = detect_single_line_edit(&pair("p", base, "a\nb\nC\nd\ne\n")).unwrap();
        assert_eq!((edit.line_no, edit.buggy_line.as_str(), edit.repaired_line.as_str()), (3, "c", "C"));
        assert_eq!(detect_single_line_edit(&pair("p", base, "a\nB\nc\nd\nE\n")), None);
        assert_eq!(detect_single_line_edit(&pair("p", base, "a\nb\nc\nd\n")), None);
        // trailing whitespace is ignored, leading is not
        assert_eq!(detect_single_line_edit(&pair("p", base, "a  \nb\nc\nd\ne\n")), None);
        assert_eq!(detect_single_line_edit(&pair("p", base, "a\n b\nc\nd\ne\n")).unwrap().line_no, 2);
    }

    const GOOD: &str = "int main() {\n    int a, b;\n    a = 1;\n    b = a + 2;\n    return b;\n}\n";

    fn drop_semicolon(line: usize) -> String {
        GOOD.lines()
            .enumerate()
            .map(|(i, l)| if i + 1 == line { l.trim_end_matches(';').to_string() } else { l.to_string() })
            .collect::<Vec<_>>()
            .join("\n")
            + "\n"
    }

    fn fixture_compiler(entries: &[(&str, Vec<RawDiagnostic>)]) -> Compiler {
        let mut set = FixtureSet::default();
        for (src, diags) in entries {
            set.insert(src, diags.clone());
        }
        Compiler::from_fixtures(set)
    }

    #[test]
    fn thirty_dropped_semicolons_form_one_class() {
        let buggy = drop_semicolon(4);
        let compiler = fixture_compiler(&[(&buggy, vec![diag(4, "expected ';' after expression")])]);
        let pairs: Vec<ProgramPair> = (0..30).map(|i| pair(&format!("p{i}"), &buggy, GOOD)).collect();
        let ds = build_dataset(&pairs, &compiler, &DatasetOptions::default()).unwrap();
        assert_eq!(ds.classes.len(), 1);
        assert_eq!(ds.examples.len(), 30);
        let class = ds.classes.get(0).unwrap();
        assert_eq!(class.frequency, 30);
        assert_eq!(class.key.to_string(), "E_1 +;");
        assert_eq!(ds.templates.pattern(1), Some("expected □_1 after expression"));
        assert!(ds.skipped.is_empty());
    }

    #[test]
    fn exclusion_reasons() {
        let semi4 = drop_semicolon(4);
        let semi3 = drop_semicolon(3);
        let spaced = GOOD.replace("a = 1;", "a =  1;");
        let compiler = fixture_compiler(&[
            (&semi4, vec![diag(4, "expected ';' after expression")]),
            (&semi3, vec![diag(5, "expected ';' after expression")]),
            (&spaced, vec![diag(3, "made up")]),
            (GOOD, vec![]),
        ]);
        let pairs = vec![
            pair("ok", &semi4, GOOD),
            pair("unloc", &semi3, GOOD),
            pair("ws", &spaced, GOOD),
            pair("clean", GOOD, &GOOD.replace("a = 1;", "a = 2;")),
            pair("multi", &semi4, &GOOD.replace("a = 1;", "a = 2;")),
            pair("miss", &GOOD.replacen("b;", "b", 1), GOOD),
        ];
        let opts = DatasetOptions {
            min_class_size: 1,
            ..DatasetOptions::default()
        };
        let ds = build_dataset(&pairs, &compiler, &opts).unwrap();
        assert_eq!(ds.examples.len(), 1);
        let reasons: Vec<(&str, SkipReason)> =
            ds.skipped.iter().map(|r| (r.pair_id.as_str(), r.reason)).collect();
        assert_eq!(
            reasons,
            [
                ("unloc", SkipReason::Unlocalized),
                ("ws", SkipReason::WhitespaceOnly),
                ("clean", SkipReason::NoError),
                ("multi", SkipReason::NotSingleLine),
                ("miss", SkipReason::CompileFailed),
            ]
        );

        let fallback = DatasetOptions {
            min_class_size: 1,
            localization: LocalizationPolicy::ProgramFallback,
        };
        let ds = build_dataset(&pairs, &compiler, &fallback).unwrap();
        assert_eq!(ds.examples.len(), 2);
        assert_eq!(ds.classes.len(), 1);
    }

    #[test]
    fn small_classes_are_dropped_and_ids_follow_frequency() {
        let semi4 = drop_semicolon(4);
        let semi3 = drop_semicolon(3);
        let undeclared = GOOD.replace("b = a + 2;", "b = q + 2;");
        let compiler = fixture_compiler(&[
            (&semi4, vec![diag(4, "expected ';' after expression")]),
            (&semi3, vec![diag(3, "expected ';' after expression")]),
            (&undeclared, vec![diag(4, "use of undeclared identifier 'q'")]),
        ]);
        let mut pairs = Vec::new();
        for i in 0..3 {
            pairs.push(pair(&format!("u{i}"), &undeclared, GOOD));
        }
        for i in 0..5 {
            pairs.push(pair(&format!("s{i}"), &semi4, GOOD));
            pairs.push(pair(&format!("t{i}"), &semi3, GOOD));
        }
        let opts = DatasetOptions {
            min_class_size: 4,
            ..DatasetOptions::default()
        };
        let ds = build_dataset(&pairs, &compiler, &opts).unwrap();
        assert_eq!(ds.classes.len(), 1);
        assert_eq!(ds.examples.len(), 10);
        assert!(ds.examples.iter().all(|e| !e.edit.pair_id.starts_with('u')));
        assert_eq!(ds.skipped.iter().filter(|r| r.reason == SkipReason::SmallClass).count(), 3);
        // the undeclared template occurred only in dropped examples
        assert_eq!(ds.templates.len(), 1);

        let opts = DatasetOptions {
            min_class_size: 1,
            ..DatasetOptions::default()
        };
        let ds = build_dataset(&pairs, &compiler, &opts).unwrap();
        let freqs: Vec<usize> = ds.classes.iter().map(|c| c.frequency).collect();
        assert_eq!(freqs, [10, 3]);
        // the semicolon template is more frequent, so it becomes E_1
        assert_eq!(ds.templates.pattern(1), Some("expected □_1 after expression"));
        assert_eq!(ds.classes.get(1).unwrap().key.to_string(), "E_2 +INT -INVALID");
    }

    #[test]
    fn relabeling_with_frozen_classes() {
        let semi4 = drop_semicolon(4);
        let undeclared = GOOD.replace("b = a + 2;", "b = q + 2;");
        let compiler = fixture_compiler(&[
            (&semi4, vec![diag(4, "expected ';' after expression")]),
            (&undeclared, vec![diag(4, "use of undeclared identifier 'q'")]),
        ]);
        let train: Vec<ProgramPair> = (0..3).map(|i| pair(&format!("s{i}"), &semi4, GOOD)).collect();
        let opts = DatasetOptions {
            min_class_size: 1,
            ..DatasetOptions::default()
        };
        let ds = build_dataset(&train, &compiler, &opts).unwrap();
        let eval = vec![pair("s", &semi4, GOOD), pair("u", &undeclared, GOOD)];
        let (examples, skipped) =
            label_with_classes(&eval, &compiler, &ds.templates, &ds.classes, LocalizationPolicy::Strict)
                .unwrap();
        assert_eq!(examples.len(), 1);
        assert_eq!(examples[0].class_id, 0);
        assert_eq!(examples[0].error_templates, ds.examples[0].error_templates);
        assert_eq!(skipped, [SkipRecord::new("u", SkipReason::UnknownClass)]);
    }

    #[test]
    fn zero_min_class_size_rejected() {
        let opts = DatasetOptions {
            min_class_size: 0,
            ..DatasetOptions::default()
        };
        assert!(matches!(
            build_dataset(&[], &fixture_compiler(&[]), &opts),
            Err(DatasetError::MinClassSize)
        ));
    }

    fn lines_strategy() -> impl Strategy<Value = Vec<String>> {
        proptest::collection::vec("[ab ]{0,3}", 0..6)
    }

    proptest! {
        #[test]
        fn single_line_edit_iff_one_differing_line(a in lines_strategy(), b in lines_strategy()) {
            let p = pair("p", &a.join("\n"), &b.join("\n"));
            let la: Vec<&str> = p.buggy_source.lines().collect();
            let lb: Vec<&str> = p.repaired_source.lines().collect();
            let differing = la.iter().zip(&lb).filter(|(x, y)| x.trim_end() != y.trim_end()).count();
            let expected = la.len() == lb.len() && differing == 1;
            prop_assert_eq!(detect_single_line_edit(&p).is_some(), expected);
        }
    }
}
