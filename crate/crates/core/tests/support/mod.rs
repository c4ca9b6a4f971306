//! Shared helpers for the core integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use tegcer_core::corpus::{build_dataset, Dataset, DatasetOptions, ProgramPair};
use tegcer_core::diagnostics::{Compiler, CompilerConfig};
use tegcer_core::synth::{generate_corpus, SynthConfig};

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

pub fn data_file(name: &str) -> String {
    std::fs::read_to_string(data_dir().join(name)).unwrap()
}

/// Compiler answering from the recorded clang diagnostics of the
/// synthetic corpus and the sample programs.
pub fn fixture_compiler() -> Compiler {
    let config = CompilerConfig::default().with_fixtures(data_dir().join("synth_fixtures.jsonl"));
    Compiler::new(config).unwrap()
}

/// Synthetic corpus the fixtures were recorded for.
pub fn synth_pairs() -> Vec<ProgramPair> {
    generate_corpus(&SynthConfig { pairs: 1500, seed: 7 })
}

pub fn synth_dataset() -> (Vec<ProgramPair>, Dataset) {
    let pairs = synth_pairs();
    let dataset = build_dataset(&pairs, &fixture_compiler(), &DatasetOptions::default()).unwrap();
    (pairs, dataset)
}

/// Signed token sets of the shortest insert/delete edit script that keeps
/// the lexicographically smallest longest common subsequence, found by
/// enumerating every subsequence of `a`.
pub fn oracle_repair(a: &[String], b: &[String]) -> (BTreeSet<String>, BTreeSet<String>) {
    assert!(a.len() <= 16, "brute force oracle is exponential");
    let mut best: Option<Vec<&String>> = None;
    for mask in 0u32..(1 << a.len()) {
        let sub: Vec<&String> = (0..a.len()).filter(|i| mask & (1 << i) != 0).map(|i| &a[i]).collect();
        if !is_subsequence(&sub, b) {
            continue;
        }
        let better = match &best {
            None => true,
            Some(cur) => sub.len() > cur.len() || (sub.len() == cur.len() && sub < *cur),
        };
        if better {
            best = Some(sub);
        }
    }
    let common = best.unwrap_or_default();
    assert_eq!(common.len(), lcs_len(a, b));
    (surplus(b, &common), surplus(a, &common))
}

fn is_subsequence(sub: &[&String], seq: &[String]) -> bool {
    let mut it = seq.iter();
    sub.iter().all(|s| it.any(|t| t == *s))
}

/// Textbook LCS length table.
fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut dp = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            dp[i][j] = if a[i - 1] == b[j - 1] {
                dp[i - 1][j - 1] + 1
            } else {
                dp[i - 1][j].max(dp[i][j - 1])
            };
        }
    }
    dp[a.len()][b.len()]
}

/// Tokens occurring more often in `seq` than in `common`.
fn surplus(seq: &[String], common: &[&String]) -> BTreeSet<String> {
    let mut counts: BTreeMap<&String, isize> = BTreeMap::new();
    for t in seq {
        *counts.entry(t).or_default() += 1;
    }
    for t in common {
        *counts.entry(t).or_default() -= 1;
    }
    counts.into_iter().filter(|(_, n)| *n > 0).map(|(t, _)| t.clone()).collect()
}
