//! Compiler invocation, diagnostic parsing and error templates.
//!
//! Diagnostics are read from the `file:line:col: severity: message` text
//! format shared by GCC and Clang. Only `error` and `fatal error` lines are
//! kept. A fixture file keyed by the SHA-256 of the program text can stand
//! in for the compiler entirely.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub type TemplateId = u32;

/// Id returned by a frozen registry for patterns it has never seen.
pub const UNKNOWN_TEMPLATE: TemplateId = 0;

pub const DEFAULT_COMMAND: &str = "cc -fsyntax-only -std=c99 {file}";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);
pub const DEFAULT_STDERR_CAP: usize = 1 << 20;

/// Placeholder glyph used in generalized messages.
pub const PLACEHOLDER: char = '\u{25A1}';

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RawDiagnostic {
    pub line: u32,
    #[serde(rename = "col", default)]
    pub column: u32,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum CompileError {
    #[error("compiler configuration error: {0}")]
    Config(String),
    #[error("compiler timed out after {0:?}")]
    Timeout(Duration),
    #[error("no recorded diagnostics for source {0}")]
    FixtureMiss(String),
    #[error("fixture file {path}:{line}: {reason}")]
    Fixture { path: PathBuf, line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct CompilerConfig {
    /// Whitespace-separated command; `{file}` is replaced by the source path
    /// (appended when absent).
    pub command: String,
    pub timeout: Duration,
    pub fixture_path: Option<PathBuf>,
    pub stderr_cap: usize,
}

impl Default for CompilerConfig {
    fn default() -> Self {
        Self {
            command: DEFAULT_COMMAND.to_string(),
            timeout: DEFAULT_TIMEOUT,
            fixture_path: None,
            stderr_cap: DEFAULT_STDERR_CAP,
        }
    }
}

impl CompilerConfig {
    /// Default config with `TEGCER_CC` applied when set.
    pub fn from_env() -> Self {
        let mut config = Self::default();
        if let Ok(cmd) = std::env::var("TEGCER_CC") {
            if !cmd.trim().is_empty() {
                config.command = cmd;
            }
        }
        config
    }

    pub fn with_fixtures(mut self, path: impl Into<PathBuf>) -> Self {
        self.fixture_path = Some(path.into());
        self
    }
}

/// Result of compiling one program.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CompileOutput {
    pub diagnostics: Vec<RawDiagnostic>,
    /// stderr lines that were neither a diagnostic header nor blank.
    pub skipped_lines: usize,
}

impl CompileOutput {
    pub fn compiled_ok(&self) -> bool {
        self.diagnostics.is_empty()
    }
}

pub fn source_digest(source: &str) -> String {
    hex::encode(Sha256::digest(source.as_bytes()))
}

#[derive(Debug, Serialize, Deserialize)]
struct FixtureRecord {
    source_sha256: String,
    diagnostics: Vec<RawDiagnostic>,
}

/// Recorded diagnostics keyed by source digest.
#[derive(Debug, Clone, Default)]
pub struct FixtureSet {
    entries: BTreeMap<String, Vec<RawDiagnostic>>,
}

impl FixtureSet {
    pub fn load(path: &Path) -> Result<Self, CompileError> {
        let reader = BufReader::new(File::open(path)?);
        let mut entries = BTreeMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: FixtureRecord =
                serde_json::from_str(&line).map_err(|e| CompileError::Fixture {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    reason: e.to_string(),
                })?;
            entries.insert(record.source_sha256, record.diagnostics);
        }
        Ok(Self { entries })
    }

    pub fn insert(&mut self, source: &str, diagnostics: Vec<RawDiagnostic>) {
        self.entries.insert(source_digest(source), diagnostics);
    }

    pub fn get(&self, source: &str) -> Option<&[RawDiagnostic]> {
        self.entries.get(&source_digest(source)).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(File::create(path)?);
        for (digest, diagnostics) in &self.entries {
            let record = FixtureRecord {
                source_sha256: digest.clone(),
                diagnostics: diagnostics.clone(),
            };
            serde_json::to_writer(&mut out, &record)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }
}

/// Runs the configured compiler, or answers from fixtures when a fixture
/// file is configured. Fixture mode never falls back to the real compiler.
#[derive(Debug, Clone)]
pub struct Compiler {
    config: CompilerConfig,
    fixtures: Option<FixtureSet>,
}

impl Compiler {
    pub fn new(config: CompilerConfig) -> Result<Self, CompileError> {
        let fixtures = match &config.fixture_path {
            Some(path) => Some(FixtureSet::load(path)?),
            None => None,
        };
        Ok(Self { config, fixtures })
    }

    pub fn from_fixtures(fixtures: FixtureSet) -> Self {
        Self {
            config: CompilerConfig::default(),
            fixtures: Some(fixtures),
        }
    }

    pub fn config(&self) -> &CompilerConfig {
        &self.config
    }

    pub fn compile(&self, source: &str) -> Result<CompileOutput, CompileError> {
        match &self.fixtures {
            Some(fixtures) => fixtures
                .get(source)
                .map(|diags| CompileOutput {
                    diagnostics: diags.to_vec(),
                    skipped_lines: 0,
                })
                .ok_or_else(|| CompileError::FixtureMiss(source_digest(source))),
            None => run_command(&self.config, source),
        }
    }
}

fn run_command(config: &CompilerConfig, source: &str) -> Result<CompileOutput, CompileError> {
    let mut parts: Vec<String> = config.command.split_whitespace().map(str::to_string).collect();
    if parts.is_empty() {
        return Err(CompileError::Config("empty compiler command".into()));
    }

    let mut file = tempfile::Builder::new().prefix("tegcer-").suffix(".c").tempfile()?;
    file.write_all(source.as_bytes())?;
    file.flush()?;
    let file_arg = file.path().to_string_lossy().into_owned();

    if parts.iter().any(|p| p.contains("{file}")) {
        for p in parts.iter_mut() {
            *p = p.replace("{file}", &file_arg);
        }
    } else {
        parts.push(file_arg);
    }

    let mut child = Command::new(&parts[0])
        .args(&parts[1..])
        .env("LC_ALL", "C")
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => {
                CompileError::Config(format!("compiler binary `{}` not found", parts[0]))
            }
            _ => CompileError::Io(e),
        })?;

    let stderr = child.stderr.take().expect("stderr is piped");
    let cap = config.stderr_cap;
    let reader = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let mut limited = stderr.take(cap as u64);
        let _ = limited.read_to_end(&mut buf);
        // drain the rest so the child never blocks on a full pipe
        let _ = std::io::copy(&mut limited.into_inner(), &mut std::io::sink());
        buf
    });

    let started = Instant::now();
    loop {
        if child.try_wait()?.is_some() {
            break;
        }
        if started.elapsed() >= config.timeout {
            let _ = child.kill();
            let _ = child.wait();
            return Err(CompileError::Timeout(config.timeout));
        }
        std::thread::sleep(Duration::from_millis(2));
    }

    let bytes = reader.join().unwrap_or_default();
    Ok(parse_diagnostics(&String::from_utf8_lossy(&bytes)))
}

static DIAGNOSTIC_LINE: Lazy<Regex> = Lazy::new(|| {
    Regex::new(
        r"^(?P<file>.+?):(?P<line>\d+):(?:(?P<col>\d+):)?\s*(?P<sev>fatal error|error|warning|note|remark):\s*(?P<msg>.*?)\s*$",
    )
    .unwrap()
});

/// Parses compiler stderr, keeping error-severity diagnostics in report order.
pub fn parse_diagnostics(stderr: &str) -> CompileOutput {
    let mut out = CompileOutput::default();
    for line in stderr.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let Some(caps) = DIAGNOSTIC_LINE.captures(line) else {
            out.skipped_lines += 1;
            continue;
        };
        let severity = &caps["sev"];
        if severity != "error" && severity != "fatal error" {
            continue;
        }
        let Ok(line_no) = caps["line"].parse::<u32>() else {
            out.skipped_lines += 1;
            continue;
        };
        if line_no == 0 {
            out.skipped_lines += 1;
            continue;
        }
        let column = caps
            .name("col")
            .and_then(|m| m.as_str().parse().ok())
            .unwrap_or(0);
        out.diagnostics.push(RawDiagnostic {
            line: line_no,
            column,
            message: caps["msg"].to_string(),
        });
    }
    if out.skipped_lines > 0 {
        tracing::debug!(skipped = out.skipped_lines, "non-diagnostic stderr lines");
    }
    out
}

/// Replaces every quoted segment of a compiler message with a numbered
/// placeholder (`□_1`, `□_2`, ...). A quote with no matching partner is
/// kept verbatim together with everything after it.
pub fn generalize(message: &str) -> String {
    let mut out = String::with_capacity(message.len());
    let mut next = 1;
    let mut rest = message;
    while let Some(start) = rest.find(['\'', '"']) {
        let quote = rest.as_bytes()[start] as char;
        let after = &rest[start + 1..];
        let Some(len) = after.find(quote) else {
            break;
        };
        out.push_str(&rest[..start]);
        out.push(PLACEHOLDER);
        out.push('_');
        out.push_str(&next.to_string());
        next += 1;
        rest = &after[len + 1..];
    }
    out.push_str(rest);
    out
}

/// Interns generalized messages as template ids. Ids start at 1; id 0 is
/// [`UNKNOWN_TEMPLATE`]. Once frozen, unseen patterns resolve to
/// [`UNKNOWN_TEMPLATE`] instead of allocating.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TemplateRegistry {
    patterns: Vec<String>,
    index: HashMap<String, TemplateId>,
    frozen: bool,
}

impl TemplateRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Frozen registry whose pattern `i` gets id `i + 1`.
    pub fn from_patterns(patterns: Vec<String>) -> Self {
        let index = patterns
            .iter()
            .enumerate()
            .map(|(i, p)| (p.clone(), i as TemplateId + 1))
            .collect();
        Self {
            patterns,
            index,
            frozen: true,
        }
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn patterns(&self) -> &[String] {
        &self.patterns
    }

    pub fn pattern(&self, id: TemplateId) -> Option<&str> {
        if id == UNKNOWN_TEMPLATE {
            return None;
        }
        self.patterns.get(id as usize - 1).map(String::as_str)
    }

    pub fn lookup(&self, pattern: &str) -> TemplateId {
        self.index.get(pattern).copied().unwrap_or(UNKNOWN_TEMPLATE)
    }

    pub fn intern(&mut self, pattern: &str) -> TemplateId {
        if let Some(&id) = self.index.get(pattern) {
            return id;
        }
        if self.frozen {
            return UNKNOWN_TEMPLATE;
        }
        self.patterns.push(pattern.to_string());
        let id = self.patterns.len() as TemplateId;
        self.index.insert(pattern.to_string(), id);
        id
    }

    /// Renumbers the templates with a non-zero count by descending count
    /// (ties by pattern text) and freezes the result. Returns the new
    /// registry and the old → new id map; templates with no count are dropped.
    pub fn freeze_by_frequency(
        &self,
        counts: &HashMap<TemplateId, usize>,
    ) -> (TemplateRegistry, HashMap<TemplateId, TemplateId>) {
        let mut ranked: Vec<(TemplateId, usize, &str)> = counts
            .iter()
            .filter(|(&id, &n)| n > 0 && id != UNKNOWN_TEMPLATE)
            .filter_map(|(&id, &n)| self.pattern(id).map(|p| (id, n, p)))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.2.cmp(b.2)));

        let remap = ranked
            .iter()
            .enumerate()
            .map(|(i, (old, _, _))| (*old, i as TemplateId + 1))
            .collect();
        let patterns = ranked.into_iter().map(|(_, _, p)| p.to_string()).collect();
        (Self::from_patterns(patterns), remap)
    }
}

/// A sorted, duplicate-free set of template ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ErrorGroup(Vec<TemplateId>);

impl ErrorGroup {
    pub fn ids(&self) -> &[TemplateId] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn contains(&self, id: TemplateId) -> bool {
        self.0.binary_search(&id).is_ok()
    }

    pub fn map_ids(&self, mut f: impl FnMut(TemplateId) -> TemplateId) -> ErrorGroup {
        self.0.iter().map(|&id| f(id)).collect()
    }
}

impl FromIterator<TemplateId> for ErrorGroup {
    fn from_iter<I: IntoIterator<Item = TemplateId>>(iter: I) -> Self {
        let mut ids: Vec<TemplateId> = iter.into_iter().collect();
        ids.sort_unstable();
        ids.dedup();
        ErrorGroup(ids)
    }
}

/// Program-level and per-line error groups for one compilation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroupedErrors {
    pub program: ErrorGroup,
    pub per_line: BTreeMap<u32, ErrorGroup>,
}

impl GroupedErrors {
    pub fn line(&self, line: u32) -> Option<&ErrorGroup> {
        self.per_line.get(&line)
    }
}

/// Groups diagnostics by program and by line. `resolve` maps a generalized
/// pattern to its template id (interning or frozen lookup).
pub fn group_errors(
    diags: &[RawDiagnostic],
    mut resolve: impl FnMut(&str) -> TemplateId,
) -> GroupedErrors {
    let mut per_line: BTreeMap<u32, Vec<TemplateId>> = BTreeMap::new();
    let mut all = Vec::with_capacity(diags.len());
    for d in diags {
        let id = resolve(&generalize(&d.message));
        per_line.entry(d.line).or_default().push(id);
        all.push(id);
    }
    GroupedErrors {
        program: all.into_iter().collect(),
        per_line: per_line
            .into_iter()
            .map(|(line, ids)| (line, ids.into_iter().collect()))
            .collect(),
    }
}
