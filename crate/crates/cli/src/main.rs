//! `tegcer` command-line tool.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use tracing_subscriber::EnvFilter;

use tegcer_client::Client;
use tegcer_core::classifier::{evaluate, NetworkConfig, REPORTED_K};
use tegcer_core::corpus::{
    build_dataset, label_with_classes, load_corpus, write_corpus, write_skip_report, DatasetOptions,
    LocalizationPolicy, SkipRecord,
};
use tegcer_core::diagnostics::{Compiler, CompilerConfig, FixtureSet};
use tegcer_core::encoder::FeatureVector;
use tegcer_core::model::{example_tokens, train_model, TrainedModel};
use tegcer_core::repair::ClassId;
use tegcer_core::suggester::{suggest, SuggestOptions, Suggestion};
use tegcer_core::synth::{generate_corpus, SynthConfig};
use tegcer_server::{serve, AppState, ServiceConfig};

#[derive(Debug, Parser)]
#[command(name = "tegcer", version, about = "Example-based feedback for C compilation errors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a dataset from a corpus of program pairs and train a model.
    Train(TrainArgs),
    /// Score a model on a labelled corpus; prints Pred@k and a per-class CSV.
    Eval(EvalArgs),
    /// Compile a program and print example fixes for each failing line.
    Suggest(SuggestArgs),
    /// Run the HTTP feedback service.
    Serve(ServeArgs),
    /// Write a synthetic corpus of single-line mutations.
    Synth(SynthArgs),
    /// Compile sources with the real compiler and record their diagnostics.
    RecordFixtures(RecordArgs),
}

#[derive(Debug, Args)]
struct CompilerArgs {
    /// Answer compiles from a recorded fixture file instead of running the compiler.
    #[arg(long)]
    fixtures: Option<PathBuf>,
}

impl CompilerArgs {
    fn compiler(&self) -> Result<Compiler> {
        let mut config = CompilerConfig::from_env();
        if let Some(path) = &self.fixtures {
            config = config.with_fixtures(path);
        }
        Compiler::new(config).context("configuring compiler")
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    min_class_size: usize,
    #[arg(long, default_value_t = 6)]
    epochs: usize,
    #[arg(long, default_value_t = 512)]
    hidden: usize,
    #[arg(long, default_value_t = 0.2)]
    dropout: f32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Label edits on lines the compiler did not report with the program's errors.
    #[arg(long)]
    program_fallback: bool,
    /// Write one JSON line per excluded pair.
    #[arg(long)]
    skip_report: Option<PathBuf>,
    #[command(flatten)]
    compiler: CompilerArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[command(flatten)]
    compiler: CompilerArgs,
}

#[derive(Debug, Args)]
struct SuggestArgs {
    /// Program to check.
    file: PathBuf,
    /// Model file; required unless --server is given.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Ask a running service instead of loading a model locally.
    #[arg(long)]
    server: Option<String>,
    #[arg(long, default_value_t = 3)]
    top_k: usize,
    /// Examples shown per line.
    #[arg(long, default_value_t = 3)]
    examples: usize,
    /// Number of top-ranked classes that may supply examples.
    #[arg(long, default_value_t = 3)]
    fallback: usize,
    /// Show only repaired lines.
    #[arg(long)]
    repaired_only: bool,
    /// Print the suggestions as JSON.
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    compiler: CompilerArgs,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: String,
    #[command(flatten)]
    compiler: CompilerArgs,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 1500)]
    pairs: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RecordArgs {
    /// Corpus whose buggy and repaired programs are recorded.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Extra C files to record.
    #[arg(long = "source")]
    sources: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Compiler command; `{file}` is replaced by the source path. Defaults to TEGCER_CC or cc.
    #[arg(long)]
    command: Option<String>,
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Train(args) => train(args),
        Command::Eval(args) => eval(args),
        Command::Suggest(args) => suggest_cmd(args),
        Command::Serve(args) => serve_cmd(args),
        Command::Synth(args) => synth(args),
        Command::RecordFixtures(args) => record(args),
    }
}

fn read_pairs(path: &Path) -> Result<(Vec<tegcer_core::corpus::ProgramPair>, Vec<SkipRecord>)> {
    let loaded = load_corpus(path).with_context(|| format!("reading corpus {}", path.display()))?;
    if !loaded.skipped.is_empty() {
        tracing::warn!(count = loaded.skipped.len(), "corpus records skipped while loading");
    }
    Ok((loaded.pairs, loaded.skipped))
}

fn train(args: TrainArgs) -> Result<()> {
    let (pairs, mut skipped) = read_pairs(&args.corpus)?;
    let compiler = args.compiler.compiler()?;
    let options = DatasetOptions {
        min_class_size: args.min_class_size,
        localization: if args.program_fallback {
            LocalizationPolicy::ProgramFallback
        } else {
            LocalizationPolicy::Strict
        },
    };
    let dataset = build_dataset(&pairs, &compiler, &options)?;
    skipped.extend(dataset.skipped.iter().cloned());
    if let Some(path) = &args.skip_report {
        write_skip_report(&skipped, path).with_context(|| format!("writing {}", path.display()))?;
    }
    eprintln!(
        "dataset: {} examples, {} classes, {} templates, {} pairs skipped",
        dataset.examples.len(),
        dataset.classes.len(),
        dataset.templates.len(),
        skipped.len()
    );

    let config = NetworkConfig {
        hidden_units: args.hidden,
        dropout_rate: args.dropout,
        epochs: args.epochs,
        seed: args.seed,
        ..NetworkConfig::default()
    };
    let report = train_model(&dataset, &config)?;
    let model = report.model;
    model.save(&args.out)?;
    let m = &model.metrics;
    eprintln!(
        "trained: best epoch {}, train {}, validation {}",
        m.best_epoch, m.train_size, m.validation_size
    );
    if let Some(test) = &m.test {
        for k in REPORTED_K {
            println!("Pred@{k},{:.4}", test.pred_at(k));
        }
    }
    eprintln!("model written to {}", args.out.display());
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let model = TrainedModel::load(&args.model)?;
    let (pairs, _) = read_pairs(&args.corpus)?;
    let compiler = args.compiler.compiler()?;
    let (examples, skipped) = label_with_classes(
        &pairs,
        &compiler,
        &model.templates,
        &model.classes,
        LocalizationPolicy::Strict,
    )?;
    if examples.is_empty() {
        bail!("no example in the corpus maps to a class of this model");
    }
    let features: Vec<(FeatureVector, ClassId)> = examples
        .iter()
        .map(|ex| (model.vocab.vectorize(&example_tokens(ex)), ex.class_id))
        .collect();
    let items: Vec<(&FeatureVector, ClassId)> = features.iter().map(|(x, y)| (x, *y)).collect();
    let report = evaluate(&model.network, &items);
    eprintln!("evaluated {} examples, {} pairs skipped", examples.len(), skipped.len());

    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "metric,value")?;
    for k in REPORTED_K {
        writeln!(out, "Pred@{k},{:.4}", report.pred_at(k))?;
    }
    writeln!(out)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["class_id", "class_key", "support", "precision", "recall", "top_confusion"])?;
    for c in &report.per_class {
        let key = model.classes.get(c.class_id).map(|cl| cl.key.to_string()).unwrap_or_default();
        w.write_record([
            c.class_id.to_string(),
            key,
            c.support.to_string(),
            format!("{:.4}", c.precision),
            format!("{:.4}", c.recall),
            c.top_confusion.map(|t| t.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn suggest_cmd(args: SuggestArgs) -> Result<()> {
    let source = std::fs::read_to_string(&args.file)
        .with_context(|| format!("reading {}", args.file.display()))?;
    let options = SuggestOptions {
        top_k: args.top_k,
        examples_per_page: args.examples,
        class_fallback_n: args.fallback,
        repaired_only: args.repaired_only,
    };
    let suggestions = match (&args.server, &args.model) {
        (Some(url), _) => remote_suggestions(url, &source, &options)?,
        (None, Some(path)) => {
            let model = TrainedModel::load(path)?;
            let compiler = args.compiler.compiler()?;
            suggest(&source, &model, &compiler, &options)?
        }
        (None, None) => bail!("either --model or --server is required"),
    };

    if args.json {
        println!("{}", serde_json::to_string_pretty(&suggestions)?);
        return Ok(());
    }
    if suggestions.is_empty() {
        println!("{}: no compilation errors", args.file.display());
    }
    for s in &suggestions {
        print_suggestion(&args.file, s);
    }
    Ok(())
}

/// Fetches the first page from the service and pages through the rest
/// until `examples_per_page` examples per line are collected.
fn remote_suggestions(url: &str, source: &str, options: &SuggestOptions) -> Result<Vec<Suggestion>> {
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let client = Client::new(url);
        let response = client.feedback(source, Some(1)).await?;
        let mut out = Vec::with_capacity(response.suggestions.len());
        for line in response.suggestions {
            let mut s = line.suggestion;
            s.predicted.truncate(options.top_k);
            while s.has_more && s.examples.len() < options.examples_per_page {
                let page = client.examples(&line.line_token, s.examples.len()).await?;
                s.examples.extend(page.examples);
                s.has_more = page.has_more;
            }
            s.examples.truncate(options.examples_per_page);
            if options.repaired_only {
                for e in &mut s.examples {
                    e.erroneous = None;
                }
            }
            out.push(s);
        }
        Ok(out)
    })
}

fn print_suggestion(file: &Path, s: &Suggestion) {
    for d in &s.diagnostics {
        println!("{}:{}: error: {d}", file.display(), s.line_no);
    }
    let ranked: Vec<String> = s
        .predicted
        .iter()
        .map(|p| format!("{} ({:.2})", p.class_key, p.probability))
        .collect();
    println!("  likely repairs: {}", ranked.join(", "));
    if s.examples.is_empty() {
        println!("  no examples available");
    }
    for (i, e) in s.examples.iter().enumerate() {
        println!("  example {} (seen {}x):", i + 1, e.frequency);
        if let Some(bad) = &e.erroneous {
            println!("    - {bad}");
        }
        println!("    + {}", e.repaired);
    }
    if s.has_more {
        println!("  more examples available");
    }
}

fn serve_cmd(args: ServeArgs) -> Result<()> {
    let model = TrainedModel::load(&args.model)?;
    let compiler = args.compiler.compiler()?;
    let state = AppState::new(Some(model), compiler, ServiceConfig::default());
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&args.addr)
            .await
            .with_context(|| format!("binding {}", args.addr))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        serve(listener, state).await?;
        Ok(())
    })
}

fn synth(args: SynthArgs) -> Result<()> {
    let pairs = generate_corpus(&SynthConfig {
        pairs: args.pairs,
        seed: args.seed,
    });
    write_corpus(&pairs, &args.out).with_context(|| format!("writing {}", args.out.display()))?;
    eprintln!("wrote {} pairs to {}", pairs.len(), args.out.display());
    Ok(())
}

fn record(args: RecordArgs) -> Result<()> {
    let mut config = CompilerConfig::from_env();
    if let Some(cmd) = args.command {
        config.command = cmd;
    }
    let compiler = Compiler::new(config)?;

    let mut sources = BTreeSet::new();
    if let Some(path) = &args.corpus {
        for pair in read_pairs(path)?.0 {
            sources.insert(pair.buggy_source);
            sources.insert(pair.repaired_source);
        }
    }
    for path in &args.sources {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        sources.insert(text);
    }
    if sources.is_empty() {
        bail!("nothing to record: pass --corpus and/or --source");
    }

    let sources: Vec<String> = sources.into_iter().collect();
    let outputs = sources
        .par_iter()
        .map(|src| compiler.compile(src).map(|o| o.diagnostics))
        .collect::<Result<Vec<_>, _>>()?;
    let mut fixtures = FixtureSet::default();
    for (src, diags) in sources.iter().zip(outputs) {
        fixtures.insert(src, diags);
    }
    fixtures
        .write(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    eprintln!("recorded {} programs to {}", fixtures.len(), args.out.display());
    Ok(())
}
