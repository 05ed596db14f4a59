//! Command-line entry point: ingest → train-lm → build-negatives → train → sweep/report.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 invalid
//! configuration (the message names the offending field).

use std::cell::RefCell;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::config::{ConfigError, PipelineConfig, ScorerKind};
use crate::contrast::{
    build_examples, corpus_vocab, read_checkpoint, train_dynamic, write_checkpoint, write_loss_csv, Checkpoint,
    ModelConfig, ToySeq2Seq, TrainError, TrainLog, Vocab,
};
use crate::corpus::{load_corpus, write_alignments, write_corpus, Alignment, Document, LoadMode};
use crate::embed::{load_embeddings, EmbeddingTable};
use crate::evalx::{margin_stats, ratio_sweep, report_negative_quality, sweep_items, write_margin_csv};
use crate::lfn::{build_corpus_negatives, read_negatives, write_negatives, Diagnostic, NegativeSample};
use crate::lm::protocol::serve;
use crate::lm::{train_on_documents, NGramConfig, NGramModel, ScorerSpec};
use crate::selftest;
use crate::synth::{self, SynthConfig};

pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "factcon",
    version,
    about = "Factual negative construction and contrastive training"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// INI config file; flags override its values
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for negative construction and training
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Replacement ratio for negative construction
    #[arg(long, global = true)]
    ratio: Option<f64>,
    /// Scorer backend: native or external
    #[arg(long, global = true, value_name = "KIND")]
    scorer: Option<String>,
    /// External scorer argv, whitespace separated
    #[arg(long, global = true, value_name = "ARGV")]
    scorer_cmd: Option<String>,
    #[arg(long, global = true, value_name = "PATH")]
    corpus: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    embeddings: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Trained n-gram model (lm.json)
    #[arg(long, global = true, value_name = "PATH")]
    lm: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    negatives: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    checkpoint: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Normalize a JSONL corpus and write oracle alignments
    Ingest,
    /// Train the native n-gram scorer
    TrainLm,
    /// Construct one negative per summary sentence
    BuildNegatives {
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long, default_value_t = 0)]
        epoch: u64,
    },
    /// Train the toy encoder-decoder with the configured objective
    Train,
    /// Fact score of perturbed summaries across replacement ratios
    Sweep,
    /// Negative-quality report
    Report,
    /// Brute-force oracles, gradient checks and loss fixed points
    Selftest,
    /// Write a synthetic planted-facts corpus and embeddings
    Synth {
        #[arg(long, default_value_t = 200)]
        docs: usize,
    },
    /// Answer scorer protocol requests on stdin with the native model
    #[command(hide = true)]
    Serve,
}

impl Common {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let mut out = Vec::new();
        let mut push = |field, v: Option<String>| {
            if let Some(v) = v {
                out.push((field, v));
            }
        };
        push("lfn.seed", self.seed.map(|s| s.to_string()));
        push("train.seed", self.seed.map(|s| s.to_string()));
        push("lfn.replacement_ratio", self.ratio.map(|r| r.to_string()));
        push("scorer.kind", self.scorer.clone());
        push("scorer.command", self.scorer_cmd.clone());
        push("paths.corpus", path(&self.corpus));
        push("paths.embeddings", path(&self.embeddings));
        push("paths.out", path(&self.out));
        push("paths.lm", path(&self.lm));
        push("paths.negatives", path(&self.negatives));
        push("paths.checkpoint", path(&self.checkpoint));
        out
    }

    fn load(&self) -> Result<PipelineConfig, ConfigError> {
        let mut cfg = match &self.config {
            Some(p) if !p.exists() => {
                return Err(ConfigError::new("config", format!("{} does not exist", p.display())))
            }
            Some(p) => PipelineConfig::from_file(p)?,
            None => PipelineConfig::default(),
        };
        for (field, value) in self.overrides() {
            cfg.set(field, &value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("LFN_LOG", "warn")).try_init();
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => match e.downcast_ref::<ConfigError>() {
            Some(ce) => {
                eprintln!("error: {ce}");
                EXIT_CONFIG
            }
            None => {
                eprintln!("error: {e:#}");
                EXIT_RUNTIME
            }
        },
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    let cfg = cli.common.load()?;
    match &cli.command {
        Command::Ingest => ingest(&cfg),
        Command::TrainLm => train_lm(&cfg),
        Command::BuildNegatives { workers, epoch } => build_negatives(&cfg, *workers, *epoch),
        Command::Train => train(&cfg),
        Command::Sweep => sweep(&cfg),
        Command::Report => report(&cfg),
        Command::Selftest => run_selftest(),
        Command::Synth { docs } => write_synth(&cfg, *docs),
        Command::Serve => serve_stdio(&cfg),
    }
}

fn create<P: AsRef<Path>>(path: P) -> Result<BufWriter<File>> {
    let path = path.as_ref();
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn out_dir(cfg: &PipelineConfig) -> Result<PathBuf> {
    let dir = cfg.require("paths.out")?.to_path_buf();
    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    Ok(dir)
}

fn write_with<F>(path: PathBuf, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> io::Result<()>,
{
    let mut w = create(&path)?;
    f(&mut w)
        .and_then(|_| w.flush())
        .with_context(|| format!("cannot write {}", path.display()))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn write_json<T: serde::Serialize>(path: PathBuf, value: &T) -> Result<()> {
    write_with(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")
    })
}

fn load_docs(cfg: &PipelineConfig, mode: LoadMode) -> Result<Vec<Document>> {
    let path = cfg.require_existing("paths.corpus")?;
    let loaded = load_corpus(path, mode).with_context(|| format!("cannot load corpus {}", path.display()))?;
    for issue in &loaded.issues {
        eprintln!("skipped corpus line {}: {}", issue.line, issue.reason);
    }
    if loaded.documents.is_empty() {
        bail!("corpus {} has no usable documents", path.display());
    }
    Ok(loaded.documents)
}

fn aligned(docs: &[Document]) -> Vec<(Document, Vec<Alignment>)> {
    docs.iter().map(|d| (d.clone(), d.align())).collect()
}

fn load_table(cfg: &PipelineConfig) -> Result<EmbeddingTable> {
    let path = cfg.require_existing("paths.embeddings")?;
    load_embeddings(path).with_context(|| format!("cannot load embeddings {}", path.display()))
}

fn ngram_config(cfg: &PipelineConfig) -> NGramConfig {
    NGramConfig::new(cfg.scorer.order, cfg.scorer.k)
}

/// The native model from `paths.lm`, or one trained on `docs`.
fn native_model(cfg: &PipelineConfig, docs: &[Document]) -> Result<NGramModel> {
    match &cfg.paths.lm {
        Some(_) => {
            let path = cfg.require_existing("paths.lm")?;
            let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
            serde_json::from_reader(BufReader::new(f)).with_context(|| format!("cannot parse {}", path.display()))
        }
        None => {
            log::info!(
                "no paths.lm given; training an order-{} model on the corpus",
                cfg.scorer.order
            );
            Ok(train_on_documents(docs, ngram_config(cfg))?)
        }
    }
}

fn scorer_spec(cfg: &PipelineConfig, docs: &[Document]) -> Result<ScorerSpec> {
    Ok(match cfg.scorer.kind {
        ScorerKind::Native => ScorerSpec::Native(Arc::new(native_model(cfg, docs)?)),
        ScorerKind::External => ScorerSpec::External(cfg.scorer_argv()?),
    })
}

fn ingest(cfg: &PipelineConfig) -> Result<()> {
    let docs = load_docs(cfg, LoadMode::Lenient)?;
    let dir = out_dir(cfg)?;
    write_with(dir.join("corpus.jsonl"), |w| write_corpus(w, &docs))?;
    write_with(dir.join("alignments.jsonl"), |w| write_alignments(w, &docs))?;
    println!("ingested {} documents", docs.len());
    Ok(())
}

fn train_lm(cfg: &PipelineConfig) -> Result<()> {
    let docs = load_docs(cfg, LoadMode::Strict)?;
    let dir = out_dir(cfg)?;
    let model = train_on_documents(&docs, ngram_config(cfg))?;
    println!(
        "trained order-{} model, support {}, max normalization error {:.2e}",
        model.order(),
        model.support_size(),
        model.max_normalization_error()
    );
    write_with(dir.join("lm.json"), |w| {
        serde_json::to_writer(w, &model).map_err(io::Error::from)
    })
}

fn write_diagnostics<W: Write>(mut w: W, diags: &[Diagnostic]) -> io::Result<()> {
    for d in diags {
        serde_json::to_writer(&mut w, d)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

fn build_negatives(cfg: &PipelineConfig, workers: usize, epoch: u64) -> Result<()> {
    if workers == 0 {
        return Err(ConfigError::new("workers", "must be at least 1").into());
    }
    let docs = load_docs(cfg, LoadMode::Strict)?;
    let table = load_table(cfg)?;
    let spec = scorer_spec(cfg, &docs)?;
    let dir = out_dir(cfg)?;
    let out = build_corpus_negatives(&aligned(&docs), &spec, &table, &cfg.lfn, epoch, workers)?;
    write_with(dir.join("negatives.jsonl"), |w| write_negatives(w, &out.samples))?;
    write_with(dir.join("diagnostics.jsonl"), |w| {
        write_diagnostics(w, &out.diagnostics)
    })?;
    println!("{} negatives, {} failures", out.samples.len(), out.diagnostics.len());
    Ok(())
}

fn read_negative_file(cfg: &PipelineConfig) -> Result<Vec<NegativeSample>> {
    let path = cfg.require_existing("paths.negatives")?;
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    read_negatives(BufReader::new(f)).with_context(|| format!("cannot read {}", path.display()))
}

/// Training documents and held-out documents.
fn split(cfg: &PipelineConfig, docs: &[Document]) -> (Vec<Document>, Vec<Document>) {
    let n_train = docs.len() - (docs.len() as f64 * cfg.holdout).round() as usize;
    (docs[..n_train].to_vec(), docs[n_train..].to_vec())
}

fn train(cfg: &PipelineConfig) -> Result<()> {
    let docs = load_docs(cfg, LoadMode::Strict)?;
    let (train_docs, _) = split(cfg, &docs);
    let dir = out_dir(cfg)?;
    let (vocab, log, model) = if cfg.lfn.dynamic {
        train_dynamically(cfg, &docs, &train_docs)?
    } else {
        let samples = match &cfg.paths.negatives {
            Some(_) => read_negative_file(cfg)?,
            None => {
                let table = load_table(cfg)?;
                let spec = scorer_spec(cfg, &docs)?;
                build_corpus_negatives(&aligned(&train_docs), &spec, &table, &cfg.lfn, 0, 1)?.samples
            }
        };
        let vocab = corpus_vocab(&docs, &samples);
        let examples = build_examples(&train_docs, &samples, &vocab);
        let mut model = new_model(cfg, &vocab);
        let log = finish(crate::contrast::train(&mut model, &examples, &cfg.train))?;
        (vocab, log, model)
    };
    let last = log.steps.last().map(|s| s.total).unwrap_or(f64::NAN);
    println!("trained {} steps, final loss {last:.4}", log.steps.len());
    write_with(dir.join("loss.csv"), |w| write_loss_csv(w, &log))?;
    write_with(dir.join("margins.csv"), |w| write_margin_csv(w, &margin_stats(&log)))?;
    let ckpt = Checkpoint {
        vocab,
        train: cfg.train.clone(),
        model,
    };
    write_with(dir.join("checkpoint.json"), |w| write_checkpoint(w, &ckpt))
}

fn new_model(cfg: &PipelineConfig, vocab: &Vocab) -> ToySeq2Seq {
    ToySeq2Seq::new(ModelConfig {
        vocab_size: vocab.len(),
        seed: cfg.train.seed,
        ..cfg.model.clone()
    })
}

fn finish(result: std::result::Result<TrainLog, TrainError>) -> Result<TrainLog> {
    result.map_err(|e| match e {
        TrainError::NonFinite { step, .. } => {
            anyhow::anyhow!("training diverged at step {step}; lower train.learning_rate")
        }
        other => other.into(),
    })
}

/// Rebuilds the negatives at the start of every epoch with epoch-mixed seeds.
fn train_dynamically(
    cfg: &PipelineConfig,
    docs: &[Document],
    train_docs: &[Document],
) -> Result<(Vocab, TrainLog, ToySeq2Seq)> {
    let table = load_table(cfg)?;
    let spec = scorer_spec(cfg, docs)?;
    // replacements are drawn from article words, so the corpus covers them
    let vocab = corpus_vocab(docs, &[]);
    let pairs = aligned(train_docs);
    let mut model = new_model(cfg, &vocab);
    let failure: RefCell<Option<anyhow::Error>> = RefCell::new(None);
    let result = train_dynamic(&mut model, &cfg.train, |epoch| {
        match build_corpus_negatives(&pairs, &spec, &table, &cfg.lfn, epoch, 1) {
            Ok(out) => {
                log::info!("epoch {epoch}: {} negatives", out.samples.len());
                build_examples(train_docs, &out.samples, &vocab)
            }
            Err(e) => {
                *failure.borrow_mut() = Some(e.into());
                Vec::new()
            }
        }
    });
    if let Some(e) = failure.into_inner() {
        return Err(e.context("building negatives"));
    }
    Ok((vocab, finish(result)?, model))
}

fn load_checkpoint(cfg: &PipelineConfig) -> Result<Checkpoint> {
    let path = cfg.require_existing("paths.checkpoint")?;
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    read_checkpoint(BufReader::new(f)).with_context(|| format!("cannot read {}", path.display()))
}

fn sweep(cfg: &PipelineConfig) -> Result<()> {
    let docs = load_docs(cfg, LoadMode::Strict)?;
    let ckpt = load_checkpoint(cfg)?;
    let table = load_table(cfg)?;
    let spec = scorer_spec(cfg, &docs)?;
    let dir = out_dir(cfg)?;
    let (_, held_out) = split(cfg, &docs);
    let eval_docs = if held_out.is_empty() { docs.clone() } else { held_out };
    let mut scorer = spec.open()?;
    let (items, diags) = sweep_items(&aligned(&eval_docs), &mut scorer, &cfg.lfn)?;
    for d in &diags {
        log::warn!("{}#{}: {}", d.doc_id, d.sentence_idx, d.detail);
    }
    let report = ratio_sweep(&ckpt.model, &ckpt.vocab, &items, &table, &cfg.ratios, &cfg.lfn)?;
    let rho = report
        .spearman
        .map_or("undefined (constant scores)".to_string(), |r| format!("{r:.3}"));
    let means: Vec<String> = report.mean_scores.iter().map(|m| format!("{m:.4}")).collect();
    println!("mean scores [{}], spearman {rho}", means.join(", "));
    write_json(dir.join("sweep.json"), &report)
}

fn report(cfg: &PipelineConfig) -> Result<()> {
    let docs = load_docs(cfg, LoadMode::Strict)?;
    let samples = read_negative_file(cfg)?;
    let spec = scorer_spec(cfg, &docs)?;
    let dir = out_dir(cfg)?;
    let mut scorer = spec.open()?;
    let report = report_negative_quality(&samples, &mut scorer, &aligned(&docs), &[])?;
    println!(
        "negative scores lower in {:.3} of {} samples ({} ties)",
        report.lower_fraction, report.n_samples, report.ties
    );
    write_json(dir.join("quality.json"), &report)
}

fn run_selftest() -> Result<()> {
    let checks = selftest::run_all();
    let mut failed = 0;
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        failed += usize::from(!c.passed);
    }
    if failed > 0 {
        bail!("{failed} of {} self checks failed", checks.len());
    }
    Ok(())
}

fn write_synth(cfg: &PipelineConfig, docs: usize) -> Result<()> {
    let dir = out_dir(cfg)?;
    let corpus = synth::generate(&SynthConfig {
        docs,
        seed: cfg.lfn.seed,
        ..SynthConfig::default()
    });
    write_with(dir.join("corpus.jsonl"), |w| write_corpus(w, &corpus.docs))?;
    write_with(dir.join("embeddings.txt"), |w| corpus.embeddings.write_text(w))
}

fn serve_stdio(cfg: &PipelineConfig) -> Result<()> {
    let docs = match &cfg.paths.lm {
        Some(_) => Vec::new(),
        None => load_docs(cfg, LoadMode::Strict)?,
    };
    let mut model = native_model(cfg, &docs)?;
    let stdin = io::stdin();
    serve(&mut model, stdin.lock(), io::stdout().lock())?;
    Ok(())
}
