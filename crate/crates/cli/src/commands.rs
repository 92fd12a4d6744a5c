use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, Context};
use serde::Serialize;
use serde_json::json;

use nlicheck_core::clock;
use nlicheck_core::compliance::{
    load_clauses, pair_and_predict, predict_pair, render_report, shipped_clauses, ClauseSet, Report, ReportFormat,
};
use nlicheck_core::corpus::{
    ingest, load_manifest, match_sentence, process_html, CorpusStore, DocumentMeta, FetchSettings, Fetcher,
    ManifestEntry, PolicyDocument,
};
use nlicheck_core::data::{
    encode_examples, find_split, init_embeddings, load_embeddings, load_mnli, load_snli, toy, Corpus, LoadStats,
    NliExample, Split, Vocabulary,
};
use nlicheck_core::models::{Design, Label, Model, ModelConfig, CLASS_ORDER};
use nlicheck_core::nn::{argmax, SeededRng};
use nlicheck_core::train::{evaluate, load_bundle, metrics_line, save_bundle, train, write_metrics, DatasetSelector, TrainConfig};
use nlicheck_core::Error;

use crate::settings::{self, FileConfig};
use crate::{
    BuildVocabArgs, CheckArgs, Cli, Command, DataArgs, DatasetArg, EvaluateArgs, FetchArgs, IngestArgs, PredictArgs,
    ReportArgs, SearchArgs, SplitArg, TrainArgs,
};

pub enum Failure {
    /// bad flags, values or configuration: exit 2
    Usage(anyhow::Error),
    /// anything that went wrong while doing the work: exit 1
    Operational(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<Error>() {
            Some(Error::Config(_)) => Failure::Usage(e),
            _ => Failure::Operational(e),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

type Outcome = std::result::Result<(), Failure>;

struct Ctx {
    file: FileConfig,
    seed: u64,
    pretty: bool,
}

const TOY_SIZES: [usize; 3] = [600, 200, 200];

pub fn run(cli: Cli) -> Outcome {
    let file = match &cli.config {
        Some(p) => settings::load(p).map_err(Failure::Usage)?,
        None => FileConfig::default(),
    };
    let ctx = Ctx {
        seed: cli.seed.or(file.seed).unwrap_or(0),
        file,
        pretty: cli.pretty,
    };
    match cli.command {
        Command::BuildVocab(a) => build_vocab(&ctx, a),
        Command::Train(a) => train_cmd(&ctx, a),
        Command::Evaluate(a) => evaluate_cmd(&ctx, a),
        Command::Predict(a) => predict_cmd(&ctx, a),
        Command::Ingest(a) => ingest_cmd(&ctx, a),
        Command::Search(a) => search_cmd(&ctx, a),
        Command::Check(a) => check_cmd(&ctx, a),
        Command::Report(a) => report_cmd(&ctx, a),
    }
}

fn emit(line: &str) -> Outcome {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{line}").context("writing to standard output")?;
    Ok(())
}

fn write_or_print(out: Option<&Path>, text: &str) -> Outcome {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .context("writing to standard output")?,
    }
    Ok(())
}

fn selector(d: DatasetArg) -> DatasetSelector {
    match d {
        DatasetArg::Snli => DatasetSelector::Snli,
        DatasetArg::Mnli => DatasetSelector::Mnli,
        DatasetArg::MnliGovernment => DatasetSelector::MnliGovernment,
        DatasetArg::Toy => DatasetSelector::Toy,
    }
}

fn split_of(s: SplitArg) -> Split {
    match s {
        SplitArg::Train => Split::Train,
        SplitArg::Dev => Split::Dev,
        SplitArg::Test => Split::Test,
    }
}

fn data_dir(ctx: &Ctx, args: &DataArgs) -> Result<PathBuf, Failure> {
    args.data_dir
        .clone()
        .or_else(|| std::env::var_os("NLICHECK_DATA_DIR").map(PathBuf::from))
        .or_else(|| ctx.file.data_dir.clone())
        .ok_or_else(|| Failure::Usage(anyhow!("--data-dir is required (or set NLICHECK_DATA_DIR)")))
}

fn log_stats(path: &Path, stats: &LoadStats) {
    log::info!(
        "{}: {} examples ({} unlabelled, {} malformed, {} other genres skipped)",
        path.display(),
        stats.returned,
        stats.skipped_unlabeled,
        stats.skipped_malformed,
        stats.skipped_genre
    );
}

/// Examples of one split; `limit` keeps only the first n.
fn load_examples(ctx: &Ctx, args: &DataArgs, split: Split, limit: Option<usize>) -> Result<Vec<NliExample>, Failure> {
    let dataset = selector(args.dataset);
    let mut examples = if dataset == DatasetSelector::Toy {
        let (idx, n) = match split {
            Split::Train => (0, limit.unwrap_or(TOY_SIZES[0])),
            Split::Dev => (1, TOY_SIZES[1]),
            Split::Test => (2, TOY_SIZES[2]),
        };
        toy::toy_corpus(n, 1 + idx as u64)
    } else {
        let dir = data_dir(ctx, args)?;
        let (corpus, genre) = match dataset {
            DatasetSelector::Snli => (Corpus::Snli, None),
            DatasetSelector::Mnli => (Corpus::Mnli, None),
            _ => (Corpus::Mnli, Some("government")),
        };
        let path = find_split(&dir, corpus, split);
        let (ex, stats) = match corpus {
            Corpus::Snli => load_snli(&path)?,
            Corpus::Mnli => load_mnli(&path, genre)?,
        };
        log_stats(&path, &stats);
        ex
    };
    if let Some(n) = limit {
        examples.truncate(n);
    }
    Ok(examples)
}

fn vocab_from(examples: &[NliExample]) -> Result<Vocabulary, Error> {
    Vocabulary::build(examples.iter().map(|e| e.premise_tokens.iter().chain(e.hypothesis_tokens.iter())))
}

fn build_vocab(ctx: &Ctx, a: BuildVocabArgs) -> Outcome {
    let limit = a.data.limit.or(ctx.file.train.limit);
    let examples = load_examples(ctx, &a.data, Split::Train, limit)?;
    let vocab = vocab_from(&examples)?;
    vocab.save(&a.out)?;
    if ctx.pretty {
        emit(&format!("{} tokens written to {}", vocab.len(), a.out.display()))
    } else {
        emit(&json!({"out": a.out, "size": vocab.len(), "hash": vocab.hash()}).to_string())
    }
}

fn model_config(ctx: &Ctx, design: Design, max_len: Option<usize>) -> ModelConfig {
    let m = &ctx.file.model;
    let mut c = ModelConfig::for_design(design);
    if let Some(v) = max_len.or(m.max_len) {
        c.max_len = v;
    }
    if let Some(v) = m.embed_dim {
        c.embed_dim = v;
    }
    if let Some(v) = m.translate_dim {
        c.translate_dim = v;
    }
    if let Some(v) = &m.dense_dims {
        c.dense_dims = v.clone();
    }
    if let Some(v) = m.bilstm_units {
        c.bilstm_units = v;
    }
    if let Some(v) = m.dropout_rate {
        c.dropout_rate = v;
    }
    c
}

fn train_config(ctx: &Ctx, a: &TrainArgs) -> TrainConfig {
    let t = &ctx.file.train;
    let mut c = TrainConfig::preset(selector(a.data.dataset));
    c.seed = ctx.seed;
    if let Some(d) = a.design {
        c.design = if d == 1 { Design::Design1 } else { Design::Design2 };
    }
    if let Some(v) = a.epochs.or(t.epochs) {
        c.epochs = v;
    }
    if let Some(v) = a.batch_size.or(t.batch_size) {
        c.batch_size = v;
    }
    if let Some(v) = a.lr.or(t.lr) {
        c.optimizer.lr = v;
    }
    if let Some(v) = t.beta1 {
        c.optimizer.beta1 = v;
    }
    if let Some(v) = t.beta2 {
        c.optimizer.beta2 = v;
    }
    if let Some(v) = t.eps {
        c.optimizer.eps = v;
    }
    c.limit = a.data.limit.or(t.limit);
    c.log_wall_clock = t.log_wall_clock.unwrap_or(false);
    c
}

fn train_cmd(ctx: &Ctx, a: TrainArgs) -> Outcome {
    let cfg = train_config(ctx, &a);
    cfg.validate()?;
    let mcfg = model_config(ctx, cfg.design, a.max_len);
    mcfg.validate()?;

    let train_ex = load_examples(ctx, &a.data, Split::Train, cfg.limit)?;
    let val_ex = load_examples(ctx, &a.data, Split::Dev, None)?;
    let vocab = match &a.vocab {
        Some(p) => Vocabulary::load(p)?,
        None => vocab_from(&train_ex)?,
    };
    log::info!("{} training / {} validation examples, vocabulary {}", train_ex.len(), val_ex.len(), vocab.len());

    let root = SeededRng::new(cfg.seed);
    let mut emb_rng = root.fork(1);
    let emb = match &a.embeddings {
        Some(p) => {
            let e = load_embeddings(p, &vocab, mcfg.embed_dim, mcfg.embedding_trainable, &mut emb_rng)?;
            log::info!("embeddings cover {:.1}% of the vocabulary", 100.0 * e.coverage);
            e
        }
        None => {
            // without pretrained vectors a frozen all-zero table could not learn anything
            log::warn!("no --embeddings given; using random vectors");
            init_embeddings(&vocab, mcfg.embed_dim, true, &mut emb_rng)
        }
    };
    let mut model = Model::<f32>::build(&mcfg, emb.matrix, &mut root.fork(2))?;
    let train_set = encode_examples(&train_ex, &vocab, mcfg.max_len)?;
    let val_set = encode_examples(&val_ex, &vocab, mcfg.max_len)?;

    let pretty = ctx.pretty;
    let wall = cfg.log_wall_clock;
    let outcome = train(&mut model, &train_set, &val_set, &cfg, |m, _| {
        let line = if pretty {
            format!(
                "epoch {:>3}  loss {:.4}  acc {:.4}  val_loss {}  val_acc {}",
                m.epoch,
                m.train_loss,
                m.train_accuracy,
                opt4(m.val_loss),
                opt4(m.val_accuracy)
            )
        } else {
            metrics_line(m, wall)
        };
        println!("{line}");
    })?;

    let model_id = save_bundle(&outcome.best, &vocab, &a.out)?;
    if let Some(p) = &a.metrics {
        write_metrics(p, &outcome.history, wall)?;
    }
    let best = &outcome.history.epochs[outcome.history.best_epoch - 1];
    if pretty {
        emit(&format!(
            "best epoch {} (val_acc {}); checkpoint {} [{}]",
            best.epoch,
            opt4(best.val_accuracy),
            a.out.display(),
            model_id
        ))
    } else {
        emit(
            &json!({
                "checkpoint": a.out,
                "model_id": model_id,
                "best_epoch": best.epoch,
                "val_accuracy": best.val_accuracy,
                "val_loss": best.val_loss,
            })
            .to_string(),
        )
    }
}

fn opt4(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

fn evaluate_cmd(ctx: &Ctx, a: EvaluateArgs) -> Outcome {
    let (ckpt, vocab) = load_bundle(&a.model)?;
    let examples = load_examples(ctx, &a.data, split_of(a.split), a.data.limit)?;
    let samples = encode_examples(&examples, &vocab, ckpt.model.config().max_len)?;
    let r = evaluate(&ckpt.model, &samples)?;
    if ctx.pretty {
        let mut s = format!(
            "{} examples, accuracy {:.4}, mean loss {:.4}\nconfusion (rows gold, columns predicted):\n",
            r.examples, r.accuracy, r.mean_loss
        );
        for (label, row) in CLASS_ORDER.iter().zip(r.confusion.iter()) {
            s.push_str(&format!("  {:<13} {:>7} {:>7} {:>7}\n", label.as_str(), row[0], row[1], row[2]));
        }
        write_or_print(None, &s)
    } else {
        let mut v = serde_json::to_value(&r).context("serialising evaluation")?;
        v["model_id"] = json!(ckpt.model_id);
        emit(&v.to_string())
    }
}

/// Probabilities in class order, then the most likely class.
#[derive(Serialize)]
struct Prediction {
    contradiction: f32,
    neutral: f32,
    entailment: f32,
    label: Label,
}

fn predict_cmd(ctx: &Ctx, a: PredictArgs) -> Outcome {
    let (ckpt, vocab) = load_bundle(&a.model)?;
    let p = predict_pair(&ckpt.model, &vocab, &a.premise, &a.hypothesis)?;
    let label = CLASS_ORDER[argmax(&p)];
    if ctx.pretty {
        let mut s = String::new();
        for (l, v) in CLASS_ORDER.iter().zip(p) {
            s.push_str(&format!("{:<13} {v:.4}\n", l.as_str()));
        }
        s.push_str(&format!("prediction    {label}\n"));
        write_or_print(None, &s)
    } else {
        let line = Prediction {
            contradiction: p[0],
            neutral: p[1],
            entailment: p[2],
            label,
        };
        emit(&serde_json::to_string(&line).context("serialising prediction")?)
    }
}

fn fetch_settings(ctx: &Ctx, a: &FetchArgs) -> FetchSettings {
    let f = &ctx.file.fetch;
    let mut s = FetchSettings::default();
    if let Some(v) = a.timeout.or(f.timeout_secs) {
        s.timeout = Duration::from_secs(v);
    }
    if let Some(v) = a.delay_ms.or(f.per_host_delay_ms) {
        s.per_host_delay = Duration::from_millis(v);
    }
    if let Some(v) = a.jobs.or(f.jobs) {
        s.jobs = v.max(1);
    }
    if let Some(v) = f.retries {
        s.retries = v;
    }
    if let Some(v) = f.max_body {
        s.max_body = v;
    }
    s
}

fn clauses_or_shipped(path: Option<&Path>) -> Result<ClauseSet, Failure> {
    Ok(match path {
        Some(p) => load_clauses(p)?,
        None => shipped_clauses(),
    })
}

fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>, Failure> {
    let m = load_manifest(path)?;
    if m.skipped > 0 {
        log::warn!("{} manifest entries skipped", m.skipped);
    }
    Ok(m.entries)
}

fn ingest_cmd(ctx: &Ctx, a: IngestArgs) -> Outcome {
    let entries = read_manifest(&a.manifest)?;
    let store = CorpusStore::open(&a.out)?;
    let fetcher = Fetcher::new(fetch_settings(ctx, &a.fetch))?;
    let patterns = match &a.clauses {
        Some(p) => Some(load_clauses(p)?.patterns()),
        None => None,
    };
    let report = ingest(&entries, &store, &fetcher, patterns.as_deref())?;
    if ctx.pretty {
        let mut s = format!(
            "{} entries: {} fetched, {} cached, {} failed\n",
            report.total, report.fetched, report.cached, report.failed
        );
        for (id, e) in &report.failures {
            s.push_str(&format!("  {id}: {e}\n"));
        }
        write_or_print(None, &s)
    } else {
        emit(&serde_json::to_string(&report).context("serialising ingest report")?)
    }
}

fn search_cmd(ctx: &Ctx, a: SearchArgs) -> Outcome {
    let store = CorpusStore::existing(&a.corpus)?;
    let patterns = clauses_or_shipped(a.clauses.as_deref())?.patterns();
    let mut out = String::new();
    for doc in store.documents()? {
        for s in &doc.sentences {
            let matched = match_sentence(&s.text, &patterns)?;
            if matched.is_empty() {
                continue;
            }
            if ctx.pretty {
                out.push_str(&format!("{}#{} [{}] {}\n", doc.meta.app_id, s.index, matched.join(", "), s.text));
            } else {
                let line = json!({
                    "app_id": doc.meta.app_id,
                    "sentence_index": s.index,
                    "sentence": s.text,
                    "matched_patterns": matched,
                });
                out.push_str(&line.to_string());
                out.push('\n');
            }
        }
    }
    write_or_print(None, &out)
}

/// Fetches and processes every entry without touching the disk.
fn fetch_documents(entries: &[ManifestEntry], fetcher: &Fetcher) -> Result<Vec<PolicyDocument>, Failure> {
    let mut docs = Vec::new();
    for (entry, page) in entries.iter().zip(fetcher.fetch_all(entries)) {
        let page = match page {
            Ok(p) => p,
            Err(e) => {
                log::warn!("{}: {e}", entry.app_id);
                continue;
            }
        };
        let (text, sentences) = process_html(&page.body, None)?;
        docs.push(PolicyDocument {
            meta: DocumentMeta {
                app_id: entry.app_id.clone(),
                source_url: entry.policy_url.clone(),
                final_url: Some(page.final_url),
                status: Some(page.status),
                fetched_at: clock::timestamp(),
                error: None,
                sentences: sentences.len(),
            },
            text,
            sentences,
        });
    }
    docs.sort_by(|a, b| a.meta.app_id.cmp(&b.meta.app_id));
    Ok(docs)
}

fn check_cmd(ctx: &Ctx, a: CheckArgs) -> Outcome {
    if !(a.threshold > 0.0 && a.threshold < 1.0) {
        return Err(Failure::Usage(anyhow!("--threshold must lie strictly between 0 and 1")));
    }
    let clauses = clauses_or_shipped(a.clauses.as_deref())?;
    let (ckpt, vocab) = load_bundle(&a.model)?;
    let documents = match (&a.manifest, &a.corpus) {
        (Some(m), None) => {
            let fetcher = Fetcher::new(fetch_settings(ctx, &a.fetch))?;
            fetch_documents(&read_manifest(m)?, &fetcher)?
        }
        (Some(m), Some(dir)) => {
            let store = CorpusStore::open(dir)?;
            let fetcher = Fetcher::new(fetch_settings(ctx, &a.fetch))?;
            ingest(&read_manifest(m)?, &store, &fetcher, Some(&clauses.patterns()))?;
            store.documents()?
        }
        (None, Some(dir)) => CorpusStore::existing(dir)?.documents()?,
        (None, None) => unreachable!("clap requires --manifest or --corpus"),
    };
    if documents.is_empty() {
        log::warn!("no policy documents to check");
    }
    let findings = pair_and_predict(&clauses.clauses, &documents, &ckpt.model, &vocab, &ckpt.model_id, a.threshold)?;
    let report = Report::new(
        findings,
        clock::timestamp(),
        ckpt.model_id.clone(),
        clauses.sha256.clone(),
        a.threshold,
        documents.len(),
    );
    let format = if ctx.pretty { ReportFormat::Text } else { ReportFormat::Jsonl };
    write_or_print(a.out.as_deref(), &render_report(&report, format))?;
    let c = &report.header.summary;
    log::info!(
        "{} pairs: {} potential violations, {} supported, {} inconclusive",
        report.header.pairs,
        c.potential_violation,
        c.supported,
        c.inconclusive
    );
    Ok(())
}

fn report_cmd(ctx: &Ctx, a: ReportArgs) -> Outcome {
    let text = fs::read_to_string(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let report = Report::parse_jsonl(&text)?;
    let format = if ctx.pretty { ReportFormat::Text } else { ReportFormat::Jsonl };
    write_or_print(a.out.as_deref(), &render_report(&report, format))
}
