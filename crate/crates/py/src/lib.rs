//! Python bindings: tokenizer, text extraction, training on in-memory
//! examples, checkpoint loading and prediction, and compliance checks over
//! a corpus directory.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use nlicheck_core::compliance::{self, ClauseSet, Report, ReportFormat};
use nlicheck_core::corpus::{self, CorpusStore};
use nlicheck_core::data::{self, NliExample, Vocabulary};
use nlicheck_core::models::{Design, Label, ModelConfig, CLASS_ORDER};
use nlicheck_core::nn::SeededRng;
use nlicheck_core::train::{self, Checkpoint, TrainConfig};
use nlicheck_core::{clock, Error};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::Config(_) | Error::Data(_) | Error::Format(_) | Error::Compatibility(_) | Error::Shape(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn label_of(s: &str) -> PyResult<Label> {
    Label::parse(s).ok_or_else(|| PyValueError::new_err(format!("unknown label {s:?}")))
}

/// Lowercased word and punctuation tokens.
#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    data::tokenize(text)
}

/// Visible text of an HTML page, one block per line.
#[pyfunction]
fn extract_text(html: &str) -> String {
    corpus::extract_text(html)
}

#[pyfunction]
fn segment_sentences(text: &str) -> Vec<String> {
    corpus::segment_sentences(text).into_iter().map(|s| s.text).collect()
}

/// `potential_violation`, `supported` or `inconclusive` for a
/// `[contradiction, neutral, entailment]` distribution.
#[pyfunction]
#[pyo3(signature = (probs, threshold = compliance::DEFAULT_THRESHOLD))]
fn verdict(probs: Vec<f64>, threshold: f64) -> PyResult<&'static str> {
    compliance::verdict(&probs, threshold).map(|v| v.as_str()).map_err(py_err)
}

/// Synthetic `(premise, hypothesis, label)` triples.
#[pyfunction]
#[pyo3(signature = (n, seed = 0))]
fn toy_corpus(n: usize, seed: u64) -> Vec<(String, String, String)> {
    data::toy::toy_corpus(n, seed)
        .into_iter()
        .map(|e| (e.premise, e.hypothesis, e.label.to_string()))
        .collect()
}

fn triples(xs: &[(String, String, String)]) -> PyResult<Vec<NliExample>> {
    xs.iter()
        .map(|(p, h, l)| Ok(NliExample::new(p, h, label_of(l)?, None)))
        .collect()
}

/// A trained model together with its vocabulary.
#[pyclass(module = "nlicheck", frozen)]
struct Model {
    ckpt: Checkpoint,
    vocab: Vocabulary,
}

#[pymethods]
impl Model {
    /// Reads a checkpoint and the vocabulary stored next to it.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let (ckpt, vocab) = train::load_bundle(&path).map_err(py_err)?;
        Ok(Model { ckpt, vocab })
    }

    #[getter]
    fn model_id(&self) -> &str {
        &self.ckpt.model_id
    }

    #[getter]
    fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// Model hyperparameters as a JSON string.
    #[getter]
    fn config_json(&self) -> String {
        serde_json::to_string(self.ckpt.model.config()).expect("config serialises")
    }

    /// `(trainable, non_trainable)` element counts.
    fn parameter_counts(&self) -> (usize, usize) {
        let r = self.ckpt.model.parameter_report();
        (r.trainable, r.non_trainable)
    }

    /// `[contradiction, neutral, entailment]` probabilities.
    fn predict(&self, py: Python<'_>, premise: &str, hypothesis: &str) -> PyResult<Vec<f32>> {
        let p = py
            .detach(|| compliance::predict_pair(&self.ckpt.model, &self.vocab, premise, hypothesis))
            .map_err(py_err)?;
        Ok(p.to_vec())
    }

    /// Accuracy and mean loss on `(premise, hypothesis, label)` triples.
    fn evaluate<'py>(&self, py: Python<'py>, examples: Vec<(String, String, String)>) -> PyResult<Bound<'py, PyDict>> {
        let ex = triples(&examples)?;
        let r = py
            .detach(|| {
                let samples = data::encode_examples(&ex, &self.vocab, self.ckpt.model.config().max_len)?;
                train::evaluate(&self.ckpt.model, &samples)
            })
            .map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("examples", r.examples)?;
        d.set_item("accuracy", r.accuracy)?;
        d.set_item("mean_loss", r.mean_loss)?;
        d.set_item("confusion", r.confusion.iter().map(|r| r.to_vec()).collect::<Vec<_>>())?;
        Ok(d)
    }

    /// JSONL compliance report for an ingested corpus directory.
    #[pyo3(signature = (corpus_dir, clauses = None, threshold = compliance::DEFAULT_THRESHOLD))]
    fn check(&self, py: Python<'_>, corpus_dir: PathBuf, clauses: Option<PathBuf>, threshold: f64) -> PyResult<String> {
        py.detach(|| {
            let clauses: ClauseSet = match clauses {
                Some(p) => compliance::load_clauses(&p)?,
                None => compliance::shipped_clauses(),
            };
            let docs = CorpusStore::existing(&corpus_dir)?.documents()?;
            let findings = compliance::pair_and_predict(
                &clauses.clauses,
                &docs,
                &self.ckpt.model,
                &self.vocab,
                &self.ckpt.model_id,
                threshold,
            )?;
            let report = Report::new(
                findings,
                clock::timestamp(),
                self.ckpt.model_id.clone(),
                clauses.sha256.clone(),
                threshold,
                docs.len(),
            );
            Ok(compliance::render_report(&report, ReportFormat::Jsonl))
        })
        .map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("Model(id={}, vocab={})", self.ckpt.model_id, self.vocab.len())
    }
}

/// Trains on `(premise, hypothesis, label)` triples, writes the best
/// checkpoint (and its vocabulary) to `out` and returns the per-epoch
/// history as a list of dicts. Embeddings are randomly initialised.
#[pyfunction]
#[pyo3(signature = (train_examples, val_examples, out, design = 1, epochs = 5, batch_size = 32, lr = 1e-3, seed = 0, max_len = 42))]
#[allow(clippy::too_many_arguments)]
fn train_model<'py>(
    py: Python<'py>,
    train_examples: Vec<(String, String, String)>,
    val_examples: Vec<(String, String, String)>,
    out: PathBuf,
    design: u8,
    epochs: usize,
    batch_size: usize,
    lr: f64,
    seed: u64,
    max_len: usize,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let design = match design {
        1 => Design::Design1,
        2 => Design::Design2,
        d => return Err(PyValueError::new_err(format!("design must be 1 or 2, got {d}"))),
    };
    let tr = triples(&train_examples)?;
    let va = triples(&val_examples)?;
    let history = py
        .detach(|| -> nlicheck_core::Result<_> {
            let mut cfg = TrainConfig::preset(train::DatasetSelector::Toy);
            cfg.design = design;
            cfg.epochs = epochs;
            cfg.batch_size = batch_size;
            cfg.optimizer.lr = lr;
            cfg.seed = seed;
            let mut mcfg = ModelConfig::for_design(design);
            mcfg.max_len = max_len;
            mcfg.validate()?;
            let vocab =
                Vocabulary::build(tr.iter().map(|e| e.premise_tokens.iter().chain(e.hypothesis_tokens.iter())))?;
            let root = SeededRng::new(seed);
            let emb = data::init_embeddings(&vocab, mcfg.embed_dim, true, &mut root.fork(1));
            let mut model = nlicheck_core::models::Model::<f32>::build(&mcfg, emb.matrix, &mut root.fork(2))?;
            let train_set = data::encode_examples(&tr, &vocab, max_len)?;
            let val_set = data::encode_examples(&va, &vocab, max_len)?;
            let outcome = train::train(&mut model, &train_set, &val_set, &cfg, |_, _| {})?;
            train::save_bundle(&outcome.best, &vocab, &out)?;
            Ok(outcome.history)
        })
        .map_err(py_err)?;
    history
        .epochs
        .iter()
        .map(|m| {
            let d = PyDict::new(py);
            d.set_item("epoch", m.epoch)?;
            d.set_item("train_loss", m.train_loss)?;
            d.set_item("train_accuracy", m.train_accuracy)?;
            d.set_item("val_loss", m.val_loss)?;
            d.set_item("val_accuracy", m.val_accuracy)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn nlicheck(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("CLASS_ORDER", CLASS_ORDER.iter().map(|l| l.as_str()).collect::<Vec<_>>())?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(extract_text, m)?)?;
    m.add_function(wrap_pyfunction!(segment_sentences, m)?)?;
    m.add_function(wrap_pyfunction!(verdict, m)?)?;
    m.add_function(wrap_pyfunction!(toy_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(train_model, m)?)?;
    Ok(())
}
