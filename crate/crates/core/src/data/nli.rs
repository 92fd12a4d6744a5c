use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::data::tokenize;
use crate::error::{Error, Result};
use crate::models::Label;

/// Genres that occur in the MultiNLI release (matched and mismatched).
pub const MNLI_GENRES: [&str; 10] = [
    "facetoface",
    "fiction",
    "government",
    "letters",
    "nineeleven",
    "oup",
    "slate",
    "telephone",
    "travel",
    "verbatim",
];

/// Fraction of malformed lines tolerated (skipped with a warning) before a
/// load is aborted.
pub const MALFORMED_TOLERANCE: f64 = 0.001;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Corpus {
    Snli,
    Mnli,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "dev" | "validation" | "val" => Some(Split::Dev),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// File name of a split in the standard distributions. MultiNLI has no
/// labelled test set, so its mismatched development set stands in.
pub fn split_file_name(corpus: Corpus, split: Split) -> &'static str {
    match (corpus, split) {
        (Corpus::Snli, Split::Train) => "snli_1.0_train.jsonl",
        (Corpus::Snli, Split::Dev) => "snli_1.0_dev.jsonl",
        (Corpus::Snli, Split::Test) => "snli_1.0_test.jsonl",
        (Corpus::Mnli, Split::Train) => "multinli_1.0_train.jsonl",
        (Corpus::Mnli, Split::Dev) => "multinli_1.0_dev_matched.jsonl",
        (Corpus::Mnli, Split::Test) => "multinli_1.0_dev_mismatched.jsonl",
    }
}

/// Locates a split file under `dir`, also looking in the conventional
/// `snli_1.0/` and `multinli_1.0/` subdirectories.
pub fn find_split(dir: &Path, corpus: Corpus, split: Split) -> PathBuf {
    let name = split_file_name(corpus, split);
    let sub = match corpus {
        Corpus::Snli => "snli_1.0",
        Corpus::Mnli => "multinli_1.0",
    };
    let nested = dir.join(sub).join(name);
    if nested.is_file() {
        nested
    } else {
        dir.join(name)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NliExample {
    pub premise: String,
    pub hypothesis: String,
    pub premise_tokens: Vec<String>,
    pub hypothesis_tokens: Vec<String>,
    pub label: Label,
    pub genre: Option<String>,
}

impl NliExample {
    pub fn new(premise: &str, hypothesis: &str, label: Label, genre: Option<String>) -> Self {
        NliExample {
            premise_tokens: tokenize(premise),
            hypothesis_tokens: tokenize(hypothesis),
            premise: premise.to_string(),
            hypothesis: hypothesis.to_string(),
            label,
            genre,
        }
    }
}

/// Line accounting for one load: `returned + skipped_* == lines`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LoadStats {
    pub lines: usize,
    pub returned: usize,
    pub skipped_unlabeled: usize,
    pub skipped_malformed: usize,
    pub skipped_blank: usize,
    pub skipped_genre: usize,
    pub first_malformed_line: Option<usize>,
}

impl LoadStats {
    pub fn skipped(&self) -> usize {
        self.skipped_unlabeled + self.skipped_malformed + self.skipped_blank + self.skipped_genre
    }

    /// Lines that carried a pair, before label exclusion or filtering.
    pub fn raw(&self) -> usize {
        self.lines - self.skipped_blank - self.skipped_malformed
    }
}

#[derive(Deserialize)]
struct RawLine {
    sentence1: String,
    sentence2: String,
    gold_label: String,
    #[serde(default)]
    genre: Option<String>,
}

/// Loads an SNLI-format JSONL file.
pub fn load_snli(path: &Path) -> Result<(Vec<NliExample>, LoadStats)> {
    load_jsonl(path, None)
}

/// Loads a MultiNLI JSONL file, optionally keeping a single genre.
pub fn load_mnli(path: &Path, genre_filter: Option<&str>) -> Result<(Vec<NliExample>, LoadStats)> {
    if let Some(g) = genre_filter {
        if !MNLI_GENRES.contains(&g) {
            return Err(Error::Config(format!(
                "unknown genre {g:?}; available: {}",
                MNLI_GENRES.join(", ")
            )));
        }
    }
    let (examples, stats) = load_jsonl(path, genre_filter)?;
    if let Some(g) = genre_filter {
        if examples.is_empty() {
            log::warn!("genre filter {g:?} matched no examples in {}", path.display());
        }
    }
    Ok((examples, stats))
}

fn load_jsonl(path: &Path, genre_filter: Option<&str>) -> Result<(Vec<NliExample>, LoadStats)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::with_capacity(1 << 20, file);
    let mut stats = LoadStats::default();
    let mut examples = Vec::new();
    let mut first_error = None;
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        stats.lines += 1;
        if line.trim().is_empty() {
            stats.skipped_blank += 1;
            continue;
        }
        let raw: RawLine = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                stats.skipped_malformed += 1;
                if first_error.is_none() {
                    first_error = Some(format!("{}:{}: {e}", path.display(), n + 1));
                    stats.first_malformed_line = Some(n + 1);
                }
                continue;
            }
        };
        let Some(label) = Label::parse(raw.gold_label.trim()) else {
            if raw.gold_label.trim() == "-" {
                stats.skipped_unlabeled += 1;
            } else {
                stats.skipped_malformed += 1;
                if first_error.is_none() {
                    first_error = Some(format!(
                        "{}:{}: unknown gold_label {:?}",
                        path.display(),
                        n + 1,
                        raw.gold_label
                    ));
                    stats.first_malformed_line = Some(n + 1);
                }
            }
            continue;
        };
        if let Some(g) = genre_filter {
            if raw.genre.as_deref() != Some(g) {
                stats.skipped_genre += 1;
                continue;
            }
        }
        examples.push(NliExample::new(&raw.sentence1, &raw.sentence2, label, raw.genre));
    }
    stats.returned = examples.len();
    if let Some(msg) = first_error {
        let frac = stats.skipped_malformed as f64 / stats.lines as f64;
        if frac > MALFORMED_TOLERANCE {
            return Err(Error::Data(format!(
                "{} of {} lines malformed (first at {msg})",
                stats.skipped_malformed, stats.lines
            )));
        }
        log::warn!("skipped {} malformed line(s), first at {msg}", stats.skipped_malformed);
    }
    Ok((examples, stats))
}
