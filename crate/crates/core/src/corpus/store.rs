use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::clock;
use crate::corpus::{
    extract_text, search_sensitive, segment_sentences, FetchedPage, Fetcher, KeywordPattern, ManifestEntry,
    SentenceRecord,
};
use crate::error::{Error, Result};

pub const RAW_FILE: &str = "raw.html";
pub const TEXT_FILE: &str = "text.txt";
pub const SENTENCES_FILE: &str = "sentences.jsonl";
pub const META_FILE: &str = "meta.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentMeta {
    pub app_id: String,
    pub source_url: String,
    pub final_url: Option<String>,
    pub status: Option<u16>,
    pub fetched_at: String,
    pub error: Option<String>,
    pub sentences: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolicyDocument {
    pub meta: DocumentMeta,
    pub text: String,
    pub sentences: Vec<SentenceRecord>,
}

/// Extracted text and its sentences, with keyword matches when `patterns`
/// is given.
pub fn process_html(html: &[u8], patterns: Option<&[KeywordPattern]>) -> Result<(String, Vec<SentenceRecord>)> {
    let text = extract_text(&String::from_utf8_lossy(html));
    let mut records: Vec<SentenceRecord> = segment_sentences(&text)
        .into_iter()
        .enumerate()
        .map(|(index, s)| SentenceRecord {
            index,
            text: s.text,
            start: Some(s.start),
            end: Some(s.end),
            matched_patterns: Vec::new(),
        })
        .collect();
    if let Some(p) = patterns {
        search_sensitive(&mut records, p)?;
    }
    Ok((text, records))
}

/// One directory per app id holding the raw page, its text, its sentences
/// and fetch metadata.
#[derive(Clone, Debug)]
pub struct CorpusStore {
    root: PathBuf,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

impl CorpusStore {
    pub fn open(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(CorpusStore { root: root.to_path_buf() })
    }

    /// Opens an existing store without creating it.
    pub fn existing(root: &Path) -> Result<Self> {
        if !root.is_dir() {
            return Err(Error::io(root, std::io::Error::new(std::io::ErrorKind::NotFound, "corpus directory not found")));
        }
        Ok(CorpusStore { root: root.to_path_buf() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn app_dir(&self, app_id: &str) -> PathBuf {
        self.root.join(app_id)
    }

    pub fn read_meta(&self, app_id: &str) -> Result<DocumentMeta> {
        let p = self.app_dir(app_id).join(META_FILE);
        let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", p.display())))
    }

    pub fn read_raw(&self, app_id: &str) -> Result<Vec<u8>> {
        let p = self.app_dir(app_id).join(RAW_FILE);
        fs::read(&p).map_err(|e| Error::io(&p, e))
    }

    /// Cached body for an entry, if a previous successful fetch of the same
    /// URL left one.
    pub fn cached(&self, entry: &ManifestEntry) -> Option<(DocumentMeta, Vec<u8>)> {
        let meta = self.read_meta(&entry.app_id).ok()?;
        if meta.error.is_some() || meta.source_url != entry.policy_url {
            return None;
        }
        Some((meta, self.read_raw(&entry.app_id).ok()?))
    }

    pub fn write_document(&self, doc: &PolicyDocument, raw: &[u8]) -> Result<()> {
        let dir = self.app_dir(&doc.meta.app_id);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_file(&dir.join(RAW_FILE), raw)?;
        write_file(&dir.join(TEXT_FILE), doc.text.as_bytes())?;
        let mut lines = Vec::new();
        for s in &doc.sentences {
            serde_json::to_writer(&mut lines, s).expect("sentence serialises");
            lines.push(b'\n');
        }
        write_file(&dir.join(SENTENCES_FILE), &lines)?;
        self.write_meta(&doc.meta)
    }

    pub fn write_meta(&self, meta: &DocumentMeta) -> Result<()> {
        let dir = self.app_dir(&meta.app_id);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut json = serde_json::to_vec_pretty(meta).expect("meta serialises");
        json.push(b'\n');
        write_file(&dir.join(META_FILE), &json)
    }

    /// App ids with a metadata file, sorted.
    pub fn app_ids(&self) -> Result<Vec<String>> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(&self.root).map_err(|e| Error::io(&self.root, e))? {
            let entry = entry.map_err(|e| Error::io(&self.root, e))?;
            if entry.path().join(META_FILE).is_file() {
                ids.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        ids.sort();
        Ok(ids)
    }

    pub fn read_document(&self, app_id: &str) -> Result<PolicyDocument> {
        let meta = self.read_meta(app_id)?;
        let dir = self.app_dir(app_id);
        let tp = dir.join(TEXT_FILE);
        let text = fs::read_to_string(&tp).map_err(|e| Error::io(&tp, e))?;
        let sp = dir.join(SENTENCES_FILE);
        let body = fs::read_to_string(&sp).map_err(|e| Error::io(&sp, e))?;
        let sentences = body
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Format(format!("{}:{}: {e}", sp.display(), i + 1))))
            .collect::<Result<Vec<SentenceRecord>>>()?;
        Ok(PolicyDocument { meta, text, sentences })
    }

    /// Every successfully ingested document, by app id.
    pub fn documents(&self) -> Result<Vec<PolicyDocument>> {
        let mut out = Vec::new();
        for id in self.app_ids()? {
            if self.read_meta(&id)?.error.is_none() {
                out.push(self.read_document(&id)?);
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub total: usize,
    pub fetched: usize,
    pub cached: usize,
    pub failed: usize,
    pub failures: Vec<(String, String)>,
}

/// Fetches (or reuses cached pages for) every manifest entry, extracts and
/// segments the text and writes the store. A failing entry is recorded in
/// its metadata and does not stop the others.
pub fn ingest(
    entries: &[ManifestEntry],
    store: &CorpusStore,
    fetcher: &Fetcher,
    patterns: Option<&[KeywordPattern]>,
) -> Result<IngestReport> {
    let mut report = IngestReport {
        total: entries.len(),
        ..Default::default()
    };
    let mut cached = Vec::with_capacity(entries.len());
    let mut to_fetch = Vec::new();
    for e in entries {
        let c = store.cached(e);
        if c.is_none() {
            to_fetch.push(e.clone());
        }
        cached.push(c);
    }
    let mut fetched = fetcher.fetch_all(&to_fetch).into_iter();
    let mut seen = HashSet::new();
    for (entry, cache) in entries.iter().zip(cached) {
        if !seen.insert(entry.app_id.clone()) {
            return Err(Error::Config(format!("duplicate app_id {}", entry.app_id)));
        }
        let (meta, raw) = match cache {
            Some((meta, raw)) => {
                report.cached += 1;
                (meta, raw)
            }
            None => match fetched.next().expect("one result per fetched entry") {
                Ok(FetchedPage {
                    final_url, status, body, ..
                }) => {
                    report.fetched += 1;
                    let meta = DocumentMeta {
                        app_id: entry.app_id.clone(),
                        source_url: entry.policy_url.clone(),
                        final_url: Some(final_url),
                        status: Some(status),
                        fetched_at: clock::timestamp(),
                        error: None,
                        sentences: 0,
                    };
                    (meta, body)
                }
                Err(e) => {
                    log::warn!("{}: {e}", entry.app_id);
                    report.failed += 1;
                    report.failures.push((entry.app_id.clone(), e.to_string()));
                    store.write_meta(&DocumentMeta {
                        app_id: entry.app_id.clone(),
                        source_url: entry.policy_url.clone(),
                        final_url: None,
                        status: None,
                        fetched_at: clock::timestamp(),
                        error: Some(e.to_string()),
                        sentences: 0,
                    })?;
                    continue;
                }
            },
        };
        let (text, sentences) = process_html(&raw, patterns)?;
        let doc = PolicyDocument {
            meta: DocumentMeta {
                sentences: sentences.len(),
                ..meta
            },
            text,
            sentences,
        };
        store.write_document(&doc, &raw)?;
    }
    Ok(report)
}
