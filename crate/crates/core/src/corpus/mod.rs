//! Privacy-policy acquisition: manifest, fetching, text extraction,
//! sentence segmentation, keyword search and the on-disk corpus.

mod fetch;
mod html;
mod manifest;
mod search;
mod segment;
mod store;

pub use fetch::{FetchSettings, FetchedPage, Fetcher, USER_AGENT};
pub use html::{decode_entities, extract_text};
pub use manifest::{load_manifest, parse_manifest, valid_app_id, Manifest, ManifestEntry};
pub use search::{match_sentence, search_sensitive, KeywordPattern, SentenceRecord};
pub use segment::{segment_sentences, Sentence, ABBREVIATIONS, MIN_WORDS};
pub use store::{
    ingest, process_html, CorpusStore, DocumentMeta, IngestReport, PolicyDocument, META_FILE,
    RAW_FILE, SENTENCES_FILE, TEXT_FILE,
};
