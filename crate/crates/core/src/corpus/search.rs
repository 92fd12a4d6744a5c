use serde::{Deserialize, Serialize};

use crate::data::tokenize;
use crate::error::{Error, Result};

/// A conjunction of terms. Multi-word terms must appear as consecutive
/// tokens.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordPattern {
    pub id: String,
    pub terms: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub index: usize,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<usize>,
    #[serde(default)]
    pub matched_patterns: Vec<String>,
}

struct Compiled<'a> {
    id: &'a str,
    terms: Vec<Vec<String>>,
}

fn contains_run(hay: &[String], needle: &[String]) -> bool {
    !needle.is_empty() && hay.windows(needle.len()).any(|w| w == needle)
}

fn compile(patterns: &[KeywordPattern]) -> Result<Vec<Compiled<'_>>> {
    if patterns.is_empty() {
        return Err(Error::Config("no keyword patterns given".into()));
    }
    patterns
        .iter()
        .map(|p| {
            let terms: Vec<Vec<String>> = p.terms.iter().map(|t| tokenize(t)).collect();
            if terms.is_empty() || terms.iter().any(Vec::is_empty) {
                return Err(Error::Config(format!("pattern {} has an empty term list or term", p.id)));
            }
            Ok(Compiled { id: &p.id, terms })
        })
        .collect()
}

/// Ids of the patterns whose every term occurs in `sentence`
/// (case-insensitive, whole tokens).
pub fn match_sentence(sentence: &str, patterns: &[KeywordPattern]) -> Result<Vec<String>> {
    let compiled = compile(patterns)?;
    Ok(matches_compiled(&tokenize(sentence), &compiled))
}

fn matches_compiled(tokens: &[String], compiled: &[Compiled<'_>]) -> Vec<String> {
    compiled
        .iter()
        .filter(|p| p.terms.iter().all(|t| contains_run(tokens, t)))
        .map(|p| p.id.to_string())
        .collect()
}

/// Fills `matched_patterns` for every sentence; a sentence is sensitive
/// when the list is non-empty.
pub fn search_sensitive(sentences: &mut [SentenceRecord], patterns: &[KeywordPattern]) -> Result<()> {
    let compiled = compile(patterns)?;
    for s in sentences {
        s.matched_patterns = matches_compiled(&tokenize(&s.text), &compiled);
    }
    Ok(())
}
