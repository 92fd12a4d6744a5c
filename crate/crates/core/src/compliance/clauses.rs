use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::KeywordPattern;
use crate::data::hex;
use crate::error::{Error, Result};

/// The clause file bundled with the crate (a starter set of GDPR
/// provisions).
pub const SHIPPED_GDPR_CLAUSES: &str = include_str!("../../clauses/gdpr.json");

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegulationClause {
    pub id: String,
    pub source: String,
    /// used as the premise
    pub text: String,
    /// each inner list is one conjunction of terms
    pub patterns: Vec<Vec<String>>,
}

impl RegulationClause {
    /// Patterns with ids `<clause id>#<k>`.
    pub fn keyword_patterns(&self) -> Vec<KeywordPattern> {
        self.patterns
            .iter()
            .enumerate()
            .map(|(k, terms)| KeywordPattern {
                id: format!("{}#{k}", self.id),
                terms: terms.clone(),
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClauseSet {
    pub clauses: Vec<RegulationClause>,
    /// hex SHA-256 of the file contents
    pub sha256: String,
}

impl ClauseSet {
    pub fn patterns(&self) -> Vec<KeywordPattern> {
        self.clauses.iter().flat_map(|c| c.keyword_patterns()).collect()
    }
}

pub fn parse_clauses(text: &str) -> Result<ClauseSet> {
    let sha256 = hex(&Sha256::digest(text.as_bytes()));
    let clauses: Vec<RegulationClause> = if text.trim().is_empty() {
        Vec::new()
    } else {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("clause file: {e}")))?
    };
    if clauses.is_empty() {
        log::warn!("clause file contains no clauses");
    }
    let mut seen = HashSet::new();
    for c in &clauses {
        if !seen.insert(c.id.as_str()) {
            return Err(Error::Config(format!("duplicate clause id {}", c.id)));
        }
        if c.text.trim().is_empty() {
            return Err(Error::Config(format!("clause {} has empty text", c.id)));
        }
        if c.patterns.is_empty() || c.patterns.iter().any(|p| p.is_empty() || p.iter().any(|t| t.trim().is_empty())) {
            return Err(Error::Config(format!("clause {} needs at least one non-empty pattern", c.id)));
        }
    }
    Ok(ClauseSet { clauses, sha256 })
}

pub fn load_clauses(path: &Path) -> Result<ClauseSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_clauses(&text)
}

pub fn shipped_clauses() -> ClauseSet {
    parse_clauses(SHIPPED_GDPR_CLAUSES).expect("bundled clause file is valid")
}
