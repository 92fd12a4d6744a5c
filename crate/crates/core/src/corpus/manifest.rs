use std::path::Path;

use serde::{Deserialize, Serialize};
use url::Url;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub app_id: String,
    pub policy_url: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    /// entries dropped for an unusable URL or app id
    pub skipped: usize,
}

/// An app id must be usable as a single directory name.
pub fn valid_app_id(id: &str) -> bool {
    !id.is_empty()
        && id != "."
        && id != ".."
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_alphanumeric() || matches!(c, '.' | '_' | '-'))
}

pub fn parse_manifest(text: &str) -> Result<Manifest> {
    let raw: Vec<ManifestEntry> =
        serde_json::from_str(text).map_err(|e| Error::Format(format!("manifest: {e}")))?;
    let mut out = Manifest::default();
    for entry in raw {
        let ok_url = matches!(Url::parse(&entry.policy_url), Ok(u) if matches!(u.scheme(), "http" | "https") && u.host().is_some());
        if !ok_url {
            log::warn!("skipping {}: {:?} is not an absolute http(s) URL", entry.app_id, entry.policy_url);
            out.skipped += 1;
        } else if !valid_app_id(&entry.app_id) {
            log::warn!("skipping entry with unusable app_id {:?}", entry.app_id);
            out.skipped += 1;
        } else if out.entries.iter().any(|e| e.app_id == entry.app_id) {
            log::warn!("skipping duplicate app_id {:?}", entry.app_id);
            out.skipped += 1;
        } else {
            out.entries.push(entry);
        }
    }
    Ok(out)
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text)
}
