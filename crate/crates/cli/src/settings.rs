//! Optional TOML configuration. Command-line flags take precedence.
//!
//! ```toml
//! seed = 7
//! data_dir = "/data/nli"
//!
//! [train]
//! epochs = 5
//! batch_size = 512
//! lr = 0.001
//!
//! [model]
//! max_len = 42
//!
//! [fetch]
//! timeout_secs = 20
//! per_host_delay_ms = 1000
//! jobs = 8
//! ```

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub data_dir: Option<PathBuf>,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub fetch: FetchSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub eps: Option<f64>,
    pub limit: Option<usize>,
    pub log_wall_clock: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub max_len: Option<usize>,
    pub embed_dim: Option<usize>,
    pub translate_dim: Option<usize>,
    pub dense_dims: Option<Vec<usize>>,
    pub bilstm_units: Option<usize>,
    pub dropout_rate: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FetchSection {
    pub timeout_secs: Option<u64>,
    pub retries: Option<u32>,
    pub per_host_delay_ms: Option<u64>,
    pub max_body: Option<usize>,
    pub jobs: Option<usize>,
}

pub fn load(path: &Path) -> anyhow::Result<FileConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections() {
        let c: FileConfig = toml::from_str("seed = 3\n[train]\nepochs = 2\n[fetch]\njobs = 1\n").unwrap();
        assert_eq!(c.seed, Some(3));
        assert_eq!(c.train.epochs, Some(2));
        assert_eq!(c.fetch.jobs, Some(1));
        assert!(toml::from_str::<FileConfig>("bogus = 1").is_err());
    }
}
