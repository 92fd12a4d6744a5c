use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Design;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSelector {
    Snli,
    Mnli,
    MnliGovernment,
    /// built-in synthetic corpus, see `data::toy`
    Toy,
}

impl DatasetSelector {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "snli" => Some(Self::Snli),
            "mnli" => Some(Self::Mnli),
            "mnli_government" | "mnli-government" | "government" => Some(Self::MnliGovernment),
            "toy" => Some(Self::Toy),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Snli => "snli",
            Self::Mnli => "mnli",
            Self::MnliGovernment => "mnli_government",
            Self::Toy => "toy",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub optimizer: AdamConfig,
    pub seed: u64,
    pub dataset: DatasetSelector,
    pub design: Design,
    /// keep only the first `limit` training examples
    #[serde(default)]
    pub limit: Option<usize>,
    /// include per-epoch wall-clock seconds in the metrics file
    #[serde(default)]
    pub log_wall_clock: bool,
}

impl TrainConfig {
    /// Epoch and batch budgets used for each corpus.
    pub fn preset(dataset: DatasetSelector) -> Self {
        let (design, epochs, batch_size) = match dataset {
            DatasetSelector::Snli => (Design::Design1, 30, 512),
            DatasetSelector::Mnli => (Design::Design2, 25, 1024),
            DatasetSelector::MnliGovernment => (Design::Design2, 60, 1024),
            DatasetSelector::Toy => (Design::Design1, 30, 32),
        };
        TrainConfig {
            epochs,
            batch_size,
            optimizer: AdamConfig::default(),
            seed: 0,
            dataset,
            design,
            limit: None,
            log_wall_clock: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        let o = &self.optimizer;
        if !(o.lr > 0.0 && o.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", o.lr)));
        }
        if !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) {
            return Err(Error::Config("adam betas must lie in [0, 1)".into()));
        }
        if !(o.eps > 0.0) {
            return Err(Error::Config("adam eps must be positive".into()));
        }
        Ok(())
    }
}
