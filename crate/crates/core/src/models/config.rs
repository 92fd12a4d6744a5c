use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Design {
    /// Time-distributed translate layer, sum pooling, dense stack with
    /// batch normalisation; trainable embedding.
    #[serde(rename = "design_1")]
    Design1,
    /// Intra- and inter-attention over translate projections, then a
    /// BiLSTM sentence encoder; frozen embedding.
    #[serde(rename = "design_2")]
    Design2,
}

/// Output classes in the fixed order used by every probability vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Contradiction = 0,
    Neutral = 1,
    Entailment = 2,
}

pub const CLASS_ORDER: [Label; 3] = [Label::Contradiction, Label::Neutral, Label::Entailment];

impl Label {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        CLASS_ORDER.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Contradiction => "contradiction",
            Label::Neutral => "neutral",
            Label::Entailment => "entailment",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        match s {
            "contradiction" => Some(Label::Contradiction),
            "neutral" => Some(Label::Neutral),
            "entailment" => Some(Label::Entailment),
            _ => None,
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub design: Design,
    pub embed_dim: usize,
    pub translate_dim: usize,
    pub dense_dims: Vec<usize>,
    pub num_classes: usize,
    pub dropout_rate: f64,
    /// units per direction; Design-II only
    pub bilstm_units: usize,
    pub max_len: usize,
    pub embedding_trainable: bool,
    /// batch normalisation after each dense layer of the head
    pub batch_norm: bool,
}

impl ModelConfig {
    pub fn design_1() -> Self {
        ModelConfig {
            design: Design::Design1,
            embed_dim: 300,
            translate_dim: 300,
            dense_dims: vec![900, 600, 300],
            num_classes: 3,
            dropout_rate: 0.5,
            bilstm_units: 150,
            max_len: 42,
            embedding_trainable: true,
            batch_norm: true,
        }
    }

    pub fn design_2() -> Self {
        ModelConfig {
            design: Design::Design2,
            dropout_rate: 0.2,
            embedding_trainable: false,
            batch_norm: false,
            ..Self::design_1()
        }
    }

    pub fn for_design(design: Design) -> Self {
        match design {
            Design::Design1 => Self::design_1(),
            Design::Design2 => Self::design_2(),
        }
    }

    /// Width of the per-sentence vector fed to the `[p; h; |p-h|]` merge.
    pub fn sentence_dim(&self) -> usize {
        match self.design {
            Design::Design1 => self.translate_dim,
            Design::Design2 => 2 * self.bilstm_units,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.num_classes != CLASS_ORDER.len() {
            return fail(format!("num_classes must be 3, got {}", self.num_classes));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail(format!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        if self.dense_dims.is_empty() {
            return fail("dense_dims must not be empty".into());
        }
        if self.dense_dims.windows(2).any(|w| w[1] >= w[0]) {
            return fail(format!(
                "dense_dims must be strictly decreasing, got {:?}",
                self.dense_dims
            ));
        }
        if self.dense_dims.contains(&0) || self.embed_dim == 0 || self.translate_dim == 0 {
            return fail("layer widths must be positive".into());
        }
        if self.max_len == 0 {
            return fail("max_len must be at least 1".into());
        }
        if self.design == Design::Design2 && self.bilstm_units == 0 {
            return fail("bilstm_units must be positive for design_2".into());
        }
        Ok(())
    }
}
