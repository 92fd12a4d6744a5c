//! Sentence-pair classifiers: a pooled encoder (Design-I) and an
//! attention + BiLSTM encoder (Design-II).

mod attention;
mod config;
mod encoded;
mod network;

pub use attention::{
    inter_attention, inter_attention_backward, intra_attention, intra_attention_backward,
    InterAttentionCache, InterAttentionGrads, InterAttentionOutput, IntraAttentionCache,
};
pub use config::{Design, Label, ModelConfig, CLASS_ORDER};
pub use encoded::EncodedPair;
pub use network::{build_design_1, build_design_2, Encoder, ForwardPass, HeadLayer, Mode, Model};

use serde::Serialize;

use crate::error::Result;
use crate::nn::grad_check::{Differentiable, Evaluation};
use crate::nn::{cross_entropy, Parameter, Scalar, SeededRng};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LayerCount {
    pub name: String,
    pub trainable: usize,
    pub non_trainable: usize,
}

/// Trainable vs non-trainable element counts, total and per parameter.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ParameterReport {
    pub trainable: usize,
    pub non_trainable: usize,
    pub layers: Vec<LayerCount>,
}

impl ParameterReport {
    pub fn from_params<'a, T: Scalar + 'a, I>(params: I) -> Self
    where
        I: IntoIterator<Item = (String, &'a Parameter<T>)>,
    {
        let mut report = ParameterReport::default();
        for (name, p) in params {
            let n = p.value.len();
            let (t, nt) = if p.trainable { (n, 0) } else { (0, n) };
            report.trainable += t;
            report.non_trainable += nt;
            report.layers.push(LayerCount {
                name,
                trainable: t,
                non_trainable: nt,
            });
        }
        report
    }

    pub fn total(&self) -> usize {
        self.trainable + self.non_trainable
    }
}

/// Wraps a 64-bit model and a fixed labelled micro-batch so that the full
/// network can be finite-difference checked. Dropout draws are replayed
/// from the same seed on every evaluation.
pub struct GradCheckHarness<'a> {
    pub model: Model<f64>,
    pub batch: &'a [EncodedPair],
    pub labels: &'a [usize],
    pub mode: Mode,
    pub dropout_seed: u64,
    names: Vec<String>,
}

impl<'a> GradCheckHarness<'a> {
    pub fn new(model: Model<f64>, batch: &'a [EncodedPair], labels: &'a [usize], mode: Mode) -> Self {
        let names = model.named_params().into_iter().map(|(n, _)| n).collect();
        GradCheckHarness {
            model,
            batch,
            labels,
            mode,
            dropout_seed: 0,
            names,
        }
    }

    fn run(&self) -> Result<(ForwardPass<f64>, f64, crate::nn::Tensor<f64>)> {
        let mut rng = SeededRng::new(self.dropout_seed);
        let pass = self.model.forward(self.batch, self.mode, &mut rng)?;
        let (loss, dlogits) = cross_entropy(&pass.probs, self.labels)?;
        Ok((pass, loss, dlogits))
    }
}

impl Differentiable for GradCheckHarness<'_> {
    fn param_count(&self) -> usize {
        self.names.len()
    }

    fn param_name(&self, i: usize) -> String {
        self.names[i].clone()
    }

    fn param(&mut self, i: usize) -> &mut Parameter<f64> {
        self.model.named_params_mut().swap_remove(i).1
    }

    fn evaluate(&mut self) -> Result<Evaluation> {
        let (pass, loss, _) = self.run()?;
        Ok(Evaluation {
            loss,
            branches: pass.branch_signature(),
        })
    }

    fn loss_and_grad(&mut self) -> Result<f64> {
        self.model.zero_grad();
        let (pass, loss, dlogits) = self.run()?;
        self.model.backward(&pass, &dlogits)?;
        Ok(loss)
    }
}

