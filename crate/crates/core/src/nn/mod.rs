//! Dense tensors and the layer kernels both architectures are built from.
//!
//! Every layer has a forward pass that returns a cache and a hand-derived
//! backward pass that consumes it. Kernels are single-threaded, and each
//! output row of a batched call depends only on the matching input row.

mod batch_norm;
mod dense;
mod dropout;
pub mod grad_check;
mod lstm;
pub mod ops;
mod param;
mod rng;
mod scalar;
mod tensor;

pub use batch_norm::{BatchNorm, BatchNormCache, BATCH_NORM_EPS, BATCH_NORM_MOMENTUM};
pub use dense::{time_distributed_dense, Activation, Dense, DenseCache};
pub use dropout::{dropout, DropoutMask};
pub use grad_check::{grad_check, Differentiable, Evaluation, GradCheckConfig, GradCheckReport};
pub use lstm::{
    lstm_sequence, lstm_sequence_backward, lstm_step, reverse_valid, BiLstm, BiLstmCache,
    LstmSeqCache, LstmWeights,
};
pub use ops::{argmax, cross_entropy, matmul, softmax, transpose};
pub use param::Parameter;
pub use rng::SeededRng;
pub use scalar::Scalar;
pub use tensor::Tensor;
