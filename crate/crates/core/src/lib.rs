//! Natural-language-inference models trained from scratch, and a pipeline
//! that uses them to compare privacy-policy sentences against regulation
//! clauses.
//!
//! The crate is organised bottom-up:
//!
//! * [`nn`]: dense tensors and hand-derived forward/backward kernels.
//! * [`models`]: the two sentence-pair architectures built from those kernels.
//! * [`data`]: tokenization, vocabularies, corpus loaders and batching.
//! * [`train`]: Adam, the training loop, evaluation and checkpoints.
//! * [`corpus`]: policy acquisition, text extraction, segmentation and search.
//! * [`compliance`]: clause/sentence pairing, verdicts and reports.

pub mod clock;
pub mod compliance;
pub mod corpus;
pub mod data;
pub mod error;
pub mod models;
pub mod nn;
pub mod testkit;
pub mod train;

pub use error::{Error, Result};
