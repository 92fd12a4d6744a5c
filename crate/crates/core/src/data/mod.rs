//! Tokenisation, vocabularies, corpus loaders, pretrained embeddings and
//! batching.

mod batch;
mod embeddings;
mod nli;
mod tokenize;
pub mod toy;
mod vocab;

pub use batch::{encode_examples, epoch_order, make_batches, Batch, Sample};
pub use embeddings::{init_embeddings, load_embeddings, EmbeddingMatrix, OOV_INIT_LIMIT};
pub use nli::{
    find_split, load_mnli, load_snli, split_file_name, Corpus, LoadStats, NliExample, Split,
    MALFORMED_TOLERANCE, MNLI_GENRES,
};
pub use tokenize::tokenize;
pub use vocab::{Vocabulary, PAD_ID, PAD_TOKEN, UNK_ID, UNK_TOKEN};
pub(crate) use vocab::hex;
