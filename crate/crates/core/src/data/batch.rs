use crate::data::{NliExample, Vocabulary};
use crate::error::{Error, Result};
use crate::models::{EncodedPair, Label};
use crate::nn::SeededRng;

/// A labelled, id-encoded example ready for the model.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sample {
    pub pair: EncodedPair,
    pub label: Label,
}

pub fn encode_examples(examples: &[NliExample], vocab: &Vocabulary, max_len: usize) -> Result<Vec<Sample>> {
    examples
        .iter()
        .map(|e| {
            Ok(Sample {
                pair: EncodedPair::new(
                    &vocab.encode(&e.premise_tokens),
                    &vocab.encode(&e.hypothesis_tokens),
                    max_len,
                )?,
                label: e.label,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    /// positions in the input slice
    pub indices: Vec<usize>,
    pub pairs: Vec<EncodedPair>,
    pub labels: Vec<usize>,
}

/// Deterministic epoch order: a Fisher-Yates shuffle drawn from
/// `(seed, epoch)`, or input order when `seed` is `None`.
pub fn epoch_order(n: usize, seed: Option<u64>, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    if let Some(seed) = seed {
        let mut rng = SeededRng::new(seed).fork(epoch as u64);
        rng.shuffle(&mut order);
    }
    order
}

/// Splits one epoch into batches of `batch_size`; the last batch may be
/// smaller.
pub fn make_batches(samples: &[Sample], batch_size: usize, shuffle_seed: Option<u64>, epoch: usize) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    let order = epoch_order(samples.len(), shuffle_seed, epoch);
    Ok(order
        .chunks(batch_size)
        .map(|idx| Batch {
            indices: idx.to_vec(),
            pairs: idx.iter().map(|&i| samples[i].pair.clone()).collect(),
            labels: idx.iter().map(|&i| samples[i].label.index()).collect(),
        })
        .collect())
}
