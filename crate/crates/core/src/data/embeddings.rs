use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::data::Vocabulary;
use crate::error::{Error, Result};
use crate::nn::{SeededRng, Tensor};

/// Half-width of the uniform range used for words without a pretrained
/// vector when the embedding is trainable.
pub const OOV_INIT_LIMIT: f64 = 0.05;

#[derive(Clone, Debug)]
pub struct EmbeddingMatrix {
    /// `V × dim`; row 0 is zero
    pub matrix: Tensor<f32>,
    /// vocabulary entries (ids ≥ 2) that received a pretrained vector
    pub found: usize,
    /// `found / (V - 2)`
    pub coverage: f64,
    /// vectors parsed from the file
    pub vectors_read: usize,
}

/// Rows for every vocabulary entry: random when trainable, zero when frozen.
/// Used when no pretrained file is available.
pub fn init_embeddings(vocab: &Vocabulary, dim: usize, trainable: bool, rng: &mut SeededRng) -> EmbeddingMatrix {
    let v = vocab.len();
    let mut matrix = Tensor::zeros(&[v, dim]);
    if trainable {
        for id in 1..v {
            for x in matrix.row_mut(id) {
                *x = rng.uniform(-OOV_INIT_LIMIT, OOV_INIT_LIMIT) as f32;
            }
        }
    }
    EmbeddingMatrix {
        matrix,
        found: 0,
        coverage: 0.0,
        vectors_read: 0,
    }
}

/// Reads a whitespace-separated `<token> <f1> ... <f_dim>` file and fills
/// the rows of vocabulary words it contains. Other rows are initialised as
/// in [`init_embeddings`]. Random draws happen before the file is read, in
/// id order, so results do not depend on file order.
pub fn load_embeddings(
    path: &Path,
    vocab: &Vocabulary,
    dim: usize,
    trainable: bool,
    rng: &mut SeededRng,
) -> Result<EmbeddingMatrix> {
    let mut out = init_embeddings(vocab, dim, trainable, rng);
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::with_capacity(1 << 20, file);
    let mut seen = vec![false; vocab.len()];
    let mut row = vec![0f32; dim];
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches(['\r', ' ']);
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(' ');
        let token = fields.next().unwrap();
        let mut count = 0;
        for f in fields {
            if count < dim {
                row[count] = f.parse::<f32>().map_err(|_| {
                    Error::Data(format!("{}:{}: {f:?} is not a number", path.display(), n + 1))
                })?;
            }
            count += 1;
        }
        if count != dim {
            return Err(Error::Data(format!(
                "{}:{}: expected {} fields, found {}",
                path.display(),
                n + 1,
                dim + 1,
                count + 1
            )));
        }
        out.vectors_read += 1;
        if let Some(id) = vocab.get(token) {
            let id = id as usize;
            if id >= 2 && !seen[id] {
                seen[id] = true;
                out.found += 1;
                out.matrix.row_mut(id).copy_from_slice(&row);
            }
        }
    }
    let words = vocab.len().saturating_sub(2);
    out.coverage = if words == 0 { 0.0 } else { out.found as f64 / words as f64 };
    Ok(out)
}
