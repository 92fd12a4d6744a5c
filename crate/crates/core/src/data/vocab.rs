use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;

/// Token ↔ id mapping. Ids 0 and 1 are padding and unknown; the rest
/// follow first occurrence in the corpus it was built from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Builds from token streams (training split only).
    pub fn build<I, S, T>(streams: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: IntoIterator<Item = T>,
        T: AsRef<str>,
    {
        let mut vocab = Self::specials();
        for stream in streams {
            for tok in stream {
                let tok = tok.as_ref();
                if !vocab.index.contains_key(tok) {
                    vocab.push(tok.to_string());
                }
            }
        }
        if vocab.len() == 2 {
            return Err(Error::Data("cannot build a vocabulary from an empty corpus".into()));
        }
        Ok(vocab)
    }

    fn specials() -> Self {
        let mut v = Vocabulary {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        v.push(PAD_TOKEN.into());
        v.push(UNK_TOKEN.into());
        v
    }

    fn push(&mut self, tok: String) {
        self.index.insert(tok.clone(), self.tokens.len() as u32);
        self.tokens.push(tok);
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Maps tokens to ids; an empty sequence becomes a single unknown token
    /// so that every sentence has at least one position.
    pub fn encode<T: AsRef<str>>(&self, tokens: &[T]) -> Vec<u32> {
        if tokens.is_empty() {
            return vec![UNK_ID];
        }
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        for (i, t) in self.tokens.iter().enumerate() {
            writeln!(s, "{t}\t{i}").unwrap();
        }
        s
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut v = Vocabulary {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for (n, line) in text.lines().enumerate() {
            let bad = |why: &str| Error::Format(format!("vocabulary line {}: {why}", n + 1));
            let (tok, id) = line.rsplit_once('\t').ok_or_else(|| bad("expected <token>\\t<id>"))?;
            let id: usize = id.parse().map_err(|_| bad("id is not an integer"))?;
            if id != v.tokens.len() {
                return Err(bad(&format!("expected id {}, found {id}", v.tokens.len())));
            }
            if v.index.contains_key(tok) {
                return Err(bad(&format!("duplicate token {tok:?}")));
            }
            v.push(tok.to_string());
        }
        if v.tokens.len() < 2 || v.tokens[0] != PAD_TOKEN || v.tokens[1] != UNK_TOKEN {
            return Err(Error::Format(format!(
                "vocabulary must start with {PAD_TOKEN} and {UNK_TOKEN}"
            )));
        }
        Ok(v)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tsv(&text)
    }

    /// Hex SHA-256 of the serialised form.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.to_tsv().as_bytes()))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
