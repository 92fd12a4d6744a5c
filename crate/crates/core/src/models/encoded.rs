use crate::error::{Error, Result};

/// Token ids of one premise/hypothesis pair, right-truncated to `max_len`
/// and zero-padded to it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedPair {
    pub premise_ids: Vec<u32>,
    pub hypothesis_ids: Vec<u32>,
    pub premise_len: usize,
    pub hypothesis_len: usize,
}

fn fit(ids: &[u32], max_len: usize, side: &str) -> Result<(Vec<u32>, usize)> {
    if ids.is_empty() {
        return Err(Error::Data(format!("{side} has no tokens")));
    }
    let len = ids.len().min(max_len);
    let mut out = ids[..len].to_vec();
    out.resize(max_len, 0);
    Ok((out, len))
}

impl EncodedPair {
    pub fn new(premise: &[u32], hypothesis: &[u32], max_len: usize) -> Result<Self> {
        if max_len == 0 {
            return Err(Error::Config("max_len must be at least 1".into()));
        }
        let (premise_ids, premise_len) = fit(premise, max_len, "premise")?;
        let (hypothesis_ids, hypothesis_len) = fit(hypothesis, max_len, "hypothesis")?;
        Ok(EncodedPair {
            premise_ids,
            hypothesis_ids,
            premise_len,
            hypothesis_len,
        })
    }

    pub fn premise(&self) -> &[u32] {
        &self.premise_ids[..self.premise_len]
    }

    pub fn hypothesis(&self) -> &[u32] {
        &self.hypothesis_ids[..self.hypothesis_len]
    }

    /// Same pair with extra padding appended to each side.
    pub fn with_padding(&self, premise_extra: usize, hypothesis_extra: usize) -> Self {
        let mut out = self.clone();
        out.premise_ids.extend(std::iter::repeat_n(0, premise_extra));
        out.hypothesis_ids.extend(std::iter::repeat_n(0, hypothesis_extra));
        out
    }

    /// Swap premise and hypothesis.
    pub fn swapped(&self) -> Self {
        EncodedPair {
            premise_ids: self.hypothesis_ids.clone(),
            hypothesis_ids: self.premise_ids.clone(),
            premise_len: self.hypothesis_len,
            hypothesis_len: self.premise_len,
        }
    }

    pub(crate) fn validate(&self, vocab_size: usize) -> Result<()> {
        for (ids, len, side) in [
            (&self.premise_ids, self.premise_len, "premise"),
            (&self.hypothesis_ids, self.hypothesis_len, "hypothesis"),
        ] {
            if len == 0 || len > ids.len() {
                return Err(Error::Data(format!(
                    "{side} length {len} invalid for {} ids",
                    ids.len()
                )));
            }
            if let Some(&bad) = ids[..len].iter().find(|&&id| id as usize >= vocab_size) {
                return Err(Error::Data(format!(
                    "{side} token id {bad} outside vocabulary of {vocab_size}"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncates_right_and_pads() {
        let long: Vec<u32> = (2..62).collect();
        let pair = EncodedPair::new(&long, &[5, 6], 42).unwrap();
        assert_eq!(pair.premise_len, 42);
        assert_eq!(pair.premise(), &long[..42]);
        assert_eq!(pair.hypothesis_ids.len(), 42);
        assert_eq!(pair.hypothesis_len, 2);
        assert!(pair.hypothesis_ids[2..].iter().all(|&i| i == 0));
    }

    #[test]
    fn empty_side_is_rejected() {
        assert!(EncodedPair::new(&[], &[3], 4).is_err());
    }

    #[test]
    fn out_of_vocabulary_id() {
        let pair = EncodedPair::new(&[2, 9], &[3], 4).unwrap();
        assert!(pair.validate(10).is_ok());
        assert!(matches!(pair.validate(9), Err(Error::Data(_))));
    }
}
