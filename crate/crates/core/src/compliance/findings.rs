use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compliance::{verdict, RegulationClause, Verdict};
use crate::corpus::{match_sentence, PolicyDocument};
use crate::data::{tokenize, Vocabulary};
use crate::error::{Error, Result};
use crate::models::{EncodedPair, Model};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub app_id: String,
    pub clause_id: String,
    pub sentence_index: usize,
    pub sentence: String,
    /// `[contradiction, neutral, entailment]`
    pub probs: [f32; 3],
    pub verdict: Verdict,
    pub model_id: String,
}

const CHUNK: usize = 64;

/// Runs the model on one premise/hypothesis pair of raw strings.
pub fn predict_pair(model: &Model<f32>, vocab: &Vocabulary, premise: &str, hypothesis: &str) -> Result<[f32; 3]> {
    check_vocab(model, vocab)?;
    let max_len = model.config().max_len;
    let pair = EncodedPair::new(&vocab.encode(&tokenize(premise)), &vocab.encode(&tokenize(hypothesis)), max_len)?;
    let p = model.predict(&[pair])?;
    Ok([p.row(0)[0], p.row(0)[1], p.row(0)[2]])
}

fn check_vocab(model: &Model<f32>, vocab: &Vocabulary) -> Result<()> {
    if vocab.len() != model.vocab_size() {
        return Err(Error::Compatibility(format!(
            "vocabulary has {} entries but the model embeds {}",
            vocab.len(),
            model.vocab_size()
        )));
    }
    Ok(())
}

/// Pairs every clause with every sentence that matches one of the clause's
/// keyword patterns and classifies each pair (clause as premise, sentence as
/// hypothesis). Findings are sorted by contradiction probability, highest
/// first, then by app id, clause id and sentence index.
pub fn pair_and_predict(
    clauses: &[RegulationClause],
    documents: &[PolicyDocument],
    model: &Model<f32>,
    vocab: &Vocabulary,
    model_id: &str,
    threshold: f64,
) -> Result<Vec<Finding>> {
    check_vocab(model, vocab)?;
    let max_len = model.config().max_len;
    let premises: Vec<Vec<u32>> = clauses.iter().map(|c| vocab.encode(&tokenize(&c.text))).collect();
    let patterns: Vec<_> = clauses.iter().map(|c| c.keyword_patterns()).collect();

    let mut jobs: Vec<(usize, &PolicyDocument, usize)> = Vec::new();
    for doc in documents {
        for (si, s) in doc.sentences.iter().enumerate() {
            for (ci, pats) in patterns.iter().enumerate() {
                if !match_sentence(&s.text, pats)?.is_empty() {
                    jobs.push((ci, doc, si));
                }
            }
        }
    }
    let pairs: Vec<EncodedPair> = jobs
        .iter()
        .map(|&(ci, doc, si)| {
            let h = vocab.encode(&tokenize(&doc.sentences[si].text));
            EncodedPair::new(&premises[ci], &h, max_len)
        })
        .collect::<Result<_>>()?;
    let probs: Vec<Vec<[f32; 3]>> = pairs
        .par_chunks(CHUNK)
        .map(|chunk| {
            let p = model.predict(chunk)?;
            Ok((0..chunk.len()).map(|r| [p.row(r)[0], p.row(r)[1], p.row(r)[2]]).collect())
        })
        .collect::<Result<_>>()?;

    let mut findings = Vec::with_capacity(jobs.len());
    for (&(ci, doc, si), p) in jobs.iter().zip(probs.into_iter().flatten()) {
        let s = &doc.sentences[si];
        let v = verdict(&p.map(f64::from), threshold)?;
        findings.push(Finding {
            app_id: doc.meta.app_id.clone(),
            clause_id: clauses[ci].id.clone(),
            sentence_index: s.index,
            sentence: s.text.clone(),
            probs: p,
            verdict: v,
            model_id: model_id.to_string(),
        });
    }
    sort_findings(&mut findings);
    Ok(findings)
}

pub fn sort_findings(findings: &mut [Finding]) {
    findings.sort_by(|a, b| {
        b.probs[0]
            .total_cmp(&a.probs[0])
            .then_with(|| a.app_id.cmp(&b.app_id))
            .then_with(|| a.clause_id.cmp(&b.clause_id))
            .then_with(|| a.sentence_index.cmp(&b.sentence_index))
    });
}
