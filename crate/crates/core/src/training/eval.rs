use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Triple;
use crate::edits::{m2_score_sentences, per_category_accuracy, CategoryReport, MetricReport};
use crate::error::Result;
use crate::model::Model;
use crate::textnorm::{normalize_punctuation, Vocabulary};

/// Anything that maps (source, draft translation) to a corrected translation.
pub trait Corrector: Sync {
    fn correct(&self, source: &str, original: &str) -> Result<String>;
}

/// Returns the draft unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoEdit;

impl Corrector for NoEdit {
    fn correct(&self, _source: &str, original: &str) -> Result<String> {
        Ok(original.to_owned())
    }
}

/// Greedy decoding with a trained model over a shared vocabulary.
#[derive(Debug, Clone, Copy)]
pub struct NeuralCorrector<'a> {
    pub model: &'a Model,
    pub vocab: &'a Vocabulary,
}

impl Corrector for NeuralCorrector<'_> {
    /// Inputs longer than the model's `max_len` are returned unchanged.
    fn correct(&self, source: &str, original: &str) -> Result<String> {
        let s = self.vocab.encode(source);
        let t = self.vocab.encode(original);
        let max = self.model.config.max_len;
        if s.len() >= max || t.len() >= max {
            return Ok(normalize_punctuation(original));
        }
        let out = self.model.greedy_decode(&s, &t)?;
        Ok(self.vocab.decode(&out))
    }
}

/// Corrects every triple, in parallel but in input order.
pub fn correct_all(corrector: &dyn Corrector, triples: &[Triple]) -> Result<Vec<String>> {
    triples
        .par_iter()
        .map(|t| corrector.correct(&t.source, &t.original))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRun {
    pub split: String,
    pub checkpoint: String,
    pub m2: MetricReport,
    pub gleu: f64,
    pub sentence_accuracy: f64,
    pub categories: CategoryReport,
}

/// Scores hypotheses that are parallel to `triples`. All text is
/// punctuation-normalized before comparison.
pub fn score_hypotheses(
    hypotheses: &[String],
    triples: &[Triple],
    split: &str,
    checkpoint: &str,
) -> Result<EvalRun> {
    let norm = |s: &str| normalize_punctuation(s);
    let hyps: Vec<String> = hypotheses.iter().map(|h| norm(h)).collect();
    let origs: Vec<String> = triples.iter().map(|t| norm(&t.original)).collect();
    let refs: Vec<String> = triples.iter().map(|t| norm(&t.corrected)).collect();
    let m2 = m2_score_sentences(&origs, &hyps, &refs, 0.5)?;
    let categories = per_category_accuracy(&hyps, triples)?;
    Ok(EvalRun {
        split: split.to_owned(),
        checkpoint: checkpoint.to_owned(),
        m2,
        gleu: categories.gleu,
        sentence_accuracy: categories.overall.accuracy.unwrap_or(0.0),
        categories,
    })
}

/// Decodes every triple and computes edit-level, n-gram and sentence-level
/// scores.
pub fn evaluate_model(
    corrector: &dyn Corrector,
    triples: &[Triple],
    split: &str,
    checkpoint: &str,
) -> Result<EvalRun> {
    let hyps = correct_all(corrector, triples)?;
    score_hypotheses(&hyps, triples, split, checkpoint)
}
