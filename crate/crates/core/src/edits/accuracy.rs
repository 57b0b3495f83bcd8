//! Exact-match sentence accuracy, overall and per error category.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::gleu::gleu;
use crate::corpus::{ErrorLabel, Triple};
use crate::error::{Error, Result};
use crate::textnorm::normalize_punctuation;

fn same(a: &str, b: &str) -> bool {
    normalize_punctuation(a) == normalize_punctuation(b)
}

/// Fraction of hypotheses equal to their reference after normalization.
pub fn sentence_accuracy<S: AsRef<str>>(hyps: &[S], refs: &[S]) -> Result<f64> {
    if hyps.len() != refs.len() {
        return Err(Error::LengthMismatch {
            left: hyps.len(),
            right: refs.len(),
        });
    }
    if hyps.is_empty() {
        return Ok(0.0);
    }
    let correct = hyps
        .iter()
        .zip(refs)
        .filter(|(h, r)| same(h.as_ref(), r.as_ref()))
        .count();
    Ok(correct as f64 / hyps.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupAccuracy {
    pub n_sentences: usize,
    pub correct: usize,
    /// Absent when the group is empty.
    pub accuracy: Option<f64>,
}

impl GroupAccuracy {
    fn new(n_sentences: usize, correct: usize) -> Self {
        Self {
            n_sentences,
            correct,
            accuracy: (n_sentences > 0).then(|| correct as f64 / n_sentences as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    pub per_label: BTreeMap<ErrorLabel, GroupAccuracy>,
    pub overall: GroupAccuracy,
    pub unedited: GroupAccuracy,
    pub gleu: f64,
}

/// Accuracy over every sentence, over unedited sentences, and over the edited
/// sentences carrying each label. Hypotheses are parallel to `triples`.
pub fn per_category_accuracy<S: AsRef<str>>(hyps: &[S], triples: &[Triple]) -> Result<CategoryReport> {
    if hyps.len() != triples.len() {
        return Err(Error::LengthMismatch {
            left: hyps.len(),
            right: triples.len(),
        });
    }
    let mut label_counts: BTreeMap<ErrorLabel, (usize, usize)> =
        ErrorLabel::ALL.iter().map(|&l| (l, (0, 0))).collect();
    let (mut correct, mut unedited_n, mut unedited_ok) = (0, 0, 0);
    for (h, t) in hyps.iter().zip(triples) {
        let ok = same(h.as_ref(), &t.corrected);
        correct += usize::from(ok);
        if !t.is_edited() {
            unedited_n += 1;
            unedited_ok += usize::from(ok);
        }
        for label in &t.labels {
            let entry = label_counts.get_mut(label).expect("all labels pre-seeded");
            entry.0 += 1;
            entry.1 += usize::from(ok);
        }
    }
    let gleu = if triples.is_empty() {
        0.0
    } else {
        let refs: Vec<&str> = triples.iter().map(|t| t.corrected.as_str()).collect();
        let srcs: Vec<&str> = triples.iter().map(|t| t.original.as_str()).collect();
        let hyps: Vec<&str> = hyps.iter().map(AsRef::as_ref).collect();
        gleu(&hyps, &refs, &srcs, 4)?
    };
    Ok(CategoryReport {
        per_label: label_counts
            .into_iter()
            .map(|(l, (n, c))| (l, GroupAccuracy::new(n, c)))
            .collect(),
        overall: GroupAccuracy::new(triples.len(), correct),
        unedited: GroupAccuracy::new(unedited_n, unedited_ok),
        gleu,
    })
}

fn pct(g: &GroupAccuracy) -> String {
    g.accuracy.map_or_else(|| "-".to_owned(), |a| format!("{:.2}", a * 100.0))
}

impl fmt::Display for CategoryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let labels = ["Typos", "Grammar", "Fluency", "Bilingual", "Preferential"];
        write!(f, "{:>8} {:>8} {:>9}", "GLEU", "Overall", "Unedited")?;
        for l in labels {
            write!(f, " {l:>12}")?;
        }
        writeln!(f)?;
        write!(f, "{:>8} {:>8} {:>9}", "", format!("/{}", self.overall.n_sentences), format!("/{}", self.unedited.n_sentences))?;
        for l in ErrorLabel::ALL {
            write!(f, " {:>12}", format!("/{}", self.per_label[&l].n_sentences))?;
        }
        writeln!(f)?;
        write!(f, "{:>8.2} {:>8} {:>9}", self.gleu, pct(&self.overall), pct(&self.unedited))?;
        for l in ErrorLabel::ALL {
            write!(f, " {:>12}", pct(&self.per_label[&l]))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labeled(t: &str, tp: &str, labels: &[ErrorLabel]) -> Triple {
        let mut tr = Triple::new("i", "d", "s", t, tp);
        tr.labels = labels.iter().copied().collect();
        tr
    }

    #[test]
    fn sentence_accuracy_counts() {
        assert_eq!(sentence_accuracy(&["a", "b", "c", "d"], &["a", "x", "y", "z"]).unwrap(), 0.25);
        assert_eq!(sentence_accuracy(&["a", "b"], &["a", "b"]).unwrap(), 1.0);
        assert!(sentence_accuracy(&["a"], &["a", "b"]).is_err());
        // normalization applies before comparison
        assert_eq!(sentence_accuracy(&["„a“"], &["\"a\""]).unwrap(), 1.0);
    }

    #[test]
    fn no_edit_system() {
        let triples = vec![
            labeled("a b", "a c", &[ErrorLabel::MonoTypo]),
            labeled("x", "y", &[ErrorLabel::Bilingual, ErrorLabel::MonoGrammar]),
            labeled("same", "same", &[]),
            labeled("also same", "also same", &[]),
        ];
        let hyps: Vec<&str> = triples.iter().map(|t| t.original.as_str()).collect();
        let r = per_category_accuracy(&hyps, &triples).unwrap();
        assert_eq!(r.unedited.accuracy, Some(1.0));
        assert_eq!(r.overall.accuracy, Some(0.5));
        assert_eq!(r.per_label[&ErrorLabel::MonoTypo].accuracy, Some(0.0));
        assert_eq!(r.per_label[&ErrorLabel::Bilingual].accuracy, Some(0.0));
        assert_eq!(r.per_label[&ErrorLabel::Preferential].n_sentences, 0);
        assert_eq!(r.per_label[&ErrorLabel::Preferential].accuracy, None);
    }

    #[test]
    fn perfect_and_partial() {
        let triples = vec![
            labeled("a b", "a c", &[ErrorLabel::MonoTypo]),
            labeled("d e", "d f", &[ErrorLabel::MonoTypo]),
            labeled("g", "h", &[ErrorLabel::Preferential]),
        ];
        let perfect: Vec<&str> = triples.iter().map(|t| t.corrected.as_str()).collect();
        let r = per_category_accuracy(&perfect, &triples).unwrap();
        for l in [ErrorLabel::MonoTypo, ErrorLabel::Preferential] {
            assert_eq!(r.per_label[&l].accuracy, Some(1.0));
        }
        let partial = ["a c", "d e", "h"];
        let r = per_category_accuracy(&partial, &triples).unwrap();
        assert_eq!(r.per_label[&ErrorLabel::MonoTypo].accuracy, Some(0.5));
        assert!(r.to_string().contains("50.00"));
    }
}
