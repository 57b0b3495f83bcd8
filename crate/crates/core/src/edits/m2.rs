//! MaxMatch-style edit scoring with exact span matching.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::align::{align_sentences, Edit};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub precision: f64,
    pub recall: f64,
    pub f_beta: f64,
    pub beta: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// Set when no edits were proposed corpus-wide, making precision 1 by convention.
    #[serde(default)]
    pub vacuous_precision: bool,
}

impl MetricReport {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, beta: f64) -> Self {
        let proposed = tp + fp;
        let gold = tp + fn_;
        let vacuous_precision = proposed == 0;
        let precision = if proposed == 0 { 1.0 } else { tp as f64 / proposed as f64 };
        let recall = if gold == 0 { 1.0 } else { tp as f64 / gold as f64 };
        Self {
            precision,
            recall,
            f_beta: f_beta(precision, recall, beta),
            beta,
            tp,
            fp,
            fn_,
            vacuous_precision,
        }
    }

    pub fn table(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10}{:>8}{:>8}{:>8}", "", "Prec.", "Rec.", format!("F{}", self.beta))?;
        write!(
            f,
            "{:<10}{:>8.1}{:>8.1}{:>8.1}",
            "M2",
            self.precision * 100.0,
            self.recall * 100.0,
            self.f_beta * 100.0
        )?;
        write!(f, "\n(tp={} fp={} fn={}", self.tp, self.fp, self.fn_)?;
        if self.vacuous_precision {
            write!(f, ", precision vacuous")?;
        }
        write!(f, ")")
    }
}

/// `(1+β²)·P·R / (β²·P + R)`, or 0 when both are 0.
pub fn f_beta(precision: f64, recall: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    let denom = b2 * precision + recall;
    if denom <= 0.0 {
        0.0
    } else {
        (1.0 + b2) * precision * recall / denom
    }
}

fn key(e: &Edit) -> (usize, usize, &[String]) {
    (e.start, e.end, &e.replacement)
}

/// Micro-averaged precision/recall/F over parallel per-sentence edit sets.
pub fn m2_score(hyp_edits: &[Vec<Edit>], gold_edits: &[Vec<Edit>], beta: f64) -> Result<MetricReport> {
    if hyp_edits.len() != gold_edits.len() {
        return Err(Error::LengthMismatch {
            left: hyp_edits.len(),
            right: gold_edits.len(),
        });
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (hyp, gold) in hyp_edits.iter().zip(gold_edits) {
        let gold_keys: HashSet<_> = gold.iter().map(key).collect();
        let hyp_keys: HashSet<_> = hyp.iter().map(key).collect();
        let matched = hyp_keys.intersection(&gold_keys).count();
        tp += matched;
        fp += hyp_keys.len() - matched;
        fn_ += gold_keys.len() - matched;
    }
    Ok(MetricReport::from_counts(tp, fp, fn_, beta))
}

/// Score system outputs against references, extracting both edit sets from
/// the original translations.
pub fn m2_score_sentences<S: AsRef<str>>(
    originals: &[S],
    hypotheses: &[S],
    references: &[S],
    beta: f64,
) -> Result<MetricReport> {
    if originals.len() != hypotheses.len() {
        return Err(Error::LengthMismatch {
            left: originals.len(),
            right: hypotheses.len(),
        });
    }
    if originals.len() != references.len() {
        return Err(Error::LengthMismatch {
            left: originals.len(),
            right: references.len(),
        });
    }
    let hyp: Vec<Vec<Edit>> = originals
        .iter()
        .zip(hypotheses)
        .map(|(o, h)| align_sentences(o.as_ref(), h.as_ref()))
        .collect();
    let gold: Vec<Vec<Edit>> = originals
        .iter()
        .zip(references)
        .map(|(o, r)| align_sentences(o.as_ref(), r.as_ref()))
        .collect();
    m2_score(&hyp, &gold, beta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(start: usize, end: usize, orig: &str, repl: &str) -> Edit {
        Edit::new(
            start,
            end,
            orig.split_whitespace().map(String::from).collect(),
            repl.split_whitespace().map(String::from).collect(),
        )
    }

    #[test]
    fn perfect_match() {
        let gold = vec![vec![e(0, 1, "a", "b")], vec![e(2, 2, "", "x")]];
        let r = m2_score(&gold, &gold, 0.5).unwrap();
        assert_eq!((r.precision, r.recall, r.f_beta), (1.0, 1.0, 1.0));
        assert!(!r.vacuous_precision);
    }

    #[test]
    fn half_right() {
        let hyp = vec![vec![e(0, 1, "a", "b"), e(3, 4, "c", "d")]];
        let gold = vec![vec![e(0, 1, "a", "b"), e(5, 6, "q", "r")]];
        let r = m2_score(&hyp, &gold, 0.5).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_), (1, 1, 1));
        assert_eq!((r.precision, r.recall), (0.5, 0.5));
        assert!((r.f_beta - 0.5).abs() < 1e-12);
    }

    #[test]
    fn replacement_must_match_exactly() {
        let hyp = vec![vec![e(0, 1, "a", "B")]];
        let gold = vec![vec![e(0, 1, "a", "b")]];
        let r = m2_score(&hyp, &gold, 0.5).unwrap();
        assert_eq!(r.tp, 0);
    }

    #[test]
    fn no_proposals_is_vacuous() {
        let hyp = vec![vec![]];
        let gold = vec![vec![e(0, 1, "a", "b")]];
        let r = m2_score(&hyp, &gold, 0.5).unwrap();
        assert!(r.vacuous_precision);
        assert_eq!(r.precision, 1.0);
        assert_eq!(r.recall, 0.0);
        assert_eq!(r.f_beta, 0.0);
    }

    #[test]
    fn length_mismatch() {
        assert!(m2_score(&[vec![]], &[], 0.5).is_err());
    }

    #[test]
    fn published_f_half() {
        let f = f_beta(0.821, 0.572, 0.5);
        assert_eq!(format!("{f:.3}"), "0.755");
    }

    #[test]
    fn json_shape() {
        let r = MetricReport::from_counts(1, 1, 1, 0.5);
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        for k in ["precision", "recall", "f_beta", "tp", "fp", "fn"] {
            assert!(v.get(k).is_some(), "missing {k}");
        }
    }

    #[test]
    fn f_half_monotone() {
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
        for &p in &grid {
            for w in grid.windows(2) {
                assert!(f_beta(p, w[1], 0.5) >= f_beta(p, w[0], 0.5));
                assert!(f_beta(w[1], p, 0.5) >= f_beta(w[0], p, 0.5));
            }
        }
    }
}
