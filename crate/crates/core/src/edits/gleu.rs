//! Corpus-level source-aware GLEU.
//!
//! For each order n, a hypothesis n-gram earns credit when it also occurs in
//! the reference and loses credit when it matches a source n-gram whose type
//! never occurs in the reference (an error left uncorrected). Counts are
//! summed over the corpus before taking the geometric mean, and a brevity
//! penalty is applied against total reference length.

use std::collections::HashMap;

use crate::error::{Error, Result};

type Counts<'a> = HashMap<&'a [&'a str], usize>;

fn ngrams<'a>(tokens: &'a [&'a str], n: usize) -> Counts<'a> {
    let mut out = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w).or_insert(0) += 1;
        }
    }
    out
}

fn intersect(a: &Counts<'_>, b: &Counts<'_>) -> usize {
    a.iter().map(|(k, &c)| c.min(b.get(k).copied().unwrap_or(0))).sum()
}

/// Per-sentence sufficient statistics: hyp length, ref length, then
/// (numerator, denominator) for each order.
#[derive(Debug, Clone, PartialEq)]
pub struct GleuStats {
    pub hyp_len: usize,
    pub ref_len: usize,
    pub matches: Vec<usize>,
    pub totals: Vec<usize>,
}

impl GleuStats {
    fn zero(max_n: usize) -> Self {
        Self {
            hyp_len: 0,
            ref_len: 0,
            matches: vec![0; max_n],
            totals: vec![0; max_n],
        }
    }

    fn add(&mut self, other: &GleuStats) {
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
        for (a, b) in self.matches.iter_mut().zip(&other.matches) {
            *a += b;
        }
        for (a, b) in self.totals.iter_mut().zip(&other.totals) {
            *a += b;
        }
    }

    /// Score in [0, 100]. Any zero statistic gives 0.
    pub fn score(&self) -> f64 {
        let max_n = self.matches.len();
        if self.hyp_len == 0
            || self.ref_len == 0
            || self.matches.iter().chain(&self.totals).any(|&x| x == 0)
        {
            return 0.0;
        }
        let log_prec: f64 = self
            .matches
            .iter()
            .zip(&self.totals)
            .map(|(&m, &t)| (m as f64 / t as f64).ln())
            .sum::<f64>()
            / max_n as f64;
        let bp = (1.0 - self.ref_len as f64 / self.hyp_len as f64).min(0.0);
        100.0 * (bp + log_prec).exp()
    }
}

pub fn sentence_stats(hyp: &str, reference: &str, source: &str, max_n: usize) -> GleuStats {
    let h: Vec<&str> = hyp.split_whitespace().collect();
    let r: Vec<&str> = reference.split_whitespace().collect();
    let s: Vec<&str> = source.split_whitespace().collect();
    let mut stats = GleuStats::zero(max_n);
    stats.hyp_len = h.len();
    stats.ref_len = r.len();
    for n in 1..=max_n {
        let hn = ngrams(&h, n);
        let rn = ngrams(&r, n);
        let mut s_only = ngrams(&s, n);
        s_only.retain(|k, _| !rn.contains_key(k));
        let credit = intersect(&hn, &rn) as i64 - intersect(&hn, &s_only) as i64;
        stats.matches[n - 1] = credit.max(0) as usize;
        stats.totals[n - 1] = (h.len() + 1).saturating_sub(n);
    }
    stats
}

/// Corpus GLEU over parallel hypothesis/reference/source lists.
pub fn gleu<S: AsRef<str>>(hypotheses: &[S], references: &[S], sources: &[S], max_n: usize) -> Result<f64> {
    if hypotheses.is_empty() {
        return Err(Error::invalid("GLEU over an empty corpus"));
    }
    if max_n == 0 {
        return Err(Error::invalid("GLEU order must be at least 1"));
    }
    for other in [references.len(), sources.len()] {
        if other != hypotheses.len() {
            return Err(Error::LengthMismatch {
                left: hypotheses.len(),
                right: other,
            });
        }
    }
    let mut total = GleuStats::zero(max_n);
    for ((h, r), s) in hypotheses.iter().zip(references).zip(sources) {
        total.add(&sentence_stats(h.as_ref(), r.as_ref(), s.as_ref(), max_n));
    }
    Ok(total.score())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_overlap_scores_100() {
        let refs = ["das ist ein kleiner Test", "noch ein Satz mit vier"];
        let srcs = ["das ist ein kleiner Tset", "noch ein Satz mit vier"];
        let g = gleu(&refs, &refs, &srcs, 4).unwrap();
        assert!((g - 100.0).abs() < 1e-9);
    }

    #[test]
    fn two_token_sentence_by_hand() {
        // n=1: hyp {a,b}, ref {a,b}, source-only {c}: credit 2/2.
        // n=2: hyp {a b}, ref {a b}: credit 1/1. No brevity penalty.
        let s = sentence_stats("a b", "a b", "a c", 2);
        assert_eq!(s.matches, vec![2, 1]);
        assert_eq!(s.totals, vec![2, 1]);
        assert!((s.score() - 100.0).abs() < 1e-9);
        // Orders 3 and 4 have no hypothesis n-grams at all.
        let s4 = sentence_stats("a b", "a b", "a c", 4);
        assert_eq!(s4.totals, vec![2, 1, 0, 0]);
        assert_eq!(s4.score(), 0.0);
    }

    #[test]
    fn uncorrected_source_ngrams_are_penalised() {
        // n=1: hyp {a,c}; ref {a,b}; source-only {c}: 1 - 1 = 0.
        let s = sentence_stats("a c", "a b", "a c", 1);
        assert_eq!(s.matches, vec![0]);
        // hyp "a d": d matches nothing, a matches ref -> 1.
        let s = sentence_stats("a d", "a b", "a c", 1);
        assert_eq!(s.matches, vec![1]);
    }

    #[test]
    fn partial_credit_by_hand() {
        // hyp "x y z w", ref "x y z v", src "x y q w"
        // n=1: hyp∩ref = x,y,z (3); source-only types {q, w}; hyp∩{q,w} = w (1) -> 2 of 4
        // n=2: hyp {xy,yz,zw}; ref {xy,yz,zv}: 2; source-only {yq,qw}: 0 -> 2 of 3
        // n=3: hyp {xyz,yzw}; ref {xyz,yzv}: 1; source-only {xyq,yqw}: 0 -> 1 of 2
        // n=4: hyp {xyzw}; ref {xyzv}: 0 -> score 0; check order 3 only.
        let s = sentence_stats("x y z w", "x y z v", "x y q w", 3);
        assert_eq!(s.matches, vec![2, 2, 1]);
        assert_eq!(s.totals, vec![4, 3, 2]);
        let want = 100.0 * (((0.5f64).ln() + (2.0f64 / 3.0).ln() + (0.5f64).ln()) / 3.0).exp();
        assert!((s.score() - want).abs() < 1e-9);
    }

    #[test]
    fn brevity_penalty_applies() {
        // hyp shorter than ref: exp(1 - 4/3)
        let s = sentence_stats("a b c", "a b c d", "a b c", 1);
        let want = 100.0 * (1.0f64 - 4.0 / 3.0).exp();
        assert!((s.score() - want).abs() < 1e-9);
    }

    #[test]
    fn empty_corpus_errors() {
        let empty: [&str; 0] = [];
        assert!(gleu(&empty, &empty, &empty, 4).is_err());
    }
}
