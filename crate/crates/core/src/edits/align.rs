//! Token-level Levenshtein alignment and edit extraction.

use std::fmt;

use serde::de::{self, SeqAccess, Visitor};
use serde::ser::SerializeTuple;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A contiguous correction of `t[start..end]` into `replacement`.
///
/// Insertions have `start == end`; deletions have an empty replacement.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edit {
    pub start: usize,
    pub end: usize,
    pub original: Vec<String>,
    pub replacement: Vec<String>,
}

impl Edit {
    pub fn new(start: usize, end: usize, original: Vec<String>, replacement: Vec<String>) -> Self {
        debug_assert!(start <= end);
        debug_assert_eq!(end - start, original.len());
        debug_assert!(!(original.is_empty() && replacement.is_empty()));
        Self {
            start,
            end,
            original,
            replacement,
        }
    }

    /// Number of unit operations this edit stands for in an optimal alignment.
    pub fn cost(&self) -> usize {
        self.original.len().max(self.replacement.len())
    }

    /// Position-independent identity used for overlap statistics.
    pub fn pair(&self) -> (String, String) {
        (self.original.join(" "), self.replacement.join(" "))
    }
}

impl fmt::Display for Edit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({},{},{:?}->{:?})",
            self.start,
            self.end,
            self.original.join(" "),
            self.replacement.join(" ")
        )
    }
}

// Wire form: [start, end, "original", "replacement"].
impl Serialize for Edit {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut tup = serializer.serialize_tuple(4)?;
        tup.serialize_element(&self.start)?;
        tup.serialize_element(&self.end)?;
        tup.serialize_element(&self.original.join(" "))?;
        tup.serialize_element(&self.replacement.join(" "))?;
        tup.end()
    }
}

impl<'de> Deserialize<'de> for Edit {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct EditVisitor;

        impl<'de> Visitor<'de> for EditVisitor {
            type Value = Edit;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an array [start, end, original, replacement]")
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> std::result::Result<Edit, A::Error> {
                let start: usize = seq
                    .next_element()?
                    .ok_or_else(|| de::Error::invalid_length(0, &self))?;
                let end: usize = seq
                    .next_element()?
                    .ok_or_else(|| de::Error::invalid_length(1, &self))?;
                let original: String = seq
                    .next_element()?
                    .ok_or_else(|| de::Error::invalid_length(2, &self))?;
                let replacement: String = seq
                    .next_element()?
                    .ok_or_else(|| de::Error::invalid_length(3, &self))?;
                let original = split_tokens(&original);
                let replacement = split_tokens(&replacement);
                if start > end || end - start != original.len() {
                    return Err(de::Error::custom("edit span does not match original tokens"));
                }
                if original.is_empty() && replacement.is_empty() {
                    return Err(de::Error::custom("empty edit"));
                }
                Ok(Edit {
                    start,
                    end,
                    original,
                    replacement,
                })
            }
        }

        deserializer.deserialize_tuple(4, EditVisitor)
    }
}

pub(crate) fn split_tokens(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_owned).collect()
}

/// One step of an alignment path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlignOp {
    Match,
    Substitute,
    Delete,
    Insert,
}

/// Unit-cost Levenshtein distance.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn char_levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    levenshtein(&a, &b)
}

/// Character Levenshtein divided by the longer string's length.
pub fn relative_edit_distance(t: &str, tprime: &str) -> Result<f64> {
    let a: Vec<char> = t.chars().collect();
    let b: Vec<char> = tprime.chars().collect();
    let denom = a.len().max(b.len());
    if denom == 0 {
        return Err(Error::invalid("relative edit distance of two empty strings"));
    }
    Ok(levenshtein(&a, &b) as f64 / denom as f64)
}

/// Optimal alignment path from `a` to `b`.
///
/// Backtracks from the end preferring the diagonal, so substitutions win over
/// insert+delete pairs and gaps are pushed as far left as possible.
pub fn align_ops<T: PartialEq>(a: &[T], b: &[T]) -> Vec<AlignOp> {
    let n = a.len();
    let m = b.len();
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for j in 0..=m {
        d[j] = j;
    }
    for i in 1..=n {
        d[i * w] = i;
        for j in 1..=m {
            let sub = d[(i - 1) * w + j - 1] + usize::from(a[i - 1] != b[j - 1]);
            let del = d[(i - 1) * w + j] + 1;
            let ins = d[i * w + j - 1] + 1;
            d[i * w + j] = sub.min(del).min(ins);
        }
    }

    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 {
            let same = a[i - 1] == b[j - 1];
            if here == d[(i - 1) * w + j - 1] + usize::from(!same) {
                ops.push(if same { AlignOp::Match } else { AlignOp::Substitute });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && here == d[(i - 1) * w + j] + 1 {
            ops.push(AlignOp::Delete);
            i -= 1;
        } else {
            ops.push(AlignOp::Insert);
            j -= 1;
        }
    }
    ops.reverse();
    ops
}

/// Extract edits turning `t` into `tprime`; maximal runs of non-match
/// operations become one edit. Output is sorted by `start`.
pub fn align_edits<S: AsRef<str>>(t: &[S], tprime: &[S]) -> Vec<Edit> {
    let a: Vec<&str> = t.iter().map(AsRef::as_ref).collect();
    let b: Vec<&str> = tprime.iter().map(AsRef::as_ref).collect();
    let ops = align_ops(&a, &b);

    let mut edits = Vec::new();
    let (mut i, mut j) = (0usize, 0usize);
    let mut run: Option<(usize, usize)> = None;

    let flush = |run: &mut Option<(usize, usize)>, i: usize, j: usize, edits: &mut Vec<Edit>| {
        if let Some((si, sj)) = run.take() {
            edits.push(Edit::new(
                si,
                i,
                a[si..i].iter().map(|s| s.to_string()).collect(),
                b[sj..j].iter().map(|s| s.to_string()).collect(),
            ));
        }
    };

    for op in ops {
        match op {
            AlignOp::Match => {
                flush(&mut run, i, j, &mut edits);
                i += 1;
                j += 1;
            }
            AlignOp::Substitute | AlignOp::Delete | AlignOp::Insert => {
                if run.is_none() {
                    run = Some((i, j));
                }
                match op {
                    AlignOp::Substitute => {
                        i += 1;
                        j += 1;
                    }
                    AlignOp::Delete => i += 1,
                    _ => j += 1,
                }
            }
        }
    }
    flush(&mut run, i, j, &mut edits);
    edits
}

/// Tokenize on whitespace and align.
pub fn align_sentences(t: &str, tprime: &str) -> Vec<Edit> {
    let a: Vec<&str> = t.split_whitespace().collect();
    let b: Vec<&str> = tprime.split_whitespace().collect();
    align_edits(&a, &b)
}

/// Apply sorted, non-overlapping edits to `t`.
pub fn apply_edits<S: AsRef<str>>(t: &[S], edits: &[Edit]) -> Result<Vec<String>> {
    let mut out = Vec::with_capacity(t.len());
    let mut pos = 0;
    for e in edits {
        if e.start < pos || e.end > t.len() {
            return Err(Error::invalid(format!("edit {e} overlaps or exceeds sentence")));
        }
        if t[e.start..e.end].iter().map(AsRef::as_ref).ne(e.original.iter().map(String::as_str)) {
            return Err(Error::invalid(format!("edit {e} does not match sentence tokens")));
        }
        out.extend(t[pos..e.start].iter().map(|s| s.as_ref().to_owned()));
        out.extend(e.replacement.iter().cloned());
        pos = e.end;
    }
    out.extend(t[pos..].iter().map(|s| s.as_ref().to_owned()));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn levenshtein_examples() {
        assert_eq!(char_levenshtein("abc", "abc"), 0);
        assert_eq!(char_levenshtein("KIppen", "Kippen"), 1);
        assert_eq!(char_levenshtein("", "ab"), 2);
        assert_eq!(char_levenshtein("kitten", "sitting"), 3);
    }

    #[test]
    fn identical_sentences_have_no_edits() {
        assert!(align_sentences("a b c", "a b c").is_empty());
    }

    #[test]
    fn typo_edit_from_taxonomy_example() {
        let edits = align_sentences("KIppen deine Füße", "Kippen deine Füße");
        assert_eq!(
            edits,
            vec![Edit::new(0, 1, vec!["KIppen".into()], vec!["Kippen".into()])]
        );
    }

    #[test]
    fn substitution_plus_insertion_merges() {
        let edits = align_sentences("a b c", "a x y c");
        assert_eq!(
            edits,
            vec![Edit::new(1, 2, vec!["b".into()], vec!["x".into(), "y".into()])]
        );
    }

    #[test]
    fn deletion_goes_leftmost() {
        // Either "mit" could be the deleted one; the leftmost is chosen.
        let edits = align_sentences("Mit mit dem", "Mit dem");
        assert_eq!(edits.len(), 1);
        assert_eq!(edits[0].start, 1);
        let edits = align_sentences("a a b", "a b");
        assert_eq!(edits[0].start, 0);
    }

    #[test]
    fn separate_runs_stay_separate() {
        let edits = align_sentences("x a b y", "z a b w");
        assert_eq!(edits.len(), 2);
        assert_eq!((edits[0].start, edits[0].end), (0, 1));
        assert_eq!((edits[1].start, edits[1].end), (3, 4));
    }

    #[test]
    fn pure_insertion_and_deletion() {
        let ins = align_sentences("a c", "a b c");
        assert_eq!(ins, vec![Edit::new(1, 1, vec![], vec!["b".into()])]);
        let del = align_sentences("a b c", "a c");
        assert_eq!(del, vec![Edit::new(1, 2, vec!["b".into()], vec![])]);
        let all = align_sentences("", "a b");
        assert_eq!(all, vec![Edit::new(0, 0, vec![], vec!["a".into(), "b".into()])]);
    }

    #[test]
    fn relative_distance_examples() {
        assert_eq!(relative_edit_distance("same", "same").unwrap(), 0.0);
        assert_eq!(relative_edit_distance("abcd", "wxyz").unwrap(), 1.0);
        assert_eq!(relative_edit_distance("abcdefgh", "abcdefgx").unwrap(), 0.125);
        assert!(relative_edit_distance("", "").is_err());
    }

    #[test]
    fn edit_json_form() {
        let e = Edit::new(1, 2, vec!["b".into()], vec!["x".into(), "y".into()]);
        let js = serde_json::to_string(&e).unwrap();
        assert_eq!(js, r#"[1,2,"b","x y"]"#);
        let back: Edit = serde_json::from_str(&js).unwrap();
        assert_eq!(back, e);
        assert!(serde_json::from_str::<Edit>(r#"[0,2,"b","x"]"#).is_err());
        assert!(serde_json::from_str::<Edit>(r#"[0,0,"",""]"#).is_err());
    }

    #[test]
    fn apply_rejects_mismatched_edit() {
        let t = toks("a b c");
        let e = Edit::new(1, 2, vec!["q".into()], vec!["x".into()]);
        assert!(apply_edits(&t, &[e]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn sentence() -> impl Strategy<Value = Vec<String>> {
            prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "ein", "der"]), 0..12)
                .prop_map(|v| v.into_iter().map(String::from).collect())
        }

        proptest! {
            #[test]
            fn edits_reconstruct_target(t in sentence(), tp in sentence()) {
                let edits = align_edits(&t, &tp);
                prop_assert_eq!(apply_edits(&t, &edits).unwrap(), tp.clone());
                let cost: usize = edits.iter().map(Edit::cost).sum();
                prop_assert_eq!(cost, levenshtein(&t, &tp));
                for w in edits.windows(2) {
                    // a match always separates two runs
                    prop_assert!(w[0].end < w[1].start);
                }
            }

            #[test]
            fn levenshtein_is_symmetric(a in sentence(), b in sentence()) {
                prop_assert_eq!(levenshtein(&a, &b), levenshtein(&b, &a));
            }
        }
    }
}
