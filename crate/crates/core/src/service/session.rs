use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::edits::{align_edits, Edit};
use crate::error::{Error, Result};
use crate::stats::Condition;
use crate::textnorm::normalize_punctuation;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionItem {
    pub sentence_id: String,
    pub condition: Condition,
}

/// One reviewer's randomized pass over a list of sentences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub reviewer_id: String,
    pub items: Vec<SessionItem>,
    pub seed: u64,
    pub created_at: String,
}

impl Session {
    /// Shuffles the items and marks a random ⌈n/2⌉ of them assisted. The
    /// order and assignment depend only on `seed` and `sentence_ids`.
    pub fn new(
        session_id: impl Into<String>,
        reviewer_id: impl Into<String>,
        sentence_ids: &[String],
        seed: u64,
        created_at: impl Into<String>,
    ) -> Result<Self> {
        if sentence_ids.len() < 2 {
            return Err(Error::invalid("a session needs at least 2 sentences"));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = sentence_ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::invalid(format!("duplicate sentence id `{dup}`")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order = sentence_ids.to_vec();
        order.shuffle(&mut rng);
        let n = order.len();
        let mut slots: Vec<usize> = (0..n).collect();
        slots.shuffle(&mut rng);
        let mut assisted = vec![false; n];
        for &i in &slots[..n.div_ceil(2)] {
            assisted[i] = true;
        }
        let items = order
            .into_iter()
            .zip(assisted)
            .map(|(sentence_id, a)| SessionItem {
                sentence_id,
                condition: if a { Condition::Assisted } else { Condition::Unassisted },
            })
            .collect();
        Ok(Self {
            session_id: session_id.into(),
            reviewer_id: reviewer_id.into(),
            items,
            seed,
            created_at: created_at.into(),
        })
    }

    pub fn item(&self, sentence_id: &str) -> Option<&SessionItem> {
        self.items.iter().find(|i| i.sentence_id == sentence_id)
    }

    pub fn assisted_count(&self) -> usize {
        self.items.iter().filter(|i| i.condition == Condition::Assisted).count()
    }
}

/// A proposed correction of one sentence, as token-level edits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Suggestion {
    pub sentence_id: String,
    pub suggested_text: String,
    pub edits: Vec<Edit>,
    pub checkpoint: String,
}

/// Produces corrected text for (source, original) pairs.
pub trait Suggester: Send + Sync {
    /// Identifies the frozen parameters; part of the cache key.
    fn checkpoint_id(&self) -> &str;
    fn propose(&self, source: &str, original: &str) -> Result<String>;
}

/// Decodes a proposal and diffs it against the normalized original. `None`
/// when the proposal changes nothing.
pub fn get_suggestion(
    suggester: &dyn Suggester,
    sentence_id: &str,
    source: &str,
    original: &str,
) -> Result<Option<Suggestion>> {
    let proposal = suggester.propose(source, original)?;
    let orig = normalize_punctuation(original);
    let a: Vec<&str> = orig.split_whitespace().collect();
    let b: Vec<&str> = proposal.split_whitespace().collect();
    if a == b {
        return Ok(None);
    }
    Ok(Some(Suggestion {
        sentence_id: sentence_id.to_owned(),
        suggested_text: b.join(" "),
        edits: align_edits(&a, &b),
        checkpoint: suggester.checkpoint_id().to_owned(),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edits::apply_edits;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i}")).collect()
    }

    #[test]
    fn study_size_split() {
        let s = Session::new("a", "r", &ids(74), 3, "t").unwrap();
        assert_eq!(s.assisted_count(), 37);
        assert_eq!(Session::new("a", "r", &ids(5), 3, "t").unwrap().assisted_count(), 3);
    }

    #[test]
    fn seeded_and_validated() {
        let a = Session::new("a", "r", &ids(10), 9, "t").unwrap();
        let b = Session::new("b", "r", &ids(10), 9, "u").unwrap();
        assert_eq!(a.items, b.items);
        assert!(Session::new("a", "r", &ids(1), 9, "t").is_err());
        let dup = vec!["x".to_owned(), "y".to_owned(), "x".to_owned()];
        assert!(Session::new("a", "r", &dup, 9, "t").is_err());
    }

    struct Fixed(&'static str);
    impl Suggester for Fixed {
        fn checkpoint_id(&self) -> &str {
            "fixed"
        }
        fn propose(&self, _: &str, _: &str) -> Result<String> {
            Ok(self.0.to_owned())
        }
    }

    #[test]
    fn suggestion_edits_rebuild_text() {
        let s = get_suggestion(&Fixed("the red cat sat"), "x", "src", "the cat  sits").unwrap().unwrap();
        let orig: Vec<&str> = "the cat sits".split_whitespace().collect();
        assert_eq!(apply_edits(&orig, &s.edits).unwrap().join(" "), s.suggested_text);
        assert_eq!(s.checkpoint, "fixed");
        assert!(get_suggestion(&Fixed("a b"), "x", "s", "a  b").unwrap().is_none());
    }
}
