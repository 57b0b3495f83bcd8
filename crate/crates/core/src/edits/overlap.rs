use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::align::align_sentences;
use crate::corpus::Triple;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub train_total: usize,
    pub train_unique: usize,
    pub total_edits: usize,
    pub unique_edits: usize,
    pub in_train: usize,
    /// Share of evaluation edits whose (original, replacement) pair occurs in
    /// train. Reported as 0 with `empty` set when there are no evaluation edits.
    pub pct_in_train: f64,
    pub empty: bool,
}

fn edit_pairs(triples: &[Triple]) -> Vec<(String, String)> {
    triples
        .iter()
        .flat_map(|t| align_sentences(&t.original, &t.corrected))
        .map(|e| e.pair())
        .collect()
}

pub fn edit_overlap(train: &[Triple], eval: &[Triple]) -> OverlapReport {
    let train_pairs = edit_pairs(train);
    let train_set: HashSet<&(String, String)> = train_pairs.iter().collect();
    let eval_pairs = edit_pairs(eval);
    let eval_unique: HashSet<&(String, String)> = eval_pairs.iter().collect();
    let in_train = eval_pairs.iter().filter(|p| train_set.contains(p)).count();
    let total = eval_pairs.len();
    OverlapReport {
        train_total: train_pairs.len(),
        train_unique: train_set.len(),
        total_edits: total,
        unique_edits: eval_unique.len(),
        in_train,
        pct_in_train: if total == 0 { 0.0 } else { in_train as f64 / total as f64 },
        empty: total == 0,
    }
}

impl fmt::Display for OverlapReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Train  total edits  {:>6}", self.train_total)?;
        writeln!(f, "       unique edits {:>6}", self.train_unique)?;
        writeln!(f, "Eval   total edits  {:>6}", self.total_edits)?;
        writeln!(f, "       unique edits {:>6}", self.unique_edits)?;
        write!(f, "       % in train   {:>6.0}", self.pct_in_train * 100.0)?;
        if self.empty {
            write!(f, " (no evaluation edits)")?;
        }
        Ok(())
    }
}
