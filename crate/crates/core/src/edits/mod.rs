//! Edit extraction and every edit- or sentence-level evaluation metric.

mod accuracy;
mod align;
mod gleu;
mod m2;
mod overlap;

pub use accuracy::{per_category_accuracy, sentence_accuracy, CategoryReport, GroupAccuracy};
pub use align::{
    align_edits, align_ops, align_sentences, apply_edits, char_levenshtein, levenshtein,
    relative_edit_distance, AlignOp, Edit,
};
pub use gleu::{gleu, sentence_stats, GleuStats};
pub use m2::{f_beta, m2_score, m2_score_sentences, MetricReport};
pub use overlap::{edit_overlap, OverlapReport};
