//! Punctuation normalization and the shared subword vocabulary.

mod bpe;
mod normalize;

pub use bpe::{
    train_bpe, TokenSeq, Vocabulary, BOS, END_OF_WORD, EOS, PAD, SEP, SPECIAL_TOKENS, UNK,
};
pub use normalize::normalize_punctuation;
