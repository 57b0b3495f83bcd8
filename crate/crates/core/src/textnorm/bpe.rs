//! Joint byte-pair-encoding vocabulary.
//!
//! Words are whitespace tokens of the normalized text; the last symbol of
//! every word carries the end-of-word marker `▁`, so decoding is a plain
//! concatenation followed by turning markers back into spaces.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::ops::Deref;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::normalize_punctuation;
use crate::error::{Error, Result};

pub const END_OF_WORD: char = '▁';

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;
pub const SEP: u32 = 4;

pub const SPECIAL_TOKENS: [&str; 5] = ["<pad>", "<s>", "</s>", "<unk>", "<sep>"];

const TOKENS_SENTINEL: &str = "#tokens";

/// Token ids of one encoded sentence.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenSeq(Vec<u32>);

impl TokenSeq {
    pub fn new(ids: Vec<u32>) -> Self {
        Self(ids)
    }

    pub fn ids(&self) -> &[u32] {
        &self.0
    }

    pub fn into_ids(self) -> Vec<u32> {
        self.0
    }
}

impl Deref for TokenSeq {
    type Target = [u32];

    fn deref(&self) -> &[u32] {
        &self.0
    }
}

impl From<Vec<u32>> for TokenSeq {
    fn from(v: Vec<u32>) -> Self {
        Self(v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    merges: Vec<(String, String)>,
    tokens: Vec<String>,
    token_to_id: HashMap<String, u32>,
    merge_rank: HashMap<(String, String), usize>,
}

fn word_symbols(word: &str) -> Vec<String> {
    let mut syms: Vec<String> = word.chars().map(String::from).collect();
    if let Some(last) = syms.last_mut() {
        last.push(END_OF_WORD);
    }
    syms
}

fn merge_pair(symbols: &mut Vec<String>, left: &str, right: &str) -> bool {
    let mut changed = false;
    let mut i = 0;
    while i + 1 < symbols.len() {
        if symbols[i] == left && symbols[i + 1] == right {
            let r = symbols.remove(i + 1);
            symbols[i].push_str(&r);
            changed = true;
        }
        i += 1;
    }
    changed
}

/// Learn merges by repeatedly joining the most frequent adjacent pair until
/// the vocabulary (specials + base symbols + merged symbols) reaches
/// `vocab_size` or no pair is left. Ties go to the pair seen first in corpus
/// order.
pub fn train_bpe<S: AsRef<str>>(corpus: &[S], vocab_size: usize) -> Result<Vocabulary> {
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut words: Vec<(Vec<String>, usize)> = Vec::new();
    for line in corpus {
        for w in normalize_punctuation(line.as_ref()).split(' ').filter(|w| !w.is_empty()) {
            match index.get(w) {
                Some(&i) => words[i].1 += 1,
                None => {
                    index.insert(w.to_owned(), words.len());
                    words.push((word_symbols(w), 1));
                }
            }
        }
    }
    if words.is_empty() {
        return Err(Error::invalid("cannot train BPE on an empty corpus"));
    }
    let base: BTreeSet<String> = words.iter().flat_map(|(s, _)| s.iter().cloned()).collect();
    if vocab_size <= base.len() + SPECIAL_TOKENS.len() {
        return Err(Error::invalid(format!(
            "vocab_size {vocab_size} must exceed {} base symbols + {} specials",
            base.len(),
            SPECIAL_TOKENS.len()
        )));
    }

    let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
    tokens.extend(base);
    let mut known: std::collections::HashSet<String> = tokens.iter().cloned().collect();
    let mut merges = Vec::new();

    while tokens.len() < vocab_size {
        // (count, first-seen rank)
        let mut stats: HashMap<(&str, &str), (usize, usize)> = HashMap::new();
        let mut rank = 0;
        for (syms, count) in &words {
            for pair in syms.windows(2) {
                let e = stats.entry((&pair[0], &pair[1])).or_insert((0, rank));
                e.0 += count;
                rank += 1;
            }
        }
        let best = stats
            .into_iter()
            .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
            .map(|((l, r), _)| (l.to_owned(), r.to_owned()));
        let Some((left, right)) = best else { break };
        for (syms, _) in words.iter_mut() {
            merge_pair(syms, &left, &right);
        }
        let merged = format!("{left}{right}");
        if known.insert(merged.clone()) {
            tokens.push(merged);
        }
        merges.push((left, right));
    }
    Ok(Vocabulary::from_parts(merges, tokens))
}

impl Vocabulary {
    fn from_parts(merges: Vec<(String, String)>, tokens: Vec<String>) -> Self {
        let token_to_id = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        let merge_rank = merges.iter().enumerate().map(|(i, m)| (m.clone(), i)).collect();
        Self {
            merges,
            tokens,
            token_to_id,
            merge_rank,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    /// Segment one word by applying the lowest-ranked available merge until
    /// none applies.
    pub fn segment_word(&self, word: &str) -> Vec<String> {
        let mut syms = word_symbols(word);
        loop {
            let best = syms
                .windows(2)
                .filter_map(|p| self.merge_rank.get(&(p[0].clone(), p[1].clone())))
                .min()
                .copied();
            let Some(rank) = best else { break };
            let (l, r) = &self.merges[rank];
            merge_pair(&mut syms, l, r);
        }
        syms
    }

    pub fn encode(&self, text: &str) -> TokenSeq {
        let norm = normalize_punctuation(text);
        let mut ids = Vec::new();
        for w in norm.split(' ').filter(|w| !w.is_empty()) {
            ids.extend(self.segment_word(w).iter().map(|s| self.id(s).unwrap_or(UNK)));
        }
        TokenSeq(ids)
    }

    /// Concatenate tokens, dropping PAD/BOS/EOS/SEP and rendering UNK as `<unk>`.
    pub fn decode(&self, ids: &[u32]) -> String {
        let mut out = String::new();
        for &id in ids {
            match id {
                PAD | BOS | EOS | SEP => continue,
                UNK => {
                    out.push_str(SPECIAL_TOKENS[UNK as usize]);
                    out.push(END_OF_WORD);
                }
                _ => {
                    if let Some(t) = self.token(id) {
                        out.push_str(t);
                    }
                }
            }
        }
        let spaced = out.replace(END_OF_WORD, " ");
        spaced.trim_end().to_owned()
    }

    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        for (l, r) in &self.merges {
            let _ = writeln!(s, "{l} {r}");
        }
        s.push_str(TOKENS_SENTINEL);
        s.push('\n');
        for (i, t) in self.tokens.iter().enumerate() {
            let _ = writeln!(s, "{t}\t{i}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::Parse {
            path: "<vocabulary>".into(),
            line,
            message: msg.to_owned(),
        };
        let mut merges = Vec::new();
        let mut tokens: Vec<String> = Vec::new();
        let mut in_tokens = false;
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            if !in_tokens {
                if line == TOKENS_SENTINEL {
                    in_tokens = true;
                    continue;
                }
                let (l, r) = line.split_once(' ').ok_or_else(|| bad(lineno, "expected `left right`"))?;
                merges.push((l.to_owned(), r.to_owned()));
            } else {
                let (tok, id) = line.rsplit_once('\t').ok_or_else(|| bad(lineno, "expected `token<TAB>id`"))?;
                let id: usize = id.parse().map_err(|_| bad(lineno, "bad token id"))?;
                if id != tokens.len() {
                    return Err(bad(lineno, "token ids must be dense and ordered"));
                }
                tokens.push(tok.to_owned());
            }
        }
        if !in_tokens {
            return Err(bad(0, "missing #tokens section"));
        }
        if tokens.len() < SPECIAL_TOKENS.len() || tokens[..SPECIAL_TOKENS.len()] != SPECIAL_TOKENS {
            return Err(bad(0, "special tokens must occupy ids 0-4"));
        }
        Ok(Self::from_parts(merges, tokens))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_file_string())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// SHA-256 of the serialized vocabulary, used to tie checkpoints to it.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_file_string().as_bytes()))
    }
}
