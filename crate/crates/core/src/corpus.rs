//! Loading, cleaning, splitting and summarising (source, original, corrected)
//! triple corpora.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::edits::{align_sentences, char_levenshtein, levenshtein, relative_edit_distance};
use crate::error::{Error, Result};
use crate::textnorm::normalize_punctuation;

/// Closed error taxonomy for annotated edits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ErrorLabel {
    MonoTypo,
    MonoGrammar,
    MonoFluency,
    Bilingual,
    Preferential,
}

impl ErrorLabel {
    pub const ALL: [ErrorLabel; 5] = [
        ErrorLabel::MonoTypo,
        ErrorLabel::MonoGrammar,
        ErrorLabel::MonoFluency,
        ErrorLabel::Bilingual,
        ErrorLabel::Preferential,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorLabel::MonoTypo => "MonoTypo",
            ErrorLabel::MonoGrammar => "MonoGrammar",
            ErrorLabel::MonoFluency => "MonoFluency",
            ErrorLabel::Bilingual => "Bilingual",
            ErrorLabel::Preferential => "Preferential",
        }
    }
}

impl fmt::Display for ErrorLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ErrorLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ErrorLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown error label `{s}`")))
    }
}

/// One source sentence, its human translation, and the reviewed translation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triple {
    pub id: String,
    pub doc_id: String,
    pub source: String,
    pub original: String,
    pub corrected: String,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub labels: BTreeSet<ErrorLabel>,
}

impl Triple {
    pub fn new(
        id: impl Into<String>,
        doc_id: impl Into<String>,
        source: impl Into<String>,
        original: impl Into<String>,
        corrected: impl Into<String>,
    ) -> Self {
        Self {
            id: id.into(),
            doc_id: doc_id.into(),
            source: source.into(),
            original: original.into(),
            corrected: corrected.into(),
            labels: BTreeSet::new(),
        }
    }

    /// True when the translations differ after punctuation normalization.
    pub fn is_edited(&self) -> bool {
        self.original != self.corrected
            && normalize_punctuation(&self.original) != normalize_punctuation(&self.corrected)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Dev,
    Test,
}

impl SplitName {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Dev => "dev",
            SplitName::Test => "test",
        }
    }

    /// Guess a split name from a file name; anything unrecognised is train.
    pub fn from_path(path: &Path) -> Self {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().to_lowercase())
            .unwrap_or_default();
        if stem.contains("test") {
            SplitName::Test
        } else if stem.contains("dev") || stem.contains("valid") {
            SplitName::Dev
        } else {
            SplitName::Train
        }
    }
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub name: SplitName,
    pub triples: Vec<Triple>,
}

impl DatasetSplit {
    pub fn new(name: SplitName, triples: Vec<Triple>) -> Self {
        Self { name, triples }
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn doc_ids(&self) -> BTreeSet<&str> {
        self.triples.iter().map(|t| t.doc_id.as_str()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Tsv,
    Jsonl,
}

impl CorpusFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => CorpusFormat::Jsonl,
            _ => CorpusFormat::Tsv,
        }
    }
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsv" => Ok(CorpusFormat::Tsv),
            "jsonl" => Ok(CorpusFormat::Jsonl),
            other => Err(Error::invalid(format!("unknown corpus format `{other}`"))),
        }
    }
}

const TSV_FIELDS: [&str; 5] = ["id", "doc_id", "source", "original", "corrected"];

#[derive(Deserialize)]
struct JsonRecord {
    id: Option<String>,
    doc_id: Option<String>,
    source: Option<String>,
    original: Option<String>,
    corrected: Option<String>,
    #[serde(default)]
    labels: Vec<String>,
}

fn parse_tsv_line(path: &Path, lineno: usize, line: &str) -> Result<Triple> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() < TSV_FIELDS.len() {
        return Err(Error::Schema {
            path: path.to_owned(),
            line: lineno,
            field: TSV_FIELDS[fields.len()].to_owned(),
        });
    }
    if fields.len() > TSV_FIELDS.len() {
        return Err(Error::Parse {
            path: path.to_owned(),
            line: lineno,
            message: format!("expected 5 tab-separated fields, found {}", fields.len()),
        });
    }
    Ok(Triple::new(fields[0], fields[1], fields[2], fields[3], fields[4]))
}

fn parse_json_line(path: &Path, lineno: usize, line: &str) -> Result<Triple> {
    let rec: JsonRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
        path: path.to_owned(),
        line: lineno,
        message: e.to_string(),
    })?;
    let missing = |field: &str| Error::Schema {
        path: path.to_owned(),
        line: lineno,
        field: field.to_owned(),
    };
    let mut triple = Triple::new(
        rec.id.ok_or_else(|| missing("id"))?,
        rec.doc_id.ok_or_else(|| missing("doc_id"))?,
        rec.source.ok_or_else(|| missing("source"))?,
        rec.original.ok_or_else(|| missing("original"))?,
        rec.corrected.ok_or_else(|| missing("corrected"))?,
    );
    for label in rec.labels {
        let label = label.parse().map_err(|_| Error::Parse {
            path: path.to_owned(),
            line: lineno,
            message: format!("unknown error label `{label}`"),
        })?;
        triple.labels.insert(label);
    }
    Ok(triple)
}

/// Read a TSV or JSONL corpus file. Blank lines are skipped.
pub fn load_corpus(path: impl AsRef<Path>, format: CorpusFormat) -> Result<DatasetSplit> {
    let path = path.as_ref();
    let reader = BufReader::new(fs::File::open(path)?);
    let mut triples = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            continue;
        }
        let triple = match format {
            CorpusFormat::Tsv => parse_tsv_line(path, lineno, line)?,
            CorpusFormat::Jsonl => parse_json_line(path, lineno, line)?,
        };
        if triple.corrected.trim().is_empty() {
            return Err(Error::Parse {
                path: path.to_owned(),
                line: lineno,
                message: "corrected translation is empty".into(),
            });
        }
        triples.push(triple);
    }
    Ok(DatasetSplit::new(SplitName::from_path(path), triples))
}

/// Read `source<TAB>target` sentence pairs. Blank lines are skipped.
pub fn load_bitext(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut pairs = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        match line.split_once('\t') {
            Some((s, t)) if !t.contains('\t') => pairs.push((s.to_owned(), t.to_owned())),
            _ => {
                return Err(Error::Parse {
                    path: path.to_owned(),
                    line: idx + 1,
                    message: "expected `source<TAB>target`".into(),
                })
            }
        }
    }
    Ok(pairs)
}

fn check_tsv_field(s: &str) -> Result<&str> {
    if s.contains(['\t', '\n']) {
        Err(Error::invalid(format!("field contains tab or newline: {s:?}")))
    } else {
        Ok(s)
    }
}

pub fn write_tsv<W: Write>(mut w: W, triples: &[Triple]) -> Result<()> {
    for t in triples {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            check_tsv_field(&t.id)?,
            check_tsv_field(&t.doc_id)?,
            check_tsv_field(&t.source)?,
            check_tsv_field(&t.original)?,
            check_tsv_field(&t.corrected)?
        )?;
    }
    Ok(())
}

pub fn write_jsonl<W: Write>(mut w: W, triples: &[Triple]) -> Result<()> {
    for t in triples {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Keep the first triple for each distinct (normalized) source sentence.
pub fn deduplicate(split: &DatasetSplit) -> DatasetSplit {
    let mut seen = HashSet::new();
    let triples = split
        .triples
        .iter()
        .filter(|t| seen.insert(normalize_punctuation(&t.source)))
        .cloned()
        .collect();
    DatasetSplit::new(split.name, triples)
}

pub const REWRITE_THRESHOLD: f64 = 0.25;
pub const REWRITE_MIN_WORDS: usize = 2;

/// Number of word-level Levenshtein operations between two sentences.
pub fn word_edit_count(t: &str, tprime: &str) -> usize {
    let a: Vec<&str> = t.split_whitespace().collect();
    let b: Vec<&str> = tprime.split_whitespace().collect();
    levenshtein(&a, &b)
}

/// True when a correction looks like a re-translation rather than a local edit.
pub fn is_rewrite(t: &str, tprime: &str, threshold: f64, min_words: usize) -> bool {
    let rel = relative_edit_distance(t, tprime).unwrap_or(0.0);
    rel > threshold && word_edit_count(t, tprime) >= min_words
}

/// Turn rewritten sentences into unedited ones by replacing the original
/// translation with the corrected one.
pub fn apply_rewrite_filter(triple: &Triple, threshold: f64, min_words: usize) -> Triple {
    let mut out = triple.clone();
    if is_rewrite(&triple.original, &triple.corrected, threshold, min_words) {
        out.original = out.corrected.clone();
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_sentences: usize,
    pub pct_edited: f64,
    /// Mean number of aligned edits per edited sentence.
    pub mean_edits: f64,
    /// Mean character Levenshtein distance per edited sentence.
    pub mean_edit_distance: f64,
}

pub fn compute_stats(split: &DatasetSplit) -> CorpusStats {
    let n = split.len();
    if n == 0 {
        return CorpusStats::default();
    }
    let edited: Vec<&Triple> = split.triples.iter().filter(|t| t.is_edited()).collect();
    let k = edited.len();
    let (edits, dist) = edited.iter().fold((0usize, 0usize), |(e, d), t| {
        (
            e + align_sentences(&t.original, &t.corrected).len(),
            d + char_levenshtein(&t.original, &t.corrected),
        )
    });
    CorpusStats {
        n_sentences: n,
        pct_edited: k as f64 / n as f64,
        mean_edits: if k == 0 { 0.0 } else { edits as f64 / k as f64 },
        mean_edit_distance: if k == 0 { 0.0 } else { dist as f64 / k as f64 },
    }
}

/// Assign whole documents to train/dev/test by a seeded shuffle.
///
/// Each split receives at least one document.
pub fn split_by_document(
    triples: &[Triple],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(DatasetSplit, DatasetSplit, DatasetSplit)> {
    let (r_train, r_dev, r_test) = ratios;
    if [r_train, r_dev, r_test].iter().any(|r| *r < 0.0) || (r_train + r_dev + r_test - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "split ratios must be non-negative and sum to 1, got {ratios:?}"
        )));
    }
    let mut docs: Vec<&str> = Vec::new();
    let mut seen = HashSet::new();
    for t in triples {
        if seen.insert(t.doc_id.as_str()) {
            docs.push(&t.doc_id);
        }
    }
    let n = docs.len();
    if n < 3 {
        return Err(Error::invalid(format!("need at least 3 documents to split, found {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    docs.shuffle(&mut rng);

    let n_train = (r_train * n as f64).round() as usize;
    let n_dev = (r_dev * n as f64).round() as usize;
    let n_test = n.saturating_sub(n_train + n_dev);
    if n_train == 0 || n_dev == 0 || n_test == 0 || n_train + n_dev > n {
        return Err(Error::invalid(format!(
            "ratios {ratios:?} over {n} documents leave a split empty ({n_train}/{n_dev}/{n_test})"
        )));
    }
    let train_docs: HashSet<&str> = docs[..n_train].iter().copied().collect();
    let dev_docs: HashSet<&str> = docs[n_train..n_train + n_dev].iter().copied().collect();

    let (mut train, mut dev, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for t in triples {
        let d = t.doc_id.as_str();
        if train_docs.contains(d) {
            train.push(t.clone());
        } else if dev_docs.contains(d) {
            dev.push(t.clone());
        } else {
            test.push(t.clone());
        }
    }
    Ok((
        DatasetSplit::new(SplitName::Train, train),
        DatasetSplit::new(SplitName::Dev, dev),
        DatasetSplit::new(SplitName::Test, test),
    ))
}
