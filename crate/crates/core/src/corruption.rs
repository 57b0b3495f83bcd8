//! Synthetic error injection for pre-training data.
//!
//! Every sentence draws one corruption rate `p_c ~ max(0, N(mu, sigma))`.
//! A character pass and then a word pass visit each original unit once and,
//! with probability `p_c`, apply one perturbation chosen uniformly from the
//! configured operations.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Triple;
use crate::error::{Error, Result};
use crate::seed::item_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbOp {
    Insertion,
    Deletion,
    Transposition,
    Repetition,
}

impl PerturbOp {
    pub const ALL: [PerturbOp; 4] = [
        PerturbOp::Insertion,
        PerturbOp::Deletion,
        PerturbOp::Transposition,
        PerturbOp::Repetition,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PerturbOp::Insertion => "insertion",
            PerturbOp::Deletion => "deletion",
            PerturbOp::Transposition => "transposition",
            PerturbOp::Repetition => "repetition",
        }
    }
}

impl FromStr for PerturbOp {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|o| o.as_str() == s.trim())
            .ok_or_else(|| Error::invalid(format!("unknown perturbation `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Character,
    Word,
}

impl Level {
    pub fn as_str(self) -> &'static str {
        match self {
            Level::Character => "character",
            Level::Word => "word",
        }
    }
}

impl FromStr for Level {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "character" | "char" => Ok(Level::Character),
            "word" => Ok(Level::Word),
            _ => Err(Error::invalid(format!("unknown corruption level `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionConfig {
    pub mu: f64,
    pub sigma: f64,
    pub ops: BTreeSet<PerturbOp>,
    pub levels: BTreeSet<Level>,
    pub seed: u64,
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        Self {
            mu: 0.01,
            sigma: 0.04,
            ops: PerturbOp::ALL.into_iter().collect(),
            levels: [Level::Character, Level::Word].into_iter().collect(),
            seed: 0,
        }
    }
}

impl CorruptionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !self.mu.is_finite() {
            return Err(Error::invalid("mu must be finite"));
        }
        if self.ops.is_empty() {
            return Err(Error::invalid("at least one perturbation is required"));
        }
        Ok(())
    }

    /// Parses the flat `key=value` form written by [`Display`]. Blank lines
    /// and `#` comments are skipped; omitted keys keep their defaults.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("line {}: expected key=value", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            let num = |v: &str| {
                v.parse::<f64>()
                    .map_err(|_| Error::invalid(format!("line {}: `{k}` needs a number", n + 1)))
            };
            match k {
                "mu" => cfg.mu = num(v)?,
                "sigma" => cfg.sigma = num(v)?,
                "seed" => {
                    cfg.seed = v
                        .parse()
                        .map_err(|_| Error::invalid(format!("line {}: bad seed `{v}`", n + 1)))?
                }
                "ops" => cfg.ops = parse_list(v)?,
                "levels" => cfg.levels = parse_list(v)?,
                _ => return Err(Error::invalid(format!("line {}: unknown key `{k}`", n + 1))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_list<T: FromStr<Err = Error> + Ord>(v: &str) -> Result<BTreeSet<T>> {
    v.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect()
}

impl fmt::Display for CorruptionConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ops: Vec<&str> = self.ops.iter().map(|o| o.as_str()).collect();
        let levels: Vec<&str> = self.levels.iter().map(|l| l.as_str()).collect();
        writeln!(f, "mu={}", self.mu)?;
        writeln!(f, "sigma={}", self.sigma)?;
        writeln!(f, "ops={}", ops.join(","))?;
        writeln!(f, "levels={}", levels.join(","))?;
        writeln!(f, "seed={}", self.seed)
    }
}

/// One draw of `max(0, N(mu, sigma))`.
pub fn sample_corruption_rate<R: Rng + ?Sized>(cfg: &CorruptionConfig, rng: &mut R) -> f64 {
    clip_rate(Normal::new(cfg.mu, cfg.sigma).expect("validated sigma").sample(rng))
}

pub fn clip_rate(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Mean of the clipped normal, `mu·Φ(mu/sigma) + sigma·φ(mu/sigma)`.
pub fn clipped_normal_mean(mu: f64, sigma: f64) -> f64 {
    use statrs::distribution::{Continuous, ContinuousCDF, Normal as StdNormal};
    let n = StdNormal::new(0.0, 1.0).expect("unit normal");
    let z = mu / sigma;
    mu * n.cdf(z) + sigma * n.pdf(z)
}

/// Units visited and perturbations applied by one corruption call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CorruptionTrace {
    pub chars_visited: usize,
    pub char_events: usize,
    pub words_visited: usize,
    pub word_events: usize,
}

impl CorruptionTrace {
    fn add(&mut self, other: CorruptionTrace) {
        self.chars_visited += other.chars_visited;
        self.char_events += other.char_events;
        self.words_visited += other.words_visited;
        self.word_events += other.word_events;
    }
}

fn perturb<T: Clone, R: Rng + ?Sized>(
    units: &[T],
    pool: &[T],
    p_c: f64,
    ops: &[PerturbOp],
    rng: &mut R,
) -> (Vec<T>, usize, usize) {
    let mut out = Vec::with_capacity(units.len() + 4);
    let (mut visited, mut events) = (0, 0);
    let mut i = 0;
    while i < units.len() {
        visited += 1;
        let u = &units[i];
        i += 1;
        if p_c <= 0.0 || rng.random::<f64>() >= p_c {
            out.push(u.clone());
            continue;
        }
        events += 1;
        match *ops.choose(rng).expect("ops validated non-empty") {
            PerturbOp::Insertion => {
                out.push(u.clone());
                out.push(pool.choose(rng).unwrap_or(u).clone());
            }
            PerturbOp::Deletion => {}
            PerturbOp::Transposition => match units.get(i) {
                Some(next) => {
                    out.push(next.clone());
                    out.push(u.clone());
                    i += 1;
                }
                None => out.push(u.clone()),
            },
            PerturbOp::Repetition => {
                out.push(u.clone());
                out.push(u.clone());
            }
        }
    }
    (out, visited, events)
}

fn ops_vec(ops: &BTreeSet<PerturbOp>) -> Vec<PerturbOp> {
    ops.iter().copied().collect()
}

/// Corrupts one sentence, reporting how many units were visited and changed.
pub fn corrupt_sentence_traced<R: Rng + ?Sized>(
    text: &str,
    p_c: f64,
    ops: &BTreeSet<PerturbOp>,
    levels: &BTreeSet<Level>,
    rng: &mut R,
) -> (String, CorruptionTrace) {
    let mut trace = CorruptionTrace::default();
    if p_c <= 0.0 || ops.is_empty() {
        return (text.to_owned(), trace);
    }
    let ops = ops_vec(ops);
    let mut current = text.to_owned();
    if levels.contains(&Level::Character) {
        let chars: Vec<char> = current.chars().collect();
        // Insertions draw from the sentence's own non-space characters.
        let mut alphabet: Vec<char> = Vec::new();
        for &c in &chars {
            if !c.is_whitespace() && !alphabet.contains(&c) {
                alphabet.push(c);
            }
        }
        let (out, visited, events) = perturb(&chars, &alphabet, p_c, &ops, rng);
        trace.chars_visited = visited;
        trace.char_events = events;
        if events > 0 {
            current = out.into_iter().collect();
        }
    }
    if levels.contains(&Level::Word) {
        let words: Vec<&str> = current.split_whitespace().collect();
        let (out, visited, events) = perturb(&words, &words, p_c, &ops, rng);
        trace.words_visited = visited;
        trace.word_events = events;
        if events > 0 {
            current = out.join(" ");
        }
    }
    (current, trace)
}

pub fn corrupt_sentence<R: Rng + ?Sized>(
    text: &str,
    p_c: f64,
    ops: &BTreeSet<PerturbOp>,
    levels: &BTreeSet<Level>,
    rng: &mut R,
) -> String {
    corrupt_sentence_traced(text, p_c, ops, levels, rng).0
}

/// Whether the synthetic triples keep the source sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticMode {
    Tec,
    /// Source side discarded.
    Gec,
}

/// Builds `(s, corrupt(t'), t')` triples. Sentence `i` uses its own random
/// stream derived from `(cfg.seed, i)`, so results do not depend on
/// scheduling.
pub fn make_synthetic_triples<S: AsRef<str> + Sync>(
    bitext: &[(S, S)],
    cfg: &CorruptionConfig,
    mode: SyntheticMode,
) -> Result<Vec<Triple>> {
    Ok(make_synthetic_triples_traced(bitext, cfg, mode)?.0)
}

pub fn make_synthetic_triples_traced<S: AsRef<str> + Sync>(
    bitext: &[(S, S)],
    cfg: &CorruptionConfig,
    mode: SyntheticMode,
) -> Result<(Vec<Triple>, CorruptionTrace)> {
    cfg.validate()?;
    let results: Vec<(Triple, CorruptionTrace)> = bitext
        .par_iter()
        .enumerate()
        .map(|(i, (s, tp))| {
            let mut rng = item_rng(cfg.seed, i as u64);
            let p_c = sample_corruption_rate(cfg, &mut rng);
            let (t, trace) = corrupt_sentence_traced(tp.as_ref(), p_c, &cfg.ops, &cfg.levels, &mut rng);
            let source = match mode {
                SyntheticMode::Tec => s.as_ref().to_owned(),
                SyntheticMode::Gec => String::new(),
            };
            let id = format!("syn-{i}");
            (Triple::new(id.clone(), id, source, t, tp.as_ref()), trace)
        })
        .collect();
    let mut total = CorruptionTrace::default();
    let mut triples = Vec::with_capacity(results.len());
    for (t, tr) in results {
        total.add(tr);
        triples.push(t);
    }
    Ok((triples, total))
}
