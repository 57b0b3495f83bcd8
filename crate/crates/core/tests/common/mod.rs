#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tec_core::model::{Example, Mode, Model, ModelConfig, Positional, SourceDropout, Variant};

pub fn tiny_config(variant: Variant, vocab: usize) -> ModelConfig {
    ModelConfig {
        n_layers: 1,
        d_model: 8,
        d_ff: 16,
        n_heads: 2,
        dropout: 0.1,
        variant,
        copy_enabled: variant != Variant::Mt,
        lambda: 0.05,
        p_src: 0.05,
        source_dropout: SourceDropout::Constant,
        positional: Positional::Learned,
        max_len: 16,
        vocab_size: vocab,
    }
}

pub fn random_ids(rng: &mut ChaCha8Rng, len: usize, vocab: usize) -> Vec<u32> {
    (0..len).map(|_| rng.random_range(5..vocab as u32)).collect()
}

pub fn random_example(rng: &mut ChaCha8Rng, vocab: usize) -> Example {
    let ls = rng.random_range(1..6);
    let lt = rng.random_range(1..6);
    let lo = rng.random_range(1..6);
    Example {
        source: random_ids(rng, ls, vocab),
        original: random_ids(rng, lt, vocab),
        target: random_ids(rng, lo, vocab),
    }
}

/// Largest per-group relative error between the analytic gradient and
/// central finite differences, with the group name.
pub fn worst_gradient_error(model: &Model, batch: &[Example], eps: f64) -> (String, f64) {
    let (_, grad) = model.loss_and_grad(batch, Mode::Eval).unwrap();
    let mut worst = (String::new(), 0.0);
    for (name, g) in &grad.0 {
        let mut diff2 = 0.0;
        let mut norm2 = 0.0;
        for k in 0..g.data.len() {
            let mut plus = model.clone();
            plus.params.get_mut(name).unwrap().data[k] += eps;
            let mut minus = model.clone();
            minus.params.get_mut(name).unwrap().data[k] -= eps;
            let fd = (plus.loss(batch, Mode::Eval).unwrap() - minus.loss(batch, Mode::Eval).unwrap())
                / (2.0 * eps);
            let a = g.data[k];
            diff2 += (a - fd) * (a - fd);
            norm2 += a * a + fd * fd;
        }
        let rel = if norm2 == 0.0 { 0.0 } else { diff2.sqrt() / norm2.sqrt() };
        if rel > worst.1 {
            worst = (name.clone(), rel);
        }
    }
    worst
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub const TOY_WORDS: [&str; 16] = [
    "the", "cat", "dog", "sat", "on", "mat", "red", "blue", "big", "small", "house", "tree", "runs", "sees",
    "near", "old",
];

/// Word-by-word "foreign" rendering of a target word.
pub fn toy_foreign(word: &str) -> String {
    let rev: String = word.chars().rev().collect();
    format!("{rev}o")
}

/// Toy correction corpus: each target sentence has a word-by-word source, and
/// the draft carries at most one injected error (substitution, deletion,
/// duplication or swap). About a quarter of the drafts are left unedited.
pub fn toy_triples(n: usize, seed: u64) -> Vec<tec_core::corpus::Triple> {
    let mut r = rng(seed);
    (0..n)
        .map(|i| {
            let len = r.random_range(3..7);
            let words: Vec<&str> = (0..len).map(|_| TOY_WORDS[r.random_range(0..TOY_WORDS.len())]).collect();
            let source: Vec<String> = words.iter().map(|w| toy_foreign(w)).collect();
            let mut draft: Vec<&str> = words.clone();
            let k = r.random_range(0..len);
            match r.random_range(0..5) {
                0 => {
                    let mut w = TOY_WORDS[r.random_range(0..TOY_WORDS.len())];
                    while w == draft[k] {
                        w = TOY_WORDS[r.random_range(0..TOY_WORDS.len())];
                    }
                    draft[k] = w;
                }
                1 => {
                    draft.remove(k);
                }
                2 => draft.insert(k, words[k]),
                3 if k + 1 < len => draft.swap(k, k + 1),
                _ => {}
            }
            tec_core::corpus::Triple::new(
                format!("toy-{i}"),
                format!("doc-{}", i / 4),
                source.join(" "),
                draft.join(" "),
                words.join(" "),
            )
        })
        .collect()
}

pub fn toy_vocab(triples: &[tec_core::corpus::Triple]) -> tec_core::textnorm::Vocabulary {
    let mut text: Vec<String> = Vec::new();
    for w in TOY_WORDS {
        text.push(w.to_owned());
        text.push(toy_foreign(w));
    }
    for t in triples {
        text.push(t.source.clone());
        text.push(t.corrected.clone());
    }
    tec_core::textnorm::train_bpe(&text, 200).unwrap()
}
