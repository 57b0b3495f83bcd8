use rayon::prelude::*;

use super::{encode_triples, pretrain, TrainConfig};
use crate::corpus::Triple;
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig, Variant};
use crate::textnorm::Vocabulary;

pub trait Translator: Sync {
    fn translate(&self, source: &str) -> Result<String>;
}

/// An MT-variant model with its vocabulary.
#[derive(Debug, Clone)]
pub struct NeuralTranslator {
    pub model: Model,
    pub vocab: Vocabulary,
}

impl Translator for NeuralTranslator {
    /// Sources longer than the model accepts are cut to fit.
    fn translate(&self, source: &str) -> Result<String> {
        let mut s = self.vocab.encode(source).into_ids();
        s.truncate(self.model.config.max_len - 1);
        let out = self.model.greedy_decode(&s, &[])?;
        Ok(self.vocab.decode(&out))
    }
}

/// Trains a source-only translation model on `pairs` of (source, target).
pub fn train_translator(
    pairs: &[(String, String)],
    vocab: &Vocabulary,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
) -> Result<NeuralTranslator> {
    let cfg = ModelConfig {
        variant: Variant::Mt,
        copy_enabled: false,
        ..model_cfg.clone()
    };
    let triples: Vec<Triple> = pairs
        .iter()
        .enumerate()
        .map(|(i, (s, t))| Triple::new(i.to_string(), "mt", s.as_str(), "", t.as_str()))
        .collect();
    let (examples, _) = encode_triples(vocab, &triples, cfg.max_len);
    let model = Model::new(cfg, train_cfg.seed)?;
    let out = pretrain(model, &examples, train_cfg, None)?;
    Ok(NeuralTranslator {
        model: out.model,
        vocab: vocab.clone(),
    })
}

/// Cross-translation post-editing data. The bitext is cut into halves A (the
/// first ⌈n/2⌉ pairs) and B; a model trained on A translates the sources of B
/// and vice versa, so no draft comes from a model that saw its sentence.
/// Output triples keep input order: `(s, t_mt, t')`.
pub fn make_ape_data<S, T, F>(bitext: &[(S, S)], mut train: F) -> Result<Vec<Triple>>
where
    S: AsRef<str> + Sync,
    T: Translator,
    F: FnMut(&[(String, String)]) -> Result<T>,
{
    if bitext.len() < 2 {
        return Err(Error::invalid("cross-translation needs at least two sentence pairs"));
    }
    let owned: Vec<(String, String)> = bitext
        .iter()
        .map(|(s, t)| (s.as_ref().to_owned(), t.as_ref().to_owned()))
        .collect();
    let cut = owned.len().div_ceil(2);
    let (half_a, half_b) = owned.split_at(cut);
    let model_a = train(half_a)?;
    let model_b = train(half_b)?;
    let translate = |pairs: &[(String, String)], model: &T, offset: usize, tag: &str| -> Result<Vec<Triple>> {
        pairs
            .par_iter()
            .enumerate()
            .map(|(i, (s, tp))| {
                let t_mt = model.translate(s)?;
                let id = format!("ape-{}", offset + i);
                Ok(Triple::new(id, tag, s.as_str(), t_mt, tp.as_str()))
            })
            .collect()
    };
    let mut out = translate(half_a, &model_b, 0, "ape-b2a")?;
    out.extend(translate(half_b, &model_a, cut, "ape-a2b")?);
    Ok(out)
}
