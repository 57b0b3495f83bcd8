//! Dual-source Transformer corrector with copy-attention, plus its
//! single-source MT and GEC ablations.
//!
//! The encoder reads `[s; </s>; t; </s>]` for the dual variant, `s; </s>` for
//! MT and `t; </s>` for GEC. The decoder ties its output projection to the
//! shared embedding matrix. When copying is enabled, a single-head attention
//! layer over the encoder states produces a copy distribution, a gate and a
//! separate alignment distribution used by the auxiliary loss.

pub mod graph;
mod params;
pub mod tensor;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use graph::{Graph, Mask, NodeId};
pub use params::{Checkpoint, Parameters, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub(crate) use params::write_atomic;
pub use tensor::Matrix;

use crate::error::{Error, Result};
use crate::seed::item_rng;
use crate::textnorm::{BOS, EOS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Mt,
    Gec,
    Dual,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Mt => "mt",
            Variant::Gec => "gec",
            Variant::Dual => "dual",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mt" => Ok(Variant::Mt),
            "gec" => Ok(Variant::Gec),
            "dual" | "tec" => Ok(Variant::Dual),
            _ => Err(Error::invalid(format!("unknown variant `{s}`"))),
        }
    }
}

/// What source-word dropout writes into a dropped embedding row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceDropout {
    /// Every component becomes `1 / p_src`.
    Constant,
    /// Every component becomes zero.
    Zero,
}

impl FromStr for SourceDropout {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(SourceDropout::Constant),
            "zero" => Ok(SourceDropout::Zero),
            _ => Err(Error::invalid(format!("unknown source dropout mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Positional {
    Learned,
    Sinusoidal,
}

impl FromStr for Positional {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "learned" => Ok(Positional::Learned),
            "sinusoidal" => Ok(Positional::Sinusoidal),
            _ => Err(Error::invalid(format!("unknown positional encoding `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub n_heads: usize,
    pub dropout: f64,
    pub variant: Variant,
    pub copy_enabled: bool,
    pub lambda: f64,
    pub p_src: f64,
    pub source_dropout: SourceDropout,
    pub positional: Positional,
    pub max_len: usize,
    pub vocab_size: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_layers: 6,
            d_model: 256,
            d_ff: 512,
            n_heads: 8,
            dropout: 0.1,
            variant: Variant::Dual,
            copy_enabled: true,
            lambda: 0.05,
            p_src: 0.05,
            source_dropout: SourceDropout::Constant,
            positional: Positional::Learned,
            max_len: 256,
            vocab_size: 8000,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if self.n_heads == 0 || self.d_model == 0 || self.d_model % self.n_heads != 0 {
            return bad(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.d_ff == 0 {
            return bad("d_ff must be positive".into());
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if !(0.0..1.0).contains(&self.p_src) {
            return bad(format!("p_src must be in [0, 1), got {}", self.p_src));
        }
        if self.max_len == 0 {
            return bad("max_len must be positive".into());
        }
        if self.vocab_size <= EOS as usize {
            return bad(format!("vocab_size {} is too small", self.vocab_size));
        }
        match (self.variant, self.copy_enabled) {
            (Variant::Mt, true) => bad("the mt variant has no draft to copy from; disable copy".into()),
            (Variant::Gec | Variant::Dual, false) => {
                bad(format!("the {} variant requires copy_enabled", self.variant))
            }
            _ => Ok(()),
        }
    }

    /// Default configuration for a variant, with copying set accordingly.
    pub fn for_variant(variant: Variant) -> Self {
        Self {
            variant,
            copy_enabled: variant != Variant::Mt,
            ..Self::default()
        }
    }
}

/// One teacher-forcing example as token ids without special markers.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Example {
    pub source: Vec<u32>,
    pub original: Vec<u32>,
    pub target: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout off.
    Eval,
    /// Dropout on; example `i` of a batch draws from a stream derived from
    /// `(seed, i)`.
    Train { seed: u64 },
}

/// Encoder output plus what the copy layer needs to know about positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    /// Input to the first encoder layer.
    pub input: Matrix,
    pub states: Matrix,
    pub tokens: Vec<u32>,
    /// Positions the copy layer may attend to.
    pub copyable: Vec<bool>,
}

/// Teacher-forced outputs, one row per decoder step.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub p_gen: Matrix,
    pub p_copy: Option<Matrix>,
    pub p_hat: Matrix,
    pub alpha: Option<Vec<f64>>,
    pub p_align: Option<Matrix>,
    pub h_enc: Matrix,
    pub h_dec: Matrix,
    pub attention: Option<Matrix>,
    pub context: Option<Matrix>,
    pub encoder_tokens: Vec<u32>,
    pub copyable: Vec<bool>,
}

/// Distributions for the last position of a decoder prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub p_gen: Vec<f64>,
    pub p_copy: Option<Vec<f64>>,
    pub p_hat: Vec<f64>,
    pub alpha: Option<f64>,
    pub p_align: Option<Vec<f64>>,
    pub attention: Option<Vec<f64>>,
    pub context: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: Parameters,
}

struct DecoderNodes {
    p_gen: NodeId,
    p_hat: NodeId,
    h_dec: NodeId,
    copy: Option<CopyNodes>,
}

struct CopyNodes {
    p_copy: NodeId,
    alpha: NodeId,
    p_align: NodeId,
    attention: NodeId,
    context: NodeId,
}

struct Builder<'a> {
    g: Graph<'a>,
    params: &'a Parameters,
    cfg: &'a ModelConfig,
    rng: Option<ChaCha8Rng>,
}

impl<'a> Builder<'a> {
    fn new(model: &'a Model, rng: Option<ChaCha8Rng>) -> Self {
        Self {
            g: Graph::new(),
            params: &model.params,
            cfg: &model.config,
            rng,
        }
    }

    fn p(&mut self, name: &str) -> NodeId {
        let (k, v) = self
            .params
            .0
            .get_key_value(name)
            .unwrap_or_else(|| panic!("parameter `{name}` missing; validate() should have caught this"));
        self.g.param(k, v)
    }

    fn positions(&mut self, n: usize) -> NodeId {
        match self.cfg.positional {
            Positional::Learned => {
                let pos = self.p("pos");
                let ids: Vec<usize> = (0..n).collect();
                self.g.gather_rows(pos, &ids)
            }
            Positional::Sinusoidal => self.g.constant(sinusoidal(n, self.cfg.d_model)),
        }
    }

    fn dropout(&mut self, x: NodeId) -> NodeId {
        let p = self.cfg.dropout;
        let Some(rng) = self.rng.as_mut() else { return x };
        if p == 0.0 {
            return x;
        }
        let (r, c) = self.g.value(x).shape();
        let keep = 1.0 / (1.0 - p);
        let data = (0..r * c)
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        self.g.mul_const(x, Matrix::from_vec(r, c, data))
    }

    fn layer_norm(&mut self, x: NodeId, prefix: &str) -> NodeId {
        let g = self.p(&format!("{prefix}.g"));
        let b = self.p(&format!("{prefix}.b"));
        self.g.layer_norm(x, g, b)
    }

    fn attention(&mut self, prefix: &str, q_in: NodeId, kv_in: NodeId, mask: &Mask) -> NodeId {
        let wq = self.p(&format!("{prefix}.wq"));
        let wk = self.p(&format!("{prefix}.wk"));
        let wv = self.p(&format!("{prefix}.wv"));
        let wo = self.p(&format!("{prefix}.wo"));
        let h = self.cfg.n_heads;
        let dk = self.cfg.d_model / h;
        let q = self.g.matmul(q_in, wq);
        let q = self.g.scale(q, 1.0 / (dk as f64).sqrt());
        let k = self.g.matmul(kv_in, wk);
        let v = self.g.matmul(kv_in, wv);
        let mut heads = Vec::with_capacity(h);
        for i in 0..h {
            let (a, b) = (i * dk, (i + 1) * dk);
            let (qh, kh, vh) = if h == 1 {
                (q, k, v)
            } else {
                (self.g.slice_cols(q, a, b), self.g.slice_cols(k, a, b), self.g.slice_cols(v, a, b))
            };
            let scores = self.g.matmul_t(qh, false, kh, true);
            let att = self.g.softmax(scores, mask);
            heads.push(self.g.matmul(att, vh));
        }
        let cat = if h == 1 { heads[0] } else { self.g.concat_cols(&heads) };
        self.g.matmul(cat, wo)
    }

    fn feed_forward(&mut self, prefix: &str, x: NodeId) -> NodeId {
        let w1 = self.p(&format!("{prefix}.w1"));
        let b1 = self.p(&format!("{prefix}.b1"));
        let w2 = self.p(&format!("{prefix}.w2"));
        let b2 = self.p(&format!("{prefix}.b2"));
        let h = self.g.matmul(x, w1);
        let h = self.g.add_row(h, b1);
        let h = self.g.relu(h);
        let o = self.g.matmul(h, w2);
        self.g.add_row(o, b2)
    }

    /// Embeds one input block; `drop_draft` marks it as the draft translation.
    fn embed_block(&mut self, ids: &[u32], draft: bool) -> NodeId {
        let embed = self.p("embed");
        let idx: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
        let mut x = self.g.gather_rows(embed, &idx);
        if draft && self.cfg.p_src > 0.0 {
            if let Some(rng) = self.rng.as_mut() {
                let p = self.cfg.p_src;
                let dropped: Vec<usize> = (0..ids.len()).filter(|_| rng.random::<f64>() < p).collect();
                if !dropped.is_empty() {
                    let value = match self.cfg.source_dropout {
                        SourceDropout::Constant => 1.0 / p,
                        SourceDropout::Zero => 0.0,
                    };
                    x = self.g.replace_rows(x, &dropped, value);
                }
            }
        }
        let pos = self.positions(ids.len());
        let mut x = self.g.add(x, pos);
        if draft && self.cfg.variant == Variant::Dual {
            let o = self.p("offset");
            x = self.g.add_row(x, o);
        }
        x
    }

    /// Returns (first-layer input, final states, encoder tokens, copyable mask).
    fn encoder(&mut self, s: &[u32], t: &[u32]) -> Result<(NodeId, NodeId, Vec<u32>, Vec<bool>)> {
        let max = self.cfg.max_len;
        let with_eos = |x: &[u32]| -> Result<Vec<u32>> {
            if x.len() + 1 > max {
                return Err(Error::SequenceTooLong { len: x.len() + 1, max });
            }
            let mut v = x.to_vec();
            v.push(EOS);
            Ok(v)
        };
        check_ids(s, self.cfg.vocab_size)?;
        check_ids(t, self.cfg.vocab_size)?;
        let (input, tokens, copyable) = match self.cfg.variant {
            Variant::Mt => {
                let s = with_eos(s)?;
                let x = self.embed_block(&s, false);
                let n = s.len();
                (x, s, vec![true; n])
            }
            Variant::Gec => {
                let t = with_eos(t)?;
                let x = self.embed_block(&t, true);
                let n = t.len();
                (x, t, vec![true; n])
            }
            Variant::Dual => {
                let s = with_eos(s)?;
                let t = with_eos(t)?;
                let xs = self.embed_block(&s, false);
                let xt = self.embed_block(&t, true);
                let x = self.g.concat_rows(&[xs, xt]);
                let mut copyable = vec![false; s.len()];
                copyable.extend(std::iter::repeat_n(true, t.len()));
                let mut tokens = s;
                tokens.extend(t);
                (x, tokens, copyable)
            }
        };
        let mut x = input;
        for l in 0..self.cfg.n_layers {
            let h = self.layer_norm(x, &format!("enc.{l}.ln1"));
            let a = self.attention(&format!("enc.{l}.attn"), h, h, &Mask::None);
            let a = self.dropout(a);
            x = self.g.add(x, a);
            let h = self.layer_norm(x, &format!("enc.{l}.ln2"));
            let f = self.feed_forward(&format!("enc.{l}.ff"), h);
            let f = self.dropout(f);
            x = self.g.add(x, f);
        }
        let out = self.layer_norm(x, "enc.ln");
        Ok((input, out, tokens, copyable))
    }

    fn decoder(&mut self, dec_in: &[u32], enc: NodeId, tokens: &[u32], copyable: &[bool]) -> DecoderNodes {
        let mut x = self.embed_block(dec_in, false);
        for l in 0..self.cfg.n_layers {
            let h = self.layer_norm(x, &format!("dec.{l}.ln1"));
            let a = self.attention(&format!("dec.{l}.self"), h, h, &Mask::Causal);
            let a = self.dropout(a);
            x = self.g.add(x, a);
            let h = self.layer_norm(x, &format!("dec.{l}.ln2"));
            let a = self.attention(&format!("dec.{l}.cross"), h, enc, &Mask::None);
            let a = self.dropout(a);
            x = self.g.add(x, a);
            let h = self.layer_norm(x, &format!("dec.{l}.ln3"));
            let f = self.feed_forward(&format!("dec.{l}.ff"), h);
            let f = self.dropout(f);
            x = self.g.add(x, f);
        }
        let h_dec = self.layer_norm(x, "dec.ln");
        let embed = self.p("embed");
        let logits = self.g.matmul_t(h_dec, false, embed, true);
        let p_gen = self.g.softmax(logits, &Mask::None);
        if !self.cfg.copy_enabled {
            return DecoderNodes { p_gen, p_hat: p_gen, h_dec, copy: None };
        }

        let wq = self.p("copy.wq");
        let wk = self.p("copy.wk");
        let wv = self.p("copy.wv");
        let q = self.g.matmul(h_dec, wq);
        let q = self.g.scale(q, 1.0 / (self.cfg.d_model as f64).sqrt());
        let k = self.g.matmul(enc, wk);
        let v = self.g.matmul(enc, wv);
        let scores = self.g.matmul_t(q, false, k, true);
        let attention = self.g.softmax(scores, &Mask::Columns(copyable.to_vec()));
        let context = self.g.matmul(attention, v);
        let gate = self.p("copy.gate");
        let gate_logit = self.g.matmul(context, gate);
        let alpha = self.g.sigmoid(gate_logit);
        let one_hot = self.g.constant(one_hot(tokens, self.cfg.vocab_size));
        let p_copy = self.g.matmul(attention, one_hot);
        let p_hat = self.g.mix(p_gen, p_copy, alpha);
        let aw = self.p("copy.align.w");
        let ab = self.p("copy.align.b");
        let al = self.g.matmul(context, aw);
        let al = self.g.add_row(al, ab);
        let p_align = self.g.softmax(al, &Mask::None);
        DecoderNodes {
            p_gen,
            p_hat,
            h_dec,
            copy: Some(CopyNodes { p_copy, alpha, p_align, attention, context }),
        }
    }
}

fn check_ids(ids: &[u32], vocab: usize) -> Result<()> {
    match ids.iter().find(|&&i| i as usize >= vocab) {
        Some(i) => Err(Error::invalid(format!("token id {i} outside vocabulary of {vocab}"))),
        None => Ok(()),
    }
}

fn one_hot(tokens: &[u32], vocab: usize) -> Matrix {
    let mut m = Matrix::zeros(tokens.len(), vocab);
    for (i, &t) in tokens.iter().enumerate() {
        m.set(i, t as usize, 1.0);
    }
    m
}

/// Fixed sine/cosine position table.
pub fn sinusoidal(n: usize, d: usize) -> Matrix {
    let mut m = Matrix::zeros(n, d);
    for pos in 0..n {
        for i in 0..d {
            let rate = 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
            let angle = pos as f64 / rate;
            m.set(pos, i, if i % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    m
}

fn decoder_input(target: &[u32], max_len: usize) -> Result<Vec<u32>> {
    if target.len() + 1 > max_len {
        return Err(Error::SequenceTooLong { len: target.len() + 1, max: max_len });
    }
    let mut v = Vec::with_capacity(target.len() + 1);
    v.push(BOS);
    v.extend_from_slice(target);
    Ok(v)
}

fn last_row(m: &Matrix) -> Vec<f64> {
    m.row(m.rows - 1).to_vec()
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = Parameters::init(&config, seed);
        Ok(Self { config, params })
    }

    pub fn from_parts(config: ModelConfig, params: Parameters) -> Result<Self> {
        config.validate()?;
        params.validate(&config)?;
        Ok(Self { config, params })
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        Self::from_parts(ck.config, ck.params)
    }

    fn require_inputs(&self, s: Option<&[u32]>, t: Option<&[u32]>) -> Result<(Vec<u32>, Vec<u32>)> {
        let need = |x: Option<&[u32]>, what: &str| {
            x.map(<[u32]>::to_vec).ok_or_else(|| {
                Error::invalid(format!("the {} variant needs the {what} sentence", self.config.variant))
            })
        };
        Ok(match self.config.variant {
            Variant::Mt => (need(s, "source")?, Vec::new()),
            Variant::Gec => (Vec::new(), need(t, "draft")?),
            Variant::Dual => (need(s, "source")?, need(t, "draft")?),
        })
    }

    /// Runs the encoder in evaluation mode. MT ignores `t`; GEC ignores `s`.
    pub fn encode(&self, s: Option<&[u32]>, t: Option<&[u32]>) -> Result<Encoded> {
        let (s, t) = self.require_inputs(s, t)?;
        let mut b = Builder::new(self, None);
        let (input, states, tokens, copyable) = b.encoder(&s, &t)?;
        Ok(Encoded {
            input: b.g.value(input).clone(),
            states: b.g.value(states).clone(),
            tokens,
            copyable,
        })
    }

    /// Distributions for the next token after `prefix`, which starts with BOS.
    pub fn decode_step(&self, prefix: &[u32], enc: &Encoded) -> Result<StepOutput> {
        if prefix.first() != Some(&BOS) {
            return Err(Error::invalid("decoder prefix must start with <s>"));
        }
        if prefix.len() > self.config.max_len {
            return Err(Error::SequenceTooLong { len: prefix.len(), max: self.config.max_len });
        }
        check_ids(prefix, self.config.vocab_size)?;
        let mut b = Builder::new(self, None);
        let enc_node = b.g.constant_ref(&enc.states);
        let d = b.decoder(prefix, enc_node, &enc.tokens, &enc.copyable);
        let g = &b.g;
        let copy = d.copy.as_ref();
        Ok(StepOutput {
            p_gen: last_row(g.value(d.p_gen)),
            p_copy: copy.map(|c| last_row(g.value(c.p_copy))),
            p_hat: last_row(g.value(d.p_hat)),
            alpha: copy.map(|c| *g.value(c.alpha).data.last().unwrap()),
            p_align: copy.map(|c| last_row(g.value(c.p_align))),
            attention: copy.map(|c| last_row(g.value(c.attention))),
            context: copy.map(|c| last_row(g.value(c.context))),
        })
    }

    /// Full teacher-forced pass in evaluation mode.
    pub fn forward(&self, ex: &Example) -> Result<ForwardOutput> {
        let mut b = Builder::new(self, None);
        let (_, enc, tokens, copyable) = b.encoder(&ex.source, &ex.original)?;
        let dec_in = decoder_input(&ex.target, self.config.max_len)?;
        let d = b.decoder(&dec_in, enc, &tokens, &copyable);
        let g = &b.g;
        let copy = d.copy.as_ref();
        Ok(ForwardOutput {
            p_gen: g.value(d.p_gen).clone(),
            p_copy: copy.map(|c| g.value(c.p_copy).clone()),
            p_hat: g.value(d.p_hat).clone(),
            alpha: copy.map(|c| g.value(c.alpha).data.clone()),
            p_align: copy.map(|c| g.value(c.p_align).clone()),
            h_enc: g.value(enc).clone(),
            h_dec: g.value(d.h_dec).clone(),
            attention: copy.map(|c| g.value(c.attention).clone()),
            context: copy.map(|c| g.value(c.context).clone()),
            encoder_tokens: tokens,
            copyable,
        })
    }

    /// Builds the loss graph for one example, scaled by `1 / total_tokens`.
    fn example_graph<'a>(
        &'a self,
        ex: &Example,
        total_tokens: usize,
        rng: Option<ChaCha8Rng>,
        smoothing: f64,
    ) -> Result<(Builder<'a>, NodeId)> {
        let mut b = Builder::new(self, rng);
        let (_, enc, tokens, copyable) = b.encoder(&ex.source, &ex.original)?;
        let dec_in = decoder_input(&ex.target, self.config.max_len)?;
        let d = b.decoder(&dec_in, enc, &tokens, &copyable);
        let mut gold: Vec<usize> = ex.target.iter().map(|&x| x as usize).collect();
        gold.push(EOS as usize);
        let norm = 1.0 / total_tokens as f64;
        let main = b.g.cross_entropy_smoothed(d.p_hat, &gold, norm, smoothing);
        let loss = match &d.copy {
            Some(c) if self.config.lambda > 0.0 => {
                let aux = b.g.cross_entropy_smoothed(c.p_align, &gold, self.config.lambda * norm, smoothing);
                b.g.sum(&[main, aux])
            }
            _ => main,
        };
        Ok((b, loss))
    }

    fn example_rng(mode: Mode, index: usize) -> Option<ChaCha8Rng> {
        match mode {
            Mode::Eval => None,
            Mode::Train { seed } => Some(item_rng(seed, index as u64)),
        }
    }

    fn batch_tokens(batch: &[Example]) -> Result<usize> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        Ok(batch.iter().map(|e| e.target.len() + 1).sum())
    }

    /// Token-mean of `CE(P̂) + λ·CE(P_align)` over the batch.
    pub fn loss(&self, batch: &[Example], mode: Mode) -> Result<f64> {
        let total = Self::batch_tokens(batch)?;
        let parts: Vec<Result<f64>> = batch
            .par_iter()
            .enumerate()
            .map(|(i, ex)| {
                let (b, l) = self.example_graph(ex, total, Self::example_rng(mode, i), 0.0)?;
                Ok(b.g.value(l).data[0])
            })
            .collect();
        let mut loss = 0.0;
        for p in parts {
            loss += p?;
        }
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss(loss));
        }
        Ok(loss)
    }

    /// Loss and its exact gradient. Every parameter has an entry, zero when
    /// unused.
    pub fn loss_and_grad(&self, batch: &[Example], mode: Mode) -> Result<(f64, Parameters)> {
        self.loss_and_grad_smoothed(batch, mode, 0.0)
    }

    /// As [`Model::loss_and_grad`] with label smoothing on both loss terms.
    pub fn loss_and_grad_smoothed(
        &self,
        batch: &[Example],
        mode: Mode,
        smoothing: f64,
    ) -> Result<(f64, Parameters)> {
        let total = Self::batch_tokens(batch)?;
        let parts: Vec<Result<(f64, std::collections::BTreeMap<String, Matrix>)>> = batch
            .par_iter()
            .enumerate()
            .map(|(i, ex)| {
                let (b, l) = self.example_graph(ex, total, Self::example_rng(mode, i), smoothing)?;
                Ok((b.g.value(l).data[0], b.g.backward(l)))
            })
            .collect();
        let mut loss = 0.0;
        let mut grad = self.params.zeros_like();
        for p in parts {
            let (l, g) = p?;
            loss += l;
            grad.add_assign(&g);
        }
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss(loss));
        }
        Ok((loss, grad))
    }

    pub fn greedy_decode(&self, s: &[u32], t: &[u32]) -> Result<Vec<u32>> {
        self.greedy_decode_limit(s, t, self.config.max_len)
    }

    /// Greedy decoding of at most `limit` tokens (capped by `max_len`). The
    /// end-of-sentence token is not included in the output.
    pub fn greedy_decode_limit(&self, s: &[u32], t: &[u32], limit: usize) -> Result<Vec<u32>> {
        let enc = self.encode(Some(s), Some(t))?;
        let limit = limit.min(self.config.max_len);
        let mut prefix = vec![BOS];
        let mut out = Vec::new();
        while out.len() < limit {
            let step = self.decode_step(&prefix, &enc)?;
            let next = argmax(&step.p_hat) as u32;
            if next == EOS {
                break;
            }
            out.push(next);
            prefix.push(next);
        }
        Ok(out)
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
