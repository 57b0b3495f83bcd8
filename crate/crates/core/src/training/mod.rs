//! Pre-training and fine-tuning loops, checkpoint selection, cross-translated
//! post-editing data and evaluation runs.

mod adam;
mod ape;
mod eval;
mod run_dir;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use adam::Adam;
pub use ape::{make_ape_data, train_translator, NeuralTranslator, Translator};
pub use eval::{correct_all, evaluate_model, score_hypotheses, Corrector, EvalRun, NeuralCorrector, NoEdit};
pub use run_dir::{report_table, RunDir};

use crate::corpus::Triple;
use crate::edits::MetricReport;
use crate::error::{Error, Result};
use crate::model::{Example, Mode, Model};
use crate::seed::{item_rng, mix_seed};
use crate::textnorm::Vocabulary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Pretrain,
    Finetune,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Pretrain => "pretrain",
            Phase::Finetune => "finetune",
        })
    }
}

impl FromStr for Phase {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pretrain" => Ok(Phase::Pretrain),
            "finetune" => Ok(Phase::Finetune),
            _ => Err(Error::invalid(format!("unknown phase `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub phase: Phase,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub max_steps: usize,
    pub eval_every: usize,
    pub seed: u64,
    /// Linear warmup length in steps; 0 keeps the rate constant.
    pub warmup_steps: usize,
    pub label_smoothing: f64,
}

impl TrainConfig {
    pub fn pretrain() -> Self {
        Self {
            phase: Phase::Pretrain,
            learning_rate: 2e-4,
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-9,
            batch_size: 32,
            max_steps: 1000,
            eval_every: 100,
            seed: 0,
            warmup_steps: 0,
            label_smoothing: 0.0,
        }
    }

    pub fn finetune() -> Self {
        Self {
            phase: Phase::Finetune,
            learning_rate: 1e-4,
            ..Self::pretrain()
        }
    }

    pub fn for_phase(phase: Phase) -> Self {
        match phase {
            Phase::Pretrain => Self::pretrain(),
            Phase::Finetune => Self::finetune(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("Adam betas must be in [0, 1)"));
        }
        if self.eps <= 0.0 {
            return Err(Error::invalid("eps must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        if self.eval_every == 0 {
            return Err(Error::invalid("eval_every must be positive"));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(Error::invalid("label_smoothing must be in [0, 1)"));
        }
        Ok(())
    }

    /// Learning rate for 1-based step `step`.
    pub fn lr_at(&self, step: usize) -> f64 {
        if self.warmup_steps == 0 {
            self.learning_rate
        } else {
            self.learning_rate * (step as f64 / self.warmup_steps as f64).min(1.0)
        }
    }

    fn optimizer(&self, model: &Model) -> Adam {
        Adam::with_hyper(&model.params, self.learning_rate, self.beta1, self.beta2, self.eps)
    }
}

/// Random stream seed for the dropout masks of training step `step`.
pub fn step_seed(seed: u64, step: usize) -> u64 {
    mix_seed(seed, step as u64)
}

const BUCKET_BATCHES: usize = 4;
const SCHEDULE_SALT: u64 = 0x5CED;

/// Endless, seeded sequence of length-bucketed batches. Each epoch shuffles
/// the examples, sorts windows of a few batches by length, cuts them into
/// batches and shuffles the batch order.
#[derive(Debug, Clone)]
pub struct BatchSchedule {
    lengths: Vec<usize>,
    batch_size: usize,
    seed: u64,
    epoch: u64,
    pending: Vec<Vec<usize>>,
}

impl BatchSchedule {
    pub fn new(lengths: Vec<usize>, batch_size: usize, seed: u64) -> Self {
        Self {
            lengths,
            batch_size: batch_size.max(1),
            seed,
            epoch: 0,
            pending: Vec::new(),
        }
    }

    pub fn for_examples(examples: &[Example], batch_size: usize, seed: u64) -> Self {
        let lengths = examples
            .iter()
            .map(|e| e.source.len() + e.original.len() + e.target.len())
            .collect();
        Self::new(lengths, batch_size, seed)
    }

    fn refill(&mut self) {
        let mut rng = item_rng(mix_seed(self.seed, SCHEDULE_SALT), self.epoch);
        self.epoch += 1;
        let mut order: Vec<usize> = (0..self.lengths.len()).collect();
        order.shuffle(&mut rng);
        let mut batches = Vec::new();
        for window in order.chunks(self.batch_size * BUCKET_BATCHES) {
            let mut w = window.to_vec();
            w.sort_by_key(|&i| self.lengths[i]);
            batches.extend(w.chunks(self.batch_size).map(<[usize]>::to_vec));
        }
        batches.shuffle(&mut rng);
        batches.reverse();
        self.pending = batches;
    }
}

impl Iterator for BatchSchedule {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.lengths.is_empty() {
            return None;
        }
        if self.pending.is_empty() {
            self.refill();
        }
        self.pending.pop()
    }
}

/// Turns triples into token ids. Triples that do not fit `max_len` are
/// dropped; the second value counts them.
pub fn encode_triples(vocab: &Vocabulary, triples: &[Triple], max_len: usize) -> (Vec<Example>, usize) {
    let mut out = Vec::with_capacity(triples.len());
    let mut skipped = 0;
    for t in triples {
        let ex = Example {
            source: vocab.encode(&t.source).into_ids(),
            original: vocab.encode(&t.original).into_ids(),
            target: vocab.encode(&t.corrected).into_ids(),
        };
        if ex.source.len() >= max_len || ex.original.len() >= max_len || ex.target.len() >= max_len {
            skipped += 1;
        } else {
            out.push(ex);
        }
    }
    (out, skipped)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    /// Training loss of every step, in order.
    pub losses: Vec<f64>,
    pub optimizer: Adam,
}

/// One optimizer step on `batch`. Non-finite losses or parameters abort with
/// the step number.
pub fn train_step(
    model: &mut Model,
    opt: &mut Adam,
    batch: &[Example],
    cfg: &TrainConfig,
    step: usize,
) -> Result<f64> {
    let mode = Mode::Train { seed: step_seed(cfg.seed, step) };
    let (loss, grad) = match model.loss_and_grad_smoothed(batch, mode, cfg.label_smoothing) {
        Ok(x) => x,
        Err(Error::NonFiniteLoss(loss)) => return Err(Error::Diverged { step, loss }),
        Err(e) => return Err(e),
    };
    opt.step_with_lr(&mut model.params, &grad, cfg.lr_at(step));
    if !model.params.is_finite() {
        return Err(Error::Diverged { step, loss });
    }
    Ok(loss)
}

fn run_steps(
    model: &mut Model,
    opt: &mut Adam,
    data: &[Example],
    cfg: &TrainConfig,
    mut after_step: impl FnMut(usize, &Model) -> Result<()>,
) -> Result<Vec<f64>> {
    let mut schedule = BatchSchedule::for_examples(data, cfg.batch_size, cfg.seed);
    let mut losses = Vec::with_capacity(cfg.max_steps);
    for step in 1..=cfg.max_steps {
        let idx = schedule.next().expect("non-empty data");
        let batch: Vec<Example> = idx.iter().map(|&i| data[i].clone()).collect();
        losses.push(train_step(model, opt, &batch, cfg, step)?);
        after_step(step, model)?;
    }
    Ok(losses)
}

/// Trains from `model` on `data`, checkpointing every `eval_every` steps and
/// at the end when a run directory is given.
pub fn pretrain(mut model: Model, data: &[Example], cfg: &TrainConfig, run: Option<&RunDir>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut opt = cfg.optimizer(&model);
    if cfg.max_steps == 0 {
        return Ok(TrainOutcome { model, losses: Vec::new(), optimizer: opt });
    }
    if data.is_empty() {
        return Err(Error::invalid("training data is empty"));
    }
    let last = cfg.max_steps;
    let losses = run_steps(&mut model, &mut opt, data, cfg, |step, m| {
        if let Some(run) = run {
            if step % cfg.eval_every == 0 || step == last {
                run.save_checkpoint(step, m)?;
            }
        }
        Ok(())
    })?;
    Ok(TrainOutcome { model, losses, optimizer: opt })
}

/// Dev score of one evaluated fine-tuning checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointScore {
    pub step: usize,
    pub dev: MetricReport,
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    /// Checkpoint with the highest dev F0.5, earliest on ties.
    pub best: Model,
    pub best_step: usize,
    pub best_f05: f64,
    /// Parameters after the last step.
    pub last: Model,
    pub history: Vec<CheckpointScore>,
    pub losses: Vec<f64>,
}

/// Fine-tunes with a fresh optimizer. The starting point (step 0), every
/// `eval_every`-th step and the final step are decoded on `dev`; the
/// checkpoint with the highest F0.5 is returned.
pub fn finetune(
    mut model: Model,
    train: &[Example],
    dev: &[Triple],
    vocab: &Vocabulary,
    cfg: &TrainConfig,
    run: Option<&RunDir>,
) -> Result<FinetuneOutcome> {
    cfg.validate()?;
    if dev.is_empty() {
        return Err(Error::invalid("fine-tuning needs a non-empty dev split"));
    }
    if train.is_empty() && cfg.max_steps > 0 {
        return Err(Error::invalid("training data is empty"));
    }
    let evaluate = |step: usize, m: &Model| -> Result<CheckpointScore> {
        let corrector = NeuralCorrector { model: m, vocab };
        let run_eval = evaluate_model(&corrector, dev, "dev", &format!("{step:04}"))?;
        if let Some(run) = run {
            run.save_checkpoint(step, m)?;
            run.append_metrics(&run_eval)?;
        }
        Ok(CheckpointScore { step, dev: run_eval.m2 })
    };

    let first = evaluate(0, &model)?;
    let mut best = (model.clone(), 0, first.dev.f_beta);
    let mut history = vec![first];
    let mut opt = cfg.optimizer(&model);
    let last = cfg.max_steps;
    let losses = run_steps(&mut model, &mut opt, train, cfg, |step, m| {
        if step % cfg.eval_every == 0 || step == last {
            let score = evaluate(step, m)?;
            if score.dev.f_beta > best.2 {
                best = (m.clone(), step, score.dev.f_beta);
            }
            history.push(score);
        }
        Ok(())
    })?;
    Ok(FinetuneOutcome {
        best: best.0,
        best_step: best.1,
        best_f05: best.2,
        last: model,
        history,
        losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_covers_every_example_each_epoch() {
        let lengths: Vec<usize> = (0..23).map(|i| (i * 7) % 11).collect();
        let mut s = BatchSchedule::new(lengths, 4, 3);
        let mut seen = Vec::new();
        while seen.len() < 23 {
            let b = s.next().unwrap();
            assert!(b.len() <= 4);
            seen.extend(b);
        }
        seen.sort();
        assert_eq!(seen, (0..23).collect::<Vec<_>>());
    }

    #[test]
    fn schedule_is_seeded() {
        let lengths: Vec<usize> = (0..50).collect();
        let a: Vec<_> = BatchSchedule::new(lengths.clone(), 8, 1).take(20).collect();
        let b: Vec<_> = BatchSchedule::new(lengths.clone(), 8, 1).take(20).collect();
        let c: Vec<_> = BatchSchedule::new(lengths, 8, 2).take(20).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn warmup_ramps_linearly() {
        let cfg = TrainConfig { warmup_steps: 4, ..TrainConfig::pretrain() };
        assert_eq!(cfg.lr_at(1), 0.5e-4);
        assert_eq!(cfg.lr_at(4), 2e-4);
        assert_eq!(cfg.lr_at(40), 2e-4);
    }

    #[test]
    fn phase_defaults() {
        assert_eq!(TrainConfig::pretrain().learning_rate, 2e-4);
        assert_eq!(TrainConfig::finetune().learning_rate, 1e-4);
        assert_eq!(TrainConfig::finetune().beta2, 0.98);
    }
}
