use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{EvalRun, TrainConfig};
use crate::error::Result;
use crate::model::{write_atomic, Checkpoint, Model, ModelConfig};

/// On-disk layout of one training run:
///
/// ```text
/// config.json        model and training configuration
/// vocab.sha256       hash of the vocabulary the model was trained with
/// checkpoints/NNNN.json
/// metrics.jsonl      one evaluation per line
/// report.json, report.txt
/// ```
#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
    vocab_hash: String,
}

#[derive(Serialize)]
struct ConfigSnapshot<'a> {
    model: &'a ModelConfig,
    train: &'a TrainConfig,
}

impl RunDir {
    pub fn create(
        root: impl AsRef<Path>,
        model: &ModelConfig,
        train: &TrainConfig,
        vocab_hash: &str,
    ) -> Result<Self> {
        let root = root.as_ref().to_owned();
        fs::create_dir_all(root.join("checkpoints"))?;
        let snapshot = serde_json::to_vec_pretty(&ConfigSnapshot { model, train })?;
        write_atomic(&root.join("config.json"), &snapshot)?;
        write_atomic(&root.join("vocab.sha256"), format!("{vocab_hash}\n").as_bytes())?;
        Ok(Self {
            root,
            vocab_hash: vocab_hash.to_owned(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn checkpoint_path(&self, step: usize) -> PathBuf {
        self.root.join("checkpoints").join(format!("{step:04}.json"))
    }

    pub fn save_checkpoint(&self, step: usize, model: &Model) -> Result<PathBuf> {
        let path = self.checkpoint_path(step);
        Checkpoint::new(model.config.clone(), self.vocab_hash.clone(), model.params.clone()).save(&path)?;
        Ok(path)
    }

    pub fn append_metrics(&self, run: &EvalRun) -> Result<()> {
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.root.join("metrics.jsonl"))?;
        let mut line = serde_json::to_vec(run)?;
        line.push(b'\n');
        f.write_all(&line)?;
        Ok(())
    }

    pub fn write_report(&self, runs: &[EvalRun]) -> Result<()> {
        write_atomic(&self.root.join("report.json"), &serde_json::to_vec_pretty(runs)?)?;
        write_atomic(&self.root.join("report.txt"), report_table(runs).as_bytes())?;
        Ok(())
    }
}

/// Precision, recall and F0.5 per evaluated split.
pub fn report_table(runs: &[EvalRun]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<16} {:<12} {:>7} {:>7} {:>7} {:>7}", "Dataset", "Checkpoint", "Prec.", "Rec.", "F0.5", "GLEU");
    for r in runs {
        let _ = writeln!(
            s,
            "{:<16} {:<12} {:>7.2} {:>7.2} {:>7.2} {:>7.2}",
            r.split,
            r.checkpoint,
            r.m2.precision * 100.0,
            r.m2.recall * 100.0,
            r.m2.f_beta * 100.0,
            r.gleu
        );
    }
    s
}
