//! The `tec` command line.
//!
//! Flags can also come from a `--config` file of `key=value` lines, where a
//! key is a long flag name without the leading dashes. Flags given on the
//! command line take precedence over the file. `--dump-config` prints the
//! effective settings in the same form and exits.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::{load_bitext, load_corpus, write_jsonl, write_tsv, CorpusFormat, Triple};
use crate::corruption::{make_synthetic_triples_traced, CorruptionConfig, Level, PerturbOp, SyntheticMode};
use crate::edits::edit_overlap;
use crate::error::Error;
use crate::model::{Checkpoint, Model, ModelConfig, Positional, SourceDropout, Variant};
use crate::service::{self, ModelSuggester, Service, Store, Suggester};
use crate::stats::{parse_records, study_summary_with, MwOptions, QualityRanking};
use crate::textnorm::{normalize_punctuation, train_bpe, Vocabulary};
use crate::training::{
    self, correct_all, encode_triples, make_ape_data, score_hypotheses, train_translator, NeuralCorrector,
    RunDir, TrainConfig,
};

#[derive(Debug, Parser)]
#[command(name = "tec", version, about = "Translation error correction workbench")]
pub struct Cli {
    /// Seed for every random choice. Falls back to TEC_SEED, then 0.
    #[arg(long, global = true, env = "TEC_SEED")]
    pub seed: Option<u64>,
    /// Output style of reporting commands.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// File of key=value flag settings.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Print the effective settings as key=value lines and exit.
    #[arg(long, global = true)]
    pub dump_config: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Table,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize punctuation line by line.
    Normalize(NormalizeArgs),
    /// Learn a subword vocabulary.
    BpeTrain(BpeTrainArgs),
    /// Build synthetic triples by corrupting the target side of a bitext.
    Corrupt(CorruptArgs),
    /// Build post-editing triples by cross-translating two halves of a bitext.
    MakeApeData(MakeApeArgs),
    /// Train a model from scratch.
    Pretrain(PretrainArgs),
    /// Continue training on real triples, keeping the best dev checkpoint.
    Finetune(FinetuneArgs),
    /// Correct every triple of a corpus with a checkpoint.
    Predict(PredictArgs),
    /// Score hypotheses against references.
    Score(ScoreArgs),
    /// Share of evaluation edits that also occur in training data.
    Overlap(OverlapArgs),
    /// Analyze exported review records.
    StatsSummary(StatsArgs),
    /// Run the review service.
    Serve(ServeArgs),
    /// Dump logged reviews as JSON lines.
    ExportStudy(ExportArgs),
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct NormalizeArgs {
    /// Input text; standard input when absent.
    #[arg(long = "in")]
    #[serde(rename = "in", skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct BpeTrainArgs {
    /// Corpus of triples (.tsv or .jsonl) or plain text (.txt).
    #[arg(long = "in")]
    #[serde(rename = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 8000)]
    pub vocab_size: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Tec,
    Gec,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct CorruptArgs {
    /// Bitext of `source<TAB>target` lines.
    #[arg(long = "in")]
    #[serde(rename = "in")]
    pub input: PathBuf,
    /// Output triples (.tsv or .jsonl); standard output as TSV when absent.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0.01, allow_negative_numbers = true)]
    pub mu: f64,
    #[arg(long, default_value_t = 0.04)]
    pub sigma: f64,
    /// Comma-separated perturbations.
    #[arg(long, default_value = "insertion,deletion,transposition,repetition")]
    pub ops: String,
    /// Comma-separated levels.
    #[arg(long, default_value = "character,word")]
    pub levels: String,
    #[arg(long, value_enum, default_value_t = ModeArg::Tec)]
    pub mode: ModeArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantArg {
    Tec,
    Mt,
    Gec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DropoutArg {
    Constant,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PositionalArg {
    Learned,
    Sinusoidal,
}

/// Architecture flags. The vocabulary size comes from the vocabulary file.
#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value_t = VariantArg::Tec)]
    pub variant: VariantArg,
    #[arg(long, default_value_t = 6)]
    pub layers: usize,
    #[arg(long, default_value_t = 256)]
    pub d_model: usize,
    #[arg(long, default_value_t = 512)]
    pub d_ff: usize,
    #[arg(long, default_value_t = 8)]
    pub heads: usize,
    #[arg(long, default_value_t = 0.1)]
    pub dropout: f64,
    /// Weight of the alignment loss.
    #[arg(long, default_value_t = 0.05)]
    pub lambda: f64,
    /// Source-word dropout rate on the draft.
    #[arg(long, default_value_t = 0.05)]
    pub p_src: f64,
    #[arg(long, value_enum, default_value_t = DropoutArg::Constant)]
    pub source_dropout: DropoutArg,
    #[arg(long, value_enum, default_value_t = PositionalArg::Learned)]
    pub positional: PositionalArg,
    #[arg(long, default_value_t = 256)]
    pub max_len: usize,
}

impl ModelArgs {
    fn config(&self, vocab: &Vocabulary) -> ModelConfig {
        let variant = match self.variant {
            VariantArg::Tec => Variant::Dual,
            VariantArg::Mt => Variant::Mt,
            VariantArg::Gec => Variant::Gec,
        };
        ModelConfig {
            n_layers: self.layers,
            d_model: self.d_model,
            d_ff: self.d_ff,
            n_heads: self.heads,
            dropout: self.dropout,
            variant,
            copy_enabled: variant != Variant::Mt,
            lambda: self.lambda,
            p_src: self.p_src,
            source_dropout: match self.source_dropout {
                DropoutArg::Constant => SourceDropout::Constant,
                DropoutArg::Zero => SourceDropout::Zero,
            },
            positional: match self.positional {
                PositionalArg::Learned => Positional::Learned,
                PositionalArg::Sinusoidal => Positional::Sinusoidal,
            },
            max_len: self.max_len,
            vocab_size: vocab.len(),
        }
    }
}

/// Optimizer and schedule flags. The learning rate defaults by phase.
#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct TrainArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[arg(long, default_value_t = 0.9)]
    pub beta1: f64,
    #[arg(long, default_value_t = 0.98)]
    pub beta2: f64,
    #[arg(long, default_value_t = 1e-9)]
    pub eps: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    #[arg(long, default_value_t = 100)]
    pub eval_every: usize,
    #[arg(long, default_value_t = 0)]
    pub warmup: usize,
    #[arg(long, default_value_t = 0.0)]
    pub label_smoothing: f64,
}

impl TrainArgs {
    fn config(&self, base: TrainConfig, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.lr.unwrap_or(base.learning_rate),
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            batch_size: self.batch_size,
            max_steps: self.steps,
            eval_every: self.eval_every,
            seed,
            warmup_steps: self.warmup,
            label_smoothing: self.label_smoothing,
            ..base
        }
    }
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct MakeApeArgs {
    /// Bitext of `source<TAB>target` lines.
    #[arg(long = "in")]
    #[serde(rename = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct PretrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Final checkpoint.
    #[arg(long)]
    pub out: PathBuf,
    /// Directory for intermediate checkpoints and the run configuration.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run_dir: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub opt: TrainArgs,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct FinetuneArgs {
    /// Starting checkpoint.
    #[arg(long)]
    pub init: PathBuf,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub dev: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Best dev checkpoint.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run_dir: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub opt: TrainArgs,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Corpus of triples to correct.
    #[arg(long = "in")]
    #[serde(rename = "in")]
    pub input: PathBuf,
    /// One hypothesis per line; standard output when absent.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Also score the hypotheses against the corpus references.
    #[arg(long)]
    pub evaluate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    M2,
    Gleu,
    Accuracy,
    Categories,
    All,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ScoreArgs {
    /// One hypothesis per line.
    #[arg(long)]
    pub hyp: PathBuf,
    /// References, one per line. Needs --orig.
    #[arg(long = "ref", requires = "orig", conflicts_with = "triples")]
    #[serde(rename = "ref", skip_serializing_if = "Option::is_none")]
    pub reference: Option<PathBuf>,
    /// Original translations, one per line. Needs --ref.
    #[arg(long, requires = "reference")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub orig: Option<PathBuf>,
    /// Corpus of triples supplying originals, references and labels.
    #[arg(long, required_unless_present = "reference")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub triples: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Metric::All)]
    pub metric: Metric,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct OverlapArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub eval: PathBuf,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct StatsArgs {
    /// Review records as JSON lines.
    #[arg(long)]
    pub records: PathBuf,
    /// Quality ranks as JSON lines of {sentence_id, reviewer_id, rank}.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rankings: Option<PathBuf>,
    /// Continuity correction in the normal approximation.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub continuity: bool,
    /// Largest combined sample size tested exactly.
    #[arg(long, default_value_t = 16)]
    pub exact_max: usize,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ServeArgs {
    /// Corpus of triples offered for review, addressed by id.
    #[arg(long)]
    pub sentences: PathBuf,
    /// Checkpoint producing suggestions; without one nothing is suggested.
    #[arg(long, requires = "vocab")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vocab: Option<PathBuf>,
    /// Session manifest and event log directory.
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ExportArgs {
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub session: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn command() -> clap::Command {
    Cli::command().mut_subcommands(|s| s.args_override_self(true))
}

/// Turns `key=value` lines into flags.
pub fn config_flags(text: &str) -> anyhow::Result<Vec<OsString>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .with_context(|| format!("config line {}: expected key=value", n + 1))?;
        let key = k.trim().replace('_', "-");
        if key == "config" || key == "dump-config" {
            bail!("config line {}: `{key}` cannot be set from a config file", n + 1);
        }
        match v.trim() {
            "true" if key != "continuity" => out.push(format!("--{key}").into()),
            "false" if key != "continuity" => {}
            v => {
                out.push(format!("--{key}").into());
                out.push(v.into());
            }
        }
    }
    Ok(out)
}

/// Value of `--config` and the index of the subcommand name, found without
/// a full parse so that required flags may come from the file.
fn prescan(argv: &[OsString]) -> (Option<PathBuf>, Option<usize>) {
    let names: Vec<String> = command().get_subcommands().map(|c| c.get_name().to_owned()).collect();
    let mut config = None;
    let mut sub = None;
    let mut i = 1;
    while i < argv.len() {
        let a = argv[i].to_string_lossy();
        if let Some(v) = a.strip_prefix("--config=") {
            config = Some(PathBuf::from(v));
        } else if a == "--config" {
            config = argv.get(i + 1).map(PathBuf::from);
            i += 1;
        } else if a == "--seed" || a == "--format" {
            i += 1;
        } else if sub.is_none() && !a.starts_with('-') && names.iter().any(|n| *n == a) {
            sub = Some(i);
        }
        i += 1;
    }
    (config, sub)
}

fn parse(argv: Vec<OsString>) -> Result<Cli, clap::Error> {
    let (config, sub) = prescan(&argv);
    let (Some(path), Some(pos)) = (config, sub) else {
        return Cli::from_arg_matches(&command().try_get_matches_from(argv)?);
    };
    let text = fs::read_to_string(&path).map_err(|e| {
        command().error(clap::error::ErrorKind::Io, format!("{}: {e}", path.display()))
    })?;
    let extra = config_flags(&text)
        .map_err(|e| command().error(clap::error::ErrorKind::InvalidValue, format!("{e:#}")))?;
    let mut merged = argv[..=pos].to_vec();
    merged.extend(extra);
    merged.extend_from_slice(&argv[pos + 1..]);
    Cli::from_arg_matches(&command().try_get_matches_from(merged)?)
}

/// Effective settings as sorted `key=value` lines.
pub fn dump_config(cli: &Cli) -> String {
    let mut map = match command_value(&cli.command) {
        Value::Object(m) => m,
        _ => unreachable!("arguments serialize as objects"),
    };
    if let Some(seed) = cli.seed {
        map.insert("seed".into(), seed.into());
    }
    map.insert("format".into(), serde_json::to_value(cli.format).expect("format"));
    let mut lines: Vec<String> = map
        .into_iter()
        .map(|(k, v)| match v {
            Value::String(s) => format!("{k}={s}"),
            other => format!("{k}={other}"),
        })
        .collect();
    lines.sort();
    lines.join("\n") + "\n"
}

fn command_value(c: &Command) -> Value {
    let v = match c {
        Command::Normalize(a) => serde_json::to_value(a),
        Command::BpeTrain(a) => serde_json::to_value(a),
        Command::Corrupt(a) => serde_json::to_value(a),
        Command::MakeApeData(a) => serde_json::to_value(a),
        Command::Pretrain(a) => serde_json::to_value(a),
        Command::Finetune(a) => serde_json::to_value(a),
        Command::Predict(a) => serde_json::to_value(a),
        Command::Score(a) => serde_json::to_value(a),
        Command::Overlap(a) => serde_json::to_value(a),
        Command::StatsSummary(a) => serde_json::to_value(a),
        Command::Serve(a) => serde_json::to_value(a),
        Command::ExportStudy(a) => serde_json::to_value(a),
    };
    v.expect("arguments serialize")
}

/// Parses `argv` (program name first) and runs the command. Returns the exit
/// code: 0 on success, 1 on a data or validation error, 2 on a usage error.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match parse(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(stderr, "{text}");
            } else {
                let _ = write!(stdout, "{text}");
            }
            return e.exit_code();
        }
    };
    if cli.dump_config {
        let _ = write!(stdout, "{}", dump_config(&cli));
        return 0;
    }
    match execute(&cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e:#}");
            1
        }
    }
}

fn read_lines(path: &Path) -> anyhow::Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().map(|l| l.strip_suffix('\r').unwrap_or(l).to_owned()).collect())
}

fn load_triples(path: &Path) -> anyhow::Result<Vec<Triple>> {
    Ok(load_corpus(path, CorpusFormat::from_path(path))
        .with_context(|| format!("reading {}", path.display()))?
        .triples)
}

fn write_triples(path: Option<&Path>, triples: &[Triple], stdout: &mut dyn Write) -> anyhow::Result<()> {
    let mut buf = Vec::new();
    match path.map(CorpusFormat::from_path) {
        Some(CorpusFormat::Jsonl) => write_jsonl(&mut buf, triples)?,
        _ => write_tsv(&mut buf, triples)?,
    }
    emit(path, &buf, stdout)
}

fn emit(path: Option<&Path>, bytes: &[u8], stdout: &mut dyn Write) -> anyhow::Result<()> {
    match path {
        Some(p) => fs::write(p, bytes).with_context(|| format!("writing {}", p.display()))?,
        None => stdout.write_all(bytes)?,
    }
    Ok(())
}

fn report<T: Serialize>(format: Format, value: &T, table: impl FnOnce() -> String, stdout: &mut dyn Write) -> anyhow::Result<()> {
    match format {
        Format::Json => writeln!(stdout, "{}", serde_json::to_string_pretty(value)?)?,
        Format::Table => write!(stdout, "{}", table())?,
    }
    Ok(())
}

fn load_model(checkpoint: &Path, vocab: &Vocabulary) -> anyhow::Result<Model> {
    let ck = Checkpoint::load(checkpoint).with_context(|| format!("reading {}", checkpoint.display()))?;
    if ck.vocab_hash != vocab.hash() {
        bail!("{} was trained with a different vocabulary", checkpoint.display());
    }
    Ok(Model::from_checkpoint(ck)?)
}

fn save_model(path: &Path, model: &Model, vocab: &Vocabulary) -> anyhow::Result<()> {
    Checkpoint::new(model.config.clone(), vocab.hash(), model.params.clone()).save(path)?;
    Ok(())
}

fn parse_list<T: std::str::FromStr<Err = Error>>(s: &str) -> anyhow::Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| x.parse().map_err(anyhow::Error::from))
        .collect()
}

fn parse_level(s: &str) -> anyhow::Result<Level> {
    match s {
        "character" | "char" => Ok(Level::Character),
        "word" => Ok(Level::Word),
        _ => bail!("unknown level `{s}`"),
    }
}

#[derive(Serialize)]
struct TrainSummary {
    steps: usize,
    final_loss: Option<f64>,
    checkpoint: PathBuf,
}

fn execute(cli: &Cli, stdout: &mut dyn Write) -> anyhow::Result<()> {
    let seed = cli.seed.unwrap_or(0);
    let format = cli.format;
    match &cli.command {
        Command::Normalize(a) => {
            let text = match &a.input {
                Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
                None => std::io::read_to_string(std::io::stdin())?,
            };
            let out: String = text.lines().map(|l| normalize_punctuation(l) + "\n").collect();
            emit(a.out.as_deref(), out.as_bytes(), stdout)
        }
        Command::BpeTrain(a) => {
            let texts: Vec<String> = if a.input.extension().is_some_and(|e| e == "txt") {
                read_lines(&a.input)?
            } else {
                load_triples(&a.input)?
                    .into_iter()
                    .flat_map(|t| [t.source, t.original, t.corrected])
                    .collect()
            };
            let vocab = train_bpe(&texts, a.vocab_size)?;
            vocab.save(&a.out)?;
            writeln!(stdout, "{} symbols, sha256 {}", vocab.len(), vocab.hash())?;
            Ok(())
        }
        Command::Corrupt(a) => {
            let bitext = load_bitext(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
            let cfg = CorruptionConfig {
                mu: a.mu,
                sigma: a.sigma,
                ops: parse_list::<PerturbOp>(&a.ops)?.into_iter().collect(),
                levels: a.levels.split(',').map(str::trim).map(parse_level).collect::<anyhow::Result<_>>()?,
                seed,
            };
            let mode = match a.mode {
                ModeArg::Tec => SyntheticMode::Tec,
                ModeArg::Gec => SyntheticMode::Gec,
            };
            let (triples, _) = make_synthetic_triples_traced(&bitext, &cfg, mode)?;
            write_triples(a.out.as_deref(), &triples, stdout)
        }
        Command::MakeApeData(a) => {
            let bitext = load_bitext(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
            let vocab = Vocabulary::load(&a.vocab).with_context(|| format!("reading {}", a.vocab.display()))?;
            let model_cfg = a.model.config(&vocab);
            let train_cfg = a.train.config(TrainConfig::pretrain(), seed);
            let triples = make_ape_data(&bitext, |pairs| train_translator(pairs, &vocab, &model_cfg, &train_cfg))?;
            write_triples(Some(&a.out), &triples, stdout)
        }
        Command::Pretrain(a) => {
            let vocab = Vocabulary::load(&a.vocab).with_context(|| format!("reading {}", a.vocab.display()))?;
            let model_cfg = a.model.config(&vocab);
            let train_cfg = a.opt.config(TrainConfig::pretrain(), seed);
            let (examples, skipped) = encode_triples(&vocab, &load_triples(&a.train)?, model_cfg.max_len);
            if skipped > 0 {
                log_skipped(skipped);
            }
            let run = match &a.run_dir {
                Some(d) => Some(RunDir::create(d, &model_cfg, &train_cfg, &vocab.hash())?),
                None => None,
            };
            let model = Model::new(model_cfg, seed)?;
            let out = training::pretrain(model, &examples, &train_cfg, run.as_ref())?;
            save_model(&a.out, &out.model, &vocab)?;
            let summary = TrainSummary {
                steps: out.losses.len(),
                final_loss: out.losses.last().copied(),
                checkpoint: a.out.clone(),
            };
            report(format, &summary, || {
                format!(
                    "steps {}  final loss {}  -> {}\n",
                    summary.steps,
                    summary.final_loss.map_or("-".into(), |l| format!("{l:.4}")),
                    summary.checkpoint.display()
                )
            }, stdout)
        }
        Command::Finetune(a) => {
            let vocab = Vocabulary::load(&a.vocab).with_context(|| format!("reading {}", a.vocab.display()))?;
            let model = load_model(&a.init, &vocab)?;
            let train_cfg = a.opt.config(TrainConfig::finetune(), seed);
            let (examples, skipped) = encode_triples(&vocab, &load_triples(&a.train)?, model.config.max_len);
            if skipped > 0 {
                log_skipped(skipped);
            }
            let dev = load_triples(&a.dev)?;
            let run = match &a.run_dir {
                Some(d) => Some(RunDir::create(d, &model.config, &train_cfg, &vocab.hash())?),
                None => None,
            };
            let out = training::finetune(model, &examples, &dev, &vocab, &train_cfg, run.as_ref())?;
            save_model(&a.out, &out.best, &vocab)?;
            #[derive(Serialize)]
            struct Summary<'a> {
                best_step: usize,
                best_f05: f64,
                history: &'a [training::CheckpointScore],
            }
            let summary = Summary {
                best_step: out.best_step,
                best_f05: out.best_f05,
                history: &out.history,
            };
            report(format, &summary, || {
                let mut s = format!("{:>6} {:>7} {:>7} {:>7}\n", "step", "P", "R", "F0.5");
                for h in &out.history {
                    s += &format!("{:>6} {:>7.4} {:>7.4} {:>7.4}\n", h.step, h.dev.precision, h.dev.recall, h.dev.f_beta);
                }
                s + &format!("best step {} (F0.5 {:.4})\n", out.best_step, out.best_f05)
            }, stdout)
        }
        Command::Predict(a) => {
            let vocab = Vocabulary::load(&a.vocab).with_context(|| format!("reading {}", a.vocab.display()))?;
            let model = load_model(&a.checkpoint, &vocab)?;
            let triples = load_triples(&a.input)?;
            let hyps = correct_all(&NeuralCorrector { model: &model, vocab: &vocab }, &triples)?;
            let text: String = hyps.iter().map(|h| format!("{h}\n")).collect();
            if a.evaluate {
                if let Some(p) = &a.out {
                    emit(Some(p), text.as_bytes(), stdout)?;
                }
                let name = a.input.display().to_string();
                let run = score_hypotheses(&hyps, &triples, &name, &a.checkpoint.display().to_string())?;
                report(format, &run, || training::report_table(std::slice::from_ref(&run)), stdout)
            } else {
                emit(a.out.as_deref(), text.as_bytes(), stdout)
            }
        }
        Command::Score(a) => {
            let hyps = read_lines(&a.hyp)?;
            let triples = match (&a.triples, &a.reference, &a.orig) {
                (Some(p), _, _) => load_triples(p)?,
                (None, Some(r), Some(o)) => {
                    let refs = read_lines(r)?;
                    let origs = read_lines(o)?;
                    if refs.len() != origs.len() {
                        return Err(Error::LengthMismatch { left: origs.len(), right: refs.len() }.into());
                    }
                    origs
                        .into_iter()
                        .zip(refs)
                        .enumerate()
                        .map(|(i, (o, r))| Triple::new(i.to_string(), "", "", o, r))
                        .collect()
                }
                _ => bail!("give --triples, or both --orig and --ref"),
            };
            if hyps.len() != triples.len() {
                return Err(Error::LengthMismatch { left: hyps.len(), right: triples.len() }.into());
            }
            let run = score_hypotheses(&hyps, &triples, "score", "-")?;
            match a.metric {
                Metric::M2 => report(format, &run.m2, || run.m2.table(), stdout),
                Metric::Gleu => report(format, &serde_json::json!({ "gleu": run.gleu }), || format!("GLEU {:.2}\n", run.gleu), stdout),
                Metric::Accuracy => report(
                    format,
                    &serde_json::json!({ "sentence_accuracy": run.sentence_accuracy }),
                    || format!("Sentence accuracy {:.2}%\n", run.sentence_accuracy * 100.0),
                    stdout,
                ),
                Metric::Categories => report(format, &run.categories, || run.categories.to_string(), stdout),
                Metric::All => report(format, &run, || {
                    format!("{}\n{}", training::report_table(std::slice::from_ref(&run)), run.categories)
                }, stdout),
            }
        }
        Command::Overlap(a) => {
            let r = edit_overlap(&load_triples(&a.train)?, &load_triples(&a.eval)?);
            report(format, &r, || r.to_string(), stdout)
        }
        Command::StatsSummary(a) => {
            let records = parse_records(&fs::read_to_string(&a.records).with_context(|| format!("reading {}", a.records.display()))?)?;
            let rankings = match &a.rankings {
                Some(p) => Some(QualityRanking::parse_jsonl(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?),
                None => None,
            };
            let opts = MwOptions { exact_max: a.exact_max, continuity: a.continuity };
            let r = study_summary_with(&records, rankings.as_ref(), opts);
            report(format, &r, || r.to_string(), stdout)
        }
        Command::Serve(a) => {
            let sentences = load_triples(&a.sentences)?;
            let suggester: Arc<dyn Suggester> = match (&a.checkpoint, &a.vocab) {
                (Some(ck), Some(v)) => {
                    let vocab = Vocabulary::load(v).with_context(|| format!("reading {}", v.display()))?;
                    let model = load_model(ck, &vocab)?;
                    Arc::new(ModelSuggester { model, vocab, checkpoint_id: ck.display().to_string() })
                }
                _ => Arc::new(NoSuggestions),
            };
            let store = Store::open(&a.data_dir)?;
            let svc = Arc::new(Service::new(sentences, suggester, store));
            writeln!(stdout, "listening on http://{}", a.addr)?;
            stdout.flush()?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(service::serve(a.addr, svc))?;
            Ok(())
        }
        Command::ExportStudy(a) => {
            let records = service::read_records(&a.data_dir, a.session.as_deref())?;
            let text: String = records
                .iter()
                .map(|r| serde_json::to_string(r).map(|s| s + "\n"))
                .collect::<serde_json::Result<_>>()?;
            emit(a.out.as_deref(), text.as_bytes(), stdout)
        }
    }
}

fn log_skipped(n: usize) {
    eprintln!("warning: skipped {n} triples longer than max_len");
}

/// Proposes nothing; every item is reviewed without a suggestion.
struct NoSuggestions;

impl Suggester for NoSuggestions {
    fn checkpoint_id(&self) -> &str {
        "none"
    }

    fn propose(&self, _source: &str, original: &str) -> crate::Result<String> {
        Ok(original.to_owned())
    }
}
