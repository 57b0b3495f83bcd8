//! Named parameter tensors, initialization and checkpoint files.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Matrix;
use super::{ModelConfig, Positional, Variant};
use crate::error::{Error, Result};

/// All trainable tensors keyed by name. Gradients share this type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct Parameters(pub BTreeMap<String, Matrix>);

impl Parameters {
    /// Expected names and shapes for a configuration.
    pub fn shapes(cfg: &ModelConfig) -> BTreeMap<String, (usize, usize)> {
        let d = cfg.d_model;
        let mut s = BTreeMap::new();
        let mut put = |name: String, r: usize, c: usize| {
            s.insert(name, (r, c));
        };
        put("embed".into(), cfg.vocab_size, d);
        if cfg.positional == Positional::Learned {
            put("pos".into(), cfg.max_len, d);
        }
        if cfg.variant == Variant::Dual {
            put("offset".into(), 1, d);
        }
        let ln = |put: &mut dyn FnMut(String, usize, usize), p: &str| {
            put(format!("{p}.g"), 1, d);
            put(format!("{p}.b"), 1, d);
        };
        let attn = |put: &mut dyn FnMut(String, usize, usize), p: &str| {
            for w in ["wq", "wk", "wv", "wo"] {
                put(format!("{p}.{w}"), d, d);
            }
        };
        let ff = |put: &mut dyn FnMut(String, usize, usize), p: &str| {
            put(format!("{p}.w1"), d, cfg.d_ff);
            put(format!("{p}.b1"), 1, cfg.d_ff);
            put(format!("{p}.w2"), cfg.d_ff, d);
            put(format!("{p}.b2"), 1, d);
        };
        for l in 0..cfg.n_layers {
            ln(&mut put, &format!("enc.{l}.ln1"));
            attn(&mut put, &format!("enc.{l}.attn"));
            ln(&mut put, &format!("enc.{l}.ln2"));
            ff(&mut put, &format!("enc.{l}.ff"));

            ln(&mut put, &format!("dec.{l}.ln1"));
            attn(&mut put, &format!("dec.{l}.self"));
            ln(&mut put, &format!("dec.{l}.ln2"));
            attn(&mut put, &format!("dec.{l}.cross"));
            ln(&mut put, &format!("dec.{l}.ln3"));
            ff(&mut put, &format!("dec.{l}.ff"));
        }
        ln(&mut put, "enc.ln");
        ln(&mut put, "dec.ln");
        if cfg.copy_enabled {
            for w in ["wq", "wk", "wv"] {
                put(format!("copy.{w}"), d, d);
            }
            put("copy.gate".into(), d, 1);
            put("copy.align.w".into(), d, cfg.vocab_size);
            put("copy.align.b".into(), 1, cfg.vocab_size);
        }
        s
    }

    /// Uniform(±1/sqrt(fan_in)) weights, unit norm gains, zero biases.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = BTreeMap::new();
        for (name, (r, c)) in Self::shapes(cfg) {
            let m = if name.ends_with(".g") {
                Matrix::filled(r, c, 1.0)
            } else if name.ends_with(".b") || name.ends_with(".b1") || name.ends_with(".b2") {
                Matrix::zeros(r, c)
            } else {
                let fan_in = match name.as_str() {
                    "embed" | "pos" | "offset" => cfg.d_model,
                    _ => r,
                };
                let bound = 1.0 / (fan_in as f64).sqrt();
                let data = (0..r * c).map(|_| rng.random_range(-bound..=bound)).collect();
                Matrix::from_vec(r, c, data)
            };
            out.insert(name, m);
        }
        Parameters(out)
    }

    pub fn zeros_like(&self) -> Self {
        Parameters(
            self.0
                .iter()
                .map(|(k, v)| (k.clone(), Matrix::zeros(v.rows, v.cols)))
                .collect(),
        )
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.0.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        self.0.get_mut(name)
    }

    /// Adds matching tensors from `other`; names absent here are ignored.
    pub fn add_assign(&mut self, other: &BTreeMap<String, Matrix>) {
        for (k, v) in other {
            if let Some(m) = self.0.get_mut(k) {
                m.add_assign(v);
            }
        }
    }

    pub fn num_values(&self) -> usize {
        self.0.values().map(|m| m.data.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.0.values().all(Matrix::is_finite)
    }

    pub fn norm(&self) -> f64 {
        self.0
            .values()
            .flat_map(|m| m.data.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    /// Checks names and shapes against `cfg` and rejects non-finite values.
    pub fn validate(&self, cfg: &ModelConfig) -> Result<()> {
        let want = Self::shapes(cfg);
        for (name, shape) in &want {
            match self.0.get(name) {
                None => return Err(Error::Checkpoint(format!("missing tensor `{name}`"))),
                Some(m) if m.shape() != *shape || m.data.len() != shape.0 * shape.1 => {
                    return Err(Error::Checkpoint(format!(
                        "tensor `{name}` has shape {:?}, expected {:?}",
                        m.shape(),
                        shape
                    )))
                }
                Some(m) if !m.is_finite() => {
                    return Err(Error::Checkpoint(format!("tensor `{name}` has non-finite values")))
                }
                _ => {}
            }
        }
        if let Some(extra) = self.0.keys().find(|k| !want.contains_key(*k)) {
            return Err(Error::Checkpoint(format!("unexpected tensor `{extra}`")));
        }
        Ok(())
    }
}

pub const CHECKPOINT_FORMAT: &str = "tec-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Self-describing checkpoint: config, vocabulary hash and named tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub vocab_hash: String,
    pub params: Parameters,
}

impl Checkpoint {
    pub fn new(config: ModelConfig, vocab_hash: impl Into<String>, params: Parameters) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config,
            vocab_hash: vocab_hash.into(),
            params,
        }
    }

    /// Writes to a sibling temp file, then renames over `path`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), &serde_json::to_vec(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = fs::read(path.as_ref())?;
        let ck: Checkpoint = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.as_ref().display())))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format `{}`", ck.format)));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", ck.version)));
        }
        ck.config.validate()?;
        ck.params.validate(&ck.config)?;
        Ok(ck)
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
