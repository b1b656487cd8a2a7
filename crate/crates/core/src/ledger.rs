//! Parameter counts and FLOP estimates for GPT-NeoX style decoders.
//!
//! Every block has attention (`4d² + 4d`), a 4× feed-forward (`8d² + 5d`) and
//! two layer norms (`4d`). On top of the blocks sit a final layer norm (`2d`)
//! and an untied output projection (`V'·d`), where `V'` is the vocabulary
//! padded to a multiple of 512. The input embedding (`V'·d`) is reported
//! separately.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const VOCAB_PADDING: u64 = 512;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelArch {
    pub name: String,
    pub layers: u64,
    pub hidden: u64,
    pub heads: u64,
    #[serde(default = "default_vocab")]
    pub vocab_size: u64,
    #[serde(default = "default_seq_len")]
    pub seq_len: u64,
    #[serde(default)]
    pub tied_embeddings: bool,
}

fn default_vocab() -> u64 {
    100_000
}

fn default_seq_len() -> u64 {
    512
}

impl ModelArch {
    pub fn new(name: impl Into<String>, layers: u64, hidden: u64, heads: u64) -> Self {
        ModelArch {
            name: name.into(),
            layers,
            hidden,
            heads,
            vocab_size: default_vocab(),
            seq_len: default_seq_len(),
            tied_embeddings: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |why: String| {
            Err(Error::InvalidInput(format!(
                "architecture {}: {why}",
                self.name
            )))
        };
        if self.layers == 0 || self.hidden == 0 || self.heads == 0 {
            return bad("layers, hidden and heads must be positive".into());
        }
        if self.hidden % self.heads != 0 {
            return bad(format!(
                "hidden {} is not divisible by {} heads",
                self.hidden, self.heads
            ));
        }
        if self.vocab_size == 0 || self.seq_len == 0 {
            return bad("vocab_size and seq_len must be positive".into());
        }
        Ok(())
    }

    pub fn padded_vocab(&self) -> u64 {
        pad_vocab(self.vocab_size, VOCAB_PADDING)
    }
}

/// Smallest multiple of `multiple` that is at least `vocab`.
pub fn pad_vocab(vocab: u64, multiple: u64) -> u64 {
    let multiple = multiple.max(1);
    vocab.max(1).div_ceil(multiple) * multiple
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCount {
    pub embedding: u64,
    pub non_embedding: u64,
    pub total: u64,
    pub padded_vocab: u64,
}

pub fn attention_params(hidden: u64) -> u64 {
    4 * hidden * hidden + 4 * hidden
}

pub fn feed_forward_params(hidden: u64) -> u64 {
    8 * hidden * hidden + 5 * hidden
}

pub fn layer_params(hidden: u64) -> u64 {
    attention_params(hidden) + feed_forward_params(hidden) + 4 * hidden
}

pub fn param_count(arch: &ModelArch) -> ParamCount {
    let d = arch.hidden;
    let v = arch.padded_vocab();
    let embedding = v * d;
    let head = if arch.tied_embeddings { 0 } else { v * d };
    let non_embedding = arch.layers * layer_params(d) + 2 * d + head;
    ParamCount {
        embedding,
        non_embedding,
        total: embedding + non_embedding,
        padded_vocab: v,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlopMode {
    /// Matmul FLOPs plus the attention score and mixing terms.
    Exact,
    /// The `6·N` per trained token rule of thumb.
    #[default]
    SixND,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlopEstimate {
    pub mode: FlopMode,
    pub forward_per_token: f64,
    pub train_per_token: f64,
}

impl FlopEstimate {
    pub fn train_total(&self, tokens: f64) -> f64 {
        self.train_per_token * tokens
    }

    pub fn train_per_sample(&self, seq_len: u64) -> f64 {
        self.train_per_token * seq_len as f64
    }
}

/// Backward pass costs twice the forward pass.
pub const TRAIN_TO_FORWARD: f64 = 3.0;

/// Forward FLOPs per token: two per weight in the block and head matmuls plus
/// `4·L·d·context` for attention scores and value mixing.
pub fn exact_forward_flops(layers: u64, hidden: u64, padded_vocab: u64, avg_context: f64) -> f64 {
    let (l, d, v) = (layers as f64, hidden as f64, padded_vocab as f64);
    2.0 * (l * 12.0 * d * d + v * d) + 4.0 * l * d * avg_context
}

/// FLOP estimate per token. `avg_context` defaults to half the sequence length.
pub fn flops(arch: &ModelArch, mode: FlopMode, avg_context: Option<f64>) -> FlopEstimate {
    let forward = match mode {
        FlopMode::Exact => {
            let ctx = avg_context.unwrap_or(arch.seq_len as f64 / 2.0);
            exact_forward_flops(arch.layers, arch.hidden, arch.padded_vocab(), ctx)
        }
        FlopMode::SixND => 2.0 * param_count(arch).non_embedding as f64,
    };
    FlopEstimate {
        mode,
        forward_per_token: forward,
        train_per_token: TRAIN_TO_FORWARD * forward,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub name: String,
    pub layers: u64,
    pub hidden: u64,
    pub non_embedding: u64,
    pub embedding: u64,
    pub train_flops_per_sample: f64,
    pub relative_flops: f64,
}

/// Compares variants against a base model. The base is the first row.
pub fn scaling_table(
    base: &ModelArch,
    variants: &[ModelArch],
    mode: FlopMode,
) -> Result<Vec<ScalingRow>> {
    base.validate()?;
    for v in variants {
        v.validate()?;
        if v.vocab_size != base.vocab_size || v.seq_len != base.seq_len {
            return Err(Error::InvalidComparison(format!(
                "{} (vocab {}, seq_len {}) does not match base {} (vocab {}, seq_len {})",
                v.name, v.vocab_size, v.seq_len, base.name, base.vocab_size, base.seq_len
            )));
        }
    }
    let base_flops = flops(base, mode, None).train_per_token;
    let row = |arch: &ModelArch| {
        let params = param_count(arch);
        let f = flops(arch, mode, None);
        ScalingRow {
            name: arch.name.clone(),
            layers: arch.layers,
            hidden: arch.hidden,
            non_embedding: params.non_embedding,
            embedding: params.embedding,
            train_flops_per_sample: f.train_per_sample(arch.seq_len),
            relative_flops: f.train_per_token / base_flops,
        }
    };
    Ok(core::iter::once(base).chain(variants).map(row).collect())
}

/// Counts as printed in the published architecture tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublishedCounts {
    pub non_embedding: u64,
    pub embedding: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub key: &'static str,
    pub arch: ModelArch,
    pub published: PublishedCounts,
    /// Peak learning rate used for the reference runs, where known.
    pub max_lr: Option<f64>,
    pub family: PresetFamily,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PresetFamily {
    /// The six trained translation models.
    Trained,
    /// 70M variants scaled in width or depth.
    Scaled,
}

impl Preset {
    /// A note when the computed count differs from the published one.
    pub fn discrepancy(&self) -> Option<String> {
        let counts = param_count(&self.arch);
        let mut notes = Vec::new();
        if counts.non_embedding != self.published.non_embedding {
            notes.push(format!(
                "non-embedding: computed {}, published {}",
                counts.non_embedding, self.published.non_embedding
            ));
        }
        if counts.embedding != self.published.embedding {
            notes.push(format!(
                "embedding: computed {}, published {}",
                counts.embedding, self.published.embedding
            ));
        }
        (!notes.is_empty()).then(|| format!("{}: {}", self.arch.name, notes.join("; ")))
    }
}

fn preset(
    key: &'static str,
    name: &str,
    (layers, hidden, heads): (u64, u64, u64),
    (non_embedding, embedding): (u64, u64),
    max_lr: Option<f64>,
    family: PresetFamily,
) -> Preset {
    Preset {
        key,
        arch: ModelArch::new(name, layers, hidden, heads),
        published: PublishedCounts {
            non_embedding,
            embedding,
        },
        max_lr,
        family,
    }
}

/// Built-in architectures. Scaled variants keep the base model's 8 heads.
pub fn presets() -> Vec<Preset> {
    use PresetFamily::*;
    alloc::vec![
        preset(
            "pythia70m",
            "70M",
            (6, 512, 8),
            (70_295_552, 51_380_224),
            Some(1e-3),
            Trained
        ),
        preset(
            "pythia160m",
            "160M",
            (12, 768, 16),
            (162_126_336, 77_070_336),
            Some(1e-3),
            Trained
        ),
        preset(
            "pythia410m",
            "410M",
            (24, 1024, 16),
            (405_071_872, 102_760_448),
            Some(1e-3),
            Trained
        ),
        preset(
            "pythia610m",
            "610M",
            (16, 1536, 16),
            (607_448_064, 154_140_672),
            Some(1e-3),
            Trained
        ),
        preset(
            "pythia1b",
            "1B",
            (16, 2048, 8),
            (1_011_257_344, 205_520_896),
            Some(1e-4),
            Trained
        ),
        preset(
            "pythia6.9b",
            "6.9B",
            (32, 4096, 32),
            (6_855_204_864, 411_041_792),
            Some(1e-4),
            Trained
        ),
        preset(
            "70m+d768",
            "70M+d768",
            (6, 768, 8),
            (119_599_104, 77_070_336),
            None,
            Scaled
        ),
        preset(
            "70m+12l",
            "70M+12l",
            (12, 512, 8),
            (178_339_840, 51_380_224),
            None,
            Scaled
        ),
        preset(
            "70m+d1024",
            "70M+d1024",
            (6, 1024, 8),
            (178_339_840, 102_760_448),
            None,
            Scaled
        ),
        preset(
            "70m+24l",
            "70M+24l",
            (24, 512, 8),
            (127_038_464, 51_380_224),
            None,
            Scaled
        ),
    ]
}

pub fn find_preset(key: &str) -> Option<Preset> {
    let key = key.to_ascii_lowercase();
    presets()
        .into_iter()
        .find(|p| p.key == key || p.arch.name.to_ascii_lowercase() == key)
}
