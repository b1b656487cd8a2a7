//! Sentence-pair layout, loss masking and fixed-length sequence packing.
//!
//! A training sample is laid out as
//!
//! ```text
//! SOURCE </src> <lang_tgt> <lang_src> <dom_x> TARGET <eos>
//! ```
//!
//! The source sentence and the target-language token are inputs; everything
//! from the source-language token onwards is predicted and carries loss.
//! Samples are concatenated into fixed-length sequences, so inside a packed
//! stream every source sentence except the first follows an `<eos>`.
//! [`inference_prefix`] reproduces that context at inference time.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, ShardError};

pub const END_OF_SOURCE: &str = "</src>";
pub const END_OF_SEQUENCE: &str = "<eos>";
pub const PAD: &str = "<pad>";
const LANG_PREFIX: &str = "<lang_";
const DOM_PREFIX: &str = "<dom_";

/// Ids of the reserved control tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpecialTokens {
    end_of_source: u32,
    end_of_sequence: u32,
    pad: u32,
    languages: BTreeMap<String, u32>,
    domains: BTreeMap<String, u32>,
    vocab_size: u32,
    reverse: BTreeMap<u32, Control>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Control {
    EndOfSource,
    EndOfSequence,
    Pad,
    Language(String),
    Domain(String),
}

impl SpecialTokens {
    pub fn new(
        end_of_source: u32,
        end_of_sequence: u32,
        pad: u32,
        languages: BTreeMap<String, u32>,
        domains: BTreeMap<String, u32>,
        vocab_size: u32,
    ) -> Result<Self> {
        if languages.is_empty() || domains.is_empty() {
            return Err(Error::InvalidInput(
                "registry needs at least one language and one domain token".into(),
            ));
        }
        let mut reverse = BTreeMap::new();
        let mut claim = |id: u32, control: Control| -> Result<()> {
            if id >= vocab_size {
                return Err(Error::InvalidInput(format!(
                    "special token id {id} is outside the vocabulary of {vocab_size}"
                )));
            }
            if let Some(previous) = reverse.insert(id, control) {
                return Err(Error::InvalidInput(format!(
                    "token id {id} assigned twice (already {previous:?})"
                )));
            }
            Ok(())
        };
        claim(end_of_source, Control::EndOfSource)?;
        claim(end_of_sequence, Control::EndOfSequence)?;
        claim(pad, Control::Pad)?;
        for (code, &id) in &languages {
            claim(id, Control::Language(code.clone()))?;
        }
        for (name, &id) in &domains {
            claim(id, Control::Domain(name.clone()))?;
        }
        Ok(SpecialTokens {
            end_of_source,
            end_of_sequence,
            pad,
            languages,
            domains,
            vocab_size,
            reverse,
        })
    }

    /// Builds a registry from surface forms such as `</src>`, `<eos>`,
    /// `<pad>`, `<lang_en>` and `<dom_general>`.
    pub fn from_named<'a, I>(named: I, vocab_size: u32) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, u32)>,
    {
        let mut end_of_source = None;
        let mut end_of_sequence = None;
        let mut pad = None;
        let mut languages = BTreeMap::new();
        let mut domains = BTreeMap::new();
        for (name, id) in named {
            match name {
                END_OF_SOURCE => end_of_source = Some(id),
                END_OF_SEQUENCE => end_of_sequence = Some(id),
                PAD => pad = Some(id),
                _ => {
                    if let Some(code) = strip_control(name, LANG_PREFIX) {
                        languages.insert(code.to_string(), id);
                    } else if let Some(dom) = strip_control(name, DOM_PREFIX) {
                        domains.insert(dom.to_string(), id);
                    } else {
                        return Err(Error::InvalidInput(format!(
                            "unrecognized token name {name}"
                        )));
                    }
                }
            }
        }
        let missing = |what: &str| Error::InvalidInput(format!("registry is missing {what}"));
        SpecialTokens::new(
            end_of_source.ok_or_else(|| missing(END_OF_SOURCE))?,
            end_of_sequence.ok_or_else(|| missing(END_OF_SEQUENCE))?,
            pad.ok_or_else(|| missing(PAD))?,
            languages,
            domains,
            vocab_size,
        )
    }

    /// Surface form → id for every control token.
    pub fn named(&self) -> BTreeMap<String, u32> {
        let mut out = BTreeMap::new();
        out.insert(END_OF_SOURCE.to_string(), self.end_of_source);
        out.insert(END_OF_SEQUENCE.to_string(), self.end_of_sequence);
        out.insert(PAD.to_string(), self.pad);
        for (code, &id) in &self.languages {
            out.insert(format!("{LANG_PREFIX}{code}>"), id);
        }
        for (name, &id) in &self.domains {
            out.insert(format!("{DOM_PREFIX}{name}>"), id);
        }
        out
    }

    pub fn end_of_source(&self) -> u32 {
        self.end_of_source
    }

    pub fn end_of_sequence(&self) -> u32 {
        self.end_of_sequence
    }

    pub fn pad(&self) -> u32 {
        self.pad
    }

    pub fn vocab_size(&self) -> u32 {
        self.vocab_size
    }

    pub fn languages(&self) -> impl Iterator<Item = (&str, u32)> {
        self.languages.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn domains(&self) -> impl Iterator<Item = (&str, u32)> {
        self.domains.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn language(&self, code: &str) -> Result<u32> {
        self.languages
            .get(code)
            .copied()
            .ok_or_else(|| Error::UnknownControlToken(format!("{LANG_PREFIX}{code}>")))
    }

    pub fn domain(&self, name: &str) -> Result<u32> {
        self.domains
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownControlToken(format!("{DOM_PREFIX}{name}>")))
    }

    pub fn is_special(&self, id: u32) -> bool {
        self.reverse.contains_key(&id)
    }
}

fn strip_control<'a>(name: &'a str, prefix: &str) -> Option<&'a str> {
    name.strip_prefix(prefix)?
        .strip_suffix('>')
        .filter(|s| !s.is_empty())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplePair {
    pub source_tokens: Vec<u32>,
    pub target_tokens: Vec<u32>,
    pub source_lang: String,
    pub target_lang: String,
    pub domain: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FormattedSample {
    pub tokens: Vec<u32>,
    pub loss_mask: Vec<bool>,
}

impl FormattedSample {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn loss_tokens(&self) -> usize {
        self.loss_mask.iter().filter(|&&m| m).count()
    }
}

fn check_sentence(tokens: &[u32], side: &str, registry: &SpecialTokens) -> Result<()> {
    if tokens.is_empty() {
        return Err(Error::InvalidInput(format!("{side} sentence is empty")));
    }
    for &t in tokens {
        if t >= registry.vocab_size {
            return Err(Error::InvalidInput(format!(
                "{side} token {t} is outside the vocabulary of {}",
                registry.vocab_size
            )));
        }
        if registry.is_special(t) {
            return Err(Error::InvalidInput(format!(
                "{side} sentence contains reserved control token {t}"
            )));
        }
    }
    Ok(())
}

/// Lays out one sentence pair and its loss mask.
pub fn format_sample(pair: &SamplePair, registry: &SpecialTokens) -> Result<FormattedSample> {
    let target_lang = registry.language(&pair.target_lang)?;
    let source_lang = registry.language(&pair.source_lang)?;
    let domain = registry.domain(&pair.domain)?;
    check_sentence(&pair.source_tokens, "source", registry)?;
    check_sentence(&pair.target_tokens, "target", registry)?;

    let len = pair.source_tokens.len() + pair.target_tokens.len() + 5;
    let mut tokens = Vec::with_capacity(len);
    let mut loss_mask = Vec::with_capacity(len);

    tokens.extend_from_slice(&pair.source_tokens);
    tokens.extend([registry.end_of_source, target_lang]);
    loss_mask.resize(tokens.len(), false);

    tokens.extend([source_lang, domain]);
    tokens.extend_from_slice(&pair.target_tokens);
    tokens.push(registry.end_of_sequence);
    loss_mask.resize(tokens.len(), true);

    Ok(FormattedSample { tokens, loss_mask })
}

/// Recovers the sentence pair from a formatted sample using token roles only.
pub fn decode_sample(sample: &[u32], registry: &SpecialTokens) -> Result<SamplePair> {
    let malformed = |why: &str| Error::InvalidInput(format!("malformed sample: {why}"));
    let split = sample
        .iter()
        .position(|&t| t == registry.end_of_source)
        .ok_or_else(|| malformed("no </src>"))?;
    let (source, rest) = sample.split_at(split);
    if rest.len() < 5 {
        return Err(malformed("missing control slots"));
    }
    let language_of = |id: u32| match registry.reverse.get(&id) {
        Some(Control::Language(code)) => Ok(code.clone()),
        _ => Err(malformed("expected a language token")),
    };
    let target_lang = language_of(rest[1])?;
    let source_lang = language_of(rest[2])?;
    let domain = match registry.reverse.get(&rest[3]) {
        Some(Control::Domain(name)) => name.clone(),
        _ => return Err(malformed("expected a domain token")),
    };
    let body = &rest[4..];
    let end = body
        .iter()
        .position(|&t| t == registry.end_of_sequence)
        .ok_or_else(|| malformed("no <eos>"))?;
    if end + 1 != body.len() {
        return Err(malformed("tokens after <eos>"));
    }
    let pair = SamplePair {
        source_tokens: source.to_vec(),
        target_tokens: body[..end].to_vec(),
        source_lang,
        target_lang,
        domain,
    };
    check_sentence(&pair.source_tokens, "source", registry)?;
    check_sentence(&pair.target_tokens, "target", registry)?;
    Ok(pair)
}

/// Builds the model input for translating `source` into `target_lang`.
///
/// With `eos_prefix` the input starts with `<eos>`, matching the context every
/// non-initial sample sees in a packed training stream. The source language and
/// domain are optional forced outputs; when given they follow in layout order.
pub fn inference_prefix(
    source: &[u32],
    target_lang: &str,
    source_lang: Option<&str>,
    domain: Option<&str>,
    registry: &SpecialTokens,
    eos_prefix: bool,
) -> Result<Vec<u32>> {
    let target_lang = registry.language(target_lang)?;
    let source_lang = source_lang.map(|c| registry.language(c)).transpose()?;
    let domain = domain.map(|d| registry.domain(d)).transpose()?;
    check_sentence(source, "source", registry)?;

    let mut out = Vec::with_capacity(source.len() + 5);
    if eos_prefix {
        out.push(registry.end_of_sequence);
    }
    out.extend_from_slice(source);
    out.extend([registry.end_of_source, target_lang]);
    out.extend(source_lang);
    out.extend(domain);
    Ok(out)
}

/// Prepends a loss-free `<eos>` so that the first sample of a stream sees the
/// same left context as every later one.
pub fn with_leading_eos(sample: FormattedSample, registry: &SpecialTokens) -> FormattedSample {
    let mut tokens = Vec::with_capacity(sample.tokens.len() + 1);
    let mut loss_mask = Vec::with_capacity(sample.tokens.len() + 1);
    tokens.push(registry.end_of_sequence);
    loss_mask.push(false);
    tokens.extend(sample.tokens);
    loss_mask.extend(sample.loss_mask);
    FormattedSample { tokens, loss_mask }
}

/// What happens to a sample that crosses the end of a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryPolicy {
    /// The overflow continues at the start of the next sequence.
    #[default]
    Split,
    /// The rest of the sequence is padded and the sample starts a fresh one.
    /// Samples longer than a whole sequence are skipped.
    DropTail,
}

impl BoundaryPolicy {
    pub fn tag(self) -> u8 {
        match self {
            BoundaryPolicy::Split => 0,
            BoundaryPolicy::DropTail => 1,
        }
    }

    pub fn from_tag(tag: u8) -> core::result::Result<Self, ShardError> {
        match tag {
            0 => Ok(BoundaryPolicy::Split),
            1 => Ok(BoundaryPolicy::DropTail),
            other => Err(ShardError::UnknownPolicy(other)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedSequence {
    pub tokens: Vec<u32>,
    pub loss_mask: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedShard {
    pub seq_len: u32,
    pub vocab_size: u32,
    pub policy: BoundaryPolicy,
    pub sequences: Vec<PackedSequence>,
}

impl PackedShard {
    pub fn empty(seq_len: u32, vocab_size: u32, policy: BoundaryPolicy) -> Self {
        PackedShard {
            seq_len,
            vocab_size,
            policy,
            sequences: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackOutcome {
    pub shard: PackedShard,
    pub packed: usize,
    /// Samples rejected because they cannot fit a single sequence.
    pub skipped: usize,
}

struct Packer {
    seq_len: usize,
    pad: u32,
    tokens: Vec<u32>,
    mask: Vec<bool>,
    done: Vec<PackedSequence>,
}

impl Packer {
    fn push(&mut self, token: u32, loss: bool) {
        self.tokens.push(token);
        self.mask.push(loss);
        if self.tokens.len() == self.seq_len {
            self.flush();
        }
    }

    fn remaining(&self) -> usize {
        self.seq_len - self.tokens.len()
    }

    fn pad_out(&mut self) {
        if self.tokens.is_empty() {
            return;
        }
        while !self.tokens.is_empty() {
            self.push(self.pad, false);
        }
    }

    fn flush(&mut self) {
        let tokens = core::mem::replace(&mut self.tokens, Vec::with_capacity(self.seq_len));
        let loss_mask = core::mem::replace(&mut self.mask, Vec::with_capacity(self.seq_len));
        self.done.push(PackedSequence { tokens, loss_mask });
    }
}

/// Concatenates formatted samples into `seq_len`-token sequences.
pub fn pack<I>(
    samples: I,
    seq_len: u32,
    policy: BoundaryPolicy,
    registry: &SpecialTokens,
) -> Result<PackOutcome>
where
    I: IntoIterator<Item = FormattedSample>,
{
    if seq_len < 2 {
        return Err(Error::InvalidInput(format!(
            "seq_len must be at least 2, got {seq_len}"
        )));
    }
    let mut packer = Packer {
        seq_len: seq_len as usize,
        pad: registry.pad,
        tokens: Vec::with_capacity(seq_len as usize),
        mask: Vec::with_capacity(seq_len as usize),
        done: Vec::new(),
    };
    let mut packed = 0;
    let mut skipped = 0;
    for sample in samples {
        if sample.tokens.len() != sample.loss_mask.len() {
            return Err(Error::InvalidInput(
                "sample tokens and loss mask differ in length".into(),
            ));
        }
        if let Some(&bad) = sample.tokens.iter().find(|&&t| t >= registry.vocab_size) {
            return Err(Error::InvalidInput(format!(
                "token {bad} is outside the vocabulary of {}",
                registry.vocab_size
            )));
        }
        if sample.is_empty() {
            continue;
        }
        if policy == BoundaryPolicy::DropTail {
            if sample.len() > packer.seq_len {
                skipped += 1;
                continue;
            }
            if sample.len() > packer.remaining() {
                packer.pad_out();
            }
        }
        for (&t, &m) in sample.tokens.iter().zip(&sample.loss_mask) {
            packer.push(t, m);
        }
        packed += 1;
    }
    packer.pad_out();

    Ok(PackOutcome {
        shard: PackedShard {
            seq_len,
            vocab_size: registry.vocab_size,
            policy,
            sequences: packer.done,
        },
        packed,
        skipped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardStats {
    pub total_tokens: u64,
    pub loss_tokens: u64,
    pub pad_tokens: u64,
    pub samples_started: u64,
}

impl ShardStats {
    /// Share of real (non-pad) tokens that carry loss.
    pub fn loss_fraction(&self) -> f64 {
        let real = self.total_tokens - self.pad_tokens;
        if real == 0 {
            0.0
        } else {
            self.loss_tokens as f64 / real as f64
        }
    }
}

/// Token accounting for a shard. A sample starts at every non-pad token whose
/// preceding non-pad token is `<eos>` or absent. A loss-free `<eos>` is a
/// stream prefix, not a sample.
pub fn shard_stats(shard: &PackedShard, registry: &SpecialTokens) -> ShardStats {
    let mut stats = ShardStats {
        total_tokens: 0,
        loss_tokens: 0,
        pad_tokens: 0,
        samples_started: 0,
    };
    let mut at_boundary = true;
    for seq in &shard.sequences {
        for (&t, &m) in seq.tokens.iter().zip(&seq.loss_mask) {
            stats.total_tokens += 1;
            stats.loss_tokens += m as u64;
            if t == registry.pad && !m {
                stats.pad_tokens += 1;
                continue;
            }
            if t == registry.end_of_sequence && !m {
                continue;
            }
            if at_boundary {
                stats.samples_started += 1;
            }
            at_boundary = t == registry.end_of_sequence;
        }
    }
    stats
}

/// Splits a shard back into sentence pairs. Padding is dropped and a leading
/// `<eos>` before the first sample is ignored.
pub fn unpack(shard: &PackedShard, registry: &SpecialTokens) -> Result<Vec<SamplePair>> {
    let mut pairs = Vec::new();
    let mut current = Vec::new();
    for seq in &shard.sequences {
        for (&t, &m) in seq.tokens.iter().zip(&seq.loss_mask) {
            if t == registry.pad && !m {
                continue;
            }
            if current.is_empty() && pairs.is_empty() && t == registry.end_of_sequence && !m {
                continue;
            }
            current.push(t);
            if t == registry.end_of_sequence {
                pairs.push(decode_sample(&current, registry)?);
                current.clear();
            }
        }
    }
    if !current.is_empty() {
        return Err(Error::InvalidInput("shard ends inside a sample".into()));
    }
    Ok(pairs)
}

pub const SHARD_MAGIC: [u8; 4] = *b"PKSH";
pub const SHARD_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 8 + 1;

fn mask_bytes(seq_len: usize) -> usize {
    seq_len.div_ceil(8)
}

/// Serializes a shard.
///
/// Layout, all little-endian: `PKSH`, version `u32`, `seq_len` `u32`,
/// `vocab_size` `u32`, sequence count `u64`, policy `u8`; then per sequence
/// `seq_len` token ids as `u32` followed by the loss mask packed LSB-first
/// into `ceil(seq_len / 8)` bytes.
pub fn encode_shard(shard: &PackedShard) -> Result<Vec<u8>> {
    let seq_len = shard.seq_len as usize;
    let per_seq = seq_len * 4 + mask_bytes(seq_len);
    let mut out = Vec::with_capacity(HEADER_LEN + per_seq * shard.sequences.len());
    out.extend_from_slice(&SHARD_MAGIC);
    out.extend_from_slice(&SHARD_VERSION.to_le_bytes());
    out.extend_from_slice(&shard.seq_len.to_le_bytes());
    out.extend_from_slice(&shard.vocab_size.to_le_bytes());
    out.extend_from_slice(&(shard.sequences.len() as u64).to_le_bytes());
    out.push(shard.policy.tag());
    for (i, seq) in shard.sequences.iter().enumerate() {
        if seq.tokens.len() != seq_len || seq.loss_mask.len() != seq_len {
            return Err(Error::InvalidInput(format!(
                "sequence {i} has {} tokens and {} mask bits, expected {seq_len}",
                seq.tokens.len(),
                seq.loss_mask.len()
            )));
        }
        for &t in &seq.tokens {
            if t >= shard.vocab_size {
                return Err(ShardError::TokenOutOfRange {
                    token: t,
                    vocab_size: shard.vocab_size,
                }
                .into());
            }
            out.extend_from_slice(&t.to_le_bytes());
        }
        let mut bits = vec![0u8; mask_bytes(seq_len)];
        for (j, _) in seq.loss_mask.iter().enumerate().filter(|(_, &m)| m) {
            bits[j / 8] |= 1 << (j % 8);
        }
        out.extend_from_slice(&bits);
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> core::result::Result<&'a [u8], ShardError> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(ShardError::Truncated {
                needed: end as u64,
                found: self.bytes.len() as u64,
            });
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> core::result::Result<u32, ShardError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> core::result::Result<u64, ShardError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Parses a shard produced by [`encode_shard`]. Any input accepted here
/// re-encodes to the identical bytes.
pub fn decode_shard(bytes: &[u8]) -> core::result::Result<PackedShard, ShardError> {
    let mut r = Reader { bytes, pos: 0 };
    if bytes.len() < 4 || r.take(4)? != SHARD_MAGIC {
        return Err(ShardError::MagicMismatch);
    }
    let version = r.u32()?;
    if version != SHARD_VERSION {
        return Err(ShardError::VersionMismatch { found: version });
    }
    let seq_len = r.u32()?;
    let vocab_size = r.u32()?;
    let count = r.u64()?;
    let policy = BoundaryPolicy::from_tag(r.take(1)?[0])?;

    let seq_bytes = seq_len as u64 * 4 + mask_bytes(seq_len as usize) as u64;
    let needed = (HEADER_LEN as u64).saturating_add(count.saturating_mul(seq_bytes));
    if needed > bytes.len() as u64 {
        return Err(ShardError::Truncated {
            needed,
            found: bytes.len() as u64,
        });
    }
    if needed < bytes.len() as u64 {
        return Err(ShardError::TrailingBytes(bytes.len() as u64 - needed));
    }

    let n = seq_len as usize;
    let mut sequences = Vec::with_capacity(count as usize);
    for index in 0..count {
        let tokens: Vec<u32> = r
            .take(n * 4)?
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if let Some(&token) = tokens.iter().find(|&&t| t >= vocab_size) {
            return Err(ShardError::TokenOutOfRange { token, vocab_size });
        }
        let bits = r.take(mask_bytes(n))?;
        if n % 8 != 0 && bits[bits.len() - 1] >> (n % 8) != 0 {
            return Err(ShardError::MaskPadding(index));
        }
        let loss_mask = (0..n).map(|j| bits[j / 8] >> (j % 8) & 1 == 1).collect();
        sequences.push(PackedSequence { tokens, loss_mask });
    }
    Ok(PackedShard {
        seq_len,
        vocab_size,
        policy,
        sequences,
    })
}
