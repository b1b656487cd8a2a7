//! Temperature sampling over a collection of parallel corpora.
//!
//! Given raw sizes `N_i`, the sampling probability `P_i = N_i / ΣN` is
//! flattened to `T_i = P_i^(1/t)` and every dataset is oversampled to
//! `k_i = ⌊T_i · max N / max T⌋`. The largest dataset keeps its size and the
//! others grow towards it as `t` increases.

use alloc::collections::BTreeMap;
use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::math::{floor, powf};
use crate::{Error, Result};

/// One corpus taking part in a mix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub id: String,
    #[serde(default)]
    pub group: String,
    /// Number of sentence pairs.
    pub size: u64,
}

impl DatasetSpec {
    pub fn new(id: impl Into<String>, group: impl Into<String>, size: u64) -> Self {
        DatasetSpec {
            id: id.into(),
            group: group.into(),
            size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixEntry {
    pub id: String,
    pub original_size: u64,
    /// Oversampling factor `T_i = P_i^(1/t)`.
    pub factor: f64,
    pub oversampled_size: u64,
    /// Probability of drawing from this dataset after oversampling.
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixPlan {
    pub temperature: f64,
    pub entries: Vec<MixEntry>,
}

impl MixPlan {
    pub fn total_size(&self) -> u64 {
        self.entries.iter().map(|e| e.oversampled_size).sum()
    }
}

fn validate(specs: &[DatasetSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::InvalidInput("no datasets given".into()));
    }
    let mut seen = BTreeSet::new();
    for spec in specs {
        if spec.size == 0 {
            return Err(Error::InvalidInput(format!(
                "dataset {} has size 0",
                spec.id
            )));
        }
        if !seen.insert(spec.id.as_str()) {
            return Err(Error::InvalidInput(format!(
                "duplicate dataset id {}",
                spec.id
            )));
        }
    }
    Ok(())
}

/// Raw sampling probabilities `N_i / ΣN`.
pub fn dataset_probabilities(specs: &[DatasetSpec]) -> Result<Vec<f64>> {
    validate(specs)?;
    let total: f64 = specs.iter().map(|s| s.size as f64).sum();
    Ok(specs.iter().map(|s| s.size as f64 / total).collect())
}

/// Oversampled sizes before flooring, `max N · (N_i / max N)^(1/t)`.
///
/// This is the same quantity as `T_i · max N / max T`: the normalizing sum in
/// `P_i` cancels in the ratio `T_i / max T`. Evaluating the ratio first makes
/// the largest dataset land on exactly `max N`.
pub fn oversampled_sizes(specs: &[DatasetSpec], temperature: f64) -> Result<Vec<f64>> {
    validate(specs)?;
    check_temperature(temperature)?;
    let max_size = specs.iter().map(|s| s.size).max().unwrap_or(1) as f64;
    let exponent = 1.0 / temperature;
    Ok(specs
        .iter()
        .map(|s| max_size * powf(s.size as f64 / max_size, exponent))
        .collect())
}

fn check_temperature(temperature: f64) -> Result<()> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::InvalidInput(format!(
            "temperature must be a positive finite number, got {temperature}"
        )));
    }
    Ok(())
}

/// Floors a non-negative real, treating values within a few ulps below an
/// integer as that integer.
fn floor_count(value: f64) -> u64 {
    let nearest = libm::round(value);
    let tolerance = 8.0 * f64::EPSILON * nearest.max(1.0);
    if (value - nearest).abs() <= tolerance {
        nearest as u64
    } else {
        floor(value) as u64
    }
}

/// Builds the oversampling plan for one collection of datasets.
pub fn mix_plan(specs: &[DatasetSpec], temperature: f64) -> Result<MixPlan> {
    let raw = oversampled_sizes(specs, temperature)?;
    let probabilities = dataset_probabilities(specs)?;
    let exponent = 1.0 / temperature;

    let counts: Vec<u64> = raw.iter().map(|&v| floor_count(v).max(1)).collect();
    let total = counts.iter().sum::<u64>() as f64;

    let entries = specs
        .iter()
        .zip(&probabilities)
        .zip(&counts)
        .map(|((spec, &p), &k)| MixEntry {
            id: spec.id.clone(),
            original_size: spec.size,
            factor: powf(p, exponent),
            oversampled_size: k,
            probability: k as f64 / total,
        })
        .collect();

    Ok(MixPlan {
        temperature,
        entries,
    })
}

/// Applies [`mix_plan`] separately to every group label.
pub fn grouped_mix(specs: &[DatasetSpec], temperature: f64) -> Result<BTreeMap<String, MixPlan>> {
    validate(specs)?;
    let mut groups: BTreeMap<String, Vec<DatasetSpec>> = BTreeMap::new();
    for spec in specs {
        groups
            .entry(spec.group.clone())
            .or_default()
            .push(spec.clone());
    }
    groups
        .into_iter()
        .map(|(group, members)| {
            let plan = mix_plan(&members, temperature)?;
            Ok((group, plan))
        })
        .collect()
}

/// Expands a plan into `(dataset, sample index)` references.
///
/// Dataset `i` contributes `k_i / N_i` full passes over `0..N_i` plus the first
/// `k_i mod N_i` indices of a seeded permutation. The concatenation is then
/// shuffled with the same seed.
pub fn materialize_indices(plan: &MixPlan, seed: u64) -> IndexStream<'_> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut refs: Vec<(u32, u64)> = Vec::with_capacity(plan.total_size() as usize);
    for (slot, entry) in plan.entries.iter().enumerate() {
        let n = entry.original_size;
        if n == 0 {
            continue;
        }
        let passes = entry.oversampled_size / n;
        let remainder = entry.oversampled_size % n;
        for _ in 0..passes {
            refs.extend((0..n).map(|i| (slot as u32, i)));
        }
        if remainder > 0 {
            let mut order: Vec<u64> = (0..n).collect();
            order.shuffle(&mut rng);
            refs.extend(
                order[..remainder as usize]
                    .iter()
                    .map(|&i| (slot as u32, i)),
            );
        }
    }
    refs.shuffle(&mut rng);
    IndexStream {
        plan,
        refs: refs.into_iter(),
    }
}

/// Iterator returned by [`materialize_indices`].
pub struct IndexStream<'a> {
    plan: &'a MixPlan,
    refs: alloc::vec::IntoIter<(u32, u64)>,
}

impl<'a> Iterator for IndexStream<'a> {
    type Item = (&'a str, u64);

    fn next(&mut self) -> Option<Self::Item> {
        let (slot, index) = self.refs.next()?;
        Some((self.plan.entries[slot as usize].id.as_str(), index))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        self.refs.size_hint()
    }
}

impl ExactSizeIterator for IndexStream<'_> {}
