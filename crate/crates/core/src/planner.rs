//! Budget questions answered by inverting a fitted Chinchilla law.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::lawfit::{ChinchillaFit, DataUnit};
use crate::math::{exp, ln, powf};
use crate::optim::golden_section;
use crate::{Error, Result};

/// Training FLOPs per unit of data (a token or a sample) for a model of `n`
/// non-embedding parameters.
pub trait FlopCost {
    fn unit(&self) -> DataUnit;
    fn flops_per_unit(&self, n: f64) -> f64;
}

/// `6·N` FLOPs per token, times the sequence length when counting samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SixNd {
    pub unit: DataUnit,
    pub tokens_per_sample: f64,
}

impl SixNd {
    pub fn per_token() -> Self {
        SixNd {
            unit: DataUnit::Tokens,
            tokens_per_sample: 1.0,
        }
    }

    pub fn per_sample(seq_len: u64) -> Self {
        SixNd {
            unit: DataUnit::Samples,
            tokens_per_sample: seq_len as f64,
        }
    }
}

impl FlopCost for SixNd {
    fn unit(&self) -> DataUnit {
        self.unit
    }

    fn flops_per_unit(&self, n: f64) -> f64 {
        let per_token = 6.0 * n;
        match self.unit {
            DataUnit::Tokens => per_token,
            DataUnit::Samples => per_token * self.tokens_per_sample,
        }
    }
}

/// Any closure `N ↦ FLOPs per unit`, tagged with its unit.
#[derive(Debug, Clone, Copy)]
pub struct CostFn<F> {
    pub unit: DataUnit,
    pub per_unit: F,
}

impl<F: Fn(f64) -> f64> FlopCost for CostFn<F> {
    fn unit(&self) -> DataUnit {
        self.unit
    }

    fn flops_per_unit(&self, n: f64) -> f64 {
        (self.per_unit)(n)
    }
}

fn check_units(fit: &ChinchillaFit, cost: &impl FlopCost) -> Result<()> {
    if fit.data_unit != cost.unit() {
        return Err(Error::UnitMismatch {
            fit: fit.data_unit.as_str(),
            cost: cost.unit().as_str(),
        });
    }
    Ok(())
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

/// Data needed by a model of size `n` to reach `target_loss`.
///
/// Fails with [`Error::InfeasibleTarget`] carrying `E + a/N^α` when the target
/// is at or below that floor.
pub fn data_needed(fit: &ChinchillaFit, n: f64, target_loss: f64) -> Result<f64> {
    positive("N", n)?;
    if !(fit.b > 0.0 && fit.beta > 0.0) {
        return Err(Error::InvalidInput(
            "the fit has no data term to invert".into(),
        ));
    }
    let floor = fit.e + fit.model_term(n);
    let gap = target_loss - floor;
    if !(gap > 0.0) {
        return Err(Error::InfeasibleTarget {
            target: target_loss,
            floor,
        });
    }
    Ok(powf(fit.b / gap, 1.0 / fit.beta))
}

/// Model size needed to reach `target_loss` with `d` units of data.
pub fn params_needed(fit: &ChinchillaFit, d: f64, target_loss: f64) -> Result<f64> {
    positive("D", d)?;
    if !(fit.a > 0.0 && fit.alpha > 0.0) {
        return Err(Error::InvalidInput(
            "the fit has no model-size term to invert".into(),
        ));
    }
    let floor = fit.e + fit.data_term(d);
    let gap = target_loss - floor;
    if !(gap > 0.0) {
        return Err(Error::InfeasibleTarget {
            target: target_loss,
            floor,
        });
    }
    Ok(powf(fit.a / gap, 1.0 / fit.alpha))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelMatch {
    /// Predicted loss of the large configuration.
    pub target_loss: f64,
    pub small_n: f64,
    pub small_d: f64,
    pub big_n: f64,
    pub big_d: f64,
    /// `small_d / big_d`
    pub multiplier: f64,
    pub small_flops: f64,
    pub big_flops: f64,
    pub data_unit: DataUnit,
}

/// How much data a small model needs to match a large model trained on
/// `big_d`, and what both runs cost.
pub fn match_model(
    fit: &ChinchillaFit,
    small_n: f64,
    big_n: f64,
    big_d: f64,
    cost: &impl FlopCost,
) -> Result<ModelMatch> {
    check_units(fit, cost)?;
    positive("N", small_n)?;
    positive("N", big_n)?;
    positive("D", big_d)?;
    let target_loss = fit.predict(big_n, big_d);
    let small_d = if small_n == big_n {
        big_d
    } else {
        data_needed(fit, small_n, target_loss)?
    };
    Ok(ModelMatch {
        target_loss,
        small_n,
        small_d,
        big_n,
        big_d,
        multiplier: small_d / big_d,
        small_flops: cost.flops_per_unit(small_n) * small_d,
        big_flops: cost.flops_per_unit(big_n) * big_d,
        data_unit: fit.data_unit,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n: f64,
    pub d: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoFlopOptimum {
    pub budget: f64,
    pub n: f64,
    pub d: f64,
    pub loss: f64,
    pub data_unit: DataUnit,
    /// Predicted loss sampled along the budget constraint, by increasing `N`.
    pub curve: Vec<CurvePoint>,
}

const CURVE_POINTS: usize = 200;

/// Largest `N ≥ 1` whose cost for a single unit of data fits the budget.
fn largest_affordable(budget: f64, cost: &impl FlopCost) -> Result<f64> {
    let affordable = |n: f64| cost.flops_per_unit(n) <= budget;
    if !affordable(1.0) {
        return Err(Error::InvalidInput(format!(
            "budget {budget} cannot train a single-parameter model on one unit of data"
        )));
    }
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    while affordable(exp(hi)) {
        lo = hi;
        hi *= 2.0;
        if hi > 700.0 {
            return Ok(exp(lo));
        }
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if affordable(exp(mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(exp(lo))
}

/// Loss-minimizing model size for a fixed compute budget.
///
/// The budget constraint `flops_per_unit(N)·D = C` eliminates `D`; the loss
/// is then sampled over `ln N` and refined by golden-section search around
/// the best sample.
pub fn isoflop_optimum(
    fit: &ChinchillaFit,
    budget: f64,
    cost: &impl FlopCost,
) -> Result<IsoFlopOptimum> {
    check_units(fit, cost)?;
    positive("FLOP budget", budget)?;
    if !(fit.alpha > 0.0 && fit.beta > 0.0) {
        return Err(Error::InvalidInput(format!(
            "iso-FLOP search needs positive exponents, got α={} β={}",
            fit.alpha, fit.beta
        )));
    }
    let x_hi = ln(largest_affordable(budget, cost)?);
    let loss_at = |x: f64| {
        let n = exp(x);
        let d = budget / cost.flops_per_unit(n);
        let loss = fit.predict(n, d);
        if loss.is_finite() {
            loss
        } else {
            f64::INFINITY
        }
    };

    let step = x_hi / (CURVE_POINTS - 1) as f64;
    let curve: Vec<CurvePoint> = (0..CURVE_POINTS)
        .map(|i| {
            let n = exp(i as f64 * step);
            let d = budget / cost.flops_per_unit(n);
            CurvePoint {
                n,
                d,
                loss: fit.predict(n, d),
            }
        })
        .collect();
    let (best, _) = curve
        .iter()
        .enumerate()
        .filter(|(_, p)| p.loss.is_finite())
        .min_by(|a, b| a.1.loss.total_cmp(&b.1.loss))
        .ok_or_else(|| {
            Error::FitFailed("predicted loss is not finite along the budget constraint".into())
        })?;

    let lo = best.saturating_sub(1) as f64 * step;
    let hi = (best + 1).min(CURVE_POINTS - 1) as f64 * step;
    let (x, loss) = golden_section(loss_at, lo, hi, 1e-12 * x_hi.max(1.0));
    let n = exp(x);
    Ok(IsoFlopOptimum {
        budget,
        n,
        d: budget / cost.flops_per_unit(n),
        loss,
        data_unit: fit.data_unit,
        curve,
    })
}
