//! Robust fitting of scaling laws.
//!
//! Two forms are supported:
//!
//! * power law in model size, `L(N) = α·N^(-p) + β`, fitted over
//!   `(ln α, p, ln β)`;
//! * the Chinchilla form, `L(N, D) = E + a/N^α + b/D^β`, fitted over
//!   `(ln E, ln a, α, ln b, β)`.
//!
//! Both are sums of exponentials of expressions linear in the parameters, so a
//! single objective implementation serves them. The objective is the sum of
//! Huber losses of the residuals, either `ln L̂ − ln L` or `L̂ − L`, and is
//! minimized with BFGS from every point of a start grid. The lowest objective
//! wins; ties go to the earliest start.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::math::{exp, ln, powf};
use crate::optim::{bfgs, central_difference, BfgsOptions};
use crate::{Error, Result};

/// One loss measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub model: String,
    /// Non-embedding parameter count.
    #[serde(alias = "N")]
    pub n: f64,
    /// Training samples (or tokens) seen at the checkpoint.
    #[serde(alias = "D")]
    pub d: f64,
    pub loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
}

impl Observation {
    pub fn new(model: impl Into<String>, n: f64, d: f64, loss: f64) -> Self {
        Observation {
            model: model.into(),
            n,
            d,
            loss,
            direction: None,
            domain: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResidualSpace {
    #[default]
    Log,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataUnit {
    #[default]
    Samples,
    Tokens,
}

impl DataUnit {
    pub fn as_str(self) -> &'static str {
        match self {
            DataUnit::Samples => "samples",
            DataUnit::Tokens => "tokens",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradientMode {
    #[default]
    Analytic,
    /// Central differences with relative step 1e-6.
    CentralDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LawKind {
    Power,
    Chinchilla,
}

impl LawKind {
    pub fn dim(self) -> usize {
        match self {
            LawKind::Power => 3,
            LawKind::Chinchilla => 5,
        }
    }

    /// Per-axis start values. Exponents sweep `{0, 0.5, …, 2}`, scale
    /// coefficients sweep `ln ∈ [-1, 20]` and the loss floor `ln ∈ [-1, 1]`.
    pub fn default_grid(self) -> Vec<Vec<f64>> {
        let exponents = vec![0.0, 0.5, 1.0, 1.5, 2.0];
        let scales = vec![-1.0, 4.25, 9.5, 14.75, 20.0];
        match self {
            LawKind::Power => vec![scales, exponents, vec![-1.0, -0.5, 0.0, 0.5, 1.0]],
            LawKind::Chinchilla => vec![
                vec![-1.0, 0.0, 1.0],
                scales.clone(),
                exponents.clone(),
                scales,
                exponents,
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub huber_delta: f64,
    pub residual_space: ResidualSpace,
    /// Start values per parameter axis; the starts are their Cartesian
    /// product. `None` uses [`LawKind::default_grid`].
    pub init_grid: Option<Vec<Vec<f64>>>,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    /// Iteration cap for the first pass over all starts.
    pub screen_iterations: usize,
    /// Number of best screened runs continued up to `max_iterations`.
    pub polish: usize,
    /// Extra starts drawn uniformly inside the grid's bounding box.
    pub random_starts: usize,
    pub seed: u64,
    pub gradient: GradientMode,
    pub data_unit: DataUnit,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            huber_delta: 0.01,
            residual_space: ResidualSpace::Log,
            init_grid: None,
            max_iterations: 1000,
            gradient_tolerance: 1e-12,
            screen_iterations: 100,
            polish: 8,
            random_starts: 0,
            seed: 0,
            gradient: GradientMode::Analytic,
            data_unit: DataUnit::Samples,
        }
    }
}

impl FitConfig {
    fn validate(&self, law: LawKind) -> Result<()> {
        if !(self.huber_delta > 0.0) {
            return Err(Error::InvalidInput(format!(
                "huber delta must be positive, got {}",
                self.huber_delta
            )));
        }
        if let Some(grid) = &self.init_grid {
            if grid.len() != law.dim() || grid.iter().any(|axis| axis.is_empty()) {
                return Err(Error::InvalidInput(format!(
                    "start grid needs {} non-empty axes",
                    law.dim()
                )));
            }
        }
        Ok(())
    }

    pub fn grid(&self, law: LawKind) -> Vec<Vec<f64>> {
        self.init_grid.clone().unwrap_or_else(|| law.default_grid())
    }
}

/// Huber loss: quadratic inside `[-δ, δ]`, linear outside.
pub fn huber(residual: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::InvalidInput(format!(
            "huber delta must be positive, got {delta}"
        )));
    }
    Ok(huber_unchecked(residual, delta))
}

#[inline]
fn huber_unchecked(r: f64, delta: f64) -> f64 {
    let a = r.abs();
    if a <= delta {
        0.5 * r * r
    } else {
        delta * (a - 0.5 * delta)
    }
}

#[inline]
fn huber_derivative(r: f64, delta: f64) -> f64 {
    r.clamp(-delta, delta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub alpha: f64,
    pub p: f64,
    pub beta: f64,
    pub objective: f64,
    pub converged: bool,
    pub n_points: usize,
}

impl PowerLawFit {
    pub fn predict(&self, n: f64) -> f64 {
        self.alpha * powf(n, -self.p) + self.beta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChinchillaFit {
    pub e: f64,
    pub a: f64,
    pub alpha: f64,
    pub b: f64,
    pub beta: f64,
    pub objective: f64,
    pub converged: bool,
    pub n_points: usize,
    #[serde(default)]
    pub data_unit: DataUnit,
}

impl ChinchillaFit {
    pub fn predict(&self, n: f64, d: f64) -> f64 {
        self.e + self.model_term(n) + self.data_term(d)
    }

    /// `a / N^α`
    pub fn model_term(&self, n: f64) -> f64 {
        self.a * powf(n, -self.alpha)
    }

    /// `b / D^β`
    pub fn data_term(&self, d: f64) -> f64 {
        self.b * powf(d, -self.beta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "lowercase")]
pub enum LawFit {
    Power(PowerLawFit),
    Chinchilla(ChinchillaFit),
}

impl LawFit {
    pub fn kind(&self) -> LawKind {
        match self {
            LawFit::Power(_) => LawKind::Power,
            LawFit::Chinchilla(_) => LawKind::Chinchilla,
        }
    }

    pub fn objective(&self) -> f64 {
        match self {
            LawFit::Power(f) => f.objective,
            LawFit::Chinchilla(f) => f.objective,
        }
    }

    /// Evaluates the fitted law. The Chinchilla form needs `d`.
    pub fn predict(&self, n: f64, d: Option<f64>) -> Result<f64> {
        if !(n > 0.0) {
            return Err(Error::InvalidInput(format!("N must be positive, got {n}")));
        }
        match self {
            LawFit::Power(f) => Ok(f.predict(n)),
            LawFit::Chinchilla(f) => match d {
                Some(d) if d > 0.0 => Ok(f.predict(n, d)),
                Some(d) => Err(Error::InvalidInput(format!("D must be positive, got {d}"))),
                None => Err(Error::InvalidInput("the Chinchilla law needs D".into())),
            },
        }
    }
}

/// Huber objective of a law over a fixed set of observations.
///
/// The prediction for observation `i` is `Σ_k exp(c_ik · θ)`; `coeffs` stores
/// the `c_ik` rows.
#[derive(Debug, Clone)]
pub struct Objective {
    law: LawKind,
    terms: usize,
    coeffs: Vec<f64>,
    losses: Vec<f64>,
    log_losses: Vec<f64>,
    delta: f64,
    space: ResidualSpace,
}

impl Objective {
    pub fn new(
        law: LawKind,
        observations: &[Observation],
        delta: f64,
        space: ResidualSpace,
    ) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::InvalidInput(format!(
                "huber delta must be positive, got {delta}"
            )));
        }
        validate_observations(observations)?;
        let dim = law.dim();
        let terms = match law {
            LawKind::Power => 2,
            LawKind::Chinchilla => 3,
        };
        let mut coeffs = Vec::with_capacity(observations.len() * terms * dim);
        for o in observations {
            let (ln_n, ln_d) = (ln(o.n), ln(o.d));
            match law {
                LawKind::Power => {
                    coeffs.extend([1.0, -ln_n, 0.0]);
                    coeffs.extend([0.0, 0.0, 1.0]);
                }
                LawKind::Chinchilla => {
                    coeffs.extend([1.0, 0.0, 0.0, 0.0, 0.0]);
                    coeffs.extend([0.0, 1.0, -ln_n, 0.0, 0.0]);
                    coeffs.extend([0.0, 0.0, 0.0, 1.0, -ln_d]);
                }
            }
        }
        Ok(Objective {
            law,
            terms,
            coeffs,
            losses: observations.iter().map(|o| o.loss).collect(),
            log_losses: observations.iter().map(|o| ln(o.loss)).collect(),
            delta,
            space,
        })
    }

    pub fn dim(&self) -> usize {
        self.law.dim()
    }

    pub fn len(&self) -> usize {
        self.losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.losses.is_empty()
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        self.evaluate(theta, None)
    }

    /// Objective value with its analytic gradient written into `grad`.
    pub fn value_and_gradient(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        self.evaluate(theta, Some(grad))
    }

    /// Objective value with a central-difference gradient.
    pub fn value_and_numeric_gradient(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let fd = central_difference(|x| self.value(x), theta, 1e-6);
        grad.copy_from_slice(&fd);
        self.value(theta)
    }

    fn evaluate(&self, theta: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
        let dim = self.dim();
        debug_assert_eq!(theta.len(), dim);
        if let Some(g) = grad.as_deref_mut() {
            g.fill(0.0);
        }
        let mut exponents = [0.0f64; 3];
        let mut total = 0.0;
        for (i, (&loss, &log_loss)) in self.losses.iter().zip(&self.log_losses).enumerate() {
            let rows = &self.coeffs[i * self.terms * dim..(i + 1) * self.terms * dim];
            for (k, row) in rows.chunks_exact(dim).enumerate() {
                exponents[k] = row.iter().zip(theta).map(|(c, t)| c * t).sum();
            }
            let exps = &exponents[..self.terms];
            // Residual and the per-term weights dr/d(exponent_k).
            let mut weights = [0.0f64; 3];
            let residual = match self.space {
                ResidualSpace::Log => {
                    let max = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let mut sum = 0.0;
                    for k in 0..self.terms {
                        weights[k] = exp(exps[k] - max);
                        sum += weights[k];
                    }
                    for w in &mut weights[..self.terms] {
                        *w /= sum;
                    }
                    max + ln(sum) - log_loss
                }
                ResidualSpace::Linear => {
                    let mut pred = 0.0;
                    for k in 0..self.terms {
                        weights[k] = exp(exps[k]);
                        pred += weights[k];
                    }
                    pred - loss
                }
            };
            total += huber_unchecked(residual, self.delta);
            if let Some(g) = grad.as_deref_mut() {
                let h = huber_derivative(residual, self.delta);
                for (k, row) in rows.chunks_exact(dim).enumerate() {
                    let w = h * weights[k];
                    for (gj, c) in g.iter_mut().zip(row) {
                        *gj += w * c;
                    }
                }
            }
        }
        if total.is_nan() {
            f64::INFINITY
        } else {
            total
        }
    }
}

fn validate_observations(observations: &[Observation]) -> Result<()> {
    for o in observations {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !(ok(o.n) && ok(o.d) && ok(o.loss)) {
            return Err(Error::InvalidInput(format!(
                "observation for {} needs positive finite N, D and loss (got {}, {}, {})",
                o.model, o.n, o.d, o.loss
            )));
        }
    }
    Ok(())
}

fn distinct(values: impl Iterator<Item = f64>) -> usize {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.len()
}

/// Cartesian product of the grid axes plus any seeded random starts.
fn starts(grid: &[Vec<f64>], random: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in grid {
        out = out
            .iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    if random > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bounds: Vec<(f64, f64)> = grid
            .iter()
            .map(|axis| {
                let lo = axis.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = axis.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            })
            .collect();
        for _ in 0..random {
            out.push(
                bounds
                    .iter()
                    .map(|&(lo, hi)| {
                        if hi > lo {
                            rng.random_range(lo..=hi)
                        } else {
                            lo
                        }
                    })
                    .collect(),
            );
        }
    }
    out
}

struct Run {
    order: usize,
    theta: Vec<f64>,
    value: f64,
    converged: bool,
}

/// Lower objective wins, then earlier start.
fn better(a: &Run, b: &Run) -> bool {
    a.value < b.value || (a.value == b.value && a.order < b.order)
}

fn minimize(objective: &Objective, cfg: &FitConfig, law: LawKind) -> Result<Run> {
    let run = |start: &[f64], max_iterations: usize| {
        let options = BfgsOptions {
            max_iterations,
            gradient_tolerance: cfg.gradient_tolerance,
            ..BfgsOptions::default()
        };
        match cfg.gradient {
            GradientMode::Analytic => {
                bfgs(|x, g| objective.value_and_gradient(x, g), start, &options)
            }
            GradientMode::CentralDifference => bfgs(
                |x, g| objective.value_and_numeric_gradient(x, g),
                start,
                &options,
            ),
        }
    };

    let screen = cfg.screen_iterations.min(cfg.max_iterations);
    let mut screened: Vec<Run> = Vec::new();
    for (order, start) in starts(&cfg.grid(law), cfg.random_starts, cfg.seed)
        .into_iter()
        .enumerate()
    {
        if !objective.value(&start).is_finite() {
            continue;
        }
        let m = run(&start, screen);
        if m.value.is_finite() {
            screened.push(Run {
                order,
                theta: m.x,
                value: m.value,
                converged: m.converged,
            });
        }
    }
    if screened.is_empty() {
        return Err(Error::FitFailed(
            "objective is not finite at any start".into(),
        ));
    }
    screened.sort_by(|a, b| a.value.total_cmp(&b.value).then(a.order.cmp(&b.order)));

    let mut best: Option<Run> = None;
    for (rank, candidate) in screened.into_iter().enumerate() {
        let finished = if candidate.converged || screen >= cfg.max_iterations {
            candidate
        } else if rank < cfg.polish {
            let m = run(&candidate.theta, cfg.max_iterations - screen);
            Run {
                order: candidate.order,
                theta: m.x,
                value: m.value,
                converged: m.converged,
            }
        } else {
            candidate
        };
        if best.as_ref().is_none_or(|b| better(&finished, b)) {
            best = Some(finished);
        }
    }
    Ok(best.expect("at least one screened run"))
}

/// Fits `L(N) = α·N^(-p) + β`. Callers usually pass one final-checkpoint
/// observation per model, see [`final_checkpoints`].
pub fn fit_power_law(observations: &[Observation], cfg: &FitConfig) -> Result<PowerLawFit> {
    cfg.validate(LawKind::Power)?;
    validate_observations(observations)?;
    let sizes = distinct(observations.iter().map(|o| o.n));
    if observations.len() < 3 || sizes < 3 {
        return Err(Error::InsufficientData(format!(
            "power law needs at least 3 distinct model sizes, got {sizes} from {} observations",
            observations.len()
        )));
    }
    let objective = Objective::new(
        LawKind::Power,
        observations,
        cfg.huber_delta,
        cfg.residual_space,
    )?;
    let best = minimize(&objective, cfg, LawKind::Power)?;
    let mut fit = PowerLawFit {
        alpha: exp(best.theta[0]),
        p: best.theta[1],
        beta: exp(best.theta[2]),
        objective: best.value,
        converged: best.converged,
        n_points: observations.len(),
    };
    fold_constant_term(&mut fit, observations);
    Ok(fit)
}

/// At `p ≈ 0` the size term is a constant that trades off freely against
/// `β`. Attribute such a constant to `β`.
fn fold_constant_term(fit: &mut PowerLawFit, observations: &[Observation]) {
    let terms = observations.iter().map(|o| fit.alpha * powf(o.n, -fit.p));
    let (lo, hi) = terms.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| {
        (lo.min(t), hi.max(t))
    });
    if hi - lo <= 1e-12 * (fit.beta + hi) {
        fit.beta += 0.5 * (lo + hi);
        fit.alpha = 0.0;
        fit.p = 0.0;
    }
}

/// Fits `L(N, D) = E + a/N^α + b/D^β` on all given checkpoints.
pub fn fit_chinchilla(observations: &[Observation], cfg: &FitConfig) -> Result<ChinchillaFit> {
    cfg.validate(LawKind::Chinchilla)?;
    validate_observations(observations)?;
    let sizes = distinct(observations.iter().map(|o| o.n));
    let data = distinct(observations.iter().map(|o| o.d));
    if observations.len() < 5 || sizes < 2 || data < 2 {
        return Err(Error::InsufficientData(format!(
            "Chinchilla law needs at least 5 observations over 2 model sizes and 2 data sizes, \
             got {} observations, {sizes} sizes, {data} data sizes",
            observations.len()
        )));
    }
    let objective = Objective::new(
        LawKind::Chinchilla,
        observations,
        cfg.huber_delta,
        cfg.residual_space,
    )?;
    let best = minimize(&objective, cfg, LawKind::Chinchilla)?;
    Ok(ChinchillaFit {
        e: exp(best.theta[0]),
        a: exp(best.theta[1]),
        alpha: best.theta[2],
        b: exp(best.theta[3]),
        beta: best.theta[4],
        objective: best.value,
        converged: best.converged,
        n_points: observations.len(),
        data_unit: cfg.data_unit,
    })
}

pub fn fit(law: LawKind, observations: &[Observation], cfg: &FitConfig) -> Result<LawFit> {
    match law {
        LawKind::Power => fit_power_law(observations, cfg).map(LawFit::Power),
        LawKind::Chinchilla => fit_chinchilla(observations, cfg).map(LawFit::Chinchilla),
    }
}

/// Keeps the last checkpoint (largest `D`) of every model, in order of first
/// appearance.
pub fn final_checkpoints(observations: &[Observation]) -> Vec<Observation> {
    let mut order: Vec<&str> = Vec::new();
    let mut last: BTreeMap<&str, &Observation> = BTreeMap::new();
    for o in observations {
        match last.get(o.model.as_str()) {
            None => {
                order.push(&o.model);
                last.insert(&o.model, o);
            }
            Some(prev) if o.d > prev.d => {
                last.insert(&o.model, o);
            }
            Some(_) => {}
        }
    }
    order.into_iter().map(|m| last[m].clone()).collect()
}

/// Observations of a law's natural input: final checkpoints for the power
/// law, every checkpoint for the Chinchilla law.
pub fn fit_inputs(law: LawKind, observations: &[Observation]) -> Vec<Observation> {
    match law {
        LawKind::Power => final_checkpoints(observations),
        LawKind::Chinchilla => observations.to_vec(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupKey {
    Direction,
    Domain,
    Both,
}

const UNTAGGED: &str = "-";

impl GroupKey {
    pub fn label(self, o: &Observation) -> String {
        let direction = o.direction.as_deref().unwrap_or(UNTAGGED);
        let domain = o.domain.as_deref().unwrap_or(UNTAGGED);
        match self {
            GroupKey::Direction => direction.into(),
            GroupKey::Domain => domain.into(),
            GroupKey::Both => format!("{direction}/{domain}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum GroupOutcome {
    Fitted { fit: LawFit },
    Skipped { reason: String },
}

/// Fits every group independently. Groups that cannot be fitted are reported
/// as skipped.
pub fn fit_grouped(
    observations: &[Observation],
    key: GroupKey,
    law: LawKind,
    cfg: &FitConfig,
) -> Result<BTreeMap<String, GroupOutcome>> {
    cfg.validate(law)?;
    let mut groups: BTreeMap<String, Vec<Observation>> = BTreeMap::new();
    for o in observations {
        groups.entry(key.label(o)).or_default().push(o.clone());
    }
    Ok(groups
        .into_iter()
        .map(|(label, members)| {
            let outcome = match fit(law, &fit_inputs(law, &members), cfg) {
                Ok(fit) => GroupOutcome::Fitted { fit },
                Err(e) => GroupOutcome::Skipped {
                    reason: format!("{e}"),
                },
            };
            (label, outcome)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutRow {
    pub model: String,
    pub n: f64,
    pub d: f64,
    pub observed: f64,
    pub predicted: f64,
    /// `predicted − observed`
    pub signed_error: f64,
    /// `signed_error / observed`
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutSubset {
    /// Number of largest models left out.
    pub dropped: usize,
    pub fitted_on: Vec<String>,
    pub fit: LawFit,
    /// Largest relative residual over the fitting points.
    pub max_in_sample_error: f64,
    pub held_out: Vec<HoldoutRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutReport {
    pub law: LawKind,
    pub ladder: Vec<String>,
    pub subsets: Vec<HoldoutSubset>,
}

impl HoldoutReport {
    pub fn rows(&self) -> impl Iterator<Item = (&HoldoutSubset, &HoldoutRow)> {
        self.subsets
            .iter()
            .flat_map(|s| s.held_out.iter().map(move |r| (s, r)))
    }
}

/// Refits on ever smaller prefixes of a model ladder and measures how well
/// each fit predicts the final loss of the models it did not see.
///
/// `ladder` lists model names by increasing size. Subsets drop the `k`
/// largest models for `k = 1 … len − 3`.
pub fn holdout_extrapolation(
    observations: &[Observation],
    ladder: &[String],
    law: LawKind,
    cfg: &FitConfig,
) -> Result<HoldoutReport> {
    if ladder.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "holdout study needs a ladder of at least 4 models, got {}",
            ladder.len()
        )));
    }
    let finals = final_checkpoints(observations);
    let mut sizes = Vec::with_capacity(ladder.len());
    for model in ladder {
        let o = finals
            .iter()
            .find(|o| &o.model == model)
            .ok_or_else(|| Error::InsufficientData(format!("no observations for model {model}")))?;
        sizes.push(o.n);
    }
    if sizes.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidInput(
            "ladder must be ordered by strictly increasing N".into(),
        ));
    }

    let mut subsets = Vec::new();
    for dropped in 1..=ladder.len() - 3 {
        let keep = &ladder[..ladder.len() - dropped];
        let members: Vec<Observation> = observations
            .iter()
            .filter(|o| keep.contains(&o.model))
            .cloned()
            .collect();
        let inputs = fit_inputs(law, &members);
        let fitted = fit(law, &inputs, cfg)?;

        let relative = |o: &Observation| -> Result<(f64, f64)> {
            let predicted = fitted.predict(o.n, Some(o.d))?;
            Ok((predicted, (predicted - o.loss) / o.loss))
        };
        let mut max_in_sample_error: f64 = 0.0;
        for o in &inputs {
            max_in_sample_error = max_in_sample_error.max(relative(o)?.1.abs());
        }
        let mut held_out = Vec::new();
        for model in &ladder[ladder.len() - dropped..] {
            let o = finals
                .iter()
                .find(|o| &o.model == model)
                .expect("checked above");
            let (predicted, relative_error) = relative(o)?;
            held_out.push(HoldoutRow {
                model: model.clone(),
                n: o.n,
                d: o.d,
                observed: o.loss,
                predicted,
                signed_error: predicted - o.loss,
                relative_error,
            });
        }
        subsets.push(HoldoutSubset {
            dropped,
            fitted_on: keep.to_vec(),
            fit: fitted,
            max_in_sample_error,
            held_out,
        });
    }
    Ok(HoldoutReport {
        law,
        ladder: ladder.to_vec(),
        subsets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn power_data(alpha: f64, p: f64, beta: f64, sizes: &[f64]) -> Vec<Observation> {
        sizes
            .iter()
            .enumerate()
            .map(|(i, &n)| Observation::new(format!("m{i}"), n, 1e8, alpha * powf(n, -p) + beta))
            .collect()
    }

    fn log_sizes(lo: f64, hi: f64, count: usize) -> Vec<f64> {
        (0..count)
            .map(|i| exp(ln(lo) + (ln(hi) - ln(lo)) * i as f64 / (count - 1) as f64))
            .collect()
    }

    #[test]
    fn huber_values() {
        assert_eq!(huber(0.0, 0.01).unwrap(), 0.0);
        assert!((huber(0.005, 0.01).unwrap() - 1.25e-5).abs() < 1e-18);
        assert!((huber(0.02, 0.01).unwrap() - 1.5e-4).abs() < 1e-18);
        assert!((huber(-0.02, 0.01).unwrap() - 1.5e-4).abs() < 1e-18);
        assert!(matches!(huber(1.0, 0.0), Err(Error::InvalidInput(_))));
        assert!(matches!(huber(1.0, -1.0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn huber_is_continuous_at_delta() {
        let d = 0.01;
        let below = huber(d * (1.0 - 1e-12), d).unwrap();
        let above = huber(d * (1.0 + 1e-12), d).unwrap();
        assert!((below - above).abs() < 1e-15);
        assert_eq!(huber_derivative(d, d), d);
        assert_eq!(huber_derivative(2.0 * d, d), d);
    }

    #[test]
    fn power_law_recovers_noiseless_curve() {
        let sizes = log_sizes(1e7, 1e10, 6);
        let obs = power_data(10.0, 0.3, 1.5, &sizes);
        let fit = fit_power_law(&obs, &FitConfig::default()).unwrap();
        for &n in &sizes {
            let truth = 10.0 * powf(n, -0.3) + 1.5;
            assert!(((fit.predict(n) - truth) / truth).abs() < 1e-4, "{fit:?}");
        }
    }

    #[test]
    fn power_law_flat_curve() {
        let obs: Vec<_> = log_sizes(1e7, 1e10, 5)
            .into_iter()
            .enumerate()
            .map(|(i, n)| Observation::new(format!("m{i}"), n, 1e8, 2.0))
            .collect();
        let fit = fit_power_law(&obs, &FitConfig::default()).unwrap();
        assert!((fit.beta - 2.0).abs() < 1e-6, "{fit:?}");
        for o in &obs {
            assert!(fit.alpha * powf(o.n, -fit.p) < 1e-6, "{fit:?}");
        }
    }

    #[test]
    fn power_law_needs_three_sizes() {
        let obs = power_data(10.0, 0.3, 1.5, &[1e7, 1e8]);
        assert!(matches!(
            fit_power_law(&obs, &FitConfig::default()),
            Err(Error::InsufficientData(_))
        ));
        let mut obs = power_data(10.0, 0.3, 1.5, &[1e7, 1e8]);
        obs.push(obs[0].clone());
        assert!(matches!(
            fit_power_law(&obs, &FitConfig::default()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn chinchilla_rejects_single_data_size() {
        let obs: Vec<_> = [1e7, 1e8, 1e9, 1e10, 1e11]
            .iter()
            .map(|&n| Observation::new("m", n, 1e9, 2.0 + 1.0 / ln(n)))
            .collect();
        assert!(matches!(
            fit_chinchilla(&obs, &FitConfig::default()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn invalid_observation() {
        let mut obs = power_data(10.0, 0.3, 1.5, &[1e7, 1e8, 1e9]);
        obs[1].loss = -1.0;
        assert!(matches!(
            fit_power_law(&obs, &FitConfig::default()),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn bad_grid_shape() {
        let obs = power_data(10.0, 0.3, 1.5, &[1e7, 1e8, 1e9]);
        let cfg = FitConfig {
            init_grid: Some(vec![vec![0.0]; 2]),
            ..FitConfig::default()
        };
        assert!(matches!(
            fit_power_law(&obs, &cfg),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn all_starts_non_finite() {
        let obs = power_data(10.0, 0.3, 1.5, &[1e7, 1e8, 1e9]);
        let cfg = FitConfig {
            init_grid: Some(vec![vec![1000.0], vec![-10.0], vec![1000.0]]),
            residual_space: ResidualSpace::Linear,
            ..FitConfig::default()
        };
        assert!(matches!(
            fit_power_law(&obs, &cfg),
            Err(Error::FitFailed(_))
        ));
    }

    #[test]
    fn predict_dispatch() {
        let power = LawFit::Power(PowerLawFit {
            alpha: 0.0,
            p: 0.5,
            beta: 1.75,
            objective: 0.0,
            converged: true,
            n_points: 3,
        });
        assert_eq!(power.predict(1e3, None).unwrap(), 1.75);
        assert_eq!(power.predict(1e9, None).unwrap(), 1.75);
        let chin = LawFit::Chinchilla(ChinchillaFit {
            e: 1.7,
            a: 400.0,
            alpha: 0.34,
            b: 1200.0,
            beta: 0.28,
            objective: 0.0,
            converged: true,
            n_points: 5,
            data_unit: DataUnit::Samples,
        });
        assert!(matches!(
            chin.predict(1e9, None),
            Err(Error::InvalidInput(_))
        ));
        assert!(chin.predict(1e9, Some(1e9)).unwrap() > chin.predict(1e9, Some(1e10)).unwrap());
        assert!(chin.predict(0.0, Some(1.0)).is_err());
    }

    #[test]
    fn final_checkpoint_selection() {
        let obs = vec![
            Observation::new("a", 1e7, 1.0, 3.0),
            Observation::new("b", 1e8, 2.0, 2.5),
            Observation::new("a", 1e7, 5.0, 2.9),
            Observation::new("a", 1e7, 3.0, 2.95),
        ];
        let finals = final_checkpoints(&obs);
        assert_eq!(finals.len(), 2);
        assert_eq!(finals[0].d, 5.0);
        assert_eq!(finals[1].model, "b");
    }

    #[test]
    fn grouped_fits() {
        let sizes = log_sizes(1e7, 1e10, 5);
        let mut obs = Vec::new();
        for (dir, beta) in [("en-de", 1.2), ("en-fr", 1.6)] {
            for mut o in power_data(10.0, 0.3, beta, &sizes) {
                o.direction = Some(dir.into());
                obs.push(o);
            }
        }
        let mut lone = Observation::new("x", 1e8, 1e8, 2.0);
        lone.direction = Some("en-it".into());
        obs.push(lone);

        let fits = fit_grouped(
            &obs,
            GroupKey::Direction,
            LawKind::Power,
            &FitConfig::default(),
        )
        .unwrap();
        assert_eq!(fits.len(), 3);
        let beta = |label: &str| match &fits[label] {
            GroupOutcome::Fitted {
                fit: LawFit::Power(f),
            } => f.beta,
            other => panic!("{other:?}"),
        };
        assert!(beta("en-de") < beta("en-fr"));
        assert!((beta("en-de") - 1.2).abs() < 1e-3);
        assert!(matches!(fits["en-it"], GroupOutcome::Skipped { .. }));
    }

    #[test]
    fn identical_groups_identical_fits() {
        let sizes = log_sizes(1e7, 1e10, 5);
        let mut obs = Vec::new();
        for dom in ["general", "kiid"] {
            for mut o in power_data(8.0, 0.25, 1.4, &sizes) {
                o.domain = Some(dom.into());
                obs.push(o);
            }
        }
        let fits = fit_grouped(
            &obs,
            GroupKey::Domain,
            LawKind::Power,
            &FitConfig::default(),
        )
        .unwrap();
        assert_eq!(fits["general"], fits["kiid"]);
        let both =
            fit_grouped(&obs, GroupKey::Both, LawKind::Power, &FitConfig::default()).unwrap();
        assert!(both.contains_key("-/kiid"));
    }

    #[test]
    fn holdout_needs_four_models() {
        let obs = power_data(10.0, 0.3, 1.5, &[1e7, 1e8, 1e9]);
        let ladder: Vec<String> = obs.iter().map(|o| o.model.clone()).collect();
        assert!(matches!(
            holdout_extrapolation(&obs, &ladder, LawKind::Power, &FitConfig::default()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn holdout_rejects_unordered_ladder() {
        let obs = power_data(10.0, 0.3, 1.5, &[1e7, 1e8, 1e9, 1e10]);
        let mut ladder: Vec<String> = obs.iter().map(|o| o.model.clone()).collect();
        ladder.swap(0, 1);
        assert!(matches!(
            holdout_extrapolation(&obs, &ladder, LawKind::Power, &FitConfig::default()),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn holdout_on_exact_power_law() {
        let sizes = log_sizes(7e7, 7e9, 6);
        let obs = power_data(10.0, 0.3, 1.5, &sizes);
        let ladder: Vec<String> = obs.iter().map(|o| o.model.clone()).collect();
        let report =
            holdout_extrapolation(&obs, &ladder, LawKind::Power, &FitConfig::default()).unwrap();
        assert_eq!(report.subsets.len(), 3);
        assert_eq!(report.subsets[2].fitted_on.len(), 3);
        assert_eq!(report.rows().count(), 1 + 2 + 3);
        for (_, row) in report.rows() {
            assert!(row.relative_error.abs() < 1e-4, "{row:?}");
        }
    }
}
