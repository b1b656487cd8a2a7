use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use mtscale_core::lawfit::{ChinchillaFit, DataUnit, LawFit};
use mtscale_core::ledger::{self, FlopMode, ModelArch};
use mtscale_core::planner::{self, CostFn, CurvePoint, ModelMatch, SixNd};
use serde::{Deserialize, Serialize};

use super::fit::FitDocument;
use super::invalid;
use crate::cli::PlanArgs;
use crate::io::{read_archs, resolve_config, to_csv, to_json_pretty};
use crate::run::{Printed, Run};

/// Contents of the plan JSON, tagged by the question asked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "query", rename_all = "snake_case")]
pub enum PlanDocument {
    DataNeeded {
        n: f64,
        target_loss: f64,
        d: f64,
        data_unit: DataUnit,
    },
    ParamsNeeded {
        d: f64,
        target_loss: f64,
        n: f64,
        data_unit: DataUnit,
    },
    Match {
        mode: FlopMode,
        #[serde(flatten)]
        result: ModelMatch,
    },
    IsoFlop {
        budget: f64,
        n: f64,
        d: f64,
        loss: f64,
        data_unit: DataUnit,
    },
}

fn read_fit(run: &mut Run, path: &Path, group: Option<&str>) -> Result<ChinchillaFit> {
    run.input(path)?;
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let document: FitDocument =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    match document.select(group)? {
        LawFit::Chinchilla(f) => Ok(f.clone()),
        LawFit::Power(_) => Err(invalid(
            "planning needs a Chinchilla fit (mtscale fit --law chinchilla)",
        )),
    }
}

/// A model given either as a parameter count or as an architecture.
struct ModelRef {
    n: f64,
    arch: Option<ModelArch>,
}

fn model_ref(run: &mut Run, spec: &str) -> Result<ModelRef> {
    if let Ok(n) = spec.parse::<f64>() {
        return Ok(ModelRef { n, arch: None });
    }
    let arch = match ledger::find_preset(spec) {
        Some(p) => p.arch,
        None => {
            let path = resolve_config(Path::new(spec));
            if !path.is_file() {
                return Err(invalid(format!(
                    "{spec:?} is neither a number, a preset nor an architecture file"
                )));
            }
            run.input(&path)?;
            let mut archs = read_archs(&path)?;
            if archs.len() != 1 {
                return Err(invalid(format!(
                    "{} must hold exactly one architecture",
                    path.display()
                )));
            }
            archs.remove(0)
        }
    };
    arch.validate()?;
    Ok(ModelRef {
        n: ledger::param_count(&arch).non_embedding as f64,
        arch: Some(arch),
    })
}

fn tokens_per_unit(unit: DataUnit, seq_len: u64) -> f64 {
    match unit {
        DataUnit::Samples => seq_len as f64,
        DataUnit::Tokens => 1.0,
    }
}

pub fn plan(args: &PlanArgs) -> Result<Printed> {
    let mut run = Run::new("plan", args, None)?;
    let fit = read_fit(&mut run, &args.fit, args.group.as_deref())?;
    let mode = FlopMode::from(args.mode);
    let unit = fit.data_unit.as_str();
    let mut curve: Option<Vec<CurvePoint>> = None;

    let document = if let Some(target) = args.target_loss {
        if let Some(d) = args.d {
            let n = planner::params_needed(&fit, d, target)?;
            run.say(format!(
                "to reach loss {target} with D = {d:.6e} {unit}: N = {n:.6e}"
            ));
            PlanDocument::ParamsNeeded {
                d,
                target_loss: target,
                n,
                data_unit: fit.data_unit,
            }
        } else {
            let n = match (&args.n, &args.arch) {
                (Some(n), _) => *n,
                (None, Some(spec)) => model_ref(&mut run, spec)?.n,
                (None, None) => {
                    return Err(invalid("--target-loss needs one of --n, --arch or --d"))
                }
            };
            let d = planner::data_needed(&fit, n, target)?;
            run.say(format!(
                "to reach loss {target} with N = {n:.6e}: D = {d:.6e} {unit}"
            ));
            PlanDocument::DataNeeded {
                n,
                target_loss: target,
                d,
                data_unit: fit.data_unit,
            }
        }
    } else if let Some(budget) = args.flop_budget {
        if mode == FlopMode::Exact {
            return Err(invalid(
                "iso-FLOP search varies N continuously and needs --mode sixnd; use --match to compare fixed architectures",
            ));
        }
        let cost = SixNd {
            unit: fit.data_unit,
            tokens_per_sample: tokens_per_unit(fit.data_unit, args.seq_len),
        };
        let opt = planner::isoflop_optimum(&fit, budget, &cost)?;
        run.say(format!(
            "budget {budget:.6e} FLOPs: N* = {:.6e}, D* = {:.6e} {unit}, loss* = {:.6}",
            opt.n, opt.d, opt.loss
        ));
        curve = Some(opt.curve);
        PlanDocument::IsoFlop {
            budget,
            n: opt.n,
            d: opt.d,
            loss: opt.loss,
            data_unit: opt.data_unit,
        }
    } else if let Some(pair) = &args.match_models {
        let (small, big) = pair
            .split_once(':')
            .ok_or_else(|| invalid(format!("--match expects SMALL:BIG, got {pair:?}")))?;
        let big_d = args.big_d.ok_or_else(|| invalid("--match needs --big-d"))?;
        let small = model_ref(&mut run, small)?;
        let big = model_ref(&mut run, big)?;
        let result = match mode {
            FlopMode::SixND => {
                let seq_len = big.arch.as_ref().map_or(args.seq_len, |a| a.seq_len);
                let cost = SixNd {
                    unit: fit.data_unit,
                    tokens_per_sample: tokens_per_unit(fit.data_unit, seq_len),
                };
                planner::match_model(&fit, small.n, big.n, big_d, &cost)?
            }
            FlopMode::Exact => {
                let (Some(small_arch), Some(big_arch)) = (&small.arch, &big.arch) else {
                    return Err(invalid(
                        "--mode exact needs presets or architecture files on both sides of --match",
                    ));
                };
                let per_unit = |arch: &ModelArch| {
                    ledger::flops(arch, FlopMode::Exact, None).train_per_token
                        * tokens_per_unit(fit.data_unit, arch.seq_len)
                };
                let (small_cost, big_cost) = (per_unit(small_arch), per_unit(big_arch));
                let small_n = small.n;
                let cost = CostFn {
                    unit: fit.data_unit,
                    per_unit: move |n: f64| if n == small_n { small_cost } else { big_cost },
                };
                planner::match_model(&fit, small.n, big.n, big_d, &cost)?
            }
        };
        run.say(format!(
            "N = {:.6e} matches N = {:.6e} on {:.6e} {unit} (loss {:.6}) with {:.6e} {unit}: {:.3}x the data, {:.3}x the FLOPs",
            result.small_n,
            result.big_n,
            result.big_d,
            result.target_loss,
            result.small_d,
            result.multiplier,
            result.small_flops / result.big_flops
        ));
        PlanDocument::Match { mode, result }
    } else {
        return Err(invalid(
            "give one of --target-loss, --flop-budget or --match",
        ));
    };

    if let Some(out) = &args.out {
        run.output(out, to_json_pretty(&document)?);
    }
    if let Some(path) = &args.curve {
        let points = curve.ok_or_else(|| invalid("--curve is only produced by --flop-budget"))?;
        run.output(path, to_csv(&points)?);
    }
    run.commit()
}
