use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use anyhow::Result;
use mtscale_core::lawfit::{
    self, DataUnit, FitConfig, GroupKey, GroupOutcome, HoldoutReport, LawFit, LawKind, Observation,
};
use mtscale_core::Error;
use serde::{Deserialize, Serialize};

use super::invalid;
use crate::cli::FitArgs;
use crate::io::{read_observations, to_csv, to_json_pretty};
use crate::run::{Printed, Run};
use crate::table;

const UNGROUPED: &str = "all";
const CURVE_POINTS: usize = 100;

/// Contents of the fit JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDocument {
    pub law: LawKind,
    pub data_unit: DataUnit,
    pub config: FitConfig,
    pub observations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<LawFit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_by: Option<GroupKey>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<BTreeMap<String, GroupOutcome>>,
}

impl FitDocument {
    /// The single fit, or the fit of `group` in a grouped document.
    pub fn select(&self, group: Option<&str>) -> Result<&LawFit> {
        match (&self.fit, &self.groups, group) {
            (Some(fit), _, None) => Ok(fit),
            (_, Some(groups), Some(label)) => match groups.get(label) {
                Some(GroupOutcome::Fitted { fit }) => Ok(fit),
                Some(GroupOutcome::Skipped { reason }) => Err(Error::InsufficientData(format!(
                    "group {label} was not fitted: {reason}"
                ))
                .into()),
                None => Err(invalid(format!(
                    "no group {label:?}; available: {}",
                    groups.keys().cloned().collect::<Vec<_>>().join(", ")
                ))),
            },
            (_, Some(_), None) => Err(invalid(
                "the fit file holds grouped fits; pick one with --group",
            )),
            _ => Err(invalid("the fit file holds no fit")),
        }
    }
}

#[derive(Serialize)]
struct CurveRow {
    group: String,
    model: Option<String>,
    n: f64,
    d: Option<f64>,
    loss: f64,
}

#[derive(Serialize)]
struct HoldoutCsvRow<'a> {
    dropped: usize,
    model: &'a str,
    n: f64,
    d: f64,
    observed: f64,
    predicted: f64,
    signed_error: f64,
    relative_error: f64,
    max_in_sample_error: f64,
}

fn log_sweep(lo: f64, hi: f64) -> impl Iterator<Item = f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..CURVE_POINTS).map(move |i| (a + (b - a) * i as f64 / (CURVE_POINTS - 1) as f64).exp())
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    })
}

/// Power laws are swept over N; Chinchilla laws over D for every observed model.
fn curve_rows(group: &str, fit: &LawFit, obs: &[Observation]) -> Vec<CurveRow> {
    let (n_lo, n_hi) = bounds(obs.iter().map(|o| o.n));
    match fit {
        LawFit::Power(f) => log_sweep(n_lo / 2.0, n_hi * 4.0)
            .map(|n| CurveRow {
                group: group.into(),
                model: None,
                n,
                d: None,
                loss: f.predict(n),
            })
            .collect(),
        LawFit::Chinchilla(f) => {
            let (d_lo, d_hi) = bounds(obs.iter().map(|o| o.d));
            let mut rows = Vec::new();
            for o in lawfit::final_checkpoints(obs) {
                rows.extend(log_sweep(d_lo, d_hi * 4.0).map(|d| CurveRow {
                    group: group.into(),
                    model: Some(o.model.clone()),
                    n: o.n,
                    d: Some(d),
                    loss: f.predict(o.n, d),
                }));
            }
            rows
        }
    }
}

fn describe(label: &str, fit: &LawFit) -> String {
    match fit {
        LawFit::Power(f) => format!(
            "{label}: L(N) = {:.6e} * N^-{:.6} + {:.6}  (objective {:.6e}, {} points{})",
            f.alpha,
            f.p,
            f.beta,
            f.objective,
            f.n_points,
            if f.converged { "" } else { ", not converged" }
        ),
        LawFit::Chinchilla(f) => format!(
            "{label}: L(N, D) = {:.6} + {:.6e} / N^{:.6} + {:.6e} / D^{:.6}  (D in {}, objective {:.6e}, {} points{})",
            f.e,
            f.a,
            f.alpha,
            f.b,
            f.beta,
            f.data_unit.as_str(),
            f.objective,
            f.n_points,
            if f.converged { "" } else { ", not converged" }
        ),
    }
}

fn sibling(path: &std::path::Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

pub fn fit(args: &FitArgs) -> Result<Printed> {
    let mut run = Run::new("fit", args, Some(args.seed))?;
    run.input(&args.observations)?;
    let observations = read_observations(&args.observations)?;
    let law = LawKind::from(args.law);
    let config = FitConfig {
        huber_delta: args.delta,
        residual_space: args.residual.into(),
        max_iterations: args.max_iterations,
        random_starts: args.random_starts,
        seed: args.seed,
        gradient: args.gradient.into(),
        data_unit: args.data_unit.into(),
        ..FitConfig::default()
    };
    if args.group_by.is_some() && args.holdout_ladder.is_some() {
        return Err(invalid(
            "--holdout-ladder cannot be combined with --group-by",
        ));
    }

    let mut document = FitDocument {
        law,
        data_unit: config.data_unit,
        config: config.clone(),
        observations: observations.len(),
        fit: None,
        group_by: None,
        groups: None,
    };
    let mut curve = Vec::new();

    match args.group_by {
        None => {
            let fitted = lawfit::fit(law, &lawfit::fit_inputs(law, &observations), &config)?;
            run.say(describe(UNGROUPED, &fitted));
            curve.extend(curve_rows(UNGROUPED, &fitted, &observations));
            document.fit = Some(fitted);
        }
        Some(key) => {
            let key = GroupKey::from(key);
            let groups = lawfit::fit_grouped(&observations, key, law, &config)?;
            let mut members: BTreeMap<String, Vec<Observation>> = BTreeMap::new();
            for o in &observations {
                members.entry(key.label(o)).or_default().push(o.clone());
            }
            let mut skipped = Vec::new();
            for (label, outcome) in &groups {
                match outcome {
                    GroupOutcome::Fitted { fit } => run.say(describe(label, fit)),
                    GroupOutcome::Skipped { reason } => skipped.push(format!("{label}: {reason}")),
                }
            }
            if skipped.len() == groups.len() {
                return Err(Error::InsufficientData(format!(
                    "no group could be fitted\n  {}",
                    skipped.join("\n  ")
                ))
                .into());
            }
            for line in &skipped {
                run.warn(format!("skipped {line}"));
            }
            for (label, outcome) in &groups {
                if let GroupOutcome::Fitted { fit } = outcome {
                    curve.extend(curve_rows(label, fit, &members[label]));
                }
            }
            document.group_by = Some(key);
            document.groups = Some(groups);
        }
    }

    if let Some(ladder) = &args.holdout_ladder {
        let unique: BTreeSet<&String> = ladder.iter().collect();
        if unique.len() != ladder.len() {
            return Err(invalid("--holdout-ladder lists a model twice"));
        }
        let report = lawfit::holdout_extrapolation(&observations, ladder, law, &config)?;
        run.say(holdout_table(&report));
        let path = args
            .holdout_out
            .clone()
            .unwrap_or_else(|| sibling(&args.out, ".holdout.json"));
        let rows = report.rows().map(|(subset, row)| HoldoutCsvRow {
            dropped: subset.dropped,
            model: &row.model,
            n: row.n,
            d: row.d,
            observed: row.observed,
            predicted: row.predicted,
            signed_error: row.signed_error,
            relative_error: row.relative_error,
            max_in_sample_error: subset.max_in_sample_error,
        });
        run.output(&path.with_extension("csv"), to_csv(rows)?);
        run.output(&path, to_json_pretty(&report)?);
    }

    run.output(&args.out, to_json_pretty(&document)?);
    if let Some(path) = &args.curve {
        run.output(path, to_csv(&curve)?);
    }
    run.commit()
}

fn holdout_table(report: &HoldoutReport) -> String {
    let cells: Vec<Vec<String>> = report
        .rows()
        .map(|(subset, row)| {
            vec![
                subset.dropped.to_string(),
                row.model.clone(),
                format!("{:.6}", row.observed),
                format!("{:.6}", row.predicted),
                format!("{:+.3e}", row.relative_error),
                format!("{:.3e}", subset.max_in_sample_error),
            ]
        })
        .collect();
    table::render(
        &[
            "Dropped",
            "Model",
            "Observed",
            "Predicted",
            "Rel. error",
            "In-sample max",
        ],
        &cells,
    )
}
