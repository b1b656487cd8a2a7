use std::path::Path;

use anyhow::Result;
use mtscale_core::ledger::{self, FlopMode, ModelArch, Preset, PresetFamily};
use serde::Serialize;

use super::invalid;
use crate::cli::{ArchArgs, FlopsArgs, ParamsArgs, TableFormat};
use crate::io::{read_archs, resolve_config, to_csv, to_json_pretty};
use crate::run::{Printed, Run};
use crate::table;

struct Entry {
    arch: ModelArch,
    preset: Option<Preset>,
}

fn select(run: &mut Run, selector: &str) -> Result<Vec<Entry>> {
    let from_presets = |keep: &dyn Fn(&Preset) -> bool| -> Vec<Entry> {
        ledger::presets()
            .into_iter()
            .filter(|p| keep(p))
            .map(|p| Entry {
                arch: p.arch.clone(),
                preset: Some(p),
            })
            .collect()
    };
    match selector.to_ascii_lowercase().as_str() {
        "all" => return Ok(from_presets(&|p| p.family == PresetFamily::Trained)),
        "scaled" => {
            return Ok(from_presets(&|p| {
                p.key == "pythia70m" || p.family == PresetFamily::Scaled
            }))
        }
        _ => {}
    }
    if let Some(p) = ledger::find_preset(selector) {
        return Ok(vec![Entry {
            arch: p.arch.clone(),
            preset: Some(p),
        }]);
    }
    let path = resolve_config(Path::new(selector));
    if !path.is_file() {
        let keys: Vec<&str> = ledger::presets().iter().map(|p| p.key).collect();
        return Err(invalid(format!(
            "unknown architecture {selector:?}; expected all, scaled, a file or one of {}",
            keys.join(", ")
        )));
    }
    run.input(&path)?;
    Ok(read_archs(&path)?
        .into_iter()
        .map(|arch| Entry { arch, preset: None })
        .collect())
}

fn emit<T: Serialize>(run: &mut Run, args: &ArchArgs, text: String, rows: &[T]) -> Result<()> {
    let rendered = match args.format {
        TableFormat::Text => text.into_bytes(),
        TableFormat::Csv => to_csv(rows)?,
        TableFormat::Json => to_json_pretty(&rows)?,
    };
    run.say(String::from_utf8_lossy(&rendered));
    if let Some(out) = &args.out {
        run.output(out, rendered);
    }
    Ok(())
}

#[derive(Serialize)]
struct ParamsRow {
    model: String,
    non_embedding: u64,
    embedding: u64,
    total: u64,
    layers: u64,
    dim: u64,
    heads: u64,
    padded_vocab: u64,
    max_lr: Option<f64>,
    published_non_embedding: Option<u64>,
    published_embedding: Option<u64>,
    note: Option<String>,
}

fn dash<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "-".into(), |v| v.to_string())
}

pub fn params(args: &ParamsArgs) -> Result<Printed> {
    let mut run = Run::new("params", args, None)?;
    let entries = select(&mut run, &args.arch.arch)?;
    let rows: Vec<ParamsRow> = entries
        .iter()
        .map(|e| {
            let counts = ledger::param_count(&e.arch);
            ParamsRow {
                model: e.arch.name.clone(),
                non_embedding: counts.non_embedding,
                embedding: counts.embedding,
                total: counts.total,
                layers: e.arch.layers,
                dim: e.arch.hidden,
                heads: e.arch.heads,
                padded_vocab: counts.padded_vocab,
                max_lr: e.preset.as_ref().and_then(|p| p.max_lr),
                published_non_embedding: e.preset.as_ref().map(|p| p.published.non_embedding),
                published_embedding: e.preset.as_ref().map(|p| p.published.embedding),
                note: e.preset.as_ref().and_then(Preset::discrepancy),
            }
        })
        .collect();

    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.model.clone(),
                r.non_embedding.to_string(),
                r.embedding.to_string(),
                r.layers.to_string(),
                r.dim.to_string(),
                r.heads.to_string(),
                dash(r.max_lr.map(|lr| format!("{lr:e}"))),
            ]
        })
        .collect();
    let mut text = table::render(
        &[
            "Model",
            "Non-embedding",
            "Embedding",
            "Layers",
            "Dim",
            "Heads",
            "Max lr",
        ],
        &cells,
    );
    for note in rows.iter().filter_map(|r| r.note.as_ref()) {
        text.push_str(&format!("note: {note}\n"));
    }
    emit(&mut run, &args.arch, text, &rows)?;
    run.commit()
}

#[derive(Serialize)]
struct FlopsRow {
    model: String,
    layers: u64,
    dim: u64,
    non_embedding: u64,
    embedding: u64,
    mode: FlopMode,
    forward_per_token: f64,
    train_per_token: f64,
    train_per_sample: f64,
    relative: f64,
}

pub fn flops(args: &FlopsArgs) -> Result<Printed> {
    let mut run = Run::new("flops", args, None)?;
    let entries = select(&mut run, &args.arch.arch)?;
    let mode = FlopMode::from(args.mode);
    if let Some(ctx) = args.context {
        if !(ctx >= 0.0 && ctx.is_finite()) {
            return Err(invalid(format!(
                "context must be a non-negative number, got {ctx}"
            )));
        }
    }
    let archs: Vec<ModelArch> = entries.iter().map(|e| e.arch.clone()).collect();
    let table_rows = ledger::scaling_table(&archs[0], &archs[1..], mode)?;
    let base = ledger::flops(&archs[0], mode, args.context).train_per_token;
    let rows: Vec<FlopsRow> = archs
        .iter()
        .zip(&table_rows)
        .map(|(arch, row)| {
            let f = ledger::flops(arch, mode, args.context);
            FlopsRow {
                model: row.name.clone(),
                layers: row.layers,
                dim: row.hidden,
                non_embedding: row.non_embedding,
                embedding: row.embedding,
                mode,
                forward_per_token: f.forward_per_token,
                train_per_token: f.train_per_token,
                train_per_sample: f.train_per_sample(arch.seq_len),
                relative: f.train_per_token / base,
            }
        })
        .collect();

    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.model.clone(),
                r.layers.to_string(),
                r.dim.to_string(),
                r.non_embedding.to_string(),
                r.embedding.to_string(),
                format!("{:.3e}", r.train_per_token),
                format!("{:.3e}", r.train_per_sample),
                format!("{:.3}", r.relative),
            ]
        })
        .collect();
    let mut text = table::render(
        &[
            "Model",
            "Layers",
            "Dim",
            "Non-embedding",
            "Embedding",
            "FLOP/token",
            "FLOP/sample",
            "Relative",
        ],
        &cells,
    );
    for note in entries
        .iter()
        .filter_map(|e| e.preset.as_ref().and_then(Preset::discrepancy))
    {
        text.push_str(&format!("note: {note}\n"));
    }
    emit(&mut run, &args.arch, text, &rows)?;
    run.commit()
}
