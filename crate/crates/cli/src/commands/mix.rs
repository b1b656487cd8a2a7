use std::collections::BTreeMap;

use anyhow::Result;
use mtscale_core::mixer::{self, MixPlan};
use serde::Serialize;

use crate::cli::{MixArgs, MixGrouping};
use crate::io::{read_datasets, to_csv, to_json_pretty};
use crate::run::{Printed, Run};
use crate::table;

const ALL: &str = "all";

#[derive(Serialize)]
struct IndexRow<'a> {
    group: &'a str,
    dataset: &'a str,
    index: u64,
}

pub fn mix(args: &MixArgs) -> Result<Printed> {
    let mut run = Run::new("mix", args, Some(args.seed))?;
    run.input(&args.manifest)?;
    let specs = read_datasets(&args.manifest)?;

    let plans: BTreeMap<String, MixPlan> = match args.group_by {
        MixGrouping::Group => mixer::grouped_mix(&specs, args.temperature)?,
        MixGrouping::None => {
            BTreeMap::from([(ALL.to_string(), mixer::mix_plan(&specs, args.temperature)?)])
        }
    };

    let mut rows = Vec::new();
    for (group, plan) in &plans {
        for e in &plan.entries {
            rows.push(vec![
                group.clone(),
                e.id.clone(),
                e.original_size.to_string(),
                e.oversampled_size.to_string(),
                format!("{:.6}", e.factor),
                format!("{:.6}", e.probability),
            ]);
        }
    }
    run.say(table::render(
        &[
            "Group",
            "Dataset",
            "Size",
            "Oversampled",
            "Factor",
            "Probability",
        ],
        &rows,
    ));

    run.output(&args.out, to_json_pretty(&plans)?);
    if let Some(path) = &args.indices {
        let mut streams = Vec::new();
        for (i, (group, plan)) in plans.iter().enumerate() {
            let seed = args.seed.wrapping_add(i as u64);
            streams.push((group.as_str(), mixer::materialize_indices(plan, seed)));
        }
        let rows = streams.into_iter().flat_map(|(group, stream)| {
            stream.map(move |(dataset, index)| IndexRow {
                group,
                dataset,
                index,
            })
        });
        run.output(path, to_csv(rows)?);
    }
    run.commit()
}
