use anyhow::{Context, Result};
use mtscale_core::packer::{self, ShardStats};

use crate::cli::{PackArgs, PrefixArgs, StatsArgs};
use crate::io::{read_registry, read_samples, read_shard, resolve_config};
use crate::run::{Printed, Run};

fn describe(stats: &ShardStats, sequences: usize) -> String {
    format!(
        "sequences {sequences}\ntokens {}\nloss_tokens {}\npad_tokens {}\nsamples {}\nloss_fraction {:.6}",
        stats.total_tokens,
        stats.loss_tokens,
        stats.pad_tokens,
        stats.samples_started,
        stats.loss_fraction()
    )
}

pub fn pack(args: &PackArgs) -> Result<Printed> {
    let mut run = Run::new("pack", args, None)?;
    let registry_path = resolve_config(&args.registry.registry);
    run.input(&args.samples)?;
    run.input(&registry_path)?;
    let registry = read_registry(&registry_path, args.registry.vocab_size)?;
    let pairs = read_samples(&args.samples)?;

    let mut samples = Vec::with_capacity(pairs.len());
    for (i, pair) in pairs.iter().enumerate() {
        let sample = packer::format_sample(pair, &registry)
            .with_context(|| format!("{}: line {}", args.samples.display(), i + 1))?;
        samples.push(if i == 0 && args.eos_prefix {
            packer::with_leading_eos(sample, &registry)
        } else {
            sample
        });
    }

    let outcome = packer::pack(samples, args.seq_len, args.policy.into(), &registry)?;
    let stats = packer::shard_stats(&outcome.shard, &registry);
    run.output(&args.out, packer::encode_shard(&outcome.shard)?);
    run.say(describe(&stats, outcome.shard.sequences.len()));
    if outcome.skipped > 0 {
        run.warn(format!(
            "skipped {} samples longer than seq_len {}",
            outcome.skipped, args.seq_len
        ));
    }
    run.commit()
}

pub fn stats(args: &StatsArgs) -> Result<Printed> {
    let mut run = Run::new("stats", args, None)?;
    let registry = read_registry(&args.registry.registry, args.registry.vocab_size)?;
    let shard = read_shard(&args.shard)?;
    run.say(describe(
        &packer::shard_stats(&shard, &registry),
        shard.sequences.len(),
    ));
    run.commit()
}

pub fn prefix(args: &PrefixArgs) -> Result<Printed> {
    let mut run = Run::new("prefix", args, None)?;
    let registry = read_registry(&args.registry.registry, args.registry.vocab_size)?;
    let ids = packer::inference_prefix(
        &args.source,
        &args.target_lang,
        args.source_lang.as_deref(),
        args.domain.as_deref(),
        &registry,
        !args.no_eos,
    )?;
    let line: Vec<String> = ids.iter().map(u32::to_string).collect();
    run.say(line.join(" "));
    run.commit()
}
