//! Command-line arguments.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mtscale_core::lawfit::{DataUnit, GradientMode, GroupKey, LawKind, ResidualSpace};
use mtscale_core::ledger::FlopMode;
use mtscale_core::packer::BoundaryPolicy;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "mtscale",
    version,
    about = "Scaling-law toolkit for decoder-only translation models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Temperature-sampled oversampling plan for a dataset manifest
    Mix(MixArgs),
    /// Format sentence pairs and pack them into a shard
    Pack(PackArgs),
    /// Token accounting for an existing shard
    Stats(StatsArgs),
    /// Inference input for one source sentence
    Prefix(PrefixArgs),
    /// Parameter counts
    Params(ParamsArgs),
    /// FLOP estimates and scaling comparisons
    Flops(FlopsArgs),
    /// Fit a scaling law to observed losses
    Fit(FitArgs),
    /// Answer budget questions with a fitted Chinchilla law
    Plan(PlanArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MixGrouping {
    /// One plan per `group` label
    Group,
    /// A single plan over every dataset
    None,
}

#[derive(Debug, Args, Serialize)]
pub struct MixArgs {
    /// Dataset manifest, CSV (`id,group,size`) or JSON
    pub manifest: PathBuf,
    #[arg(long, short, default_value_t = 5.0)]
    pub temperature: f64,
    #[arg(long, value_enum, default_value = "group")]
    pub group_by: MixGrouping,
    /// Seed for the materialized index order
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Plan JSON
    #[arg(long, short)]
    pub out: PathBuf,
    /// Also write the shuffled `(group, dataset, index)` stream as CSV
    #[arg(long)]
    pub indices: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyArg {
    Split,
    Droptail,
}

impl From<PolicyArg> for BoundaryPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Split => BoundaryPolicy::Split,
            PolicyArg::Droptail => BoundaryPolicy::DropTail,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct RegistryArgs {
    /// JSON object mapping control-token names to ids
    #[arg(long)]
    pub registry: PathBuf,
    #[arg(long, default_value_t = 100_000)]
    pub vocab_size: u32,
}

#[derive(Debug, Args, Serialize)]
pub struct PackArgs {
    /// Sentence pairs, one JSON object per line
    pub samples: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub registry: RegistryArgs,
    #[arg(long, default_value_t = 512)]
    pub seq_len: u32,
    #[arg(long, value_enum, default_value = "split")]
    pub policy: PolicyArg,
    /// Start the stream with `<eos>` so the first sample sees the same
    /// context as the rest
    #[arg(long)]
    pub eos_prefix: bool,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct StatsArgs {
    pub shard: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub registry: RegistryArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct PrefixArgs {
    /// Source token ids
    #[arg(required = true, num_args = 1..)]
    pub source: Vec<u32>,
    #[command(flatten)]
    #[serde(flatten)]
    pub registry: RegistryArgs,
    #[arg(long)]
    pub target_lang: String,
    #[arg(long)]
    pub source_lang: Option<String>,
    #[arg(long)]
    pub domain: Option<String>,
    /// Omit the leading `<eos>`
    #[arg(long)]
    pub no_eos: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Text,
    Csv,
    Json,
}

#[derive(Debug, Args, Serialize)]
pub struct ArchArgs {
    /// Preset key, `all` (trained models), `scaled` (70M family) or a JSON
    /// architecture file
    #[arg(long, default_value = "all")]
    pub arch: String,
    #[arg(long, value_enum, default_value = "text")]
    pub format: TableFormat,
    /// Also write the table to a file
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ParamsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub arch: ArchArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Exact,
    Sixnd,
}

impl From<ModeArg> for FlopMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Exact => FlopMode::Exact,
            ModeArg::Sixnd => FlopMode::SixND,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct FlopsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub arch: ArchArgs,
    #[arg(long, value_enum, default_value = "sixnd")]
    pub mode: ModeArg,
    /// Average attention context in exact mode (default: half the sequence)
    #[arg(long)]
    pub context: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LawArg {
    Power,
    Chinchilla,
}

impl From<LawArg> for LawKind {
    fn from(l: LawArg) -> Self {
        match l {
            LawArg::Power => LawKind::Power,
            LawArg::Chinchilla => LawKind::Chinchilla,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ResidualArg {
    Log,
    Linear,
}

impl From<ResidualArg> for ResidualSpace {
    fn from(r: ResidualArg) -> Self {
        match r {
            ResidualArg::Log => ResidualSpace::Log,
            ResidualArg::Linear => ResidualSpace::Linear,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupArg {
    Direction,
    Domain,
    Both,
}

impl From<GroupArg> for GroupKey {
    fn from(g: GroupArg) -> Self {
        match g {
            GroupArg::Direction => GroupKey::Direction,
            GroupArg::Domain => GroupKey::Domain,
            GroupArg::Both => GroupKey::Both,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitArg {
    Samples,
    Tokens,
}

impl From<UnitArg> for DataUnit {
    fn from(u: UnitArg) -> Self {
        match u {
            UnitArg::Samples => DataUnit::Samples,
            UnitArg::Tokens => DataUnit::Tokens,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GradientArg {
    Analytic,
    Numeric,
}

impl From<GradientArg> for GradientMode {
    fn from(g: GradientArg) -> Self {
        match g {
            GradientArg::Analytic => GradientMode::Analytic,
            GradientArg::Numeric => GradientMode::CentralDifference,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    /// Observations: CSV (`model,N,D,loss,direction,domain`) or JSON lines
    pub observations: PathBuf,
    #[arg(long, value_enum, default_value = "chinchilla")]
    pub law: LawArg,
    #[arg(long, default_value_t = 0.01)]
    pub delta: f64,
    #[arg(long, value_enum, default_value = "log")]
    pub residual: ResidualArg,
    #[arg(long, value_enum)]
    pub group_by: Option<GroupArg>,
    /// Model names by increasing size; refits with the largest models held out
    #[arg(long, value_delimiter = ',')]
    pub holdout_ladder: Option<Vec<String>>,
    /// Holdout report JSON (defaults to `<out>.holdout.json`)
    #[arg(long)]
    pub holdout_out: Option<PathBuf>,
    /// Unit of D in the observations
    #[arg(long, value_enum, default_value = "samples")]
    pub data_unit: UnitArg,
    #[arg(long, default_value_t = 1000)]
    pub max_iterations: usize,
    #[arg(long, default_value_t = 0)]
    pub random_starts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "analytic")]
    pub gradient: GradientArg,
    /// Fit JSON
    #[arg(long, short)]
    pub out: PathBuf,
    /// Fitted curves sampled on a log grid, as CSV
    #[arg(long)]
    pub curve: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct PlanArgs {
    /// Fit JSON written by `mtscale fit --law chinchilla`
    pub fit: PathBuf,
    /// Group to use when the fit file holds grouped fits
    #[arg(long)]
    pub group: Option<String>,
    /// Loss to reach; pair with --n, --arch or --d
    #[arg(long, conflicts_with_all = ["flop_budget", "match_models"])]
    pub target_loss: Option<f64>,
    /// Training FLOP budget for an iso-FLOP search
    #[arg(long, conflicts_with = "match_models")]
    pub flop_budget: Option<f64>,
    /// `SMALL:BIG` model sizes or preset keys; needs --big-d
    #[arg(long = "match", value_name = "SMALL:BIG")]
    pub match_models: Option<String>,
    /// Data seen by the big model in --match
    #[arg(long, requires = "match_models")]
    pub big_d: Option<f64>,
    /// Non-embedding parameter count
    #[arg(long, conflicts_with_all = ["arch", "d"])]
    pub n: Option<f64>,
    /// Preset key or architecture file supplying N and the sequence length
    #[arg(long, conflicts_with = "d")]
    pub arch: Option<String>,
    /// Data budget; --target-loss then solves for N
    #[arg(long)]
    pub d: Option<f64>,
    #[arg(long, value_enum, default_value = "sixnd")]
    pub mode: ModeArg,
    /// Tokens per sample when the fit counts samples
    #[arg(long, default_value_t = 512)]
    pub seq_len: u64,
    /// Plan JSON
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Loss along the iso-FLOP constraint, as CSV
    #[arg(long)]
    pub curve: Option<PathBuf>,
}
