use clap::Args;
use pact_core::synth::{generate, max_intra_distance, min_inter_distance, SynthConfig};
use serde::Serialize;

use crate::error::{exit, CliResult};
use crate::io::{ensure_dir, save, save_json};
use crate::report::print;
use crate::{Ctx, OutputArgs};

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 64)]
    tokens: usize,
    #[arg(long, default_value_t = 4)]
    heads: usize,
    #[arg(long, default_value_t = 32)]
    head_dim: usize,
    #[arg(long, default_value_t = 64)]
    hidden_dim: usize,
    /// Planted clusters.
    #[arg(long, default_value_t = 3)]
    clusters: usize,
    /// Isolated tokens, one group each.
    #[arg(long, default_value_t = 2)]
    outliers: usize,
    /// Maximum cosine distance of a planted token from its group direction.
    #[arg(long, default_value_t = 0.02)]
    noise: f64,
    /// Extra hidden-state norm for planted tokens, relative.
    #[arg(long, default_value_t = 0.0)]
    norm_spread: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10000.0)]
    rope_base: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Serialize)]
struct SynthReport {
    command: &'static str,
    config: SynthConfig,
    groups: usize,
    max_intra_distance: f64,
    min_inter_distance: f64,
    outputs: Vec<String>,
}

pub fn run(args: SynthArgs, _ctx: &Ctx) -> CliResult<i32> {
    let cfg = SynthConfig {
        tokens: args.tokens,
        heads: args.heads,
        head_dim: args.head_dim,
        hidden_dim: args.hidden_dim,
        clusters: args.clusters,
        outliers: args.outliers,
        noise: args.noise,
        norm_spread: args.norm_spread,
        seed: args.seed,
        rope_base: args.rope_base,
    };
    let dump = generate(&cfg)?;
    let dir = &args.output.out;
    ensure_dir(dir)?;
    let outputs = vec![
        save(&dump.hidden, dir, "hidden.pact")?,
        save(&dump.keys, dir, "keys.pact")?,
        save(&dump.queries, dir, "queries.pact")?,
        save(&dump.positions.to_tensor("pos"), dir, "pos.pact")?,
        save_json(&dump.labels, dir, "labels.json")?,
    ];
    let report = SynthReport {
        command: "synth",
        groups: dump.labels.groups(),
        max_intra_distance: max_intra_distance(cfg.noise),
        min_inter_distance: min_inter_distance(cfg.noise),
        config: cfg,
        outputs,
    };
    print(&report, args.output.report);
    Ok(exit::OK)
}
