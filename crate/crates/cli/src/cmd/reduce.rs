use std::path::PathBuf;

use clap::Args;
use pact_core::pipeline::{pact_reduce, ReductionConfig};
use pact_core::{PositionIds, RopeConfig, TokenTensor};
use serde::Serialize;

use crate::error::{exit, CliResult};
use crate::io::{ensure_dir, load, load_positions, save, save_json, Clock};
use crate::report::print;
use crate::{Ctx, MetricArg, OutputArgs, PositionArg, SelectionArg};

#[derive(Args, Debug)]
pub struct ReduceArgs {
    /// Hidden states, shape [n, d].
    #[arg(long)]
    hidden: PathBuf,
    /// Pre-rotation keys, shape [n, heads, head_dim].
    #[arg(long)]
    keys: PathBuf,
    /// Pre-rotation queries, same shape as the keys.
    #[arg(long)]
    queries: PathBuf,
    /// Position ids, shape [n]. Defaults to 0..n.
    #[arg(long)]
    pos: Option<PathBuf>,

    /// Clustering cutoff distance.
    #[arg(long, default_value_t = 0.21)]
    dc: f64,
    /// Fraction of tokens marked unimportant.
    #[arg(long, default_value_t = 0.55)]
    lambda: f64,
    /// Recovery radius as a multiple of the cutoff.
    #[arg(long, default_value_t = 1.5)]
    alpha: f64,
    /// Density bandwidth.
    #[arg(long, default_value_t = 2.0)]
    dn: f64,
    /// Layer the tensors were dumped at (recorded in the report).
    #[arg(long, default_value_t = 4)]
    layer: usize,
    /// Cluster raw keys instead of rotated ones.
    #[arg(long)]
    no_rope: bool,
    #[arg(long, default_value_t = 10000.0)]
    rope_base: f64,
    #[arg(long, value_enum, default_value_t = MetricArg::Cosine)]
    metric: MetricArg,
    #[arg(long, value_enum, default_value_t = SelectionArg::Recursive)]
    selection: SelectionArg,
    /// Minimum centers per recursive round before falling back to a scan.
    #[arg(long, default_value_t = 10)]
    fallback: usize,
    #[arg(long, value_enum, default_value_t = PositionArg::Center)]
    position_mode: PositionArg,
    /// Accepted for interface symmetry; reduction draws no random numbers.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Serialize)]
struct InputShapes {
    hidden: Vec<usize>,
    keys: Vec<usize>,
    queries: Vec<usize>,
    positions: Vec<usize>,
}

#[derive(Serialize)]
struct Outputs {
    merged_hidden: String,
    position_ids: String,
    weights: String,
    clusters: String,
    report: String,
}

#[derive(Serialize)]
struct Timings {
    algo_ms: f64,
    total_ms: f64,
}

#[derive(Serialize)]
struct ReduceReport {
    command: &'static str,
    inputs: InputShapes,
    config: ReductionConfig,
    seed: u64,
    n_input: usize,
    n_important: usize,
    n_unimportant: usize,
    n_recovered: usize,
    n_discarded: usize,
    n_output: usize,
    reduction_ratio: f64,
    timings: Timings,
    outputs: Outputs,
}

#[derive(Serialize)]
struct ClustersFile<'a> {
    n_input: usize,
    d_c: f64,
    importance_scores: &'a [f64],
    important: &'a [usize],
    unimportant: &'a [usize],
    discarded: &'a [usize],
    clusters: &'a pact_core::ClusterSet,
}

pub fn run(args: ReduceArgs, ctx: &Ctx) -> CliResult<i32> {
    let total = Clock::start(ctx.timings);
    let cfg = ReductionConfig {
        d_c: args.dc,
        lambda: args.lambda,
        alpha: args.alpha,
        d_n: args.dn,
        layer: args.layer,
        rope: if args.no_rope {
            RopeConfig { base: args.rope_base, ..RopeConfig::disabled() }
        } else {
            RopeConfig { base: args.rope_base, ..RopeConfig::default() }
        },
        metric: args.metric.into(),
        fallback_threshold: args.fallback,
        selection: args.selection.into(),
        position_mode: args.position_mode.into(),
    };
    // Reject bad parameters before touching the filesystem.
    cfg.validate()?;

    let hidden = load(&args.hidden)?;
    let keys = load(&args.keys)?;
    let queries = load(&args.queries)?;
    let pos = match &args.pos {
        Some(p) => load_positions(p)?,
        None => PositionIds::sequential(hidden.n_tokens()),
    };

    let algo = Clock::start(ctx.timings);
    let out = pact_reduce(&hidden, &keys, &queries, &pos, &cfg)?;
    let algo_ms = algo.elapsed_ms();

    let dir = &args.output.out;
    ensure_dir(dir)?;
    let weights = TokenTensor::new(
        "weights",
        vec![out.weights.len()],
        out.weights.iter().map(|&w| w as f32).collect(),
    )?;
    let n_recovered = out.split.unimportant.len() - out.discarded.len();
    let clusters = ClustersFile {
        n_input: hidden.n_tokens(),
        d_c: cfg.d_c,
        importance_scores: &out.split.scores,
        important: &out.split.important,
        unimportant: &out.split.unimportant,
        discarded: &out.discarded,
        clusters: &out.clusters,
    };
    let outputs = Outputs {
        merged_hidden: save(&out.merged_hidden, dir, "merged_hidden.pact")?,
        position_ids: save(&out.position_ids.to_tensor("position_ids"), dir, "position_ids.pact")?,
        weights: save(&weights, dir, "weights.pact")?,
        clusters: save_json(&clusters, dir, "clusters.json")?,
        report: "report.json".into(),
    };

    let mut report = ReduceReport {
        command: "reduce",
        inputs: InputShapes {
            hidden: hidden.shape().to_vec(),
            keys: keys.shape().to_vec(),
            queries: queries.shape().to_vec(),
            positions: vec![pos.len()],
        },
        config: cfg,
        seed: args.seed,
        n_input: hidden.n_tokens(),
        n_important: out.split.important.len(),
        n_unimportant: out.split.unimportant.len(),
        n_recovered,
        n_discarded: out.discarded.len(),
        n_output: out.n_output(),
        reduction_ratio: out.reduction_ratio,
        timings: Timings { algo_ms, total_ms: 0.0 },
        outputs,
    };
    report.timings.total_ms = total.elapsed_ms();
    save_json(&report, dir, "report.json")?;
    print(&report, args.output.report);
    Ok(exit::OK)
}
