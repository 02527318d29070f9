use std::path::PathBuf;

use clap::Args;
use pact_core::agreement::adjusted_rand_index;
use pact_core::synth::GroundTruth;
use pact_core::{pairwise_distance, ClusterSet, Metric};
use serde::Serialize;

use super::cluster::{run_algo, Algo, ClusterParams};
use crate::error::{exit, CliError, CliResult};
use crate::io::{ensure_dir, load, save_json, Clock};
use crate::report::print;
use crate::{Ctx, ReportFormat};

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Key tensor, [n, heads, head_dim] or [n, d].
    #[arg(long)]
    keys: PathBuf,
    /// Ground-truth labels written by `pact synth`. Without them agreement
    /// is measured against DBDPC.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Algorithms to run next to DBDPC.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "dpc,kmeans")]
    against: Vec<Algo>,
    #[command(flatten)]
    params: ClusterParams,
    /// Also write report.json here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
    report: ReportFormat,
}

#[derive(Serialize)]
struct AlgoRow {
    algo: Algo,
    clusters: usize,
    max_intra_distance: f64,
    within_bound: bool,
    agreement: f64,
    algo_ms: f64,
}

#[derive(Serialize)]
struct CompareReport {
    command: &'static str,
    metric: Metric,
    d_c: f64,
    n_points: usize,
    /// Largest distance DBDPC allows inside a cluster.
    intra_bound: f64,
    agreement_reference: &'static str,
    k: usize,
    results: Vec<AlgoRow>,
}

/// Worst-case distance between two points both within `d_c` of a center.
pub fn intra_bound(metric: Metric, d_c: f64) -> f64 {
    match metric {
        Metric::Cosine if d_c >= 1.0 => 2.0,
        Metric::Cosine => 2.0 * d_c * (2.0 - d_c),
        Metric::Euclidean => 2.0 * d_c,
    }
}

fn labels_of(set: &ClusterSet, n: usize) -> Vec<usize> {
    set.labels(n).into_iter().map(|l| l.unwrap_or(usize::MAX)).collect()
}

fn read_truth(path: &PathBuf) -> CliResult<GroundTruth> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::at(path)(pact_core::PactError::CorruptHeader(format!("labels: {e}")))
    })
}

pub fn run(args: CompareArgs, ctx: &Ctx) -> CliResult<i32> {
    let metric: Metric = args.params.metric.into();
    let mut params = args.params.clone();
    let truth = args.labels.as_ref().map(read_truth).transpose()?;
    let points = load(&args.keys)?;
    let n = points.n_tokens();
    if let Some(t) = &truth {
        if t.labels.len() != n {
            return Err(pact_core::PactError::Shape(format!(
                "{} labels for {n} points",
                t.labels.len()
            ))
            .into());
        }
    }

    params.validate(Algo::Dbdpc, metric)?;
    let dist = pairwise_distance(&points, metric)?;
    let clock = Clock::start(ctx.timings);
    let reference = run_algo(Algo::Dbdpc, &points, &dist, &params, metric)?;
    let dbdpc_ms = clock.elapsed_ms();

    let k = params
        .k
        .or(truth.as_ref().map(GroundTruth::groups))
        .unwrap_or(reference.len())
        .min(n);
    params.k = Some(k);

    let target = match &truth {
        Some(t) => t.labels.clone(),
        None => labels_of(&reference, n),
    };
    let bound = intra_bound(metric, params.dc);
    let row = |algo: Algo, set: &ClusterSet, algo_ms: f64| {
        let max_intra = set.max_intra_distance(&dist);
        AlgoRow {
            algo,
            clusters: set.len(),
            max_intra_distance: max_intra,
            within_bound: max_intra <= bound + 1e-9,
            agreement: adjusted_rand_index(&labels_of(set, n), &target),
            algo_ms,
        }
    };

    let mut results = vec![row(Algo::Dbdpc, &reference, dbdpc_ms)];
    for &algo in &args.against {
        params.validate(algo, metric)?;
        let clock = Clock::start(ctx.timings);
        let set = run_algo(algo, &points, &dist, &params, metric)?;
        let ms = clock.elapsed_ms();
        results.push(row(algo, &set, ms));
    }

    let report = CompareReport {
        command: "compare",
        metric,
        d_c: params.dc,
        n_points: n,
        intra_bound: bound,
        agreement_reference: if truth.is_some() { "labels" } else { "dbdpc" },
        k,
        results,
    };
    if let Some(dir) = &args.out {
        ensure_dir(dir)?;
        save_json(&report, dir, "report.json")?;
    }
    print(&report, args.report);
    Ok(exit::OK)
}
