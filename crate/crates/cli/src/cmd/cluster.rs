use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use pact_core::reference::{dpc_cluster_distances, kmeans_cluster, DpcCenterRule, DpcParams};
use pact_core::{dbdpc::cluster_distances, pairwise_distance, ClusterSet, DbdpcParams, Metric, TokenTensor};
use serde::Serialize;

use crate::error::{exit, CliError, CliResult};
use crate::io::{ensure_dir, load, save_json, save_text, Clock};
use crate::report::print;
use crate::{Ctx, DensityArg, MetricArg, OutputArgs, SelectionArg};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Dbdpc,
    Dpc,
    Kmeans,
}

/// Parameters shared by `cluster` and `compare`.
#[derive(Args, Debug, Clone)]
pub struct ClusterParams {
    /// Cutoff distance (DBDPC and DPC).
    #[arg(long, default_value_t = 0.21)]
    pub dc: f64,
    /// DBDPC density bandwidth.
    #[arg(long, default_value_t = 2.0)]
    pub dn: f64,
    #[arg(long, value_enum, default_value_t = MetricArg::Cosine)]
    pub metric: MetricArg,
    #[arg(long, value_enum, default_value_t = SelectionArg::Recursive)]
    pub selection: SelectionArg,
    #[arg(long, default_value_t = 10)]
    pub fallback: usize,
    /// DPC: centers need rho*delta >= t * max(rho*delta).
    #[arg(long, default_value_t = 0.5, conflicts_with = "top_fraction")]
    pub t: f64,
    /// DPC: take this fraction of points with the largest rho*delta instead.
    #[arg(long)]
    pub top_fraction: Option<f64>,
    #[arg(long, value_enum, default_value_t = DensityArg::Gaussian)]
    pub density: DensityArg,
    /// k-means cluster count.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 100)]
    pub max_iters: usize,
    /// k-means initialisation seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl ClusterParams {
    pub fn dbdpc(&self, metric: Metric) -> DbdpcParams {
        DbdpcParams {
            d_c: self.dc,
            d_n: self.dn,
            metric,
            fallback_threshold: self.fallback,
            selection: self.selection.into(),
        }
    }

    pub fn dpc(&self, metric: Metric) -> DpcParams {
        DpcParams {
            d_c: self.dc,
            center_rule: match self.top_fraction {
                Some(f) => DpcCenterRule::TopFraction(f),
                None => DpcCenterRule::Threshold(self.t),
            },
            density: self.density.into(),
            metric,
        }
    }

    /// Fails fast on parameters the chosen algorithm would reject.
    pub fn validate(&self, algo: Algo, metric: Metric) -> CliResult<()> {
        match algo {
            Algo::Dbdpc => self.dbdpc(metric).validate()?,
            Algo::Dpc => self.dpc(metric).validate()?,
            Algo::Kmeans => match self.k {
                None => return Err(CliError::Usage("--k is required for kmeans".into())),
                Some(0) => return Err(CliError::Usage("--k must be at least 1".into())),
                Some(_) => {}
            },
        }
        Ok(())
    }
}

pub fn run_algo(
    algo: Algo,
    points: &TokenTensor,
    dist: &pact_core::DistanceMatrix,
    params: &ClusterParams,
    metric: Metric,
) -> CliResult<ClusterSet> {
    Ok(match algo {
        Algo::Dbdpc => cluster_distances(dist, &params.dbdpc(metric))?,
        Algo::Dpc => dpc_cluster_distances(dist, &params.dpc(metric))?,
        Algo::Kmeans => {
            let k = params.k.expect("validated");
            kmeans_cluster(points, k, params.max_iters, params.seed, metric)?
        }
    })
}

#[derive(Args, Debug)]
pub struct ClusterArgs {
    #[arg(long, value_enum)]
    algo: Algo,
    /// Point tensor, [q, d] or [q, heads, head_dim] (heads are concatenated).
    #[arg(long)]
    input: PathBuf,
    /// Treat the input as 2-D points under the Euclidean metric and also
    /// write clusters.csv.
    #[arg(long)]
    points_2d: bool,
    #[command(flatten)]
    params: ClusterParams,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Serialize)]
struct ClustersFile<'a> {
    algo: Algo,
    metric: Metric,
    n_points: usize,
    n_clusters: usize,
    clusters: &'a ClusterSet,
}

#[derive(Serialize)]
struct ClusterReport {
    command: &'static str,
    algo: Algo,
    metric: Metric,
    input_shape: Vec<usize>,
    n_points: usize,
    n_clusters: usize,
    max_intra_distance: f64,
    algo_ms: f64,
    outputs: Vec<String>,
}

pub fn run(args: ClusterArgs, ctx: &Ctx) -> CliResult<i32> {
    let metric: Metric = if args.points_2d {
        Metric::Euclidean
    } else {
        args.params.metric.into()
    };
    args.params.validate(args.algo, metric)?;
    let points = load(&args.input)?;
    if points.rank() < 2 {
        return Err(CliError::at(&args.input)(pact_core::PactError::Shape(format!(
            "expected a point tensor of rank >= 2, got shape {:?}",
            points.shape()
        ))));
    }
    if args.points_2d && points.shape() != [points.n_tokens(), 2] {
        return Err(CliError::at(&args.input)(pact_core::PactError::Shape(format!(
            "--points-2d needs shape [q, 2], got {:?}",
            points.shape()
        ))));
    }

    let clock = Clock::start(ctx.timings);
    let dist = pairwise_distance(&points, metric)?;
    let clusters = run_algo(args.algo, &points, &dist, &args.params, metric)?;
    let algo_ms = clock.elapsed_ms();

    let dir = &args.output.out;
    ensure_dir(dir)?;
    let file = ClustersFile {
        algo: args.algo,
        metric,
        n_points: points.n_tokens(),
        n_clusters: clusters.len(),
        clusters: &clusters,
    };
    let mut outputs = vec![save_json(&file, dir, "clusters.json")?];
    if args.points_2d {
        outputs.push(save_text(&csv(&points, &clusters), dir, "clusters.csv")?);
    }
    outputs.push("report.json".into());
    let report = ClusterReport {
        command: "cluster",
        algo: args.algo,
        metric,
        input_shape: points.shape().to_vec(),
        n_points: points.n_tokens(),
        n_clusters: clusters.len(),
        max_intra_distance: clusters.max_intra_distance(&dist),
        algo_ms,
        outputs,
    };
    save_json(&report, dir, "report.json")?;
    print(&report, args.output.report);
    Ok(exit::OK)
}

fn csv(points: &TokenTensor, clusters: &ClusterSet) -> String {
    let labels = clusters.labels(points.n_tokens());
    let centers = clusters.centers();
    let mut out = String::from("x,y,cluster,is_center\n");
    for (i, row) in points.rows().enumerate() {
        let label = labels[i].map(|l| l.to_string()).unwrap_or_default();
        let is_center = centers.contains(&i) as u8;
        writeln!(out, "{},{},{label},{is_center}", row[0], row[1]).unwrap();
    }
    out
}
