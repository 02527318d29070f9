use std::cmp::Ordering;
use std::path::{Path, PathBuf};

use clap::Args;
use pact_core::pipeline::layer_key_spread;
use serde::Serialize;

use crate::error::{exit, CliError, CliResult};
use crate::io::load;
use crate::report::print;
use crate::{Ctx, ReportFormat};

#[derive(Args, Debug)]
pub struct LayerSelectArgs {
    /// Glob matching one pre-rotation key dump per layer, e.g. 'dump/keys_L*.pact'.
    #[arg(long)]
    keys_glob: String,
    /// Spread threshold. Defaults to 0.9 times the largest observed spread.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
    report: ReportFormat,
}

#[derive(Serialize)]
struct Layer {
    index: usize,
    path: String,
    spread: f64,
}

#[derive(Serialize)]
struct LayerReport {
    command: &'static str,
    tau: f64,
    layers: Vec<Layer>,
    selected: Option<usize>,
    selected_path: Option<String>,
}

pub fn run(args: LayerSelectArgs, _ctx: &Ctx) -> CliResult<i32> {
    if let Some(tau) = args.tau {
        if !tau.is_finite() {
            return Err(CliError::Usage(format!("--tau must be finite, got {tau}")));
        }
    }
    let paths = matching_paths(&args.keys_glob)?;
    let layers = paths.iter().map(|p| load(p)).collect::<CliResult<Vec<_>>>()?;
    let spread = layer_key_spread(&layers, args.tau)?;

    let report = LayerReport {
        command: "layer-select",
        tau: spread.tau,
        layers: paths
            .iter()
            .zip(&spread.spreads)
            .enumerate()
            .map(|(index, (p, &s))| Layer {
                index,
                path: p.display().to_string(),
                spread: s,
            })
            .collect(),
        selected: spread.selected,
        selected_path: spread.selected.map(|i| paths[i].display().to_string()),
    };
    print(&report, args.report);
    if spread.selected.is_none() {
        eprintln!("no layer meets threshold {}", spread.tau);
        return Ok(exit::NO_LAYER);
    }
    Ok(exit::OK)
}

fn matching_paths(pattern: &str) -> CliResult<Vec<PathBuf>> {
    let entries = glob::glob(pattern)
        .map_err(|e| CliError::Usage(format!("bad glob {pattern:?}: {e}")))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| {
            let path = e.path().to_path_buf();
            CliError::io(&path, e.into())
        })?;
        if path.is_file() {
            paths.push(path);
        }
    }
    if paths.is_empty() {
        return Err(CliError::NoMatch(pattern.to_string()));
    }
    paths.sort_by(|a, b| natural_cmp(a, b));
    Ok(paths)
}

/// Orders paths so that `L2` sorts before `L10`.
fn natural_cmp(a: &Path, b: &Path) -> Ordering {
    let (a, b) = (a.to_string_lossy(), b.to_string_lossy());
    let (ta, tb) = (chunks(&a), chunks(&b));
    for (x, y) in ta.iter().zip(&tb) {
        let ord = match (x, y) {
            (Chunk::Num(p), Chunk::Num(q)) => {
                let (p, q) = (p.trim_start_matches('0'), q.trim_start_matches('0'));
                p.len().cmp(&q.len()).then_with(|| p.cmp(q))
            }
            (Chunk::Num(_), Chunk::Text(_)) => Ordering::Less,
            (Chunk::Text(_), Chunk::Num(_)) => Ordering::Greater,
            (Chunk::Text(p), Chunk::Text(q)) => p.cmp(q),
        };
        if ord != Ordering::Equal {
            return ord;
        }
    }
    ta.len().cmp(&tb.len()).then_with(|| a.cmp(&b))
}

enum Chunk<'a> {
    Num(&'a str),
    Text(&'a str),
}

fn chunks(s: &str) -> Vec<Chunk<'_>> {
    let mut out = Vec::new();
    let mut start = 0;
    let bytes = s.as_bytes();
    while start < bytes.len() {
        let digit = bytes[start].is_ascii_digit();
        let end = bytes[start..]
            .iter()
            .position(|b| b.is_ascii_digit() != digit)
            .map_or(bytes.len(), |k| start + k);
        let piece = &s[start..end];
        out.push(if digit { Chunk::Num(piece) } else { Chunk::Text(piece) });
        start = end;
    }
    out
}
