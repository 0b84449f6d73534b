use anyhow::Result;
use locload::simulate::{imbalance_sweep, ImbalanceStats};
use serde::{Deserialize, Serialize};

use crate::config::{output, resolve, usage, write_csv, CheckFailed};
use crate::Common;

/// Reference medians of the balancing traffic per local batch size.
const REFERENCE_MEDIANS: [(usize, f64); 3] = [(32, 0.069), (64, 0.048), (128, 0.034)];
const MEDIAN_TOLERANCE: f64 = 0.01;

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    /// Dataset size in samples.
    #[arg(long)]
    d: Option<u64>,
    /// Learner counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    ps: Option<Vec<usize>>,
    /// Local batch sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    local_batches: Option<Vec<usize>>,
    /// Consecutive steps simulated per cell.
    #[arg(long)]
    steps: Option<usize>,
    /// Emit only the per-cell summary rows.
    #[arg(long)]
    #[serde(skip)]
    summary_only: bool,
    /// Exit with status 3 unless medians match the reference values.
    #[arg(long)]
    #[serde(skip)]
    check: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    d: u64,
    ps: Vec<usize>,
    local_batches: Vec<usize>,
    steps: usize,
    seed: u64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            d: 1_280_000,
            ps: vec![8, 16, 32, 64],
            local_batches: vec![32, 64, 128],
            steps: 500,
            seed: 0,
        }
    }
}

#[derive(Debug, Serialize)]
struct Row {
    kind: &'static str,
    p: usize,
    local_batch: usize,
    step: Option<usize>,
    beta: Option<f64>,
    median: Option<f64>,
    q1: Option<f64>,
    q3: Option<f64>,
    whisker_low: Option<f64>,
    whisker_high: Option<f64>,
    mean: Option<f64>,
}

fn rows(stats: &ImbalanceStats, summary_only: bool) -> Vec<Row> {
    let (p, local_batch) = (stats.config.p, stats.config.local_batch);
    let mut out = Vec::new();
    if !summary_only {
        out.extend(stats.betas.iter().enumerate().map(|(step, &b)| Row {
            kind: "step",
            p,
            local_batch,
            step: Some(step),
            beta: Some(b),
            median: None,
            q1: None,
            q3: None,
            whisker_low: None,
            whisker_high: None,
            mean: None,
        }));
    }
    let s = &stats.summary;
    out.push(Row {
        kind: "summary",
        p,
        local_batch,
        step: None,
        beta: None,
        median: Some(s.median),
        q1: Some(s.q1),
        q3: Some(s.q3),
        whisker_low: Some(s.whisker_low),
        whisker_high: Some(s.whisker_high),
        mean: Some(s.mean),
    });
    out
}

fn check(all: &[ImbalanceStats]) -> Vec<String> {
    let mut problems = Vec::new();
    for (local_batch, want) in REFERENCE_MEDIANS {
        let medians: Vec<(usize, f64)> = all
            .iter()
            .filter(|s| s.config.local_batch == local_batch)
            .map(|s| (s.config.p, s.summary.median))
            .collect();
        for &(p, m) in &medians {
            if (m - want).abs() > MEDIAN_TOLERANCE {
                problems.push(format!(
                    "p={p} local batch {local_batch}: median {m:.4}, expected {want} ± {MEDIAN_TOLERANCE}"
                ));
            }
        }
        let lo = medians.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
        let hi = medians.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
        if medians.len() > 1 && hi - lo > MEDIAN_TOLERANCE {
            problems.push(format!(
                "local batch {local_batch}: medians spread {:.4} across p",
                hi - lo
            ));
        }
    }
    problems
}

pub fn run(common: &Common, args: Args) -> Result<()> {
    let params: Params = resolve(common, &args)?;
    if params.ps.is_empty() || params.local_batches.is_empty() {
        return Err(usage("ps and local_batches must not be empty"));
    }
    let all = imbalance_sweep(
        params.d,
        &params.ps,
        &params.local_batches,
        params.steps,
        params.seed,
    )?;
    let table: Vec<Row> = all.iter().flat_map(|s| rows(s, args.summary_only)).collect();
    write_csv(&mut *output(common)?, "imbalance", &params, &table)?;
    if args.check {
        let problems = check(&all);
        if !problems.is_empty() {
            return Err(CheckFailed(problems.join("; ")).into());
        }
    }
    Ok(())
}
