use std::path::PathBuf;

use anyhow::Result;
use locload::pipeline::{DatasetSpec, Loader, LoaderConfig, Preprocess, ThroughputReport};
use serde::{Deserialize, Serialize};

use crate::config::{output, resolve, usage, write_json_line, CheckFailed};
use crate::Common;

/// Allowed deviation of a measured epoch from its ceil-law prediction.
const LAW_TOLERANCE: f64 = 0.25;

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    /// Existing dataset directory; a temporary one is generated when absent.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Sample count.
    #[arg(long)]
    n: Option<u64>,
    /// Bytes per sample.
    #[arg(long)]
    sample_bytes: Option<usize>,
    /// Worker counts to sweep, comma separated.
    #[arg(long, value_delimiter = ',')]
    workers: Option<Vec<usize>>,
    /// Intra-batch thread counts to sweep, comma separated.
    #[arg(long, value_delimiter = ',')]
    threads: Option<Vec<usize>>,
    /// Outstanding batch requests.
    #[arg(long)]
    prefetch: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    /// Per-sample work: none, spin:<us> or sleep:<us>.
    #[arg(long)]
    preprocess: Option<Preprocess>,
    /// In-memory cache capacity in samples; reports a cold and a warm epoch.
    #[arg(long)]
    cache: Option<usize>,
    /// Exit with status 3 if an injected-delay cell misses its prediction.
    #[arg(long)]
    #[serde(skip)]
    check: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    #[serde(skip_serializing_if = "Option::is_none")]
    data: Option<PathBuf>,
    n: u64,
    sample_bytes: usize,
    workers: Vec<usize>,
    threads: Vec<usize>,
    prefetch: usize,
    batch: usize,
    preprocess: Preprocess,
    #[serde(skip_serializing_if = "Option::is_none")]
    cache: Option<usize>,
    seed: u64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            data: None,
            n: 512,
            sample_bytes: 4096,
            workers: vec![1, 2, 4],
            threads: vec![1, 2, 4],
            prefetch: 8,
            batch: 64,
            preprocess: Preprocess::Sleep(1000),
            cache: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Serialize)]
struct Cell<'a> {
    workers: usize,
    threads: usize,
    prefetch: usize,
    batch_size: usize,
    preprocess: Preprocess,
    phase: &'a str,
    samples: u64,
    batches: u64,
    wall_time_s: f64,
    samples_per_second: f64,
    predicted_wall_s: Option<f64>,
    mean_batch_latency_s: f64,
    max_batch_latency_s: f64,
    cache_hits: u64,
    cache_misses: u64,
}

impl<'a> Cell<'a> {
    fn new(cfg: &LoaderConfig, n: u64, phase: &'a str, r: &ThroughputReport) -> Self {
        let predicted = match cfg.preprocess {
            Preprocess::None => None,
            _ => Some(cfg.predicted_epoch_time(n).as_secs_f64()),
        };
        let lat = &r.batch_latencies_s;
        Self {
            workers: cfg.workers,
            threads: cfg.intra_batch_threads,
            prefetch: cfg.prefetch_depth,
            batch_size: cfg.batch_size,
            preprocess: cfg.preprocess,
            phase,
            samples: r.samples,
            batches: r.batches,
            wall_time_s: r.wall_time_s,
            samples_per_second: r.samples_per_second,
            predicted_wall_s: predicted,
            mean_batch_latency_s: lat.iter().sum::<f64>() / lat.len().max(1) as f64,
            max_batch_latency_s: lat.iter().copied().fold(0.0, f64::max),
            cache_hits: r.cache_hits,
            cache_misses: r.cache_misses,
        }
    }

    fn law_violation(&self) -> Option<String> {
        let predicted = self.predicted_wall_s?;
        // Warm epochs skip the reads but not the injected delay.
        let off = (self.wall_time_s - predicted).abs() / predicted;
        (off > LAW_TOLERANCE).then(|| {
            format!(
                "W={} T={} {}: {:.3}s vs predicted {:.3}s",
                self.workers, self.threads, self.phase, self.wall_time_s, predicted
            )
        })
    }
}

pub fn run(common: &Common, args: Args) -> Result<()> {
    let params: Params = resolve(common, &args)?;
    if params.workers.is_empty() || params.threads.is_empty() {
        return Err(usage("workers and threads must not be empty"));
    }
    let scratch;
    let dataset = match &params.data {
        Some(root) => {
            let spec = DatasetSpec::new(root, params.n, params.sample_bytes);
            spec.verify()?;
            spec
        }
        None => {
            scratch = tempfile::tempdir()?;
            let spec = DatasetSpec::new(scratch.path(), params.n, params.sample_bytes);
            spec.generate(params.seed)?;
            spec
        }
    };
    let mut out = output(common)?;
    let mut problems = Vec::new();
    for &workers in &params.workers {
        for &threads in &params.threads {
            let cfg = LoaderConfig {
                workers,
                intra_batch_threads: threads,
                prefetch_depth: params.prefetch,
                batch_size: params.batch,
                preprocess: params.preprocess,
                cache_capacity: params.cache,
            };
            let mut loader = Loader::new(dataset.clone(), cfg)?;
            let mut cells = Vec::new();
            let first = loader.run_epoch(params.seed, 0, |_| {})?;
            if params.cache.is_some() {
                cells.push(Cell::new(&cfg, params.n, "cold", &first));
                let warm = loader.run_epoch(params.seed, 1, |_| {})?;
                cells.push(Cell::new(&cfg, params.n, "warm", &warm));
            } else {
                cells.push(Cell::new(&cfg, params.n, "epoch", &first));
            }
            for cell in &cells {
                write_json_line(&mut *out, cell)?;
                problems.extend(cell.law_violation());
            }
            out.flush()?;
        }
    }
    if args.check && !problems.is_empty() {
        return Err(CheckFailed(problems.join("; ")).into());
    }
    Ok(())
}
