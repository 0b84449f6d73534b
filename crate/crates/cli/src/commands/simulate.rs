use anyhow::Result;
use locload::model::{ModelParams, Scheme};
use locload::simulate::{simulate_epoch_costs, BetaSource, EpochCostRow};
use serde::{Deserialize, Serialize};

use crate::config::{output, resolve, usage, write_csv};
use crate::Common;

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    /// Dataset size in samples.
    #[arg(long)]
    d: Option<u64>,
    /// Per-node training rate, samples/s.
    #[arg(long)]
    v: Option<f64>,
    /// Storage I/O rate, samples/s.
    #[arg(long)]
    r: Option<f64>,
    /// Remote cache I/O rate, samples/s.
    #[arg(long)]
    r_c: Option<f64>,
    /// Balancing transfer rate, samples/s.
    #[arg(long)]
    r_b: Option<f64>,
    /// Per-node preprocessing rate, samples/s.
    #[arg(long)]
    u: Option<f64>,
    /// Cached fraction of the dataset.
    #[arg(long)]
    alpha: Option<f64>,
    /// Balancing traffic used when it is not sampled.
    #[arg(long)]
    beta: Option<f64>,
    /// Node counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    ps: Option<Vec<u64>>,
    /// Schemes, comma separated.
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<Scheme>>,
    /// Epochs averaged per row.
    #[arg(long)]
    epochs: Option<u64>,
    /// Local batch size of the sampled balancing traffic; 0 uses --beta.
    #[arg(long)]
    local_batch: Option<usize>,
    /// Simulated steps per epoch for the sampled balancing traffic.
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    d: u64,
    v: f64,
    r: f64,
    r_c: f64,
    r_b: f64,
    u: f64,
    alpha: f64,
    beta: f64,
    ps: Vec<u64>,
    schemes: Vec<Scheme>,
    epochs: u64,
    local_batch: usize,
    steps: usize,
    seed: u64,
}

impl Default for Params {
    fn default() -> Self {
        let m = ModelParams::default();
        Self {
            d: m.d,
            v: m.v,
            r: m.r,
            r_c: m.r_c,
            r_b: m.r_b,
            u: m.u,
            alpha: m.alpha,
            beta: m.beta,
            ps: vec![1, 2, 4, 8, 16, 32, 64, 128],
            schemes: Scheme::ALL.to_vec(),
            epochs: 3,
            local_batch: 64,
            steps: 100,
            seed: 0,
        }
    }
}

pub fn run(common: &Common, args: Args) -> Result<()> {
    let params: Params = resolve(common, &args)?;
    if params.schemes.is_empty() {
        return Err(usage("schemes must not be empty"));
    }
    let base = ModelParams {
        d: params.d,
        p: 1,
        v: params.v,
        r: params.r,
        r_c: params.r_c,
        r_b: params.r_b,
        u: params.u,
        alpha: params.alpha,
        beta: params.beta,
    };
    let source = if params.local_batch == 0 {
        BetaSource::Fixed
    } else {
        BetaSource::Sampled {
            local_batch: params.local_batch,
            steps: params.steps,
            seed: params.seed,
        }
    };
    let mut rows: Vec<EpochCostRow> = Vec::new();
    for &scheme in &params.schemes {
        rows.extend(simulate_epoch_costs(&base, &params.ps, scheme, params.epochs, source)?);
    }
    write_csv(&mut *output(common)?, "simulate", &params, &rows)
}
