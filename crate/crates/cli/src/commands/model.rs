use anyhow::Result;
use locload::model::{CostBreakdown, ModelParams, Scheme};
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
    /// Balancing traffic fraction for the locality scheme.
    #[arg(long)]
    beta: Option<f64>,
    /// Node counts to tabulate, comma separated.
    #[arg(long, value_delimiter = ',')]
    ps: Option<Vec<u64>>,
    /// Schemes to tabulate, comma separated.
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<Scheme>>,
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
            ps: (1..=256).collect(),
            schemes: Scheme::ALL.to_vec(),
        }
    }
}

impl Params {
    fn model(&self, p: u64) -> ModelParams {
        ModelParams {
            d: self.d,
            p,
            v: self.v,
            r: self.r,
            r_c: self.r_c,
            r_b: self.r_b,
            u: self.u,
            alpha: self.alpha,
            beta: self.beta,
        }
    }
}

#[derive(Debug, Serialize)]
struct Row {
    p: u64,
    scheme: Scheme,
    training_s: f64,
    io_s: f64,
    preprocess_s: f64,
    /// `max(training, io)`: the cost when preprocessing keeps up.
    true_cost_s: f64,
    /// `max(training, io + preprocessing)`.
    loaded_cost_s: f64,
    waiting_s: f64,
}

pub fn run(common: &Common, args: Args) -> Result<()> {
    let params: Params = resolve(common, &args)?;
    if params.ps.is_empty() || params.schemes.is_empty() {
        return Err(usage("ps and schemes must not be empty"));
    }
    let mut rows = Vec::new();
    for &p in &params.ps {
        let mp = params.model(p);
        mp.validate()?;
        for &scheme in &params.schemes {
            let c = CostBreakdown::new(&mp, scheme);
            rows.push(Row {
                p,
                scheme,
                training_s: c.training_s,
                io_s: c.sample_io_s,
                preprocess_s: c.preprocessing_s,
                true_cost_s: c.training_s.max(c.sample_io_s),
                loaded_cost_s: c.true_cost_s,
                waiting_s: c.waiting_s(),
            });
        }
    }
    write_csv(&mut *output(common)?, "model", &params, &rows)
}
