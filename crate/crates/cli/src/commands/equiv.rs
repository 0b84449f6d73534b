use anyhow::Result;
use locload::equivalence::{
    compare, run_training, Aggregation, SamplingScheme, ToyObjective, TrainingConfig,
    TrainingTrace, TOY_DIM,
};
use serde::{Deserialize, Serialize, Serializer};

use crate::config::{output, resolve, usage, write_json_line, CheckFailed};
use crate::Common;

/// Largest accepted norm-wise relative gap between a step's gradient and the
/// full-batch recomputation.
const ORACLE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    /// Learner counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    ps: Option<Vec<usize>>,
    /// Global batch sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    batch_sizes: Option<Vec<usize>>,
    #[arg(long)]
    steps: Option<u64>,
    /// Number of consecutive seeds starting at --seed.
    #[arg(long)]
    seeds: Option<u64>,
    /// Toy dataset size.
    #[arg(long)]
    d: Option<u64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Largest weight difference accepted when order is not canonical.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Sum gradients per learner, then across learners, instead of in
    /// sample-id order.
    #[arg(long)]
    #[serde(rename = "aggregation", serialize_with = "learner_order_if_set")]
    non_canonical: bool,
}

fn learner_order_if_set<S: Serializer>(set: &bool, s: S) -> Result<S::Ok, S::Error> {
    set.then_some(Aggregation::LearnerOrder).serialize(s)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    ps: Vec<usize>,
    batch_sizes: Vec<usize>,
    steps: u64,
    seeds: u64,
    d: u64,
    learning_rate: f64,
    tolerance: f64,
    aggregation: Aggregation,
    seed: u64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            ps: vec![1, 2, 3, 4, 8],
            batch_sizes: vec![12, 64],
            steps: 100,
            seeds: 5,
            d: 768,
            learning_rate: 0.05,
            tolerance: 1e-9,
            aggregation: Aggregation::Canonical,
            seed: 0,
        }
    }
}

#[derive(Debug, Serialize)]
struct CaseLine {
    p: usize,
    batch_size: usize,
    seed: u64,
    schemes: Vec<SamplingScheme>,
    identical: bool,
    max_abs_diff: f64,
    oracle_max_rel_err: f64,
}

#[derive(Debug, Serialize)]
struct Verdict {
    verdict: &'static str,
    aggregation: Aggregation,
    cases: usize,
    max_abs_diff: f64,
    oracle_max_rel_err: f64,
}

/// Recomputes each step's gradient over the whole batch in batch order and
/// returns the largest norm-wise relative gap to the recorded gradient.
fn oracle_gap(obj: &ToyObjective, trace: &TrainingTrace) -> f64 {
    let mut w = vec![0.0; TOY_DIM];
    let mut worst: f64 = 0.0;
    for (t, batch) in trace.batches.iter().enumerate() {
        let mut g = vec![0.0; TOY_DIM];
        for &id in &batch.samples {
            for (gi, x) in g.iter_mut().zip(obj.gradient(&w, id)) {
                *gi += x;
            }
        }
        let scale = g.iter().fold(0.0f64, |m, x| m.max(x.abs())) / batch.len() as f64;
        let gap = g
            .iter()
            .zip(&trace.gradients[t])
            .fold(0.0f64, |m, (a, b)| m.max((a / batch.len() as f64 - b).abs()));
        if scale > 0.0 {
            worst = worst.max(gap / scale);
        }
        w.clone_from(&trace.weights[t]);
    }
    worst
}

pub fn run(common: &Common, args: Args) -> Result<()> {
    let params: Params = resolve(common, &args)?;
    if params.ps.is_empty() || params.batch_sizes.is_empty() || params.seeds == 0 {
        return Err(usage("ps, batch_sizes and seeds must not be empty"));
    }
    let mut out = output(common)?;
    let mut all_identical = true;
    let (mut worst_diff, mut worst_oracle) = (0.0f64, 0.0f64);
    let mut cases = 0;
    for &p in &params.ps {
        for &b in &params.batch_sizes {
            for seed in params.seed..params.seed + params.seeds {
                let base = TrainingConfig {
                    scheme: SamplingScheme::Loc,
                    learners: p,
                    batch_size: b,
                    dataset_size: params.d,
                    steps: params.steps,
                    learning_rate: params.learning_rate,
                    seed,
                    aggregation: params.aggregation,
                };
                // Even slices need p | B; otherwise only the locality runs compare.
                let schemes: Vec<SamplingScheme> = SamplingScheme::ALL
                    .into_iter()
                    .filter(|&s| s != SamplingScheme::Reg || b % p == 0)
                    .collect();
                let traces = schemes
                    .iter()
                    .map(|&scheme| run_training(&TrainingConfig { scheme, ..base }))
                    .collect::<locload::Result<Vec<_>>>()?;
                let obj = ToyObjective::generate(params.d, seed);
                let mut line = CaseLine {
                    p,
                    batch_size: b,
                    seed,
                    schemes,
                    identical: true,
                    max_abs_diff: 0.0,
                    oracle_max_rel_err: 0.0,
                };
                for t in &traces {
                    let cmp = compare(&traces[0], t);
                    line.identical &= cmp.identical;
                    line.max_abs_diff = line.max_abs_diff.max(cmp.max_abs_diff);
                    line.oracle_max_rel_err = line.oracle_max_rel_err.max(oracle_gap(&obj, t));
                }
                all_identical &= line.identical;
                worst_diff = worst_diff.max(line.max_abs_diff);
                worst_oracle = worst_oracle.max(line.oracle_max_rel_err);
                cases += 1;
                write_json_line(&mut *out, &line)?;
            }
        }
    }
    let verdict = if all_identical {
        "identical"
    } else if worst_diff <= params.tolerance {
        "within-tolerance"
    } else {
        "diverged"
    };
    write_json_line(
        &mut *out,
        &Verdict {
            verdict,
            aggregation: params.aggregation,
            cases,
            max_abs_diff: worst_diff,
            oracle_max_rel_err: worst_oracle,
        },
    )?;
    out.flush()?;
    eprintln!("verdict: {verdict} (max abs diff {worst_diff:e})");
    let accepted = match params.aggregation {
        Aggregation::Canonical => all_identical,
        Aggregation::LearnerOrder => verdict != "diverged",
    };
    if !accepted {
        return Err(CheckFailed(format!("trajectories {verdict}")).into());
    }
    if worst_oracle > ORACLE_TOLERANCE {
        return Err(CheckFailed(format!(
            "gradient differs from full-batch recomputation by {worst_oracle:e}"
        ))
        .into());
    }
    Ok(())
}
