use std::path::PathBuf;

use anyhow::Result;
use locload::balance::{
    balance, optimal_message_count, random_counts, ImbalanceVector, ORACLE_MAX_LEARNERS,
};
use serde::{Deserialize, Serialize};

use crate::config::{output, read_input, resolve, usage, write_json_line, CheckFailed};
use crate::Common;

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    /// File with one instance per line: per-learner sample counts separated
    /// by spaces or commas. Reads standard input when absent or `-`.
    #[serde(skip)]
    input: Option<PathBuf>,
    /// Generate this many random instances instead of reading input.
    #[arg(long)]
    random: Option<usize>,
    /// Largest learner count of generated instances.
    #[arg(long)]
    max_learners: Option<usize>,
    /// Global batch size of generated instances.
    #[arg(long)]
    batch: Option<usize>,
    /// Check every schedule and exit with status 3 if any is invalid.
    #[arg(long)]
    #[serde(skip)]
    verify: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    #[serde(skip_serializing_if = "Option::is_none")]
    random: Option<usize>,
    max_learners: usize,
    batch: usize,
    seed: u64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            random: None,
            max_learners: 64,
            batch: 1024,
            seed: 0,
        }
    }
}

#[derive(Debug, Serialize)]
struct MoveLine {
    instance: usize,
    sender: usize,
    receiver: usize,
    count: usize,
}

fn parse_instances(text: &str) -> Result<Vec<Vec<usize>>> {
    text.lines()
        .enumerate()
        .map(|(i, line)| (i, line.split('#').next().unwrap_or("").trim()))
        .filter(|(_, line)| !line.is_empty())
        .map(|(i, line)| {
            line.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .map(|t| {
                    t.parse::<usize>()
                        .map_err(|_| usage(format!("line {}: {t:?} is not a sample count", i + 1)))
                })
                .collect()
        })
        .collect()
}

pub fn run(common: &Common, args: Args) -> Result<()> {
    let params: Params = resolve(common, &args)?;
    let instances = match params.random {
        Some(n) => {
            if params.max_learners == 0 || params.batch == 0 {
                return Err(usage("max_learners and batch must be at least 1"));
            }
            (0..n as u64)
                .map(|i| random_counts(params.seed, i, params.max_learners, params.batch))
                .collect()
        }
        None => parse_instances(&read_input(args.input.as_deref())?)?,
    };
    let mut out = output(common)?;
    let mut problems = Vec::new();
    let mut total_moves = 0;
    for (instance, counts) in instances.into_iter().enumerate() {
        if counts.is_empty() {
            return Err(usage(format!("instance {instance} has no learners")));
        }
        let iv = ImbalanceVector::new(counts);
        let schedule = balance(&iv);
        total_moves += schedule.len();
        for m in &schedule.moves {
            write_json_line(
                &mut *out,
                &MoveLine {
                    instance,
                    sender: m.sender.0,
                    receiver: m.receiver.0,
                    count: m.count,
                },
            )?;
        }
        if args.verify {
            if let Err(v) = schedule.verify(&iv) {
                problems.push(format!("instance {instance}: {v}"));
            } else if iv.learners() <= ORACLE_MAX_LEARNERS {
                let opt = optimal_message_count(&iv)?;
                if schedule.len() > 2 * opt {
                    problems.push(format!(
                        "instance {instance}: {} moves, optimum {opt}",
                        schedule.len()
                    ));
                }
            }
        }
    }
    out.flush()?;
    if args.verify {
        eprintln!("verified schedules: {} problems, {total_moves} moves", problems.len());
        if !problems.is_empty() {
            return Err(CheckFailed(problems.join("; ")).into());
        }
    }
    Ok(())
}
