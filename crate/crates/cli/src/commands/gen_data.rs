use std::path::PathBuf;

use anyhow::Result;
use locload::pipeline::DatasetSpec;
use serde::{Deserialize, Serialize};

use crate::config::{output, resolve, write_json_line};
use crate::Common;

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    /// Directory to write the sample files into.
    #[arg(long)]
    dir: Option<PathBuf>,
    /// Sample count.
    #[arg(long)]
    n: Option<u64>,
    /// Bytes per sample.
    #[arg(long)]
    sample_bytes: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    dir: PathBuf,
    n: u64,
    sample_bytes: usize,
    seed: u64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("data"),
            n: 10_000,
            sample_bytes: 131_072,
            seed: 0,
        }
    }
}

#[derive(Debug, Serialize)]
struct Written<'a> {
    dir: &'a PathBuf,
    n: u64,
    sample_bytes: usize,
    total_bytes: u64,
}

pub fn run(common: &Common, args: Args) -> Result<()> {
    let params: Params = resolve(common, &args)?;
    let spec = DatasetSpec::new(&params.dir, params.n, params.sample_bytes);
    spec.generate(params.seed)?;
    write_json_line(
        &mut *output(common)?,
        &Written {
            dir: &params.dir,
            n: params.n,
            sample_bytes: params.sample_bytes,
            total_bytes: spec.total_bytes(),
        },
    )
}
