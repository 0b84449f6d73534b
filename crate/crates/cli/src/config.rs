//! Parameter resolution and output plumbing shared by the subcommands.
//!
//! Every subcommand has a parameter struct with defaults. A `--config` file
//! (flat TOML, keys named like the long flags with underscores) is laid over
//! the defaults, then any flags given on the command line are laid over that.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::Common;

/// Bad invocation or parameters; exit code 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

/// A requested check did not hold; exit code 3.
#[derive(Debug)]
pub struct CheckFailed(pub String);

impl fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "check failed: {}", self.0)
    }
}

impl std::error::Error for CheckFailed {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn overlay(base: &mut Map<String, Value>, top: Value) -> Result<()> {
    let Value::Object(top) = top else {
        return Err(usage("parameters must be a table of key = value pairs"));
    };
    for (k, v) in top {
        if !v.is_null() {
            base.insert(k, v);
        }
    }
    Ok(())
}

/// Defaults, then the config file, then the seed flag, then other flags.
pub fn resolve<P, A>(common: &Common, flags: &A) -> Result<P>
where
    P: Default + Serialize + DeserializeOwned,
    A: Serialize,
{
    let Value::Object(mut params) = serde_json::to_value(P::default())? else {
        unreachable!("parameter structs serialize to objects");
    };
    if let Some(path) = &common.config {
        let text = fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        let table: toml::Table = toml::from_str(&text)
            .map_err(|e| usage(format!("bad config {}: {e}", path.display())))?;
        overlay(&mut params, serde_json::to_value(table)?)?;
    }
    if let Some(seed) = common.seed {
        if params.contains_key("seed") {
            params.insert("seed".into(), seed.into());
        }
    }
    overlay(&mut params, serde_json::to_value(flags)?)?;
    let resolved: P = serde_json::from_value(Value::Object(params))
        .map_err(|e| usage(format!("bad parameters: {e}")))?;
    if let Some(path) = &common.save_config {
        let text = toml::to_string(&resolved).context("serializing config")?;
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(resolved)
}

pub fn output(common: &Common) -> Result<Box<dyn Write>> {
    Ok(match &common.out {
        Some(path) => Box::new(io::BufWriter::new(
            fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
        )),
        None => Box::new(io::BufWriter::new(io::stdout().lock())),
    })
}

/// Writes `rows` as CSV preceded by a `# config {...}` provenance line.
pub fn write_csv<R: Serialize>(
    out: &mut dyn Write,
    command: &str,
    params: &impl Serialize,
    rows: &[R],
) -> Result<()> {
    writeln!(
        out,
        "# config {}",
        serde_json::json!({ "command": command, "params": params })
    )?;
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json_line(out: &mut dyn Write, value: &impl Serialize) -> Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn read_input(path: Option<&Path>) -> Result<String> {
    match path {
        Some(p) if p != Path::new("-") => {
            fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))
        }
        _ => io::read_to_string(io::stdin()).context("reading standard input"),
    }
}
