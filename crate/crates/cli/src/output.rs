//! Artifact writers. Every artifact carries the resolved run config.

use std::path::Path;

use radjudge::io::{write_atomic, write_jsonl};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

fn io_err(e: impl std::fmt::Display) -> CliError {
    CliError::config(format!("cannot write output: {e}"))
}

#[derive(Serialize)]
struct WithConfig<'a, T: Serialize> {
    config: &'a RunConfig,
    #[serde(flatten)]
    body: &'a T,
}

/// Pretty JSON object: `config` first, then the fields of `body`.
pub fn write_json<T: Serialize>(path: &Path, cfg: &RunConfig, body: &T) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(&WithConfig { config: cfg, body }).map_err(io_err)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes).map_err(io_err)
}

pub fn write_lines<T: Serialize>(path: &Path, items: &[T]) -> CliResult<()> {
    write_jsonl(path, items).map_err(io_err)
}

/// CSV preceded by `# config: {...}` and any extra `# key: value` lines.
pub fn write_csv(
    path: &Path,
    cfg: &RunConfig,
    meta: &[(&str, String)],
    header: &[&str],
    rows: &[Vec<String>],
) -> CliResult<()> {
    let mut out = Vec::new();
    out.extend_from_slice(format!("# config: {}\n", serde_json::to_string(cfg).map_err(io_err)?).as_bytes());
    for (k, v) in meta {
        out.extend_from_slice(format!("# {k}: {v}\n").as_bytes());
    }
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(header).map_err(io_err)?;
        for r in rows {
            w.write_record(r).map_err(io_err)?;
        }
        w.flush().map_err(io_err)?;
    }
    write_atomic(path, &out).map_err(io_err)
}

/// Shortest round-trip representation of a float.
pub fn num(x: f64) -> String {
    format!("{x}")
}
