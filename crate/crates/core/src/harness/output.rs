use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use crate::bundle::{Trace, TraceEvent};
use crate::error::{Error, Result};

/// Hex SHA-256 of the canonical JSON of the config.
pub fn config_hash(config: &ExperimentConfig) -> Result<String> {
    let bytes = serde_json::to_vec(config)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })
}

/// Header line followed by one JSON object per record.
pub fn write_jsonl<H: Serialize>(path: &Path, header: &H, trace: &Trace) -> Result<()> {
    let mut w = create(path)?;
    let io = |source| Error::Io {
        path: path.to_owned(),
        source,
    };
    serde_json::to_writer(&mut w, header)?;
    w.write_all(b"\n").map_err(io)?;
    for rec in &trace.records {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

fn event_name(e: &TraceEvent) -> &'static str {
    match e {
        TraceEvent::Step => "step",
        TraceEvent::MatchingPair { .. } => "matching_pair",
        TraceEvent::BoundUpdate => "bound_update",
        TraceEvent::Restart => "restart",
        TraceEvent::Certificate => "certificate",
        TraceEvent::Outer { .. } => "outer",
    }
}

#[derive(Serialize)]
struct Row {
    iter: usize,
    oracle_calls: u64,
    f_gap: Option<f64>,
    dist: Option<f64>,
    event: &'static str,
}

/// Columns `iter, oracle_calls, f_gap, dist, event`; gaps are blank without an optimal value.
pub fn write_csv(path: &Path, trace: &Trace, fstar: Option<f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for rec in &trace.records {
        w.serialize(Row {
            iter: rec.iter,
            oracle_calls: rec.oracle_calls,
            f_gap: fstar.map(|f| rec.fx - f),
            dist: rec.dist_to_xstar,
            event: event_name(&rec.event),
        })?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}
