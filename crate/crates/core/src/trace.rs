//! JSONL step traces.
//!
//! A trace file starts with one header line (schema name and version, run
//! identity and the stream hash) followed by one [`StepRecord`] per line.
//! Floats are written with six significant digits.

use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::Xxh3;

use crate::env::Scenario;
use crate::error::{Error, Result};
use crate::learning::{LossRecord, StepRecord};
use crate::metrics::round_sig6;

pub const TRACE_SCHEMA: &str = "bandit-router-trace";
pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema: String,
    pub version: u32,
    pub scenario: String,
    pub policy: String,
    pub seed: u64,
    /// Digest of the scenario, the seed and the realized query stream; equal
    /// across policies run on the same scenario and seed.
    pub stream_hash: String,
}

impl TraceHeader {
    pub fn new(scenario: &str, policy: &str, seed: u64, stream_hash: u64) -> Self {
        Self {
            schema: TRACE_SCHEMA.to_string(),
            version: TRACE_VERSION,
            scenario: scenario.to_string(),
            policy: policy.to_string(),
            seed,
            stream_hash: format!("{stream_hash:016x}"),
        }
    }
}

/// Hashes what a policy cannot influence: scenario, seed and the queries served.
pub fn stream_hash(scenario: &Scenario, seed: u64, records: &[StepRecord]) -> Result<u64> {
    let mut h = Xxh3::new();
    h.update(&serde_json::to_vec(scenario)?);
    h.update(&seed.to_le_bytes());
    for r in records {
        h.update(r.phase.name().as_bytes());
        h.update(&r.step.to_le_bytes());
        h.update(r.hidden_type.name().as_bytes());
        h.update(r.query.as_bytes());
        h.update(&[0]);
    }
    Ok(h.digest())
}

fn round_opt(v: Option<f64>) -> Option<f64> {
    v.map(round_sig6)
}

/// The record as it is stored in a trace.
pub fn round_record(r: &StepRecord) -> StepRecord {
    let mut out = r.clone();
    out.z = r.z.as_ref().map(|z| z.iter().copied().map(round_sig6).collect());
    out.outcome.recall = round_sig6(r.outcome.recall);
    out.outcome.delay = round_sig6(r.outcome.delay);
    out.losses = r.losses.as_ref().map(|l| LossRecord {
        hit: round_opt(l.hit),
        recall: round_opt(l.recall),
        efficiency: round_opt(l.efficiency),
        total: round_sig6(l.total),
    });
    out.sim_clock = round_sig6(r.sim_clock);
    out.oracle_p_hit = round_sig6(r.oracle_p_hit);
    out.chosen_p_hit = round_sig6(r.chosen_p_hit);
    out
}

pub fn record_line(r: &StepRecord) -> Result<String> {
    Ok(serde_json::to_string(&round_record(r))?)
}

pub fn write_trace(path: &Path, header: &TraceHeader, records: &[StepRecord]) -> Result<()> {
    let io = |e| Error::io(path, e);
    let file = std::fs::File::create(path).map_err(io)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{}", serde_json::to_string(header)?).map_err(io)?;
    for r in records {
        writeln!(w, "{}", record_line(r)?).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub header: Option<TraceHeader>,
    pub records: Vec<StepRecord>,
}

/// Parses trace text. A header line is accepted anywhere but only the first
/// one is kept; blank lines are skipped.
pub fn parse_trace(text: &str) -> Result<Trace> {
    let mut header = None;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line)
            .map_err(|e| Error::domain(format!("trace line {}: {e}", i + 1)))?;
        if value.get("schema").is_some() {
            let h: TraceHeader = serde_json::from_value(value)
                .map_err(|e| Error::domain(format!("trace line {}: bad header: {e}", i + 1)))?;
            if h.schema != TRACE_SCHEMA || h.version > TRACE_VERSION {
                return Err(Error::domain(format!(
                    "trace line {}: unsupported schema {} v{}",
                    i + 1,
                    h.schema,
                    h.version
                )));
            }
            header.get_or_insert(h);
        } else {
            let r = serde_json::from_value(value)
                .map_err(|e| Error::domain(format!("trace line {}: {e}", i + 1)))?;
            records.push(r);
        }
    }
    Ok(Trace { header, records })
}

pub fn read_trace(path: &Path) -> Result<Trace> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trace(&text)
}
