//! Per-step trace records, written as JSON lines.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Linear,
    Robust,
    Outer,
}

/// One inner or outer step. Residuals are measured in the `H̃⁻¹`-norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub phase: Phase,
    pub iteration: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mu: Option<f64>,
    pub residual_before: f64,
    pub residual_after: f64,
    /// 1 or 2 when the step updated the preconditioner.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub certificate: Option<u8>,
    /// Exact `ln ℰ(H̃⁻¹H)` after the step, only when verification is on.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub excentricity_log: Option<f64>,
    pub gradient_queries: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub step_size: Option<f64>,
}

impl TraceEvent {
    pub fn new(phase: Phase, iteration: usize) -> Self {
        TraceEvent {
            phase,
            iteration,
            mu: None,
            residual_before: 0.0,
            residual_after: 0.0,
            certificate: None,
            excentricity_log: None,
            gradient_queries: 0,
            step_size: None,
        }
    }
}

pub fn write_jsonl<W: Write>(mut out: W, events: &[TraceEvent]) -> Result<()> {
    for e in events {
        let line = serde_json::to_string(e).expect("trace events always serialize");
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_jsonl(text: &str) -> Result<Vec<TraceEvent>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| crate::Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}
