use std::io::Write;

use serde::{Deserialize, Serialize};

/// One line of the trajectory log: an agent's state at the start of a round
/// and what it planned from there.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub t: f64,
    pub id: usize,
    pub pos: [f64; 3],
    pub vel: [f64; 3],
    pub acc: [f64; 3],
    pub attractor: [f64; 3],
    /// Intermediate goal of this round.
    pub goal: [f64; 3],
    /// Wall-clock solve time; `null` when timing is not recorded.
    pub solve_ms: Option<f64>,
    pub residual: f64,
    pub converged: bool,
}

pub fn write_jsonl<W: Write>(records: &[LogRecord], mut w: W) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
