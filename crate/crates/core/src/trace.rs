//! Per-iteration run records and their CSV form.

use std::io::Write;
use std::path::Path;

use crate::error::Result;

/// Column header shared by every trace file.
pub const CSV_HEADER: [&str; 7] = [
    "iter",
    "f",
    "grad_norm",
    "consensus_gap",
    "dx_fro",
    "max_s_norm",
    "wall_ms",
];

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub f: f64,
    pub grad_norm: f64,
    pub consensus_gap: f64,
    /// `||X(t+1) - X(t)||_F` for the step ending at this row.
    pub dx_fro: f64,
    /// Largest `||s_j||` this tick (asynchronous runs only).
    pub max_s_norm: Option<f64>,
    /// Elapsed time since the run started; only filled when timing is on.
    pub wall_ms: Option<f64>,
    /// `|decrease - predicted decrease|` for a synchronous sweep. Not written
    /// to CSV.
    pub decrease_residual: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl Trace {
    pub fn push(&mut self, row: TraceRow) {
        self.rows.push(row);
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Writes the trace as CSV. Floats use the shortest round-trip form, so
    /// identical runs give identical bytes.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.iter.to_string(),
                r.f.to_string(),
                r.grad_norm.to_string(),
                r.consensus_gap.to_string(),
                r.dx_fro.to_string(),
                opt(r.max_s_norm),
                opt(r.wall_ms),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}
