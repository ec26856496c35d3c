//! Per-iteration optimizer trace as CSV.

use std::io::Write;
use std::path::Path;

use texsynth_core::lbfgs::{IterationRecord, RunTrace};

pub const HEADER: [&str; 5] = ["iter", "loss", "grad_inf_norm", "step", "fevals"];

pub fn write_trace<W: Write>(trace: &RunTrace, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for r in &trace.records {
        w.write_record([
            r.iteration.to_string(),
            r.loss.to_string(),
            r.grad_inf_norm.to_string(),
            r.step.to_string(),
            r.fevals.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_trace(trace: &RunTrace, path: impl AsRef<Path>) -> csv::Result<()> {
    write_trace(trace, std::fs::File::create(path)?)
}

pub fn read_trace(path: impl AsRef<Path>) -> csv::Result<RunTrace> {
    let mut rd = csv::Reader::from_path(path)?;
    let mut records = Vec::new();
    for row in rd.records() {
        let row = row?;
        let field = |i: usize| row.get(i).unwrap_or_default();
        let parse = |i: usize| field(i).parse::<f64>().map_err(|e| bad_row(&row, e));
        records.push(IterationRecord {
            iteration: field(0).parse().map_err(|e| bad_row(&row, e))?,
            loss: parse(1)?,
            grad_inf_norm: parse(2)?,
            step: parse(3)?,
            fevals: field(4).parse().map_err(|e| bad_row(&row, e))?,
        });
    }
    Ok(RunTrace { records })
}

fn bad_row(row: &csv::StringRecord, e: impl std::fmt::Display) -> csv::Error {
    csv::Error::from(std::io::Error::new(
        std::io::ErrorKind::InvalidData,
        format!("bad trace row {row:?}: {e}"),
    ))
}
