//! Trace CSV: header `k,indices,fbe,phi_z,residual,wall_ns`, LF line endings,
//! shortest round-trip float formatting. Indices are 0-based and separated
//! by `;`; the final row of a run has none.

use std::io::Write;
use std::path::Path;

use bcprox::bc::TraceRow;

use crate::error::{io_err, BenchError, Result};

pub const HEADER: [&str; 6] = ["k", "indices", "fbe", "phi_z", "residual", "wall_ns"];

/// Shortest decimal string that parses back to the same `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:?}")
}

fn format_indices(indices: &[usize]) -> String {
    indices.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(";")
}

pub fn write_trace<W: Write>(out: W, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(HEADER)?;
    for r in rows {
        w.write_record([
            r.k.to_string(),
            format_indices(&r.indices),
            format_float(r.fbe),
            format_float(r.phi_z),
            format_float(r.residual),
            r.wall_ns.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn trace_to_string(rows: &[TraceRow]) -> String {
    let mut buf = Vec::new();
    write_trace(&mut buf, rows).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("trace CSV is ASCII")
}

pub fn write_trace_file(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    write_trace(std::io::BufWriter::new(file), rows)
}

pub fn parse_trace(text: &str) -> Result<Vec<TraceRow>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = r.headers()?.clone();
    if header.iter().ne(HEADER) {
        return Err(BenchError::Trace(format!("unexpected header {header:?}")));
    }
    let bad = |what: &str, line: usize| BenchError::Trace(format!("line {line}: bad {what}"));
    let mut rows = Vec::new();
    for (n, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = n + 2;
        let float = |j: usize, what: &str| rec[j].parse::<f64>().map_err(|_| bad(what, line));
        let indices = if rec[1].is_empty() {
            Vec::new()
        } else {
            rec[1]
                .split(';')
                .map(|s| s.parse::<usize>().map_err(|_| bad("indices", line)))
                .collect::<Result<Vec<_>>>()?
        };
        rows.push(TraceRow {
            k: rec[0].parse().map_err(|_| bad("k", line))?,
            indices,
            fbe: float(2, "fbe")?,
            phi_z: float(3, "phi_z")?,
            residual: float(4, "residual")?,
            wall_ns: rec[5].parse().map_err(|_| bad("wall_ns", line))?,
        });
    }
    Ok(rows)
}

pub fn read_trace_file(path: &Path) -> Result<Vec<TraceRow>> {
    parse_trace(&std::fs::read_to_string(path).map_err(io_err(path))?)
}
