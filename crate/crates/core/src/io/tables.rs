//! CSV views: convergence traces and the oracle table.

use crate::instance::Fleet;
use crate::mcts::{ConvergenceTrace, Phase, TraceRow};
use crate::oracle::OracleResult;
use thiserror::Error;

pub const TRACE_HEADER: [&str; 5] = ["phase", "evaluations", "wall_seconds", "incumbent_kJ", "assignment"];

#[derive(Debug, Error)]
pub enum TableError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("bad trace row {row}: {message}")]
    Row { row: usize, message: String },
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    let bytes = w.into_inner().expect("writing to memory cannot fail");
    String::from_utf8(bytes).expect("csv output is utf-8")
}

/// Trace as CSV. Wall time sits in its own column so runs can be compared
/// with it excluded.
pub fn trace_to_csv(trace: &ConvergenceTrace) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRACE_HEADER).expect("in-memory write");
    for r in &trace.rows {
        w.write_record([
            r.phase.as_str().to_string(),
            r.evaluations.to_string(),
            format!("{:.6}", r.wall_seconds),
            r.incumbent_kj.to_string(),
            r.assignment.clone(),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

pub fn trace_from_csv(text: &str) -> Result<ConvergenceTrace, TableError> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let headers = rd.headers()?.clone();
    if headers.iter().ne(TRACE_HEADER) {
        return Err(TableError::Row {
            row: 0,
            message: format!("unexpected header {headers:?}"),
        });
    }
    let mut trace = ConvergenceTrace::default();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let bad = |message: String| TableError::Row { row: i + 1, message };
        let field = |k: usize| rec.get(k).unwrap_or_default();
        trace.push(TraceRow {
            phase: field(0).parse::<Phase>().map_err(bad)?,
            evaluations: field(1).parse().map_err(|_| bad(format!("bad evaluations {:?}", field(1))))?,
            wall_seconds: field(2).parse().map_err(|_| bad(format!("bad wall_seconds {:?}", field(2))))?,
            incumbent_kj: field(3).parse().map_err(|_| bad(format!("bad incumbent {:?}", field(3))))?,
            assignment: field(4).to_string(),
        });
    }
    Ok(trace)
}

/// One row per enumerated assignment: a `0/1` string per robot marking the
/// tasks it serves (task 1 first), the cost and a feasibility flag.
pub fn oracle_to_csv(result: &OracleResult, fleet: &Fleet) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["index".to_string()];
    header.extend(fleet.robots.iter().map(|r| format!("robot_{}", r.id)));
    header.extend(["cost_kJ".to_string(), "feasible".to_string()]);
    w.write_record(&header).expect("in-memory write");
    for (i, row) in result.table.iter().enumerate() {
        let mut rec = vec![i.to_string()];
        for robot in 0..fleet.len() {
            rec.push(row.assignment.0.iter().map(|&r| if r == robot { '1' } else { '0' }).collect());
        }
        rec.push(row.cost.map_or_else(String::new, |c| c.to_string()));
        rec.push(row.cost.is_some().to_string());
        w.write_record(&rec).expect("in-memory write");
    }
    finish(w)
}
