use std::fmt::Write as _;
use std::io::Write;

use mx_core::ledger::{Boundary, TransferLedger, TERM_NAMES};
use mx_core::Validated;
use serde::Serialize;

use crate::error::CliError;

/// One CSV record as ordered (column, value) pairs.
pub type Row = Vec<(String, String)>;

fn push(row: &mut Row, key: impl Into<String>, value: impl ToString) {
    row.push((key.into(), value.to_string()));
}

pub fn config_columns(name: Option<&str>, v: &Validated) -> Row {
    let mut row = Row::new();
    push(&mut row, "name", name.unwrap_or(""));
    push(&mut row, "kind", kind_name(v));
    for (k, x) in [("problem_m", v.problem.m), ("problem_n", v.problem.n), ("problem_k", v.problem.k)] {
        push(&mut row, k, x);
    }
    for (k, x) in [("tile_m", v.tile.m), ("tile_n", v.tile.n), ("tile_k", v.tile.k)] {
        push(&mut row, k, x);
    }
    let opt = |x: Option<usize>| x.map(|x| x.to_string()).unwrap_or_default();
    push(&mut row, "sub_m", opt(v.sub.map(|s| s.m)));
    push(&mut row, "sub_n", opt(v.sub.map(|s| s.n)));
    push(&mut row, "sub_k", opt(v.sub.map(|s| s.k)));
    push(&mut row, "bcast", opt(v.sub.map(|s| s.bcast)));
    push(&mut row, "element", v.machine.element);
    push(&mut row, "cores", v.machine.cores);
    push(&mut row, "fpus", v.machine.fpus);
    row
}

pub fn ledger_columns(row: &mut Row, l: &TransferLedger) {
    for b in Boundary::ALL {
        for (name, x) in TERM_NAMES.iter().zip(l.get(b).as_array()) {
            push(row, format!("{}_{}", b.name(), name), x);
        }
    }
}

pub fn metric(row: &mut Row, key: &str, value: impl ToString) {
    push(row, key, value);
}

pub fn write_csv(rows: &[Row]) -> Result<(), CliError> {
    let stdout = std::io::stdout();
    let mut w = csv::Writer::from_writer(stdout.lock());
    let csv_err = |e: csv::Error| CliError::Validation(format!("writing CSV: {e}"));
    if let Some(first) = rows.first() {
        w.write_record(first.iter().map(|(k, _)| k)).map_err(csv_err)?;
    }
    for row in rows {
        w.write_record(row.iter().map(|(_, v)| v)).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::Io { path: "<stdout>".into(), source: e })
}

pub fn write_json(value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("reports serialize");
    let mut out = std::io::stdout().lock();
    writeln!(out, "{text}").map_err(|e| CliError::Io { path: "<stdout>".into(), source: e })
}

pub fn kind_name(v: &Validated) -> &'static str {
    if v.sub.is_some() {
        "mx"
    } else {
        "baseline"
    }
}

pub fn describe(name: Option<&str>, v: &Validated) -> String {
    let mut s = String::new();
    if let Some(n) = name {
        let _ = write!(s, "{n}: ");
    }
    let _ = write!(s, "{} {} tile {}", kind_name(v), v.problem, v.tile);
    if let Some(sub) = v.sub {
        let _ = write!(s, " sub {sub}");
    }
    let _ = write!(s, " {} x{} cores", v.machine.element, v.machine.cores);
    s
}

/// Ledger as a boundary × term grid, optionally beside a second ledger.
pub fn ledger_table(l: &TransferLedger, other: Option<&TransferLedger>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<10}{:>12}{:>12}{:>12}{:>12}{:>12}", "boundary", "A↓", "B↓", "C/D↓", "D↑", "total");
    for b in Boundary::ALL {
        let t = l.get(b);
        let _ = write!(s, "{:<10}", b.name());
        for x in t.as_array() {
            let _ = write!(s, "{x:>12}");
        }
        let _ = write!(s, "{:>12}", t.total());
        if let Some(o) = other {
            let diff: Vec<String> = TERM_NAMES
                .iter()
                .zip(t.as_array().iter().zip(o.get(b).as_array()))
                .filter(|(_, (x, y))| **x != *y)
                .map(|(n, (x, y))| format!("{n} {x}→{y}"))
                .collect();
            if !diff.is_empty() {
                let _ = write!(s, "   measured differs: {}", diff.join(", "));
            }
        }
        s.push('\n');
    }
    s
}
