//! Time-stamped conserved and localized quantities, and their CSV form.
//!
//! Columns are `t,E,Q,P`, then `E_j,Q_j,P_j` for each soliton, then
//! `S_localized,H1L2_error`. Floats are written with 17 significant digits
//! so a re-parse reproduces every value bit for bit.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub time: f64,
    pub energy: f64,
    pub charge: f64,
    pub momentum: f64,
    pub local_energy: Vec<f64>,
    pub local_charge: Vec<f64>,
    pub local_momentum: Vec<f64>,
    pub localized_action: f64,
    /// `‖U(t) - R(t)‖_{H¹×L²}` against the exact sum.
    pub error: f64,
}

impl DiagnosticsRecord {
    pub fn solitons(&self) -> usize {
        self.local_energy.len()
    }
}

pub fn csv_header(solitons: usize) -> String {
    let mut cols = vec!["t".to_string(), "E".into(), "Q".into(), "P".into()];
    for j in 1..=solitons {
        cols.extend([format!("E_{j}"), format!("Q_{j}"), format!("P_{j}")]);
    }
    cols.extend(["S_localized".to_string(), "H1L2_error".into()]);
    cols.join(",")
}

/// 17 significant digits.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_csv<W: Write>(out: &mut W, records: &[DiagnosticsRecord]) -> Result<()> {
    let n = records.first().map_or(0, DiagnosticsRecord::solitons);
    writeln!(out, "{}", csv_header(n))?;
    for r in records {
        if r.solitons() != n || r.local_charge.len() != n || r.local_momentum.len() != n {
            return Err(Error::CountMismatch { what: "localized columns", expected: n, found: r.solitons() });
        }
        let mut vals = vec![r.time, r.energy, r.charge, r.momentum];
        for j in 0..n {
            vals.extend([r.local_energy[j], r.local_charge[j], r.local_momentum[j]]);
        }
        vals.extend([r.localized_action, r.error]);
        let line: Vec<String> = vals.into_iter().map(format_float).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn read_csv<R: BufRead>(input: R) -> Result<Vec<DiagnosticsRecord>> {
    let mut lines = input.lines();
    let header = lines.next().ok_or(Error::Csv { line: 1, message: "missing header".into() })??;
    let cols = header.split(',').count();
    if cols < 6 || (cols - 6) % 3 != 0 {
        return Err(Error::Csv { line: 1, message: format!("unexpected column count {cols}") });
    }
    let n = (cols - 6) / 3;
    if header.trim() != csv_header(n) {
        return Err(Error::Csv { line: 1, message: "unexpected column names".into() });
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 2;
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Csv { line: lineno, message: e.to_string() })?;
        if vals.len() != cols {
            return Err(Error::Csv { line: lineno, message: format!("expected {cols} fields, found {}", vals.len()) });
        }
        let local = |k: usize| (0..n).map(|j| vals[4 + 3 * j + k]).collect();
        out.push(DiagnosticsRecord {
            time: vals[0],
            energy: vals[1],
            charge: vals[2],
            momentum: vals[3],
            local_energy: local(0),
            local_charge: local(1),
            local_momentum: local(2),
            localized_action: vals[cols - 2],
            error: vals[cols - 1],
        });
    }
    Ok(out)
}
