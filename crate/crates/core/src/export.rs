//! Sweep output serialization: CSV (17 significant digits, LF endings) and a
//! JSON mirror. Both round-trip bit-exactly, so reruns can be diffed against
//! archived outputs byte for byte.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scenario::SweepRecord;

pub const CSV_HEADER: &str = "eps_t,psi_t,eps_r,psi_r,peb_deg_pct,oeb_deg_pct,n_ok,n_fail";

/// `{:.16e}` prints 17 significant digits, enough to reconstruct any f64
/// exactly on re-parse.
fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Render records as CSV text (header always present, LF endings only).
pub fn to_csv(records: &[SweepRecord]) -> String {
    let mut out = String::with_capacity(64 + records.len() * 128);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            fmt_f64(r.eps_t),
            fmt_f64(r.psi_t),
            fmt_f64(r.eps_r),
            fmt_f64(r.psi_r),
            fmt_f64(r.peb_deg_pct),
            fmt_f64(r.oeb_deg_pct),
            r.n_ok,
            r.n_fail
        ));
    }
    out
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io { path: path.display().to_string(), source: e }
}

pub fn write_csv_file(path: &Path, records: &[SweepRecord]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(io_err(path))?;
    f.write_all(to_csv(records).as_bytes()).map_err(io_err(path))?;
    Ok(())
}

/// Parse CSV text produced by [`to_csv`].
pub fn from_csv(text: &str, path_for_errors: &str) -> Result<Vec<SweepRecord>> {
    let parse_err = |message: String| Error::Parse {
        path: path_for_errors.to_string(),
        message,
    };
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => {
            return Err(parse_err(format!(
                "expected header `{CSV_HEADER}`, found {other:?}"
            )))
        }
    }
    let mut records = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(parse_err(format!(
                "line {}: expected 8 fields, found {}",
                lineno + 2,
                fields.len()
            )));
        }
        let f = |i: usize| -> Result<f64> {
            fields[i]
                .parse()
                .map_err(|e| parse_err(format!("line {}: field {}: {}", lineno + 2, i + 1, e)))
        };
        let u = |i: usize| -> Result<u64> {
            fields[i]
                .parse()
                .map_err(|e| parse_err(format!("line {}: field {}: {}", lineno + 2, i + 1, e)))
        };
        records.push(SweepRecord {
            eps_t: f(0)?,
            psi_t: f(1)?,
            eps_r: f(2)?,
            psi_r: f(3)?,
            peb_deg_pct: f(4)?,
            oeb_deg_pct: f(5)?,
            n_ok: u(6)?,
            n_fail: u(7)?,
        });
    }
    Ok(records)
}

pub fn read_csv_file(path: &Path) -> Result<Vec<SweepRecord>> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    from_csv(&text, &path.display().to_string())
}

/// JSON mirror of the CSV (an array of record objects). serde_json prints
/// floats with the shortest exact representation, so this round-trips too.
pub fn to_json(records: &[SweepRecord]) -> String {
    serde_json::to_string_pretty(records).expect("records are plain numbers")
}

pub fn write_json_file(path: &Path, records: &[SweepRecord]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(io_err(path))?;
    f.write_all(to_json(records).as_bytes()).map_err(io_err(path))?;
    f.write_all(b"\n").map_err(io_err(path))?;
    Ok(())
}

pub fn read_json_file(path: &Path) -> Result<Vec<SweepRecord>> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}
