//! Per-iteration metrics and their CSV form.
//!
//! Reals are written with 17 significant digits (`{:.16e}`), which is
//! enough for every `f64` to parse back to the identical value. Missing
//! values are empty fields.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const CSV_HEADER: &str =
    "iteration,rms_value_error,mle_loss,ekf_loss,cov_trace,grad_or_innovation_norm,wall_ms";

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub iteration: usize,
    pub rms_value_error: f64,
    pub mle_loss: f64,
    /// Blank for SGD runs.
    pub ekf_loss: Option<f64>,
    /// Blank for SGD runs.
    pub cov_trace: Option<f64>,
    /// Gradient norm for SGD, innovation norm for KOVA.
    pub grad_or_innovation_norm: f64,
    /// Blank unless wall-clock timing was requested.
    pub wall_ms: Option<f64>,
}

fn push_real(out: &mut String, v: f64) {
    write!(out, "{v:.16e}").expect("writing to a String");
}

fn push_opt(out: &mut String, v: Option<f64>) {
    if let Some(v) = v {
        push_real(out, v);
    }
}

pub fn format_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::with_capacity(CSV_HEADER.len() + 1 + rows.len() * 160);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in rows {
        write!(out, "{}", row.iteration).expect("writing to a String");
        out.push(',');
        push_real(&mut out, row.rms_value_error);
        out.push(',');
        push_real(&mut out, row.mle_loss);
        out.push(',');
        push_opt(&mut out, row.ekf_loss);
        out.push(',');
        push_opt(&mut out, row.cov_trace);
        out.push(',');
        push_real(&mut out, row.grad_or_innovation_norm);
        out.push(',');
        push_opt(&mut out, row.wall_ms);
        out.push('\n');
    }
    out
}

pub fn emit_csv(rows: &[MetricsRow], path: &Path) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_err)?;
    }
    std::fs::write(path, format_csv(rows)).map_err(io_err)
}

pub fn parse_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => {
            return Err(Error::InvalidArgument(format!(
                "unexpected metrics header {other:?}"
            )))
        }
    }
    let bad =
        |line: usize, msg: String| Error::InvalidArgument(format!("metrics line {line}: {msg}"));
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(bad(
                lineno,
                format!("expected 7 fields, found {}", fields.len()),
            ));
        }
        let real = |i: usize| -> Result<f64> {
            fields[i]
                .parse::<f64>()
                .map_err(|e| bad(lineno, format!("field {}: {e}", i + 1)))
        };
        let opt = |i: usize| -> Result<Option<f64>> {
            if fields[i].is_empty() {
                Ok(None)
            } else {
                real(i).map(Some)
            }
        };
        rows.push(MetricsRow {
            iteration: fields[0]
                .parse()
                .map_err(|e| bad(lineno, format!("iteration: {e}")))?,
            rms_value_error: real(1)?,
            mle_loss: real(2)?,
            ekf_loss: opt(3)?,
            cov_trace: opt(4)?,
            grad_or_innovation_norm: real(5)?,
            wall_ms: opt(6)?,
        });
    }
    Ok(rows)
}
