//! FGRID v1 text frames.
//!
//! ```text
//! #FGRID v1
//! source: goes17
//! time: 2020-09-27T18:00:00Z
//! n1: 2
//! n2: 2
//! origin: 38.0 -123.0
//! step: 0.04 0.04
//! 1 2
//! NaN 4
//! ```

use std::fmt::Write as _;
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use log::warn;
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::{Field, GridSpec};

pub const MAGIC: &str = "#FGRID v1";

/// Physical range of aerosol optical depth products.
pub const AOD_BOUNDS: (f64, f64) = (-0.05, 5.0);

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ParseOptions {
    /// Accepted value range; `None` disables the check.
    pub bounds: Option<(f64, f64)>,
    /// Out-of-range values are an error when set, otherwise they become missing.
    pub strict: bool,
}

impl ParseOptions {
    pub fn aod(strict: bool) -> Self {
        Self {
            bounds: Some(AOD_BOUNDS),
            strict,
        }
    }
}

/// One time-stamped gridded frame from one source.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationFrame {
    pub source_id: String,
    pub timestamp: DateTime<Utc>,
    pub grid: GridSpec,
    pub field: Field,
}

impl ObservationFrame {
    pub fn missing_count(&self) -> usize {
        self.field.missing_count()
    }

    pub fn observed_count(&self) -> usize {
        self.grid.len() - self.missing_count()
    }
}

pub fn parse_frame(bytes: &[u8], opts: &ParseOptions) -> Result<ObservationFrame> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse {
        line: 0,
        msg: format!("not UTF-8: {e}"),
    })?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut lines = text.split('\n').enumerate().map(|(i, l)| (i + 1, l));
    let perr = |line: usize, msg: String| Error::Parse { line, msg };

    let mut next = |want: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((n, l)) => Ok((n, l.to_string())),
            None => Err(perr(0, format!("unexpected end of input, expected {want}"))),
        }
    };

    let (n, magic) = next("magic line")?;
    if magic != MAGIC {
        return Err(perr(n, format!("expected '{MAGIC}', got '{magic}'")));
    }
    let field = |next: &mut dyn FnMut(&str) -> Result<(usize, String)>, key: &str| {
        let (n, l) = next(key)?;
        let rest = l
            .strip_prefix(key)
            .and_then(|r| r.strip_prefix(':'))
            .ok_or_else(|| perr(n, format!("expected '{key}:' header, got '{l}'")))?;
        Ok::<_, Error>((n, rest.trim().to_string()))
    };

    let (_, source_id) = field(&mut next, "source")?;
    if source_id.is_empty() || source_id.contains(char::is_whitespace) {
        return Err(perr(2, format!("invalid source id '{source_id}'")));
    }
    let (tn, time) = field(&mut next, "time")?;
    let timestamp = DateTime::parse_from_rfc3339(&time)
        .map_err(|e| perr(tn, format!("bad RFC3339 time '{time}': {e}")))?
        .with_timezone(&Utc);
    let int = |(n, v): (usize, String)| {
        v.parse::<usize>()
            .map_err(|_| perr(n, format!("bad integer '{v}'")))
    };
    let n1 = int(field(&mut next, "n1")?)?;
    let n2 = int(field(&mut next, "n2")?)?;
    let pair = |(n, v): (usize, String)| -> Result<(f64, f64)> {
        let parts: Vec<&str> = v.split_whitespace().collect();
        match parts.as_slice() {
            [a, b] => Ok((
                a.parse().map_err(|_| perr(n, format!("bad number '{a}'")))?,
                b.parse().map_err(|_| perr(n, format!("bad number '{b}'")))?,
            )),
            _ => Err(perr(n, format!("expected two numbers, got '{v}'"))),
        }
    };
    let origin = pair(field(&mut next, "origin")?)?;
    let step = pair(field(&mut next, "step")?)?;
    let grid = GridSpec::with_geo(n1, n2, origin.0, origin.1, step.0, step.1)?;

    let mut values = DMatrix::<f64>::zeros(n1, n2);
    let mut observed = DMatrix::from_element(n1, n2, true);
    let mut rows = 0usize;
    let mut trailer: Vec<(usize, String)> = Vec::new();
    for (ln, line) in lines {
        if rows == n1 {
            trailer.push((ln, line.to_string()));
            continue;
        }
        if line.trim().is_empty() {
            trailer.push((ln, line.to_string()));
            continue;
        }
        if !trailer.is_empty() {
            let (bn, _) = trailer[0];
            return Err(perr(bn, "blank line inside data block".into()));
        }
        let cells: Vec<&str> = line.split_whitespace().collect();
        if cells.len() != n2 {
            return Err(Error::DimensionMismatch(format!(
                "line {ln}: {} values, expected n2 = {n2}",
                cells.len()
            )));
        }
        for (j, c) in cells.iter().enumerate() {
            if *c == "NaN" {
                observed[(rows, j)] = false;
                values[(rows, j)] = f64::NAN;
                continue;
            }
            let v: f64 = c
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| perr(ln, format!("non-numeric cell '{c}'")))?;
            if let Some((lo, hi)) = opts.bounds {
                if v < lo || v > hi {
                    if opts.strict {
                        return Err(Error::OutOfBounds {
                            value: v,
                            row: rows,
                            col: j,
                            lo,
                            hi,
                        });
                    }
                    warn!("value {v} at ({rows}, {j}) outside [{lo}, {hi}], treated as missing");
                    observed[(rows, j)] = false;
                    values[(rows, j)] = f64::NAN;
                    continue;
                }
            }
            values[(rows, j)] = v;
        }
        rows += 1;
    }
    if rows != n1 {
        return Err(Error::DimensionMismatch(format!(
            "{rows} data rows, expected n1 = {n1}"
        )));
    }
    // only a single terminating newline may follow the data block
    match trailer.as_slice() {
        [] => {}
        [(_, l)] if l.is_empty() => {}
        [(n, _), ..] => return Err(perr(*n, "trailing content after data block".into())),
    }
    Ok(ObservationFrame {
        source_id,
        timestamp,
        grid,
        field: Field::with_mask(values, observed)?,
    })
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

/// Serialize a frame. Values use the shortest round-trip decimal form.
pub fn write_frame(frame: &ObservationFrame) -> String {
    let g = &frame.grid;
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "source: {}", frame.source_id);
    let _ = writeln!(out, "time: {}", format_timestamp(&frame.timestamp));
    let _ = writeln!(out, "n1: {}", g.n1);
    let _ = writeln!(out, "n2: {}", g.n2);
    let _ = writeln!(out, "origin: {} {}", g.origin_lat, g.origin_lon);
    let _ = writeln!(out, "step: {} {}", g.step_lat, g.step_lon);
    for i in 0..g.n1 {
        for j in 0..g.n2 {
            if j > 0 {
                out.push(' ');
            }
            if frame.field.is_observed(i, j) {
                let _ = write!(out, "{}", frame.field.values[(i, j)]);
            } else {
                out.push_str("NaN");
            }
        }
        out.push('\n');
    }
    out
}

pub fn read_frame(path: &Path, opts: &ParseOptions) -> Result<ObservationFrame> {
    let bytes = std::fs::read(path)?;
    parse_frame(&bytes, opts).map_err(|e| match e {
        Error::Parse { line, msg } => Error::Parse {
            line,
            msg: format!("{}: {msg}", path.display()),
        },
        other => other,
    })
}
