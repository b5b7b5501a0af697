//! CSV files read and written by the commands.
//!
//! | file         | header                                                                      |
//! |--------------|-----------------------------------------------------------------------------|
//! | measurements | `k,z11,z12,z21,z22`                                                         |
//! | truth        | `k,x,y`                                                                     |
//! | track output | `k,x,y,b1,b2,iterations,converged`                                          |
//! | crlb         | `k,pos_crlb_root,bias1_crlb_root,bias2_crlb_root`                           |
//! | mc report    | `k,pos_rmse,pos_crlb_root,bias1_rmse,bias1_crlb_root,bias2_rmse,bias2_crlb_root` |
//!
//! Reals are written as `{:.16e}` (17 significant digits), which parses back
//! to the identical `f64`. `converged` is `1` or `0`.

use std::io::{Read, Write};

use thiserror::Error;

use crate::crlb::CrlbValues;
use crate::estimator::StepResult;
use crate::model::{ClockBias, MeasurementFrame, Point, TargetPosition};
use crate::sim::McRow;

pub const MEASUREMENT_HEADER: [&str; 5] = ["k", "z11", "z12", "z21", "z22"];
pub const TRUTH_HEADER: [&str; 3] = ["k", "x", "y"];
pub const TRACK_HEADER: [&str; 7] = ["k", "x", "y", "b1", "b2", "iterations", "converged"];
pub const CRLB_HEADER: [&str; 4] = ["k", "pos_crlb_root", "bias1_crlb_root", "bias2_crlb_root"];
pub const MC_HEADER: [&str; 7] =
    ["k", "pos_rmse", "pos_crlb_root", "bias1_rmse", "bias1_crlb_root", "bias2_rmse", "bias2_crlb_root"];

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("line {line}: column `{column}`: cannot parse `{value}`")]
    Parse { line: u64, column: String, value: String },
    #[error("line {line}: expected k = {expected}, got {got}")]
    StepSequence { line: u64, expected: usize, got: usize },
    #[error("no data rows")]
    Empty,
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for DataError {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map(|p| p.line()).unwrap_or(0);
        match e.into_kind() {
            csv::ErrorKind::Io(io) => DataError::Io(io),
            other => DataError::Malformed { line, message: format!("{other:?}") },
        }
    }
}

pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_rows<W: Write, const N: usize>(
    out: W,
    header: [&str; N],
    rows: impl Iterator<Item = [String; N]>,
) -> Result<(), DataError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Rows of a CSV table with the named columns pulled out by header name.
struct Table {
    rows: Vec<(u64, Vec<String>)>,
}

fn read_table<R: Read, const N: usize>(input: R, columns: [&str; N]) -> Result<Table, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = rdr.headers()?.clone();
    let mut idx = [0usize; N];
    for (slot, name) in idx.iter_mut().zip(columns) {
        *slot = header.iter().position(|h| h == name).ok_or_else(|| DataError::MissingColumn(name.to_string()))?;
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let fields = idx.iter().map(|&i| rec.get(i).unwrap_or("").to_string()).collect();
        rows.push((line, fields));
    }
    if rows.is_empty() {
        return Err(DataError::Empty);
    }
    Ok(Table { rows })
}

fn parse_real(line: u64, column: &str, value: &str) -> Result<f64, DataError> {
    value.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| DataError::Parse {
        line,
        column: column.to_string(),
        value: value.to_string(),
    })
}

fn parse_count(line: u64, column: &str, value: &str) -> Result<usize, DataError> {
    value.parse::<usize>().map_err(|_| DataError::Parse { line, column: column.to_string(), value: value.to_string() })
}

/// Checks that `k` runs 1, 2, 3, ... and returns it.
fn step_index(line: u64, value: &str, expected: usize) -> Result<usize, DataError> {
    let k = parse_count(line, "k", value)?;
    if k != expected {
        return Err(DataError::StepSequence { line, expected, got: k });
    }
    Ok(k)
}

pub fn write_measurements<W: Write>(out: W, frames: &[MeasurementFrame]) -> Result<(), DataError> {
    write_rows(
        out,
        MEASUREMENT_HEADER,
        frames
            .iter()
            .map(|f| [f.step.to_string(), fmt_real(f.z[0]), fmt_real(f.z[1]), fmt_real(f.z[2]), fmt_real(f.z[3])]),
    )
}

pub fn read_measurements<R: Read>(input: R) -> Result<Vec<MeasurementFrame>, DataError> {
    let table = read_table(input, MEASUREMENT_HEADER)?;
    table
        .rows
        .iter()
        .enumerate()
        .map(|(i, (line, f))| {
            let k = step_index(*line, &f[0], i + 1)?;
            let mut z = [0.0; 4];
            for c in 0..4 {
                z[c] = parse_real(*line, MEASUREMENT_HEADER[c + 1], &f[c + 1])?;
            }
            Ok(MeasurementFrame::new(k, z))
        })
        .collect()
}

pub fn write_truth<W: Write>(out: W, truth: &[TargetPosition]) -> Result<(), DataError> {
    write_rows(
        out,
        TRUTH_HEADER,
        truth.iter().enumerate().map(|(i, p)| [(i + 1).to_string(), fmt_real(p.x), fmt_real(p.y)]),
    )
}

pub fn read_truth<R: Read>(input: R) -> Result<Vec<TargetPosition>, DataError> {
    let table = read_table(input, TRUTH_HEADER)?;
    table
        .rows
        .iter()
        .enumerate()
        .map(|(i, (line, f))| {
            step_index(*line, &f[0], i + 1)?;
            Ok(Point::new(parse_real(*line, "x", &f[1])?, parse_real(*line, "y", &f[2])?))
        })
        .collect()
}

pub fn write_track<W: Write>(out: W, results: &[StepResult]) -> Result<(), DataError> {
    write_rows(
        out,
        TRACK_HEADER,
        results.iter().map(|r| {
            [
                r.step.to_string(),
                fmt_real(r.position.x),
                fmt_real(r.position.y),
                fmt_real(r.bias.b1),
                fmt_real(r.bias.b2),
                r.iterations.to_string(),
                u8::from(r.converged).to_string(),
            ]
        }),
    )
}

pub fn read_track<R: Read>(input: R) -> Result<Vec<StepResult>, DataError> {
    let table = read_table(input, TRACK_HEADER)?;
    table
        .rows
        .iter()
        .enumerate()
        .map(|(i, (line, f))| {
            let step = step_index(*line, &f[0], i + 1)?;
            let converged = match f[6].as_str() {
                "1" => true,
                "0" => false,
                other => return Err(DataError::Parse { line: *line, column: "converged".into(), value: other.into() }),
            };
            Ok(StepResult {
                step,
                position: Point::new(parse_real(*line, "x", &f[1])?, parse_real(*line, "y", &f[2])?),
                bias: ClockBias::new(parse_real(*line, "b1", &f[3])?, parse_real(*line, "b2", &f[4])?),
                iterations: parse_count(*line, "iterations", &f[5])?,
                converged,
                bias_held: false,
            })
        })
        .collect()
}

/// Writes square roots of the bounds.
pub fn write_crlb<W: Write>(out: W, values: &[CrlbValues]) -> Result<(), DataError> {
    write_rows(
        out,
        CRLB_HEADER,
        values.iter().enumerate().map(|(i, v)| {
            [(i + 1).to_string(), fmt_real(v.pos.sqrt()), fmt_real(v.bias1.sqrt()), fmt_real(v.bias2.sqrt())]
        }),
    )
}

/// Reads the square-rooted bounds back as `[pos, bias1, bias2]` per step.
pub fn read_crlb<R: Read>(input: R) -> Result<Vec<[f64; 3]>, DataError> {
    let table = read_table(input, CRLB_HEADER)?;
    table
        .rows
        .iter()
        .enumerate()
        .map(|(i, (line, f))| {
            step_index(*line, &f[0], i + 1)?;
            let mut v = [0.0; 3];
            for c in 0..3 {
                v[c] = parse_real(*line, CRLB_HEADER[c + 1], &f[c + 1])?;
            }
            Ok(v)
        })
        .collect()
}

pub fn write_mc_rows<W: Write>(out: W, rows: &[McRow]) -> Result<(), DataError> {
    write_rows(
        out,
        MC_HEADER,
        rows.iter().map(|r| {
            [
                r.k.to_string(),
                fmt_real(r.pos_rmse),
                fmt_real(r.pos_crlb_root),
                fmt_real(r.bias1_rmse),
                fmt_real(r.bias1_crlb_root),
                fmt_real(r.bias2_rmse),
                fmt_real(r.bias2_crlb_root),
            ]
        }),
    )
}

pub fn read_mc_rows<R: Read>(input: R) -> Result<Vec<McRow>, DataError> {
    let table = read_table(input, MC_HEADER)?;
    table
        .rows
        .iter()
        .enumerate()
        .map(|(i, (line, f))| {
            let k = step_index(*line, &f[0], i + 1)?;
            let v = |c: usize| parse_real(*line, MC_HEADER[c], &f[c]);
            Ok(McRow {
                k,
                pos_rmse: v(1)?,
                pos_crlb_root: v(2)?,
                bias1_rmse: v(3)?,
                bias1_crlb_root: v(4)?,
                bias2_rmse: v(5)?,
                bias2_crlb_root: v(6)?,
            })
        })
        .collect()
}
