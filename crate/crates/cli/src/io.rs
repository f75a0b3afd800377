//! Draws files.
//!
//! CSV: a header row naming parameter columns plus the reserved columns
//! `.log_prior`, and either `.log_lik` (joint) or `.log_lik.1` ... `.log_lik.N`,
//! and optionally `.chain`. Other dot-prefixed columns (`.iteration`,
//! `.draw`, ...) are ignored. NDJSON: one object per draw with the same keys.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde_json::{Map, Value};

use powerscale_core::{validate_draws, DrawsMatrix, RawDraws};

use crate::error::{CliError, Result};

pub const LOG_PRIOR: &str = ".log_prior";
pub const LOG_LIK: &str = ".log_lik";
pub const CHAIN: &str = ".chain";

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum DrawsFormat {
    Csv,
    Ndjson,
}

impl DrawsFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "csv" => Some(DrawsFormat::Csv),
            "ndjson" | "jsonl" => Some(DrawsFormat::Ndjson),
            _ => None,
        }
    }
}

impl FromStr for DrawsFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "csv" => Ok(DrawsFormat::Csv),
            "ndjson" => Ok(DrawsFormat::Ndjson),
            other => Err(format!("unknown draws format `{other}`")),
        }
    }
}

/// Where each kind of column sits in a row.
#[derive(Debug)]
struct Layout {
    params: Vec<usize>,
    names: Vec<String>,
    log_prior: usize,
    log_lik: Vec<usize>,
    chain: Option<usize>,
}

impl Layout {
    fn from_columns(columns: &[String]) -> Result<Self> {
        let mut params = Vec::new();
        let mut names = Vec::new();
        let mut log_prior = None;
        let mut joint = None;
        let mut numbered: Vec<(usize, usize)> = Vec::new();
        let mut chain = None;
        for (i, col) in columns.iter().enumerate() {
            let col = col.as_str();
            if col == LOG_PRIOR {
                set_once(&mut log_prior, i, col)?;
            } else if col == LOG_LIK {
                set_once(&mut joint, i, col)?;
            } else if col == CHAIN {
                set_once(&mut chain, i, col)?;
            } else if let Some(k) = col.strip_prefix(".log_lik.") {
                let k: usize = k.parse().ok().filter(|k| *k >= 1).ok_or_else(|| {
                    CliError::parse(1, Some(i + 1), format!("bad column `{col}`"))
                })?;
                if numbered.iter().any(|(kk, _)| *kk == k) {
                    return Err(CliError::parse(
                        1,
                        Some(i + 1),
                        format!("duplicate column `{col}`"),
                    ));
                }
                numbered.push((k, i));
            } else if !col.starts_with('.') {
                params.push(i);
                names.push(col.to_string());
            }
        }
        let log_prior =
            log_prior.ok_or_else(|| CliError::MissingReservedColumn(LOG_PRIOR.into()))?;
        let log_lik = match (joint, numbered.is_empty()) {
            (Some(_), false) => return Err(CliError::MixedLikColumns),
            (Some(j), true) => vec![j],
            (None, true) => return Err(CliError::MissingReservedColumn(LOG_LIK.into())),
            (None, false) => {
                numbered.sort_unstable();
                for (expected, (k, _)) in (1..).zip(&numbered) {
                    if *k != expected {
                        return Err(CliError::MissingReservedColumn(format!(
                            ".log_lik.{expected}"
                        )));
                    }
                }
                numbered.into_iter().map(|(_, i)| i).collect()
            }
        };
        Ok(Layout {
            params,
            names,
            log_prior,
            log_lik,
            chain,
        })
    }
}

fn set_once(slot: &mut Option<usize>, i: usize, col: &str) -> Result<()> {
    if slot.replace(i).is_some() {
        return Err(CliError::parse(
            1,
            Some(i + 1),
            format!("duplicate column `{col}`"),
        ));
    }
    Ok(())
}

/// Accumulates rows and turns them into validated draws.
struct Builder {
    layout: Layout,
    values: Vec<f64>,
    log_prior: Vec<f64>,
    log_lik: Vec<f64>,
    chains: Vec<u32>,
    lines: Vec<usize>,
}

impl Builder {
    fn new(columns: &[String]) -> Result<Self> {
        Ok(Builder {
            layout: Layout::from_columns(columns)?,
            values: Vec::new(),
            log_prior: Vec::new(),
            log_lik: Vec::new(),
            chains: Vec::new(),
            lines: Vec::new(),
        })
    }

    /// Reads the used cells of one row; ignored columns are never parsed.
    fn push(&mut self, line: usize, cell: impl Fn(usize) -> Result<f64>) -> Result<()> {
        for &i in &self.layout.params {
            self.values.push(cell(i)?);
        }
        self.log_prior.push(cell(self.layout.log_prior)?);
        for &i in &self.layout.log_lik {
            self.log_lik.push(cell(i)?);
        }
        if let Some(i) = self.layout.chain {
            let v = cell(i)?;
            if !(v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64) {
                return Err(CliError::parse(
                    line,
                    Some(i + 1),
                    format!("chain id {v} is not a nonnegative integer"),
                ));
            }
            self.chains.push(v as u32);
        }
        self.lines.push(line);
        Ok(())
    }

    fn finish(self, columns: &[String]) -> Result<DrawsMatrix> {
        let s = self.lines.len();
        let d = self.layout.params.len();
        let n = self.layout.log_lik.len();
        let raw = RawDraws {
            parameter_names: self.layout.names.clone(),
            values: DMatrix::from_row_slice(s, d, &self.values),
            log_prior: self.log_prior,
            log_lik: DMatrix::from_row_slice(s, n, &self.log_lik),
            chain_ids: self.layout.chain.map(|_| self.chains),
        };
        let joint = self.layout.log_lik[0];
        let lines = self.lines;
        validate_draws(raw).map_err(|e| match e {
            powerscale_core::Error::NonFiniteValue { row, column } => {
                // A joint `.log_lik` column is reported as `.log_lik.1`.
                let col = columns
                    .iter()
                    .position(|c| *c == column)
                    .or((column == ".log_lik.1").then_some(joint));
                CliError::parse(
                    lines[row],
                    col.map(|c| c + 1),
                    format!("non-finite value in `{column}`"),
                )
            }
            other => other.into(),
        })
    }
}

pub fn read_csv<R: Read>(reader: R) -> Result<DrawsMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let columns: Vec<String> = rdr
        .headers()
        .map_err(csv_error)?
        .iter()
        .map(str::to_string)
        .collect();
    let mut builder = Builder::new(&columns)?;
    let mut record = csv::StringRecord::new();
    while rdr.read_record(&mut record).map_err(csv_error)? {
        let line = record.position().map_or(0, |p| p.line() as usize);
        builder.push(line, |i| {
            let raw = record.get(i).unwrap_or("");
            raw.parse::<f64>().map_err(|_| {
                CliError::parse(
                    line,
                    Some(i + 1),
                    format!("`{raw}` in column `{}` is not a number", columns[i]),
                )
            })
        })?;
    }
    builder.finish(&columns)
}

fn csv_error(e: csv::Error) -> CliError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.kind() {
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => CliError::parse(
            line,
            None,
            format!("expected {expected_len} fields, found {len}"),
        ),
        _ => CliError::parse(line, None, e.to_string()),
    }
}

pub fn read_ndjson<R: Read>(reader: R) -> Result<DrawsMatrix> {
    let mut state: Option<(Vec<String>, Builder)> = None;
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| CliError::parse(lineno, None, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let obj: Map<String, Value> = serde_json::from_str(&line)
            .map_err(|e| CliError::parse(lineno, Some(e.column()), e.to_string()))?;
        let (columns, builder) = match &mut state {
            Some(st) => st,
            None => {
                let columns: Vec<String> = obj.keys().cloned().collect();
                let builder = Builder::new(&columns)?;
                state.insert((columns, builder))
            }
        };
        if obj.len() != columns.len() {
            return Err(CliError::parse(
                lineno,
                None,
                format!("expected {} keys, found {}", columns.len(), obj.len()),
            ));
        }
        builder.push(lineno, |i| {
            let key = &columns[i];
            match obj.get(key) {
                Some(Value::Number(n)) => Ok(n.as_f64().unwrap_or(f64::NAN)),
                Some(other) => Err(CliError::parse(
                    lineno,
                    None,
                    format!("`{key}` is not a number: {other}"),
                )),
                None => Err(CliError::parse(
                    lineno,
                    None,
                    format!("missing key `{key}`"),
                )),
            }
        })?;
    }
    match state {
        Some((columns, builder)) => builder.finish(&columns),
        None => Err(CliError::parse(1, None, "no draws")),
    }
}

pub fn read_draws(path: &Path, format: Option<DrawsFormat>) -> Result<DrawsMatrix> {
    let format = format
        .or_else(|| DrawsFormat::from_path(path))
        .unwrap_or(DrawsFormat::Csv);
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let result = match format {
        DrawsFormat::Csv => read_csv(file),
        DrawsFormat::Ndjson => read_ndjson(file),
    };
    result.map_err(|e| match e {
        CliError::ParseError {
            line,
            column,
            message,
        } => CliError::ParseError {
            line,
            column,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

fn reserved_names(draws: &DrawsMatrix) -> Vec<String> {
    let mut names = draws.parameter_names().to_vec();
    names.push(LOG_PRIOR.into());
    if draws.n_obs() == 1 {
        names.push(LOG_LIK.into());
    } else {
        names.extend((1..=draws.n_obs()).map(|k| format!(".log_lik.{k}")));
    }
    if draws.chain_ids().is_some() {
        names.push(CHAIN.into());
    }
    names
}

fn row_values(draws: &DrawsMatrix, i: usize) -> Vec<f64> {
    let mut row: Vec<f64> = draws.values().row(i).iter().copied().collect();
    row.push(draws.log_prior()[i]);
    row.extend(draws.log_lik().row(i).iter());
    if let Some(chains) = draws.chain_ids() {
        row.push(chains[i] as f64);
    }
    row
}

pub fn write_csv<W: Write>(draws: &DrawsMatrix, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{}", reserved_names(draws).join(","))?;
    let mut line = String::new();
    for i in 0..draws.n_draws() {
        line.clear();
        for (k, v) in row_values(draws, i).iter().enumerate() {
            if k > 0 {
                line.push(',');
            }
            let _ = write!(line, "{v}");
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn write_ndjson<W: Write>(draws: &DrawsMatrix, mut out: W) -> std::io::Result<()> {
    let names = reserved_names(draws);
    for i in 0..draws.n_draws() {
        let obj: Map<String, Value> = names
            .iter()
            .cloned()
            .zip(row_values(draws, i).into_iter().map(Value::from))
            .collect();
        writeln!(out, "{}", Value::Object(obj))?;
    }
    Ok(())
}
