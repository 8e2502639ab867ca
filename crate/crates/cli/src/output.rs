//! File formats.
//!
//! CSV files start with one `#` metadata line carrying the tool version,
//! config hash and seed as `key=value` pairs. Matrix files then hold a
//! `N,M` row and `N` rows of `M` values (row = receiver, column = source).
//! Floats use 17 significant digits so a file replays bit-exactly.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::Value;

use crate::error::CliError;

pub const TOOL: &str = "eddyscan";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
}

impl Meta {
    pub fn new(config_hash: String, seed: u64) -> Self {
        Self {
            tool: TOOL.into(),
            version: VERSION.into(),
            config_hash,
            seed,
        }
    }

    pub fn header_line(&self, extra: &[(&str, String)]) -> String {
        let mut line = format!(
            "# {} version={} config_sha256={} seed={}",
            self.tool, self.version, self.config_hash, self.seed
        );
        for (k, v) in extra {
            line.push_str(&format!(" {k}={v}"));
        }
        line
    }
}

/// `{:.16e}`: 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    Ok(BufWriter::new(fs::File::create(path).map_err(|e| CliError::io(path, e))?))
}

pub fn write_csv(
    path: &Path,
    meta: &Meta,
    extra: &[(&str, String)],
    header: &str,
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<(), CliError> {
    let mut out = create(path)?;
    let io = |e| CliError::io(path, e);
    writeln!(out, "{}", meta.header_line(extra)).map_err(io)?;
    writeln!(out, "{header}").map_err(io)?;
    for row in rows {
        writeln!(out, "{}", row.join(",")).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn write_matrix_csv(path: &Path, meta: &Meta, extra: &[(&str, String)], m: &DMatrix<f64>) -> Result<(), CliError> {
    let mut out = create(path)?;
    let io = |e| CliError::io(path, e);
    writeln!(out, "{}", meta.header_line(extra)).map_err(io)?;
    writeln!(out, "{},{}", m.nrows(), m.ncols()).map_err(io)?;
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        writeln!(out, "{}", line.join(",")).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Matrix plus the `key=value` pairs of its metadata line.
pub fn read_matrix_csv(path: &Path) -> Result<(DMatrix<f64>, BTreeMap<String, String>), CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let bad = |msg: String| CliError::Input {
        path: path.display().to_string(),
        msg,
    };
    let mut meta = BTreeMap::new();
    let mut dims: Option<(usize, usize)> = None;
    let mut values = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            for kv in rest.split_whitespace() {
                if let Some((k, v)) = kv.split_once('=') {
                    meta.insert(k.to_string(), v.to_string());
                }
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        match dims {
            None => {
                let parse = |s: &str| s.parse::<usize>().map_err(|_| bad(format!("bad dimension row `{line}`")));
                if fields.len() != 2 {
                    return Err(bad(format!("expected `N,M` row, got `{line}`")));
                }
                dims = Some((parse(fields[0])?, parse(fields[1])?));
            }
            Some((_, m)) => {
                if fields.len() != m {
                    return Err(bad(format!("row with {} values, expected {m}", fields.len())));
                }
                for f in fields {
                    values.push(f.parse::<f64>().map_err(|_| bad(format!("bad number `{f}`")))?);
                }
            }
        }
    }
    let (n, m) = dims.ok_or_else(|| bad("missing `N,M` row".into()))?;
    if values.len() != n * m {
        return Err(bad(format!("expected {} rows, got {}", n, values.len() / m.max(1))));
    }
    Ok((DMatrix::from_row_slice(n, m, &values), meta))
}

/// Writes `body` (a JSON object) with a leading `meta` entry.
pub fn write_json(path: &Path, meta: &Meta, body: Value) -> Result<(), CliError> {
    let doc = with_meta(meta, body);
    let mut out = create(path)?;
    let io = |e| CliError::io(path, e);
    serde_json::to_writer_pretty(&mut out, &doc).map_err(|e| CliError::io(path, e.into()))?;
    writeln!(out).map_err(io)?;
    out.flush().map_err(io)
}

pub fn with_meta(meta: &Meta, body: Value) -> Value {
    let mut doc = serde_json::Map::new();
    doc.insert("meta".into(), serde_json::to_value(meta).expect("meta serializes"));
    match body {
        Value::Object(map) => doc.extend(map),
        other => {
            doc.insert("data".into(), other);
        }
    }
    Value::Object(doc)
}
