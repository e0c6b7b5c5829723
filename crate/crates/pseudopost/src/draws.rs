//! Draws as CSV (header = parameter names) with a JSON sidecar.
//!
//! Floats are written in Rust's shortest round-trip form, so a write/read
//! cycle is bit-exact.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use pseudopost_core::sampler::DrawsMatrix;
use pseudopost_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawsMeta {
    /// "posterior" or "adjusted".
    pub kind: String,
    pub seed: u64,
    pub config_hash: String,
    pub names: Vec<String>,
    pub chains: usize,
    pub draws: usize,
    /// Seconds since the Unix epoch; the only field that varies between
    /// identical runs.
    pub created_unix: u64,
}

impl DrawsMeta {
    pub fn new(kind: &str, seed: u64, config_hash: String, draws: &DrawsMatrix, chains: usize) -> Self {
        DrawsMeta {
            kind: kind.to_string(),
            seed,
            config_hash,
            names: draws.names().to_vec(),
            chains,
            draws: draws.len(),
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
        }
    }
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn write_draws(path: &Path, draws: &DrawsMatrix, meta: &DrawsMeta) -> Result<()> {
    let mut out = String::with_capacity(draws.len() * draws.dim() * 20);
    out.push_str(&draws.names().join(","));
    out.push('\n');
    for row in draws.matrix().row_iter() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format!("{v:?}"));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| CliError::io(path, e))?;
    let json = serde_json::to_string_pretty(meta).expect("metadata serializes");
    let mpath = meta_path(path);
    let mut f = fs::File::create(&mpath).map_err(|e| CliError::io(&mpath, e))?;
    writeln!(f, "{json}").map_err(|e| CliError::io(&mpath, e))
}

/// Read a draws file; the sidecar is optional.
pub fn read_draws(path: &Path) -> Result<(DrawsMatrix, Option<DrawsMeta>)> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let names: Vec<String> = match lines.next() {
        Some((_, h)) if !h.trim().is_empty() => h.split(',').map(|s| s.trim().to_string()).collect(),
        _ => return Err(CliError::parse(path, 1, "missing header")),
    };
    let d = names.len();
    let mut data = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let before = data.len();
        for field in line.split(',') {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| CliError::parse(path, i as u64 + 1, format!("'{field}' is not a number")))?;
            data.push(v);
        }
        if data.len() - before != d {
            return Err(CliError::parse(
                path,
                i as u64 + 1,
                format!("expected {d} fields, found {}", data.len() - before),
            ));
        }
    }
    if data.is_empty() {
        return Err(CliError::parse(path, 2, "no draws"));
    }
    let rows = data.len() / d;
    let draws = DrawsMatrix::new(Matrix::from_row_major(rows, d, data)?, names)?;

    let mpath = meta_path(path);
    let meta = match fs::read_to_string(&mpath) {
        Ok(s) => Some(
            serde_json::from_str(&s)
                .map_err(|e| CliError::parse(&mpath, e.line() as u64, e.to_string()))?,
        ),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(CliError::io(&mpath, e)),
    };
    Ok((draws, meta))
}
