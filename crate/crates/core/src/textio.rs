//! Plain-text persistence formats.
//!
//! Two formats cover every artifact on disk:
//!
//! * key/value blocks — `key = value` lines, `#` comments, blank lines
//!   ignored; used for configs, manifests, and model parameters;
//! * headered numeric matrices — a `matrix <rows> <cols>` header followed by
//!   one comma-separated row per line, every value printed with 17
//!   significant digits so reruns are byte-identical.

use crate::error::{CoreError, Result};
use crate::linalg::Matrix;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

/// 17 significant digits; round-trips f64 exactly.
pub fn format_f64(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else if v == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{v:.16e}")
    }
}

pub fn parse_f64(s: &str) -> Result<f64> {
    match s.trim() {
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        t => t
            .parse::<f64>()
            .map_err(|e| CoreError::parse("number", format!("`{t}`: {e}"))),
    }
}

/// An ordered list of `key = value` pairs.
#[derive(Debug, Clone, Default)]
pub struct KvBlock {
    entries: Vec<(String, String)>,
}

impl KvBlock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_str(&mut self, key: &str, value: impl AsRef<str>) {
        let value = value.as_ref().to_string();
        if let Some(slot) = self.entries.iter_mut().find(|(k, _)| k == key) {
            slot.1 = value;
        } else {
            self.entries.push((key.to_string(), value));
        }
    }

    pub fn set_f64(&mut self, key: &str, v: f64) {
        self.set_str(key, format_f64(v));
    }

    pub fn set_usize(&mut self, key: &str, v: usize) {
        self.set_str(key, v.to_string());
    }

    pub fn set_u64(&mut self, key: &str, v: u64) {
        self.set_str(key, v.to_string());
    }

    pub fn set_f64_list(&mut self, key: &str, values: &[f64]) {
        let joined: Vec<String> = values.iter().map(|&v| format_f64(v)).collect();
        self.set_str(key, joined.join(","));
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.iter().any(|(k, _)| k == key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    pub fn get_str(&self, key: &str) -> Result<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| CoreError::parse("kv", format!("missing key `{key}`")))
    }

    pub fn get_opt(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Result<f64> {
        parse_f64(self.get_str(key)?)
    }

    pub fn get_usize(&self, key: &str) -> Result<usize> {
        let s = self.get_str(key)?;
        s.trim()
            .parse::<usize>()
            .map_err(|e| CoreError::parse("kv", format!("key `{key}`: {e}")))
    }

    pub fn get_u64(&self, key: &str) -> Result<u64> {
        let s = self.get_str(key)?;
        s.trim()
            .parse::<u64>()
            .map_err(|e| CoreError::parse("kv", format!("key `{key}`: {e}")))
    }

    pub fn get_f64_list(&self, key: &str) -> Result<Vec<f64>> {
        let s = self.get_str(key)?;
        if s.trim().is_empty() {
            return Ok(Vec::new());
        }
        s.split(',').map(parse_f64).collect()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut block = KvBlock::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CoreError::parse(
                    format!("line {}", lineno + 1),
                    format!("expected `key = value`, got `{line}`"),
                ));
            };
            let key = key.trim();
            if block.contains(key) {
                return Err(CoreError::parse(
                    format!("line {}", lineno + 1),
                    format!("duplicate key `{key}`"),
                ));
            }
            block.set_str(key, value.trim());
        }
        Ok(block)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
        Self::parse(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.render().as_bytes())
    }
}

pub fn render_matrix(m: &Matrix) -> String {
    let mut out = String::with_capacity(m.rows() * m.cols() * 26 + 32);
    let _ = writeln!(out, "matrix {} {}", m.rows(), m.cols());
    for row in m.iter_rows() {
        let mut first = true;
        for &v in row {
            if !first {
                out.push(',');
            }
            out.push_str(&format_f64(v));
            first = false;
        }
        out.push('\n');
    }
    out
}

pub fn parse_matrix(text: &str) -> Result<Matrix> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| {
        CoreError::parse("matrix", "empty file")
    })?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some("matrix") {
        return Err(CoreError::parse("matrix", "missing `matrix` header"));
    }
    let rows: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| CoreError::parse("matrix", "bad row count"))?;
    let cols: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| CoreError::parse("matrix", "bad column count"))?;
    let mut data = Vec::with_capacity(rows * cols);
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        if i >= rows {
            return Err(CoreError::parse("matrix", "more rows than header declares"));
        }
        for field in line.split(',') {
            data.push(parse_f64(field)?);
        }
    }
    if data.len() != rows * cols {
        return Err(CoreError::parse(
            "matrix",
            format!("expected {} values, got {}", rows * cols, data.len()),
        ));
    }
    Ok(Matrix::from_vec(rows, cols, data))
}

pub fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    write_atomic(path, render_matrix(m).as_bytes())
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    let text =
        fs::read_to_string(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    parse_matrix(&text)
}

/// Write via a sibling temp file and rename, so readers never observe a
/// partially written artifact.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| CoreError::io(parent.display().to_string(), e))?;
        }
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| CoreError::io(tmp.display().to_string(), e))?;
    fs::rename(&tmp, path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    Ok(())
}
