//! Text artifacts: header-commented matrix files and flat key-value records.
//!
//! Both formats start with `# key: value` header lines. Every file carries
//! the config hash, the seed and a SHA-256 of its data payload (the
//! non-header lines), which [`verify_text`] recomputes. Floats are written
//! in shortest round-trip scientific notation.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const KEY_CONFIG_HASH: &str = "config_hash";
pub const KEY_SEED: &str = "seed";
pub const KEY_PAYLOAD: &str = "payload_sha256";
pub const KEY_FORMAT: &str = "format";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:e}")
}

fn check_key(k: &str) -> Result<()> {
    if k.is_empty() || k.contains(':') || k.contains('=') || k.contains(char::is_whitespace) {
        return Err(Error::Validation(format!("invalid key '{k}'")));
    }
    Ok(())
}

fn check_value(v: &str) -> Result<()> {
    if v.contains('\n') || v.contains('\r') {
        return Err(Error::Validation("values must be single-line".into()));
    }
    Ok(())
}

fn render_header(
    out: &mut String,
    format: &str,
    header: &[(String, String)],
    config_hash: &str,
    seed: u64,
    payload: &str,
) {
    let _ = writeln!(out, "# {KEY_FORMAT}: {format}");
    let _ = writeln!(out, "# {KEY_CONFIG_HASH}: {config_hash}");
    let _ = writeln!(out, "# {KEY_SEED}: {seed}");
    let _ = writeln!(out, "# {KEY_PAYLOAD}: {}", sha256_hex(payload.as_bytes()));
    for (k, v) in header {
        let _ = writeln!(out, "# {k}: {v}");
    }
}

fn split_header(text: &str) -> Result<(Vec<(String, String)>, String)> {
    let mut header = Vec::new();
    let mut payload = String::new();
    let mut in_header = true;
    for line in text.lines() {
        if in_header {
            if let Some(rest) = line.strip_prefix("# ") {
                let (k, v) = rest
                    .split_once(": ")
                    .or_else(|| rest.strip_suffix(':').map(|k| (k, "")))
                    .ok_or_else(|| Error::Parse(format!("malformed header line '{line}'")))?;
                header.push((k.to_string(), v.to_string()));
                continue;
            }
            in_header = false;
        }
        payload.push_str(line);
        payload.push('\n');
    }
    Ok((header, payload))
}

fn lookup<'a>(header: &'a [(String, String)], key: &str) -> Option<&'a str> {
    header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

/// Columns of floats plus free-form header metadata.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MatrixText {
    pub header: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl MatrixText {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: Vec::new(),
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn meta(mut self, key: &str, value: impl ToString) -> Self {
        self.header.push((key.to_string(), value.to_string()));
        self
    }

    pub fn push_meta(&mut self, key: &str, value: impl ToString) {
        self.header.push((key.to_string(), value.to_string()));
    }

    pub fn push_row(&mut self, row: Vec<f64>) -> Result<()> {
        if !self.columns.is_empty() && row.len() != self.columns.len() {
            return Err(Error::InvalidDimension(format!(
                "row has {} values, expected {}",
                row.len(),
                self.columns.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn get_meta(&self, key: &str) -> Option<&str> {
        lookup(&self.header, key)
    }

    fn payload(&self) -> String {
        let mut s = String::new();
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(|&x| fmt_f64(x)).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn render(&self, config_hash: &str, seed: u64) -> Result<String> {
        for (k, v) in &self.header {
            check_key(k)?;
            check_value(v)?;
        }
        let payload = self.payload();
        let mut out = String::new();
        render_header(&mut out, "matrix", &self.header, config_hash, seed, &payload);
        let _ = writeln!(out, "# columns: {}", self.columns.join(" "));
        out.push_str(&payload);
        Ok(out)
    }

    pub fn write(&self, path: &Path, config_hash: &str, seed: u64) -> Result<()> {
        fs::write(path, self.render(config_hash, seed)?)?;
        Ok(())
    }

    /// Parses a rendered file; the reserved header keys stay in `header`.
    pub fn parse(text: &str) -> Result<Self> {
        let (mut header, payload) = split_header(text)?;
        let columns = match header.iter().position(|(k, _)| k == "columns") {
            Some(i) => header.remove(i).1.split_whitespace().map(String::from).collect(),
            None => Vec::new(),
        };
        let mut rows = Vec::new();
        for line in payload.lines().filter(|l| !l.trim().is_empty()) {
            let row: std::result::Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
            rows.push(row.map_err(|e| Error::Parse(format!("bad number in '{line}': {e}")))?);
        }
        Ok(Self { header, columns, rows })
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

/// Flat `key = value` record.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KvRecord {
    pub header: Vec<(String, String)>,
    pub entries: Vec<(String, String)>,
}

impl KvRecord {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) {
        self.header.push((key.to_string(), value.to_string()));
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        let v = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = v,
            None => self.entries.push((key.to_string(), v)),
        }
    }

    pub fn set_f64(&mut self, key: &str, value: f64) {
        self.set(key, fmt_f64(value));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        lookup(&self.entries, key)
    }

    pub fn get_f64(&self, key: &str) -> Result<f64> {
        let v = self
            .get(key)
            .ok_or_else(|| Error::Parse(format!("missing key '{key}'")))?;
        v.parse()
            .map_err(|e| Error::Parse(format!("key '{key}': cannot parse '{v}': {e}")))
    }

    fn payload(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn render(&self, config_hash: &str, seed: u64) -> Result<String> {
        for (k, v) in self.header.iter().chain(&self.entries) {
            check_key(k)?;
            check_value(v)?;
        }
        let payload = self.payload();
        let mut out = String::new();
        render_header(&mut out, "kv", &self.header, config_hash, seed, &payload);
        out.push_str(&payload);
        Ok(out)
    }

    pub fn write(&self, path: &Path, config_hash: &str, seed: u64) -> Result<()> {
        fs::write(path, self.render(config_hash, seed)?)?;
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let (header, payload) = split_header(text)?;
        let mut entries = Vec::new();
        for line in payload.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| Error::Parse(format!("expected 'key = value', got '{line}'")))?;
            entries.push((k.trim().to_string(), v.to_string()));
        }
        Ok(Self { header, entries })
    }
}

/// Result of checking one artifact.
#[derive(Clone, Debug, PartialEq)]
pub struct Verification {
    pub config_hash: String,
    pub seed: u64,
    pub payload_ok: bool,
}

/// Recomputes the payload hash of a rendered artifact and, when given,
/// compares the embedded config hash against `expected_config`.
pub fn verify_text(text: &str, expected_config: Option<&str>) -> Result<Verification> {
    let (header, payload) = split_header(text)?;
    let get = |k: &str| lookup(&header, k).ok_or_else(|| Error::Parse(format!("missing header '{k}'")));
    let config_hash = get(KEY_CONFIG_HASH)?.to_string();
    let seed = get(KEY_SEED)?
        .parse()
        .map_err(|e| Error::Parse(format!("bad seed: {e}")))?;
    let payload_ok = get(KEY_PAYLOAD)? == sha256_hex(payload.as_bytes());
    if let Some(exp) = expected_config {
        if exp != config_hash {
            return Err(Error::Validation(format!(
                "config hash mismatch: file has {config_hash}, expected {exp}"
            )));
        }
    }
    Ok(Verification {
        config_hash,
        seed,
        payload_ok,
    })
}
