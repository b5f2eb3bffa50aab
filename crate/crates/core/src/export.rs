//! Attention-weight images (binary PGM) and matrices (CSV).
//!
//! Rows are output steps and columns are encoder frames. Pixel values are
//! `round(255 * w)`, so weight 1 is white.

use std::fs;
use std::path::{Path, PathBuf};

use crate::decoding::AttentionTrace;
use crate::error::{Error, Result};

fn check_matrix(rows: &[Vec<f64>]) -> Result<usize> {
    let width = rows.first().map_or(0, Vec::len);
    if width == 0 {
        return Err(Error::Contract("attention matrix is empty".into()));
    }
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::Contract("attention rows differ in length".into()));
    }
    Ok(width)
}

pub fn pgm_bytes(rows: &[Vec<f64>]) -> Result<Vec<u8>> {
    let width = check_matrix(rows)?;
    let mut out = format!("P5\n{width} {}\n255\n", rows.len()).into_bytes();
    out.extend(
        rows.iter()
            .flatten()
            .map(|&w| (w.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    Ok(out)
}

/// Grayscale image decoded from binary PGM with max value 255.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

pub fn parse_pgm(bytes: &[u8]) -> Result<Pgm> {
    let bad = |m: &str| Error::Format(format!("PGM: {m}"));
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII header"))?);
    }
    if fields[0] != "P5" {
        return Err(bad("not a binary graymap"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad number"));
    let (width, height, max) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if max != 255 {
        return Err(bad("max value must be 255"));
    }
    if pos >= bytes.len() {
        return Err(bad("missing raster"));
    }
    let raster = &bytes[pos + 1..];
    let n = width
        .checked_mul(height)
        .filter(|&n| n == raster.len())
        .ok_or_else(|| bad("raster size does not match header"))?;
    Ok(Pgm {
        width,
        height,
        pixels: raster[..n].to_vec(),
    })
}

pub fn csv_text(rows: &[Vec<f64>]) -> Result<String> {
    check_matrix(rows)?;
    let mut out = String::new();
    for row in rows {
        let cells: Vec<String> = row.iter().map(|w| w.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_csv(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|c| {
                c.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::parse(i + 1, format!("bad number {c:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::parse(i + 1, format!("expected {} columns, got {}", first.len(), row.len())));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::parse(0, "no rows"));
    }
    Ok(rows)
}

/// Writes `<stem>.head<n>.<kind>.pgm` and `.csv` per head into `dir`.
pub fn export_attention(trace: &AttentionTrace, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    if trace.heads() == 0 || trace.steps() == 0 {
        return Err(Error::Contract("attention trace is empty".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for (n, rows) in trace.weights.iter().enumerate() {
        let kind = trace
            .kinds
            .get(n)
            .map_or_else(|| "head".to_string(), |k| k.short_name().to_ascii_lowercase());
        let base = dir.join(format!("{stem}.head{n}.{kind}"));
        let pgm = base.with_extension(format!("{kind}.pgm"));
        fs::write(&pgm, pgm_bytes(rows)?).map_err(|e| Error::io(&pgm, e))?;
        let csv = base.with_extension(format!("{kind}.csv"));
        fs::write(&csv, csv_text(rows)?).map_err(|e| Error::io(&csv, e))?;
        written.push(pgm);
        written.push(csv);
    }
    Ok(written)
}
