//! Artifact formats: CSV with a header row and 17 significant digits,
//! pretty JSON, dense text matrices and a dense little-endian binary.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

/// Round-trippable float text: 17 significant digits.
pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

/// Numbers on a line separated by commas or whitespace.
fn numbers(line: &str, path: &Path, lineno: usize) -> Result<Vec<f64>> {
    line.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .with_context(|| format!("{}:{lineno}: `{t}` is not a number", path.display()))
        })
        .collect()
}

fn lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut out = Vec::new();
    for (i, l) in BufReader::new(f).lines().enumerate() {
        let l = l?;
        if !l.trim().is_empty() && !l.trim_start().starts_with('#') {
            out.push((i + 1, l));
        }
    }
    Ok(out)
}

/// A dense text matrix: a header line of numbers, then one row per line.
pub struct DenseText {
    pub header: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
}

pub fn read_dense_text(path: &Path) -> Result<DenseText> {
    let ls = lines(path)?;
    let Some(((n0, head), body)) = ls.split_first() else {
        bail!("{} is empty", path.display());
    };
    let header = numbers(head, path, *n0)?;
    let rows = body.iter().map(|(n, l)| numbers(l, path, *n)).collect::<Result<Vec<_>>>()?;
    if let Some(w) = rows.first().map(Vec::len) {
        if let Some((i, _)) = rows.iter().enumerate().find(|(_, r)| r.len() != w) {
            bail!("{}: row {} has a different length", path.display(), i + 1);
        }
    }
    Ok(DenseText { header, rows })
}

/// Kernel table as row-major `n × n` values. Accepts a dense file with the
/// header `n d h` or a CSV of `(i, j, value)` triplets with a header row.
pub fn read_kernel_table(path: &Path, n: usize, spacing: f64) -> Result<Vec<f64>> {
    let ls = lines(path)?;
    let first = ls.first().map(|(_, l)| l.as_str()).unwrap_or("");
    if first.chars().any(|c| c.is_ascii_alphabetic()) {
        let mut values = vec![0.0; n * n];
        for (lineno, l) in &ls[1..] {
            let t = numbers(l, path, *lineno)?;
            let [i, j, v] = t[..] else {
                bail!("{}:{lineno}: expected `i, j, value`", path.display());
            };
            let (i, j) = (i as usize, j as usize);
            if i >= n || j >= n {
                bail!("{}:{lineno}: index ({i}, {j}) outside a {n}-node grid", path.display());
            }
            values[i * n + j] = v;
        }
        return Ok(values);
    }
    let m = read_dense_text(path)?;
    let [rows, _dim, h] = m.header[..] else {
        bail!("{}: header must be `n d h`", path.display());
    };
    if rows as usize != n || m.rows.len() != n || m.rows.iter().any(|r| r.len() != n) {
        bail!("{}: table is not {n}×{n}", path.display());
    }
    if (h - spacing).abs() > 1e-9 * spacing.abs().max(1.0) {
        bail!("{}: table spacing {h} does not match grid spacing {spacing}", path.display());
    }
    Ok(m.rows.concat())
}

/// Mode fields from a dense file with header `n m`, one mode per column.
pub fn read_modes(path: &Path, n: usize) -> Result<Vec<Vec<f64>>> {
    let m = read_dense_text(path)?;
    let [rows, cols] = m.header[..] else {
        bail!("{}: header must be `n m`", path.display());
    };
    let (rows, cols) = (rows as usize, cols as usize);
    if rows != n || m.rows.len() != n || m.rows.iter().any(|r| r.len() != cols) {
        bail!("{}: expected {n} rows of {cols} values", path.display());
    }
    Ok((0..cols).map(|c| m.rows.iter().map(|r| r[c]).collect()).collect())
}

/// `(x, f(x))` samples from a two-column CSV with a header row.
pub fn read_samples(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let ls = lines(path)?;
    let (mut xs, mut fs) = (Vec::new(), Vec::new());
    for (lineno, l) in ls.iter().skip(1) {
        let t = numbers(l, path, *lineno)?;
        let [x, f] = t[..] else {
            bail!("{}:{lineno}: expected `x, f`", path.display());
        };
        xs.push(x);
        fs.push(f);
    }
    Ok((xs, fs))
}

/// `NFLD` magic, `u64` rows and columns, then column-major `f64`, all
/// little-endian.
pub fn write_dense_binary(path: &Path, rows: usize, cols: usize, column_major: &[f64]) -> Result<()> {
    assert_eq!(rows * cols, column_major.len());
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?);
    w.write_all(b"NFLD")?;
    w.write_all(&(rows as u64).to_le_bytes())?;
    w.write_all(&(cols as u64).to_le_bytes())?;
    for v in column_major {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dense_binary(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    if bytes.len() < 20 || &bytes[..4] != b"NFLD" {
        bail!("{} is not a dense binary matrix", path.display());
    }
    let word = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes")) as usize;
    let (rows, cols) = (word(4), word(12));
    if bytes.len() != 20 + 8 * rows * cols {
        bail!("{}: size does not match its {rows}×{cols} header", path.display());
    }
    let data = bytes[20..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((rows, cols, data))
}
