//! Raw field dumps: a text header `NLKG1 <points> <length> <time>` and a
//! newline, then the little-endian f64 samples `re, im` interleaved, the `u1`
//! block first and the `u2` block second.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

pub const MAGIC: &str = "NLKG";
pub const VERSION: u32 = 1;

pub fn write_field<W: Write>(out: &mut W, w: &Field<f64>, time: f64) -> Result<()> {
    let g = w.grid();
    writeln!(out, "{MAGIC}{VERSION} {} {} {}", g.points(), g.length(), time)?;
    let mut buf = Vec::with_capacity(32 * g.points());
    for z in w.u1.iter().chain(&w.u2) {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

/// Reads a dump; returns the field on a fresh grid and the stored time.
pub fn read_field<R: BufRead>(input: &mut R) -> Result<(Field<f64>, f64)> {
    let mut header = Vec::new();
    input.read_until(b'\n', &mut header)?;
    if header.last() != Some(&b'\n') {
        return Err(Error::Header("missing header line".into()));
    }
    let header = String::from_utf8(header).map_err(|_| Error::Header("header is not UTF-8".into()))?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    let tag = tokens.first().ok_or_else(|| Error::Header("empty header".into()))?;
    let version = tag.strip_prefix(MAGIC).ok_or_else(|| Error::Header(format!("bad magic `{tag}`")))?;
    if version != VERSION.to_string() {
        return Err(Error::UnsupportedVersion(version.to_string()));
    }
    if tokens.len() != 4 {
        return Err(Error::Header(format!("expected 4 fields, found {}", tokens.len())));
    }
    let points: usize = tokens[1].parse().map_err(|_| Error::Header(format!("bad point count `{}`", tokens[1])))?;
    let length: f64 = tokens[2].parse().map_err(|_| Error::Header(format!("bad length `{}`", tokens[2])))?;
    let time: f64 = tokens[3].parse().map_err(|_| Error::Header(format!("bad time `{}`", tokens[3])))?;
    let grid: Arc<Grid<f64>> = Grid::new(length, points)?;

    let expected = 32 * points;
    let mut payload = Vec::with_capacity(expected);
    input.take(expected as u64 + 1).read_to_end(&mut payload)?;
    if payload.len() < expected {
        return Err(Error::Truncated { expected, found: payload.len() });
    }
    if payload.len() > expected {
        return Err(Error::Header("trailing bytes after payload".into()));
    }
    let value = |i: usize| f64::from_le_bytes(payload[8 * i..8 * i + 8].try_into().expect("8-byte slice"));
    let samples: Vec<Complex<f64>> = (0..2 * points).map(|i| Complex::new(value(2 * i), value(2 * i + 1))).collect();
    let u2 = samples[points..].to_vec();
    let mut u1 = samples;
    u1.truncate(points);
    Ok((Field::new(grid, u1, u2)?, time))
}

pub fn write_field_file(path: &Path, w: &Field<f64>, time: f64) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_field(&mut out, w, time)?;
    out.flush()?;
    Ok(())
}

pub fn read_field_file(path: &Path) -> Result<(Field<f64>, f64)> {
    read_field(&mut BufReader::new(File::open(path)?))
}
