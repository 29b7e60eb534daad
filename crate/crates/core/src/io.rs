//! On-disk formats for fields and extremal point samples.
//!
//! Fields: magic `FLD1`, `u32` little-endian `n`, `u32` little-endian flags
//! (always 0), then `n^2` little-endian `f64` values in row-major site order.
//!
//! Points: JSON lines, a header `{"r":..,"epsilon":..,"m_eps":..}` followed by
//! one `{"x":[..,..],"h":..}` per point. Floats use shortest round-trip
//! formatting, so reading back is exact.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::extremes::{centering, ExtremalPoint, ExtremalProcessSample};
use crate::lattice::TorusLattice;
use crate::spectral::Field;

pub const FIELD_MAGIC: &[u8; 4] = b"FLD1";
const HEADER_LEN: usize = 12;

pub fn encode_field(field: &Field) -> Vec<u8> {
    let n = field.lattice().n();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * n * n);
    out.extend_from_slice(FIELD_MAGIC);
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for v in field.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_field(bytes: &[u8]) -> Result<Field> {
    if bytes.len() < 4 || &bytes[..4] != FIELD_MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::TruncatedPayload {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let n = word(4) as usize;
    let flags = word(8);
    if flags != 0 {
        return Err(Error::UnsupportedFlags(flags));
    }
    let lattice = TorusLattice::new(n)?;
    let expected = HEADER_LEN + 8 * n * n;
    if bytes.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(invalid(format!(
            "{} trailing bytes after field payload",
            bytes.len() - expected
        )));
    }
    let values = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Field::new(lattice, values)
}

pub fn write_field(path: &Path, field: &Field) -> Result<()> {
    fs::write(path, encode_field(field))?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<Field> {
    decode_field(&fs::read(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct PointsHeader {
    r: f64,
    epsilon: f64,
    m_eps: f64,
}

/// A point file as read back, with any consistency warnings.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedPoints {
    pub sample: ExtremalProcessSample,
    pub warnings: Vec<String>,
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().find(|v| !v.is_finite()) {
        Some(v) => Err(invalid(format!("cannot serialize non-finite value {v}"))),
        None => Ok(()),
    }
}

pub fn encode_points(sample: &ExtremalProcessSample) -> Result<String> {
    let header = PointsHeader {
        r: sample.r,
        epsilon: sample.epsilon,
        m_eps: sample.m_eps,
    };
    check_finite(&[header.r, header.epsilon, header.m_eps])?;
    let mut out = serde_json::to_string(&header).map_err(|e| invalid(e.to_string()))?;
    out.push('\n');
    for p in &sample.points {
        check_finite(&[p.x[0], p.x[1], p.h])?;
        out.push_str(&serde_json::to_string(p).map_err(|e| invalid(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn decode_points(reader: impl BufRead) -> Result<LoadedPoints> {
    let mut lines = reader.lines().enumerate();
    let malformed = |line: usize, e: &dyn std::fmt::Display| Error::MalformedLine {
        line: line + 1,
        message: e.to_string(),
    };
    let header: PointsHeader = match lines.next() {
        Some((i, line)) => serde_json::from_str(&line?).map_err(|e| malformed(i, &e))?,
        None => return Err(malformed(0, &"missing header line")),
    };
    let mut points = Vec::new();
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let p: ExtremalPoint = serde_json::from_str(&line).map_err(|e| malformed(i, &e))?;
        points.push(p);
    }
    let mut warnings = Vec::new();
    if let Ok(expected) = centering(header.epsilon) {
        if (expected - header.m_eps).abs() > 1e-9 * expected.abs().max(1.0) {
            let msg = format!(
                "header m_eps = {} differs from centering({}) = {expected}",
                header.m_eps, header.epsilon
            );
            warn!("{msg}");
            warnings.push(msg);
        }
    }
    Ok(LoadedPoints {
        sample: ExtremalProcessSample {
            points,
            r: header.r,
            epsilon: header.epsilon,
            m_eps: header.m_eps,
        },
        warnings,
    })
}

pub fn write_points(path: &Path, sample: &ExtremalProcessSample) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(encode_points(sample)?.as_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn read_points(path: &Path) -> Result<LoadedPoints> {
    decode_points(BufReader::new(fs::File::open(path)?))
}
