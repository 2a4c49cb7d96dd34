//! Genotype containers.
//!
//! Binary layout (little-endian):
//!
//! | offset | size | field                          |
//! |--------|------|--------------------------------|
//! | 0      | 4    | magic `KLMM`                   |
//! | 4      | 2    | format version (`u16`)         |
//! | 6      | 8    | N individuals (`u64`)          |
//! | 14     | 8    | M SNPs (`u64`)                 |
//! | 22     | N*M  | row-major allele counts (`u8`) |
//!
//! The text variant has one individual per line with space-separated counts.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::GenotypeMatrix;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"KLMM";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 8 + 8;

pub fn encode_binary(g: &GenotypeMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + g.counts().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(g.n_individuals() as u64).to_le_bytes());
    out.extend_from_slice(&(g.n_snps() as u64).to_le_bytes());
    out.extend_from_slice(g.counts());
    out
}

pub fn decode_binary(bytes: &[u8], path: &Path) -> Result<GenotypeMatrix> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(path, "truncated header"));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::format(path, "bad magic, expected KLMM"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::format(path, format!("unsupported format version {version}")));
    }
    let n = u64::from_le_bytes(bytes[6..14].try_into().unwrap());
    let m = u64::from_le_bytes(bytes[14..22].try_into().unwrap());
    let len = n
        .checked_mul(m)
        .and_then(|v| usize::try_from(v).ok())
        .ok_or_else(|| Error::format(path, "dimensions overflow"))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != len {
        return Err(Error::format(
            path,
            format!("expected {len} genotype bytes, found {}", body.len()),
        ));
    }
    GenotypeMatrix::from_counts(n as usize, m as usize, body.to_vec())
}

pub fn write_binary(g: &GenotypeMatrix, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&encode_binary(g))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_binary(path: &Path) -> Result<GenotypeMatrix> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_binary(&bytes, path)
}

pub fn write_text(g: &GenotypeMatrix, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut line = String::with_capacity(2 * g.n_snps());
    for i in 0..g.n_individuals() {
        line.clear();
        for (j, c) in g.row(i).iter().enumerate() {
            if j > 0 {
                line.push(' ');
            }
            line.push((b'0' + c) as char);
        }
        line.push('\n');
        w.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<GenotypeMatrix> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut counts = Vec::new();
    let mut n = 0usize;
    let mut m: Option<usize> = None;
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let before = counts.len();
        for tok in line.split_whitespace() {
            let c: u8 = tok.parse().map_err(|_| {
                Error::format(path, format!("line {}: bad allele count {tok:?}", lineno + 1))
            })?;
            counts.push(c);
        }
        let width = counts.len() - before;
        match m {
            None => m = Some(width),
            Some(w) if w != width => {
                return Err(Error::format(
                    path,
                    format!("line {}: {width} fields, expected {w}", lineno + 1),
                ))
            }
            _ => {}
        }
        n += 1;
    }
    GenotypeMatrix::from_counts(n, m.unwrap_or(0), counts)
}
