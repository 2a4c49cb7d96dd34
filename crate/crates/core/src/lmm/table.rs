//! Association table: `snp_index,beta_hat,f_stat,p_value,method,status`,
//! one row per SNP in index order, decimals at 17 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{AssociationResult, Method, Status};
use crate::error::{Error, Result};

pub const HEADER: &str = "snp_index,beta_hat,f_stat,p_value,method,status";

pub fn format_association_table(results: &[AssociationResult]) -> String {
    let mut rows: Vec<&AssociationResult> = results.iter().collect();
    rows.sort_by_key(|r| r.snp_index);
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.snp_index,
            fmt_f64(r.beta_hat),
            fmt_f64(r.statistic),
            fmt_f64(r.p_value),
            r.method,
            r.status.as_str()
        )
        .unwrap();
    }
    out
}

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.16e}")
    }
}

pub fn write_association_table(results: &[AssociationResult], path: &Path) -> Result<()> {
    fs::write(path, format_association_table(results)).map_err(|e| Error::io(path, e))
}

pub fn read_association_table(path: &Path) -> Result<Vec<AssociationResult>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == HEADER => {}
        _ => return Err(Error::format(path, "missing association table header")),
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let bad = |what: &str| Error::format(path, format!("row {}: bad {what}", i + 1));
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 6 {
                return Err(bad("field count"));
            }
            let num = |s: &str, what: &str| s.parse::<f64>().map_err(|_| bad(what));
            Ok(AssociationResult {
                snp_index: f[0].parse().map_err(|_| bad("snp_index"))?,
                beta_hat: num(f[1], "beta_hat")?,
                statistic: num(f[2], "f_stat")?,
                p_value: num(f[3], "p_value")?,
                method: f[4].parse::<Method>().map_err(|_| bad("method"))?,
                status: f[5].parse::<Status>().map_err(|_| bad("status"))?,
            })
        })
        .collect()
}
