//! Versioned CSV for training logs.
//!
//! Line 1 is `schema_version,<n>`, line 2 the header. Reals use Rust's
//! shortest round-trip formatting, so `inf` and `NaN` appear literally.

use std::io::{BufRead, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use lmdp_npg::trainer::LogRow;

pub const SCHEMA_VERSION: u32 = 1;
pub const COLUMNS: [&str; 9] = [
    "iteration",
    "samples_cumulative",
    "mode",
    "reward_mean",
    "reward_ci95",
    "ln_kappa",
    "avg_err",
    "lambda",
    "wall_ms",
];

pub fn write_rows<W: Write>(mut out: W, rows: &[LogRow]) -> Result<()> {
    writeln!(out, "schema_version,{SCHEMA_VERSION}")?;
    writeln!(out, "{}", COLUMNS.join(","))?;
    for r in rows {
        if r.mode.contains(',') || r.mode.contains('\n') {
            bail!("mode label {:?} cannot be written to CSV", r.mode);
        }
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.iteration,
            r.samples_cumulative,
            r.mode,
            r.reward_mean,
            r.reward_ci95,
            r.ln_kappa,
            r.avg_err,
            r.lambda,
            r.wall_ms
        )?;
    }
    Ok(())
}

pub fn write_file(path: &Path, rows: &[LogRow]) -> Result<()> {
    let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = std::io::BufWriter::new(file);
    write_rows(&mut w, rows)?;
    w.flush()?;
    Ok(())
}

pub fn read_rows<R: BufRead>(input: R) -> Result<Vec<LogRow>> {
    let mut lines = input.lines();
    let version = lines.next().context("empty CSV")??;
    match version.split_once(',') {
        Some(("schema_version", v)) if v.trim() == SCHEMA_VERSION.to_string() => {}
        Some(("schema_version", v)) => bail!("unsupported schema version {v}"),
        _ => bail!("first line must be `schema_version,{SCHEMA_VERSION}`"),
    }
    let header = lines.next().context("missing header")??;
    let got: Vec<&str> = header.split(',').map(str::trim).collect();
    if got != COLUMNS {
        let missing: Vec<&str> = COLUMNS.iter().copied().filter(|c| !got.contains(c)).collect();
        let unexpected: Vec<&str> = got.iter().copied().filter(|c| !COLUMNS.contains(c)).collect();
        bail!(
            "schema mismatch: missing columns [{}], unexpected columns [{}]{}",
            missing.join(", "),
            unexpected.join(", "),
            if missing.is_empty() && unexpected.is_empty() {
                " (column order differs)"
            } else {
                ""
            }
        );
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != COLUMNS.len() {
            bail!("row {}: expected {} fields, found {}", i + 1, COLUMNS.len(), f.len());
        }
        let real = |k: usize| -> Result<f64> {
            f[k].trim()
                .parse::<f64>()
                .with_context(|| format!("row {}: bad {} {:?}", i + 1, COLUMNS[k], f[k]))
        };
        rows.push(LogRow {
            iteration: f[0]
                .trim()
                .parse()
                .with_context(|| format!("row {}: bad iteration", i + 1))?,
            samples_cumulative: f[1]
                .trim()
                .parse()
                .with_context(|| format!("row {}: bad samples", i + 1))?,
            mode: f[2].to_string(),
            reward_mean: real(3)?,
            reward_ci95: real(4)?,
            ln_kappa: real(5)?,
            avg_err: real(6)?,
            lambda: real(7)?,
            wall_ms: f[8]
                .trim()
                .parse()
                .with_context(|| format!("row {}: bad wall_ms", i + 1))?,
        });
    }
    Ok(rows)
}

pub fn read_file(path: &Path) -> Result<Vec<LogRow>> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_rows(std::io::BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

/// CSV text with the `wall_ms` column removed, for determinism checks.
pub fn strip_wall_clock(text: &str) -> String {
    text.lines()
        .map(|l| match l.rsplit_once(',') {
            Some((head, _)) if !l.starts_with("schema_version") => head.to_string(),
            _ => l.to_string(),
        })
        .collect::<Vec<_>>()
        .join("\n")
}
