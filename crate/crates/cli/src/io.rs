//! Dataset CSV and report JSON plumbing.
//!
//! The dataset format is a plain UTF-8 CSV with a mandatory `x,y,label`
//! header (`label` optional on input). Floats are printed with 17
//! significant digits so a written file parses back bit-for-bit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use lineclust_core::{Dataset, Measurement};
use serde::Serialize;

/// Lossless `f64` rendering: one digit before the point, sixteen after.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_dataset_csv<W: Write>(w: &mut W, d: &Dataset) -> std::io::Result<()> {
    writeln!(w, "x,y,label")?;
    let truth = d.truth();
    for (i, m) in d.points().iter().enumerate() {
        // unlabeled datasets are only written by tests; emit 0 for "none"
        let label = truth.map_or(0, |t| t[i]);
        writeln!(w, "{},{},{}", fmt_f64(m.x), fmt_f64(m.y), label)?;
    }
    Ok(())
}

pub fn dataset_to_csv(d: &Dataset) -> String {
    let mut buf = Vec::new();
    write_dataset_csv(&mut buf, d).expect("write to Vec cannot fail");
    String::from_utf8(buf).expect("CSV output is ASCII")
}

pub fn save_dataset_csv(path: &Path, d: &Dataset) -> Result<()> {
    let file = File::create(path)
        .with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    write_dataset_csv(&mut w, d)
        .and_then(|()| w.flush())
        .with_context(|| format!("cannot write {}", path.display()))
}

/// Parses a dataset CSV. Errors carry the 1-based line number of the
/// offending row (the header is line 1).
pub fn parse_dataset_csv<R: Read>(r: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(r);
    let headers = rdr.headers().context("cannot read CSV header")?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    let labeled = match cols.as_slice() {
        ["x", "y", "label"] => true,
        ["x", "y"] => false,
        other => bail!(
            "line 1: expected header `x,y,label` (or `x,y`), found `{}`",
            other.join(",")
        ),
    };

    let mut points = Vec::new();
    let mut labels = Vec::new();
    for record in rdr.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e
                    .position()
                    .map_or_else(|| "?".to_string(), |p| p.line().to_string());
                bail!("line {line}: {e}");
            }
        };
        let line = record.position().map_or(0, |p| p.line());
        let field = |idx: usize, name: &str| -> Result<f64> {
            let raw = &record[idx];
            raw.parse::<f64>()
                .with_context(|| format!("line {line}: bad {name} value `{raw}`"))
        };
        let x = field(0, "x")?;
        let y = field(1, "y")?;
        points.push(
            Measurement::new(x, y).with_context(|| format!("line {line}: bad point"))?,
        );
        if labeled {
            let raw = &record[2];
            let label: usize = raw
                .parse()
                .with_context(|| format!("line {line}: bad label `{raw}`"))?;
            if label == 0 {
                bail!("line {line}: labels are 1-based, found 0");
            }
            labels.push(label);
        }
    }
    if points.is_empty() {
        bail!("no data rows");
    }
    if labeled {
        Ok(Dataset::with_truth(points, labels)?)
    } else {
        Ok(Dataset::new(points)?)
    }
}

pub fn load_dataset_csv(path: &Path) -> Result<Dataset> {
    let file = File::open(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    parse_dataset_csv(BufReader::new(file))
        .with_context(|| format!("while parsing {}", path.display()))
}

/// Pretty JSON plus trailing newline, to a file or stdout.
pub fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).context("serializing report")?;
    text.push('\n');
    match out {
        Some(path) => std::fs::write(path, text)
            .with_context(|| format!("cannot write {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}
