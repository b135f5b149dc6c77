//! Numeric CSV input and output.

use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use nalgebra::DVector;

/// Numeric rows of a headed CSV file; a leading `sample` column is ignored.
pub fn read_rows(path: &Path) -> Result<Vec<DVector<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let header = reader.headers()?.clone();
    let skip = header.get(0) == Some("sample");
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.with_context(|| format!("{}:{line}: malformed CSV", path.display()))?;
        let values = record
            .iter()
            .skip(skip as usize)
            .enumerate()
            .map(|(col, field)| {
                field.parse::<f64>().with_context(|| {
                    format!(
                        "{}:{line}: column `{}` is not a number: {field:?}",
                        path.display(),
                        header.get(col + skip as usize).unwrap_or("?")
                    )
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(DVector::from_vec(values));
    }
    if rows.is_empty() {
        bail!("{}: no data rows", path.display());
    }
    Ok(rows)
}

/// Rows must match the expected width.
pub fn check_width(path: &Path, rows: &[DVector<f64>], width: usize, what: &str) -> Result<()> {
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != width) {
        bail!(
            "{}:{}: expected {width} {what} columns, found {}",
            path.display(),
            i + 2,
            r.len()
        );
    }
    Ok(())
}

/// CSV sink writing to a file or standard output.
pub struct Sink {
    writer: csv::Writer<Box<dyn Write>>,
}

impl Sink {
    pub fn create(path: Option<&Path>, header: &[String]) -> Result<Self> {
        let out: Box<dyn Write> = match path {
            Some(p) => {
                Box::new(File::create(p).with_context(|| format!("cannot create {}", p.display()))?)
            }
            None => Box::new(io::stdout()),
        };
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(header)?;
        Ok(Self { writer })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush()?;
        Ok(())
    }
}

/// Shortest representation that parses back to the same value.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn indexed(prefix: &str, n: usize, suffix: &str) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}{suffix}")).collect()
}
