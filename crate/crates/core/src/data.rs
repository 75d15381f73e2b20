//! Row-major observation matrix and CSV ingestion.
//!
//! One observation per row. For regression data the first column is the
//! response and the remaining columns are the covariate row `x_i`.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    ncols: usize,
    values: Vec<f64>,
}

impl Dataset {
    pub fn new(ncols: usize, values: Vec<f64>) -> Result<Self> {
        if ncols == 0 || !values.len().is_multiple_of(ncols) {
            return Err(Error::Dimension(format!(
                "{} values do not fill rows of width {ncols}",
                values.len()
            )));
        }
        Ok(Self { ncols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let ncols = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Self::new(ncols, rows.concat())
    }

    /// Univariate sample, one value per row.
    pub fn from_column(xs: &[f64]) -> Self {
        Self {
            ncols: 1,
            values: xs.to_vec(),
        }
    }

    pub fn n(&self) -> usize {
        self.values.len() / self.ncols
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.ncols)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Applies `f` to every entry of column `j`.
    pub fn map_column(&self, j: usize, f: impl Fn(f64) -> f64) -> Self {
        let mut out = self.clone();
        for row in out.values.chunks_exact_mut(self.ncols) {
            row[j] = f(row[j]);
        }
        out
    }

    pub fn read_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(file)
    }

    /// Reads comma-separated numeric rows. A first row that does not parse as
    /// numbers is taken as a header and skipped.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parsed: std::result::Result<Vec<f64>, _> =
                rec.iter().map(|f| f.parse::<f64>()).collect();
            match parsed {
                Ok(r) => rows.push(r),
                Err(_) if line == 0 => continue,
                Err(e) => {
                    return Err(Error::Parse(format!("row {}: {e}", line + 1)));
                }
            }
        }
        if rows.is_empty() {
            return Err(Error::Parse("no data rows".into()));
        }
        Self::from_rows(&rows)
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in self.rows() {
            w.write_record(row.iter().map(|v| format!("{v:e}")))?;
        }
        w.flush()?;
        Ok(())
    }
}
