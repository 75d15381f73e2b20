use serde::{Deserialize, Serialize};

use super::spec::ExperimentSpec;
use super::Outcome;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub law: String,
    pub n: usize,
}

impl Column {
    pub fn key(&self) -> String {
        format!("{}_n{}", self.law, self.n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub law: String,
    pub n: usize,
    pub level: f64,
    pub coverage: f64,
    /// `√(c(1−c)/used)`.
    pub se: f64,
    pub lower: f64,
    pub upper: f64,
    pub used: usize,
    pub excluded: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub label: String,
    pub cells: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageTable {
    pub spec: ExperimentSpec,
    pub columns: Vec<Column>,
    pub rows: Vec<CoverageRow>,
}

/// Binomial standard error of a proportion.
pub(crate) fn binomial_se(c: f64, used: usize) -> f64 {
    (c * (1.0 - c) / used as f64).sqrt()
}

impl CoverageTable {
    pub(crate) fn from_outcomes(
        spec: &ExperimentSpec,
        columns: Vec<Column>,
        outcomes: &[Vec<Vec<Outcome>>],
    ) -> Self {
        let rows = spec
            .rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let mut cells = Vec::new();
                for (col, reps) in columns.iter().zip(outcomes) {
                    let ok: Vec<f64> = reps
                        .iter()
                        .filter_map(|o| o[i].as_ref().ok().copied())
                        .collect();
                    let excluded = reps.len() - ok.len();
                    let first_failure = reps.iter().find_map(|o| o[i].as_ref().err().cloned());
                    for &level in &spec.levels {
                        let covered = ok.iter().filter(|&&p| p > 1.0 - level).count();
                        let used = ok.len();
                        let (coverage, se) = if used == 0 {
                            (f64::NAN, f64::NAN)
                        } else {
                            let c = covered as f64 / used as f64;
                            (c, binomial_se(c, used))
                        };
                        cells.push(Cell {
                            law: col.law.clone(),
                            n: col.n,
                            level,
                            coverage,
                            se,
                            lower: coverage - 4.0 * se,
                            upper: coverage + 4.0 * se,
                            used,
                            excluded,
                            first_failure: first_failure.clone(),
                        });
                    }
                }
                CoverageRow {
                    label: row.label(),
                    cells,
                }
            })
            .collect();
        Self {
            spec: spec.clone(),
            columns,
            rows,
        }
    }

    pub fn row(&self, label: &str) -> Option<&CoverageRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    /// Coverage of `label` for law `law`, size `n` and nominal `level`.
    pub fn coverage(&self, label: &str, law: &str, n: usize, level: f64) -> Option<&Cell> {
        self.row(label)?
            .cells
            .iter()
            .find(|c| c.law == law && c.n == n && (c.level - level).abs() < 1e-12)
    }

    /// Wide CSV: one line per row; per cell a coverage column, an `_se`
    /// column, and per law/size an `_excluded` count.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["row".to_string()];
        for col in &self.columns {
            for level in &self.spec.levels {
                header.push(format!("{}_{level}", col.key()));
                header.push(format!("{}_{level}_se", col.key()));
            }
            header.push(format!("{}_excluded", col.key()));
        }
        w.write_record(&header)
            .map_err(|e| Error::Io(e.to_string()))?;
        let per_col = self.spec.levels.len();
        for row in &self.rows {
            let mut rec = vec![row.label.clone()];
            for chunk in row.cells.chunks(per_col) {
                for cell in chunk {
                    rec.push(format_sig(cell.coverage));
                    rec.push(format_sig(cell.se));
                }
                rec.push(chunk[0].excluded.to_string());
            }
            w.write_record(&rec).map_err(|e| Error::Io(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }

    /// Three-decimal table in the layout of a printed coverage table.
    pub fn to_pretty(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.label.chars().count())
            .max()
            .unwrap_or(3)
            .max(3);
        let mut heads = Vec::new();
        for col in &self.columns {
            for level in &self.spec.levels {
                heads.push(format!("{} n={} @{level}", col.law, col.n));
            }
        }
        let cw = heads
            .iter()
            .map(|h| h.chars().count())
            .max()
            .unwrap_or(5)
            .max(5);
        let mut out = format!("{:<width$}", "");
        for h in &heads {
            out.push_str(&format!("  {h:>cw$}"));
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!("{:<width$}", row.label));
            for cell in &row.cells {
                out.push_str(&format!("  {:>cw$.3}", cell.coverage));
            }
            out.push('\n');
        }
        let excluded: usize = self
            .rows
            .iter()
            .flat_map(|r| &r.cells)
            .map(|c| c.excluded)
            .sum();
        if excluded > 0 {
            out.push_str(&format!("excluded replications (all cells): {excluded}\n"));
        }
        out
    }
}

/// Fixed-point text with at least ten significant digits.
pub fn format_sig(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    if v == 0.0 {
        return "0.000000000".into();
    }
    let mag = v.abs().log10().floor() as i32;
    let decimals = (9 - mag).max(0) as usize;
    format!("{v:.decimals$}")
}
