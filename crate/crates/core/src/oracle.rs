//! Exact-Bayes reference and the model compiler that turns real-valued
//! likelihood tables into a programmed machine image.

use crate::error::{Error, Result};
use crate::machine::{MachineConfig, MachineImage, Observation};
use crate::rng::ProbByte;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

/// Smallest probability the compiler will quantize. Inputs are floored here
/// so every byte encodes at least 1/256; a hard zero in one column would
/// veto a row permanently, which the encoding cannot represent.
pub const MIN_COMPILED_PROB: f64 = 1.0 / 512.0;

/// Real-valued likelihood factors `p(O_col = entry | Y = row)`, plus an
/// optional prior over rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodTable {
    /// Indexed `[row][column][entry]`; all nonnegative.
    pub values: Vec<Vec<Vec<f64>>>,
    pub prior: Option<Vec<f64>>,
}

impl LikelihoodTable {
    pub fn new(values: Vec<Vec<Vec<f64>>>, prior: Option<Vec<f64>>) -> Result<Self> {
        if values.is_empty() || values[0].is_empty() || values[0][0].is_empty() {
            return Err(Error::Config("likelihood table must be non-empty".into()));
        }
        let (n_cols, n_entries) = (values[0].len(), values[0][0].len());
        for row in &values {
            if row.len() != n_cols || row.iter().any(|c| c.len() != n_entries) {
                return Err(Error::Config("ragged likelihood table".into()));
            }
        }
        for row in &values {
            for col in row {
                if col.iter().any(|&v| !v.is_finite() || v < 0.0) {
                    return Err(Error::Range("likelihoods must be finite and nonnegative".into()));
                }
            }
        }
        for col in 0..n_cols {
            let positive = values.iter().any(|row| row[col].iter().any(|&v| v > 0.0));
            if !positive {
                return Err(Error::Config(format!("column {col} is all zero")));
            }
        }
        if let Some(p) = &prior {
            if p.len() != values.len() {
                return Err(Error::Config("prior length must equal the row count".into()));
            }
            if p.iter().any(|&v| !v.is_finite() || v < 0.0) {
                return Err(Error::Range("prior must be finite and nonnegative".into()));
            }
            if p.iter().all(|&v| v == 0.0) {
                return Err(Error::Config("prior is all zero".into()));
            }
        }
        Ok(LikelihoodTable { values, prior })
    }

    pub fn n_rows(&self) -> usize {
        self.values.len()
    }

    pub fn n_columns(&self) -> usize {
        self.values[0].len()
    }

    pub fn n_entries(&self) -> usize {
        self.values[0][0].len()
    }

    fn check_observation(&self, obs: &Observation) -> Result<()> {
        if obs.0.len() != self.n_columns() {
            return Err(Error::Config(format!(
                "observation has {} indices, table has {} columns",
                obs.0.len(),
                self.n_columns()
            )));
        }
        if let Some(&bad) = obs.0.iter().find(|&&e| e >= self.n_entries()) {
            return Err(Error::Bounds(format!("observation index {bad} out of range")));
        }
        Ok(())
    }

    /// Unnormalized per-row product of the selected likelihoods and prior.
    pub fn row_products(&self, obs: &Observation) -> Result<Vec<f64>> {
        self.check_observation(obs)?;
        Ok((0..self.n_rows())
            .map(|row| {
                let mut p: f64 = obs
                    .0
                    .iter()
                    .enumerate()
                    .map(|(col, &e)| self.values[row][col][e])
                    .product();
                if let Some(prior) = &self.prior {
                    p *= prior[row];
                }
                p
            })
            .collect())
    }

    /// Writes the table as CSV with columns `row,col,entry,value`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["row", "col", "entry", "value"]).map_err(csv_err)?;
        for (row, cols) in self.values.iter().enumerate() {
            for (col, entries) in cols.iter().enumerate() {
                for (entry, v) in entries.iter().enumerate() {
                    wtr.write_record([
                        row.to_string(),
                        col.to_string(),
                        entry.to_string(),
                        format!("{v}"),
                    ])
                    .map_err(csv_err)?;
                }
            }
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads the CSV written by [`LikelihoodTable::write_csv`]. Dimensions
    /// come from the maximum indices; every cell must be present.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let mut cells: Vec<(usize, usize, usize, f64)> = Vec::new();
        let (mut max_r, mut max_c, mut max_e) = (0usize, 0usize, 0usize);
        for (i, record) in rdr.records().enumerate() {
            let lineno = i + 2;
            let record = record.map_err(|e| Error::Parse { line: lineno, msg: e.to_string() })?;
            if record.len() != 4 {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("expected 4 fields, got {}", record.len()),
                });
            }
            let parse_idx = |s: &str, what: &str| {
                s.trim().parse::<usize>().map_err(|_| Error::Parse {
                    line: lineno,
                    msg: format!("bad {what} '{s}'"),
                })
            };
            let row = parse_idx(&record[0], "row")?;
            let col = parse_idx(&record[1], "col")?;
            let entry = parse_idx(&record[2], "entry")?;
            let value = record[3].trim().parse::<f64>().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad value '{}'", &record[3]),
            })?;
            max_r = max_r.max(row);
            max_c = max_c.max(col);
            max_e = max_e.max(entry);
            cells.push((row, col, entry, value));
        }
        if cells.is_empty() {
            return Err(Error::Parse { line: 2, msg: "no data rows".into() });
        }
        let mut values = vec![vec![vec![f64::NAN; max_e + 1]; max_c + 1]; max_r + 1];
        for (row, col, entry, v) in cells {
            values[row][col][entry] = v;
        }
        if values.iter().any(|r| r.iter().any(|c| c.iter().any(|v| v.is_nan()))) {
            return Err(Error::Config("likelihood CSV leaves cells unset".into()));
        }
        LikelihoodTable::new(values, None)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Config(format!("csv write failed: {e}"))
}

/// Normalized posterior over rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub probs: Vec<f64>,
    /// Set when every row's product was zero and the uniform fallback was
    /// returned.
    pub degenerate: bool,
}

/// Bayes law over the product-of-factors model: normalized product of the
/// selected likelihoods and the prior (uniform when absent).
pub fn exact_posterior(table: &LikelihoodTable, obs: &Observation) -> Result<Posterior> {
    let products = table.row_products(obs)?;
    let total: f64 = products.iter().sum();
    if total <= 0.0 {
        let n = products.len();
        return Ok(Posterior { probs: vec![1.0 / n as f64; n], degenerate: true });
    }
    Ok(Posterior { probs: products.iter().map(|p| p / total).collect(), degenerate: false })
}

/// Divides every value by its column's maximum over all rows and entries, so
/// each column's maximum becomes exactly 1. Each row's product is scaled by
/// the same constant, leaving the posterior argmax unchanged for every
/// observation.
pub fn normalize_columns(table: &LikelihoodTable) -> Result<LikelihoodTable> {
    let mut values = table.values.clone();
    for col in 0..table.n_columns() {
        let max = table
            .values
            .iter()
            .flat_map(|row| row[col].iter().copied())
            .fold(0.0f64, f64::max);
        if max <= 0.0 {
            return Err(Error::Config(format!("column {col} has no positive value")));
        }
        for row in &mut values {
            for v in &mut row[col] {
                *v /= max;
            }
        }
    }
    let prior = match &table.prior {
        None => None,
        Some(p) => {
            let max = p.iter().copied().fold(0.0f64, f64::max);
            Some(p.iter().map(|v| v / max).collect())
        }
    };
    LikelihoodTable::new(values, prior)
}

/// Quantizes a probability in (0, 1] to the 8-bit encoding:
/// `v = clamp(round(p * 256) - 1, 0, 255)`, so 1/256 maps to 0x00 and 1.0
/// to 0xFF.
pub fn quantize(p: f64) -> Result<ProbByte> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Range(format!("probability {p} outside (0, 1]")));
    }
    let v = ((p * 256.0).round() - 1.0).clamp(0.0, 255.0);
    Ok(ProbByte::new(v as u8))
}

/// Compiles a table into a programmed machine: max-normalize each column,
/// floor at [`MIN_COMPILED_PROB`], quantize every entry, program all arrays.
/// The prior, when present, is handled identically and claims the prior
/// column.
pub fn compile(table: &LikelihoodTable) -> Result<MachineImage> {
    if !table.n_entries().is_power_of_two() {
        return Err(Error::Config(format!(
            "entry count {} is not a power of two",
            table.n_entries()
        )));
    }
    let normalized = normalize_columns(table)?;
    let mut bytes = Vec::with_capacity(table.n_rows());
    for row in &normalized.values {
        let mut row_bytes = Vec::with_capacity(table.n_columns());
        for col in row {
            let quantized: Result<Vec<u8>> = col
                .iter()
                .map(|&v| quantize(v.max(MIN_COMPILED_PROB)).map(ProbByte::value))
                .collect();
            row_bytes.push(quantized?);
        }
        bytes.push(row_bytes);
    }
    let prior = match &normalized.prior {
        None => None,
        Some(p) => Some(
            p.iter()
                .map(|&v| quantize(v.max(MIN_COMPILED_PROB)).map(ProbByte::value))
                .collect::<Result<Vec<u8>>>()?,
        ),
    };
    let config = MachineConfig::new(
        table.n_rows(),
        table.n_columns(),
        table.n_entries(),
        prior.is_some(),
    )?;
    MachineImage::from_bytes(config, &bytes, prior)
}
