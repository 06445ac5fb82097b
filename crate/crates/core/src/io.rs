//! Plain-text formats shared by the command-line tools.
//!
//! Matrices are headerless CSV with one row per line. Data files store one
//! point per row, so a `D x N` data matrix is written as `N` rows of `D`
//! values. Label files hold one 0-based integer per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DataMatrix, SubspaceBasis};
use crate::kss::Labeling;
use crate::scalar::Real;
use crate::synth::{GeneratorConfig, ProblemInstance};

/// Reads a headerless numeric CSV into a row-major matrix.
pub fn read_matrix_from<T: Real, R: Read>(reader: R) -> Result<DMatrix<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<Vec<T>> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .enumerate()
            .map(|(j, field)| {
                let v: f64 = field
                    .parse()
                    .map_err(|_| Error::Parse(format!("row {}, column {}: `{field}` is not a number", i + 1, j + 1)))?;
                if v.is_finite() {
                    Ok(T::lit(v))
                } else {
                    Err(Error::NonFinite { row: i, col: j })
                }
            })
            .collect::<Result<Vec<T>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse(format!(
                    "row {} has {} values, expected {}",
                    i + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 {
        return Err(Error::EmptyPointSet);
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn read_matrix<T: Real>(path: &Path) -> Result<DMatrix<T>> {
    read_matrix_from(File::open(path)?)
}

pub fn write_matrix_to<T: Real, W: Write>(writer: W, m: &DMatrix<T>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    for row in m.row_iter() {
        w.write_record(row.iter().map(|v| format!("{v}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_matrix<T: Real>(path: &Path, m: &DMatrix<T>) -> Result<()> {
    write_matrix_to(BufWriter::new(File::create(path)?), m)
}

/// Reads points stored one per row.
pub fn read_data<T: Real>(path: &Path) -> Result<DataMatrix<T>> {
    DataMatrix::new(read_matrix::<T>(path)?.transpose())
}

pub fn write_data<T: Real>(path: &Path, data: &DataMatrix<T>) -> Result<()> {
    write_matrix(path, &data.values().transpose())
}

pub fn read_labels_from<R: Read>(reader: R) -> Result<Labeling> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v = line
            .parse::<usize>()
            .map_err(|_| Error::Parse(format!("line {}: `{line}` is not a nonnegative integer", i + 1)))?;
        out.push(v);
    }
    Ok(Labeling::new(out))
}

pub fn read_labels(path: &Path) -> Result<Labeling> {
    read_labels_from(File::open(path)?)
}

pub fn write_labels_to<W: Write>(mut writer: W, labels: &Labeling) -> Result<()> {
    for l in labels.as_slice() {
        writeln!(writer, "{l}")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_labels(path: &Path, labels: &Labeling) -> Result<()> {
    write_labels_to(BufWriter::new(File::create(path)?), labels)
}

/// JSON companion of a generated instance. Bases are stored as lists of
/// columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub ambient_dim: usize,
    pub n_points: usize,
    pub bases: Vec<Vec<Vec<f64>>>,
    pub noise_sigma: f64,
    pub missing_mask: Option<Vec<Vec<usize>>>,
    pub config: GeneratorConfig,
}

impl InstanceRecord {
    pub fn from_instance<T: Real>(inst: &ProblemInstance<T>) -> Self {
        let bases = inst
            .true_bases
            .iter()
            .map(|b| {
                b.matrix()
                    .column_iter()
                    .map(|c| c.iter().map(|v| v.as_f64()).collect())
                    .collect()
            })
            .collect();
        Self {
            ambient_dim: inst.data.ambient_dim(),
            n_points: inst.data.n_points(),
            bases,
            noise_sigma: inst.noise_sigma,
            missing_mask: inst.missing_mask.clone(),
            config: inst.generator_config.clone(),
        }
    }

    pub fn bases<T: Real>(&self) -> Result<Vec<SubspaceBasis<T>>> {
        self.bases
            .iter()
            .map(|cols| {
                if cols.iter().any(|c| c.len() != self.ambient_dim) {
                    return Err(Error::DimensionMismatch {
                        expected: self.ambient_dim,
                        found: cols.iter().map(Vec::len).find(|&l| l != self.ambient_dim).unwrap_or(0),
                    });
                }
                let m = DMatrix::from_fn(self.ambient_dim, cols.len(), |i, j| T::lit(cols[j][i]));
                SubspaceBasis::new(m)
            })
            .collect()
    }

    pub fn read(path: &Path) -> Result<Self> {
        serde_json::from_reader(BufReader::new(File::open(path)?)).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self).map_err(|e| Error::Parse(e.to_string()))?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }
}
