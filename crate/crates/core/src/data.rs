//! Dense row-major matrix and the labeled dataset type.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    /// Build from a row-major buffer; length must be `rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "buffer of length {} cannot be a {}x{} matrix",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Build from rows; all rows must share one length.
    pub fn from_rows(rows: &[Vec<S>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * p);
        for r in rows {
            if r.len() != p {
                return Err(Error::Shape("ragged rows".into()));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix { rows: n, cols: p, data })
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> S {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: S) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn add_assign_at(&mut self, i: usize, j: usize, v: S) {
        self.data[i * self.cols + j] = self.data[i * self.cols + j] + v;
    }

    pub fn column(&self, j: usize) -> Vec<S> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn set_column(&mut self, j: usize, values: &[S]) {
        debug_assert_eq!(values.len(), self.rows);
        for (i, &v) in values.iter().enumerate() {
            self.set(i, j, v);
        }
    }

    pub fn fill(&mut self, v: S) {
        self.data.fill(v);
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    /// Column sums.
    pub fn col_sums(&self) -> Vec<S> {
        let mut out = vec![S::zero(); self.cols];
        for i in 0..self.rows {
            for (j, o) in out.iter_mut().enumerate() {
                *o = *o + self.get(i, j);
            }
        }
        out
    }
}

/// Feature matrix plus labels, the unit of training and evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<S> {
    features: Matrix<S>,
    labels: Vec<S>,
    feature_names: Option<Vec<String>>,
}

impl<S: Scalar> Dataset<S> {
    /// Validates finiteness and shape; labels must have one entry per row.
    pub fn new(features: Matrix<S>, labels: Vec<S>) -> Result<Self> {
        Self::with_names(features, labels, None)
    }

    pub fn with_names(
        features: Matrix<S>,
        labels: Vec<S>,
        feature_names: Option<Vec<String>>,
    ) -> Result<Self> {
        if features.n_rows() == 0 || features.n_cols() == 0 {
            return Err(Error::InvalidInput(
                "dataset must have at least one row and one feature".into(),
            ));
        }
        if labels.len() != features.n_rows() {
            return Err(Error::Shape(format!(
                "{} labels for {} rows",
                labels.len(),
                features.n_rows()
            )));
        }
        if let Some(names) = &feature_names {
            if names.len() != features.n_cols() {
                return Err(Error::Shape(format!(
                    "{} feature names for {} columns",
                    names.len(),
                    features.n_cols()
                )));
            }
        }
        if features.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite feature value".into()));
        }
        if labels.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite label".into()));
        }
        Ok(Dataset {
            features,
            labels,
            feature_names,
        })
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.features.n_rows()
    }

    #[inline]
    pub fn n_features(&self) -> usize {
        self.features.n_cols()
    }

    #[inline]
    pub fn features(&self) -> &Matrix<S> {
        &self.features
    }

    #[inline]
    pub fn labels(&self) -> &[S] {
        &self.labels
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    /// Name of feature `k`, falling back to a 1-based `x{k+1}` label.
    pub fn feature_name(&self, k: usize) -> String {
        match &self.feature_names {
            Some(names) => names[k].clone(),
            None => default_feature_name(k),
        }
    }

    /// True when every label is 0 or 1, the domain logistic training needs.
    pub fn labels_are_binary(&self) -> bool {
        self.labels
            .iter()
            .all(|&y| y == S::zero() || y == S::one())
    }

    /// Read a dataset from CSV: header row, one label column by name, every
    /// other column a numeric feature (file column order preserved).
    pub fn read_csv(path: impl AsRef<Path>, label_column: &str) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::Reader::from_reader(BufReader::new(file));
        let headers = reader
            .headers()
            .map_err(|e| Error::csv(path, e))?
            .clone();
        let label_idx = headers
            .iter()
            .position(|h| h == label_column)
            .ok_or_else(|| {
                Error::InvalidInput(format!(
                    "label column '{label_column}' not found in {}",
                    path.display()
                ))
            })?;
        let feature_names: Vec<String> = headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != label_idx)
            .map(|(_, h)| h.to_string())
            .collect();
        if feature_names.is_empty() {
            return Err(Error::InvalidInput(format!(
                "{} has no feature columns besides '{label_column}'",
                path.display()
            )));
        }

        let mut rows: Vec<Vec<S>> = Vec::new();
        let mut labels: Vec<S> = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::csv(path, e))?;
            let mut row = Vec::with_capacity(feature_names.len());
            for (i, field) in record.iter().enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::InvalidInput(format!(
                        "non-numeric value '{field}' at data row {line} of {}",
                        path.display()
                    ))
                })?;
                let v = S::from(v).ok_or_else(|| {
                    Error::InvalidInput(format!("value '{field}' not representable"))
                })?;
                if i == label_idx {
                    labels.push(v);
                } else {
                    row.push(v);
                }
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::InvalidInput(format!(
                "{} contains no data rows",
                path.display()
            )));
        }
        Dataset::with_names(Matrix::from_rows(&rows)?, labels, Some(feature_names))
    }

    /// Read a CSV where every column is a numeric feature; labels are set
    /// to zero (for pipelines that synthesize their own labels).
    pub fn read_feature_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::Reader::from_reader(BufReader::new(file));
        let feature_names: Vec<String> = reader
            .headers()
            .map_err(|e| Error::csv(path, e))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows: Vec<Vec<S>> = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::csv(path, e))?;
            let row = record
                .iter()
                .map(|field| {
                    field
                        .trim()
                        .parse::<f64>()
                        .ok()
                        .and_then(S::from)
                        .ok_or_else(|| {
                            Error::InvalidInput(format!(
                                "non-numeric value '{field}' at data row {line} of {}",
                                path.display()
                            ))
                        })
                })
                .collect::<Result<Vec<S>>>()?;
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::InvalidInput(format!(
                "{} contains no data rows",
                path.display()
            )));
        }
        let labels = vec![S::zero(); rows.len()];
        Dataset::with_names(Matrix::from_rows(&rows)?, labels, Some(feature_names))
    }

    /// Write the dataset as CSV with the label in a column named
    /// `label_column`.
    pub fn write_csv(&self, path: impl AsRef<Path>, label_column: &str) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let names: Vec<String> = (0..self.n_features())
            .map(|k| self.feature_name(k))
            .collect();
        writeln!(w, "{},{}", names.join(","), label_column).map_err(|e| Error::io(path, e))?;
        for i in 0..self.n_rows() {
            let mut line = String::new();
            for v in self.features.row(i) {
                line.push_str(&format!("{v}"));
                line.push(',');
            }
            line.push_str(&format!("{}", self.labels[i]));
            writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }

    /// Split off the first `n_head` rows; the remainder becomes the second
    /// dataset.
    pub fn split_at(&self, n_head: usize) -> Result<(Dataset<S>, Dataset<S>)> {
        if n_head == 0 || n_head >= self.n_rows() {
            return Err(Error::InvalidInput(format!(
                "cannot split {} rows at {n_head}",
                self.n_rows()
            )));
        }
        let p = self.n_features();
        let head = Matrix::from_vec(n_head, p, self.features.data()[..n_head * p].to_vec())?;
        let tail = Matrix::from_vec(
            self.n_rows() - n_head,
            p,
            self.features.data()[n_head * p..].to_vec(),
        )?;
        let head = Dataset::with_names(head, self.labels[..n_head].to_vec(), self.feature_names.clone())?;
        let tail = Dataset::with_names(tail, self.labels[n_head..].to_vec(), self.feature_names.clone())?;
        Ok((head, tail))
    }
}

/// 1-based default feature label, `x1`, `x2`, ...
pub fn default_feature_name(k: usize) -> String {
    format!("x{}", k + 1)
}
