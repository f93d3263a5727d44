//! Row-major labelled matrix with per-row weights.
//!
//! Missing cells are stored as NaN; present values are always finite.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

#[inline]
pub fn is_missing(v: f64) -> bool {
    v.is_nan()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    feature_names: Vec<String>,
    values: Vec<f64>,
    labels: Vec<u8>,
    weights: Vec<f64>,
}

impl Dataset {
    pub fn new(feature_names: Vec<String>) -> Dataset {
        Dataset {
            feature_names,
            values: Vec::new(),
            labels: Vec::new(),
            weights: Vec::new(),
        }
    }

    pub fn with_capacity(feature_names: Vec<String>, rows: usize) -> Dataset {
        let m = feature_names.len();
        Dataset {
            feature_names,
            values: Vec::with_capacity(rows * m),
            labels: Vec::with_capacity(rows),
            weights: Vec::with_capacity(rows),
        }
    }

    /// Dataset with generated names `f0..f{m-1}` and unit weights.
    pub fn from_rows(rows: &[Vec<f64>], labels: &[u8]) -> Result<Dataset> {
        let m = rows.first().map_or(0, Vec::len);
        let mut d = Dataset::new((0..m).map(|j| format!("f{j}")).collect());
        if rows.len() != labels.len() {
            return Err(Error::invalid("row and label counts differ"));
        }
        for (r, &y) in rows.iter().zip(labels) {
            d.push_row(r, y, 1.0)?;
        }
        Ok(d)
    }

    pub fn push_row(&mut self, row: &[f64], label: u8, weight: f64) -> Result<()> {
        if row.len() != self.n_features() {
            return Err(Error::invalid(format!(
                "row has {} values, expected {}",
                row.len(),
                self.n_features()
            )));
        }
        if label > 1 {
            return Err(Error::invalid("labels must be 0 or 1"));
        }
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::invalid(format!("weight {weight} must be positive")));
        }
        if row.iter().any(|v| v.is_infinite()) {
            return Err(Error::invalid("infinite feature value"));
        }
        self.values.extend_from_slice(row);
        self.labels.push(label);
        self.weights.push(weight);
        Ok(())
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.n_features();
        &self.values[i * m..(i + 1) * m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        let m = self.n_features().max(1);
        self.values.chunks(m).take(self.len())
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_features() + j]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.value(i, j)).collect()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&y| y == 1).count()
    }

    pub fn has_missing(&self) -> bool {
        self.values.iter().any(|v| is_missing(*v))
    }

    pub fn set_weights(&mut self, weights: Vec<f64>) -> Result<()> {
        if weights.len() != self.len() || weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::invalid("weights must be positive, one per row"));
        }
        self.weights = weights;
        Ok(())
    }

    /// Same rows with every weight reset to 1.
    pub fn unweighted(&self) -> Dataset {
        Dataset {
            weights: vec![1.0; self.len()],
            ..self.clone()
        }
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let mut out = Dataset::with_capacity(self.feature_names.clone(), idx.len());
        for &i in idx {
            out.values.extend_from_slice(self.row(i));
            out.labels.push(self.labels[i]);
            out.weights.push(self.weights[i]);
        }
        out
    }

    /// Mutable access for in-place transforms inside the crate.
    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Writes `features..., label, weight`; missing cells are empty.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let io = |e| Error::io(path, e);
        let mut header = self.feature_names.join(",");
        header.push_str(",label,weight");
        writeln!(w, "{header}").map_err(io)?;
        for i in 0..self.len() {
            let mut line = String::new();
            for &v in self.row(i) {
                push_cell(&mut line, v);
                line.push(',');
            }
            line.push_str(&format!("{},{}", self.labels[i], self.weights[i]));
            writeln!(w, "{line}").map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn read_csv(path: &Path) -> Result<Dataset> {
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers()?.clone();
        let n = headers.len();
        if n < 2 || &headers[n - 2] != "label" || &headers[n - 1] != "weight" {
            return Err(Error::invalid("dataset csv must end with label,weight"));
        }
        let names = headers.iter().take(n - 2).map(String::from).collect();
        let mut d = Dataset::new(names);
        let mut row = Vec::with_capacity(n - 2);
        for rec in reader.records() {
            let rec = rec?;
            row.clear();
            for j in 0..n - 2 {
                row.push(parse_cell(&rec[j])?);
            }
            let label = rec[n - 2].parse().map_err(|_| Error::invalid("bad label"))?;
            let weight = rec[n - 1].parse().map_err(|_| Error::invalid("bad weight"))?;
            d.push_row(&row, label, weight)?;
        }
        Ok(d)
    }
}

pub(crate) fn check_arity(x: &[f64], n: usize) -> Result<()> {
    if x.len() != n {
        return Err(Error::invalid(format!("expected {n} features, got {}", x.len())));
    }
    Ok(())
}

pub(crate) fn push_cell(line: &mut String, v: f64) {
    if !is_missing(v) {
        line.push_str(&format!("{v}"));
    }
}

pub(crate) fn parse_cell(s: &str) -> Result<f64> {
    let t = s.trim();
    if t.is_empty() {
        Ok(f64::NAN)
    } else {
        let v: f64 = t
            .parse()
            .map_err(|_| Error::invalid(format!("bad numeric cell {t:?}")))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::invalid(format!("non-finite cell {t:?}")))
        }
    }
}
