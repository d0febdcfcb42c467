//! Measure networks: a square weight matrix together with a fully supported
//! probability vector on its nodes, plus the JSON and CSV file formats.
//!
//! JSON: `{"omega": [[..], ..], "mu": [..], "labels": [..]}` with `labels`
//! optional. CSV: the first line is `mu,v1,...,vn`, followed by the `n` rows
//! of the weight matrix.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on `sum(mu) - 1` accepted at validation.
pub const PROBABILITY_TOL: f64 = 1e-9;

/// A finite measure network `(X, omega, mu)`.
///
/// Instances are only obtainable through [`MeasureNetwork::new`] (or the
/// readers), which check that `omega` is square and finite and that `mu` is
/// strictly positive with unit mass. Inputs within [`PROBABILITY_TOL`] of unit
/// mass are renormalized.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureNetwork {
    omega: Array2<f64>,
    mu: Array1<f64>,
    labels: Option<Vec<String>>,
}

impl MeasureNetwork {
    pub fn new(omega: Array2<f64>, mu: Array1<f64>) -> Result<Self> {
        Self::with_labels(omega, mu, None)
    }

    pub fn with_labels(
        omega: Array2<f64>,
        mu: Array1<f64>,
        labels: Option<Vec<String>>,
    ) -> Result<Self> {
        let (rows, cols) = omega.dim();
        if rows != cols {
            return Err(Error::NonSquare { rows, cols });
        }
        if rows == 0 {
            return Err(Error::Empty);
        }
        if mu.len() != rows {
            return Err(Error::DimensionMismatch(format!(
                "omega is {rows}x{rows} but mu has {} entries",
                mu.len()
            )));
        }
        if let Some(((row, col), _)) = omega.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteEntry { row, col });
        }
        let mu = normalize_probability(mu)?;
        if let Some(l) = &labels {
            if l.len() != rows {
                return Err(Error::DimensionMismatch(format!(
                    "{} labels for {rows} nodes",
                    l.len()
                )));
            }
        }
        Ok(Self { omega, mu, labels })
    }

    /// Network with uniform node measure.
    pub fn uniform(omega: Array2<f64>) -> Result<Self> {
        let n = omega.nrows();
        let mu = Array1::from_elem(n, 1.0 / n.max(1) as f64);
        Self::new(omega, mu)
    }

    pub fn size(&self) -> usize {
        self.mu.len()
    }

    pub fn omega(&self) -> &Array2<f64> {
        &self.omega
    }

    pub fn mu(&self) -> &Array1<f64> {
        &self.mu
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Same node set and measure, new weights.
    pub fn with_omega(&self, omega: Array2<f64>) -> Result<Self> {
        Self::new(omega, self.mu.clone())
    }

    pub fn into_parts(self) -> (Array2<f64>, Array1<f64>) {
        (self.omega, self.mu)
    }

    /// Simultaneous row/column permutation: node `k` of the result is node
    /// `order[k]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let n = self.size();
        if order.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "permutation of length {} for {n} nodes",
                order.len()
            )));
        }
        let omega = Array2::from_shape_fn((n, n), |(i, j)| self.omega[[order[i], order[j]]]);
        let mu = Array1::from_shape_fn(n, |i| self.mu[order[i]]);
        let labels = self
            .labels
            .as_ref()
            .map(|l| order.iter().map(|&k| l[k].clone()).collect());
        Self::with_labels(omega, mu, labels)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: NetworkFile = serde_json::from_str(s)?;
        file.into_network()
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&NetworkFile::from(self))?)
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut records = rdr.records();
        let head = records
            .next()
            .ok_or_else(|| Error::Parse("empty csv".into()))??;
        if head.get(0) != Some("mu") {
            return Err(Error::Parse("first csv line must start with `mu`".into()));
        }
        let mu = head
            .iter()
            .skip(1)
            .map(parse_f64)
            .collect::<Result<Vec<_>>>()?;
        if mu.is_empty() {
            return Err(Error::Parse("missing mu values".into()));
        }
        let mut rows = Vec::new();
        for rec in records {
            let rec = rec?;
            if rec.iter().all(|f| f.is_empty()) {
                continue;
            }
            rows.push(rec.iter().map(parse_f64).collect::<Result<Vec<_>>>()?);
        }
        let omega = rows_to_matrix(rows)?;
        Self::new(omega, Array1::from(mu))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(writer);
        let mut head = vec!["mu".to_string()];
        head.extend(self.mu.iter().map(|v| v.to_string()));
        w.write_record(&head)?;
        for row in self.omega.rows() {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>, format: Format) -> Result<Self> {
        let path = path.as_ref();
        match format {
            Format::Json => Self::from_json_str(&fs::read_to_string(path)?),
            Format::Csv => Self::from_csv_reader(fs::File::open(path)?),
        }
    }

    /// Reads a file, picking the format from its extension (`.csv` or JSON otherwise).
    pub fn read_auto(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::read(path, Format::from_path(path))
    }

    pub fn write(&self, path: impl AsRef<Path>, format: Format) -> Result<()> {
        match format {
            Format::Json => fs::write(path, self.to_json_string()?)?,
            Format::Csv => self.write_csv(fs::File::create(path)?)?,
        }
        Ok(())
    }
}

/// On-disk network formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

impl Format {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Json,
        }
    }
}

#[derive(Serialize, Deserialize)]
pub(crate) struct NetworkFile {
    omega: Vec<Vec<f64>>,
    mu: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
}

impl NetworkFile {
    pub(crate) fn into_network(self) -> Result<MeasureNetwork> {
        let omega = rows_to_matrix(self.omega)?;
        MeasureNetwork::with_labels(omega, Array1::from(self.mu), self.labels)
    }
}

impl From<&MeasureNetwork> for NetworkFile {
    fn from(n: &MeasureNetwork) -> Self {
        Self {
            omega: matrix_to_rows(&n.omega),
            mu: n.mu.to_vec(),
            labels: n.labels.clone(),
        }
    }
}

impl Serialize for MeasureNetwork {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        NetworkFile::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for MeasureNetwork {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        NetworkFile::deserialize(d)?
            .into_network()
            .map_err(serde::de::Error::custom)
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::Parse(format!("not a number: {s:?}")))
}

/// Builds a matrix from row vectors; rows must share one length.
pub(crate) fn rows_to_matrix(rows: Vec<Vec<f64>>) -> Result<Array2<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != ncols) {
        return Err(Error::Parse(format!(
            "ragged matrix: row of length {} where {ncols} expected",
            bad.len()
        )));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((nrows, ncols), flat).map_err(|e| Error::Parse(e.to_string()))
}

pub(crate) fn matrix_to_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Serde adapter writing a matrix as a list of rows.
pub mod matrix_rows {
    use ndarray::Array2;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Array2<f64>, s: S) -> Result<S::Ok, S::Error> {
        super::matrix_to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Array2<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        super::rows_to_matrix(rows).map_err(serde::de::Error::custom)
    }
}

/// Serde adapter writing a vector as a plain list.
pub mod vector {
    use ndarray::Array1;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Array1<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().expect("contiguous").serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Array1<f64>, D::Error> {
        Ok(Array1::from(Vec::<f64>::deserialize(d)?))
    }
}

/// Serde adapter for a list of vectors.
pub mod vectors {
    use ndarray::Array1;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Array1<f64>], s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = v.iter().map(|r| r.to_vec()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Array1<f64>>, D::Error> {
        Ok(Vec::<Vec<f64>>::deserialize(d)?.into_iter().map(Array1::from).collect())
    }
}

/// Checks strict positivity and unit mass, then rescales to sum exactly to one.
pub(crate) fn normalize_probability(mu: Array1<f64>) -> Result<Array1<f64>> {
    if let Some((i, v)) = mu.iter().enumerate().find(|(_, v)| !v.is_finite() || **v <= 0.0) {
        return Err(Error::NonProbability(format!("entry {i} is {v}")));
    }
    let total: f64 = mu.sum();
    if (total - 1.0).abs() > PROBABILITY_TOL {
        return Err(Error::NonProbability(format!("sums to {total}")));
    }
    if (total - 1.0).abs() <= 4.0 * f64::EPSILON * mu.len() as f64 {
        return Ok(mu);
    }
    Ok(mu / total)
}
