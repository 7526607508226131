//! The sample: an `n × p` matrix of observations with optional ground truth.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CubtError, Result};

/// Observations stored row-major, one row per observation.
///
/// Labels, when present, are 1-based group ids forming the contiguous set
/// `{1..R}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    values: Vec<f64>,
    n: usize,
    p: usize,
    labels: Option<Vec<usize>>,
    column_names: Option<Vec<String>>,
    row_names: Option<Vec<String>>,
}

impl Dataset {
    /// Builds a dataset from row vectors. All rows must have the same
    /// non-zero length and every entry must be finite.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(CubtError::EmptyDataset);
        }
        let p = rows[0].as_ref().len();
        let mut values = Vec::with_capacity(n * p);
        for row in rows {
            let row = row.as_ref();
            if row.len() != p {
                return Err(CubtError::Dimension {
                    expected: p,
                    found: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        Self::from_flat(n, p, values)
    }

    /// Builds a dataset from a row-major buffer of length `n * p`.
    pub fn from_flat(n: usize, p: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(CubtError::EmptyDataset);
        }
        if p == 0 {
            return Err(CubtError::InvalidData("dataset has no columns".into()));
        }
        if values.len() != n * p {
            return Err(CubtError::InvalidData(format!(
                "buffer of length {} cannot hold {n} x {p} values",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(CubtError::InvalidData(format!(
                "non-finite value at row {}, column {}",
                pos / p + 1,
                pos % p + 1
            )));
        }
        Ok(Dataset {
            values,
            n,
            p,
            labels: None,
            column_names: None,
            row_names: None,
        })
    }

    /// Attaches ground-truth labels (1-based, contiguous `{1..R}`).
    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(CubtError::LengthMismatch(labels.len(), self.n));
        }
        check_contiguous(&labels)?;
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_column_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.p {
            return Err(CubtError::Dimension {
                expected: self.p,
                found: names.len(),
            });
        }
        self.column_names = Some(names);
        Ok(self)
    }

    pub fn with_row_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n {
            return Err(CubtError::LengthMismatch(names.len(), self.n));
        }
        self.row_names = Some(names);
        Ok(self)
    }

    /// Number of observations.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of variables.
    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.p..(i + 1) * self.p]
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.p + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.p)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn column_names(&self) -> Option<&[String]> {
        self.column_names.as_deref()
    }

    pub fn row_names(&self) -> Option<&[String]> {
        self.row_names.as_deref()
    }

    /// Number of distinct ground-truth groups, if labels are present.
    pub fn n_groups(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().copied().max().unwrap_or(0))
    }

    /// Drops the labels, e.g. before handing data to a clustering routine.
    pub fn without_labels(&self) -> Dataset {
        Dataset {
            labels: None,
            ..self.clone()
        }
    }

    /// Centers each column and scales it to unit variance (divisor `n`).
    /// Constant columns become all zeros.
    pub fn standardize(&self) -> Result<Dataset> {
        let scaling = Scaling::fit(self)?;
        Ok(scaling.apply(self))
    }

    /// Reads the CSV dataset format: optional header row, optional leading
    /// non-numeric identifier column, and a final column named `label`
    /// (header required) holding ground-truth groups.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Dataset> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|source| CubtError::File {
            path: path.to_path_buf(),
            source,
        })?;
        Self::read_csv_from(file)
    }

    pub fn read_csv_from<R: Read>(reader: R) -> Result<Dataset> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut records = Vec::new();
        for rec in rdr.records() {
            records.push(rec?);
        }
        let Some(first) = records.first() else {
            return Err(CubtError::EmptyDataset);
        };
        let has_header = first.iter().any(|f| f.parse::<f64>().is_err());
        let header: Option<Vec<String>> =
            has_header.then(|| first.iter().map(str::to_string).collect());
        let body = if has_header { &records[1..] } else { &records[..] };
        let row_offset = if has_header { 2 } else { 1 };
        let Some(first_row) = body.first() else {
            return Err(CubtError::EmptyDataset);
        };
        let has_id = first_row
            .get(0)
            .is_some_and(|f| f.parse::<f64>().is_err());
        let width = first_row.len();
        let has_label = header
            .as_ref()
            .and_then(|h| h.last())
            .is_some_and(|name| name.eq_ignore_ascii_case("label"));
        let start = usize::from(has_id);
        let end = if has_label { width - 1 } else { width };
        if end <= start {
            return Err(CubtError::InvalidData("no numeric columns".into()));
        }

        let mut values = Vec::with_capacity(body.len() * (end - start));
        let mut labels = Vec::new();
        let mut ids = Vec::new();
        for (r, rec) in body.iter().enumerate() {
            let row = r + row_offset;
            if rec.len() != width {
                return Err(CubtError::Parse {
                    row,
                    column: rec.len().min(width) + 1,
                    message: format!("expected {width} fields, found {}", rec.len()),
                });
            }
            if has_id {
                ids.push(rec[0].to_string());
            }
            for c in start..end {
                let v: f64 = rec[c].parse().map_err(|_| CubtError::Parse {
                    row,
                    column: c + 1,
                    message: format!("`{}` is not a number", &rec[c]),
                })?;
                if !v.is_finite() {
                    return Err(CubtError::Parse {
                        row,
                        column: c + 1,
                        message: "value is not finite".into(),
                    });
                }
                values.push(v);
            }
            if has_label {
                let l: usize = rec[width - 1].parse().map_err(|_| CubtError::Parse {
                    row,
                    column: width,
                    message: format!("`{}` is not a positive integer label", &rec[width - 1]),
                })?;
                labels.push(l);
            }
        }

        let mut data = Dataset::from_flat(body.len(), end - start, values)?;
        if let Some(h) = header {
            data = data.with_column_names(h[start..end].to_vec())?;
        }
        if has_id {
            data = data.with_row_names(ids)?;
        }
        if has_label {
            data = data.with_labels(labels)?;
        }
        Ok(data)
    }

    /// Writes the dataset in the format accepted by [`Dataset::read_csv`].
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = Vec::new();
        if self.row_names.is_some() {
            header.push("id".into());
        }
        match &self.column_names {
            Some(names) => header.extend(names.iter().cloned()),
            None => header.extend((1..=self.p).map(|j| format!("x{j}"))),
        }
        if self.labels.is_some() {
            header.push("label".into());
        }
        w.write_record(&header)?;
        for i in 0..self.n {
            let mut rec: Vec<String> = Vec::with_capacity(header.len());
            if let Some(ids) = &self.row_names {
                rec.push(ids[i].clone());
            }
            rec.extend(self.row(i).iter().map(|v| v.to_string()));
            if let Some(l) = &self.labels {
                rec.push(l[i].to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-column affine map used by [`Dataset::standardize`]; kept with fitted
/// trees so new observations can be mapped the same way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub mean: Vec<f64>,
    /// Population standard deviation, or 0 for constant columns.
    pub scale: Vec<f64>,
}

impl Scaling {
    pub fn fit(data: &Dataset) -> Result<Scaling> {
        let n = data.n();
        if n == 0 {
            return Err(CubtError::EmptyDataset);
        }
        let p = data.p();
        let mut mean = vec![0.0; p];
        for row in data.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; p];
        for row in data.rows() {
            for j in 0..p {
                let d = row[j] - mean[j];
                var[j] += d * d;
            }
        }
        let scale = var
            .into_iter()
            .zip(&mean)
            .map(|(v, m)| {
                let sd = (v / n as f64).sqrt();
                // Rounding noise on a constant column is not spread.
                if sd <= 1e-12 * m.abs().max(1.0) {
                    0.0
                } else {
                    sd
                }
            })
            .collect();
        Ok(Scaling { mean, scale })
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| if *s == 0.0 { 0.0 } else { (v - m) / s })
            .collect()
    }

    pub fn apply(&self, data: &Dataset) -> Dataset {
        let mut out = data.clone();
        for i in 0..data.n() {
            let t = self.transform_row(data.row(i));
            out.values[i * data.p()..(i + 1) * data.p()].copy_from_slice(&t);
        }
        out
    }
}

fn check_contiguous(labels: &[usize]) -> Result<()> {
    let max = labels.iter().copied().max().unwrap_or(0);
    let mut seen = vec![false; max + 1];
    for &l in labels {
        if l == 0 {
            return Err(CubtError::InvalidData("labels must be 1-based".into()));
        }
        seen[l] = true;
    }
    if let Some(missing) = (1..=max).find(|&l| !seen[l]) {
        return Err(CubtError::InvalidData(format!(
            "labels must form a contiguous set 1..{max}; {missing} is missing"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(data: &Dataset, j: usize) -> Vec<f64> {
        (0..data.n()).map(|i| data.value(i, j)).collect()
    }

    #[test]
    fn standardize_two_points() {
        let d = Dataset::from_rows(&[[0.0], [2.0]]).unwrap();
        assert_eq!(col(&d.standardize().unwrap(), 0), vec![-1.0, 1.0]);
    }

    #[test]
    fn standardize_constant_column() {
        let d = Dataset::from_rows(&[[5.0, 1.0], [5.0, 2.0], [5.0, 3.0]]).unwrap();
        assert_eq!(col(&d.standardize().unwrap(), 0), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn standardize_is_idempotent() {
        let d = Dataset::from_rows(&[[1.0, -3.0], [4.0, 0.5], [2.5, 7.0], [0.0, 1.0]])
            .unwrap()
            .with_labels(vec![1, 2, 2, 1])
            .unwrap();
        let once = d.standardize().unwrap();
        let twice = once.standardize().unwrap();
        for (a, b) in once.values().iter().zip(twice.values()) {
            assert!((a - b).abs() <= 1e-12);
        }
        assert_eq!(twice.labels(), Some(&[1, 2, 2, 1][..]));
    }

    #[test]
    fn rejects_non_finite_and_ragged_rows() {
        assert!(matches!(
            Dataset::from_rows(&[vec![1.0, f64::NAN]]),
            Err(CubtError::InvalidData(_))
        ));
        assert!(matches!(
            Dataset::from_rows(&[vec![1.0, 2.0], vec![1.0]]),
            Err(CubtError::Dimension { .. })
        ));
        assert!(matches!(
            Dataset::from_rows::<Vec<f64>>(&[]),
            Err(CubtError::EmptyDataset)
        ));
    }

    #[test]
    fn labels_must_be_contiguous() {
        let d = Dataset::from_rows(&[[0.0], [1.0], [2.0]]).unwrap();
        assert!(d.clone().with_labels(vec![1, 3, 3]).is_err());
        assert!(d.clone().with_labels(vec![0, 1, 1]).is_err());
        assert_eq!(d.with_labels(vec![2, 1, 2]).unwrap().n_groups(), Some(2));
    }

    #[test]
    fn csv_with_header_ids_and_labels() {
        let text = "id,a,b,label\nr1,1.5,2,1\nr2,-3,4e-1,2\n";
        let d = Dataset::read_csv_from(text.as_bytes()).unwrap();
        assert_eq!((d.n(), d.p()), (2, 2));
        assert_eq!(d.row(1), &[-3.0, 0.4]);
        assert_eq!(d.labels(), Some(&[1, 2][..]));
        assert_eq!(d.column_names().unwrap(), &["a", "b"]);
        assert_eq!(d.row_names().unwrap(), &["r1", "r2"]);

        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let back = Dataset::read_csv_from(buf.as_slice()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn csv_without_header() {
        let d = Dataset::read_csv_from("1,2\n3,4\n5,6\n".as_bytes()).unwrap();
        assert_eq!((d.n(), d.p()), (3, 2));
        assert!(d.labels().is_none());
    }

    #[test]
    fn csv_parse_error_names_cell() {
        let err = Dataset::read_csv_from("a,b\n1,2\n3,oops\n".as_bytes()).unwrap_err();
        match err {
            CubtError::Parse { row, column, .. } => assert_eq!((row, column), (3, 2)),
            other => panic!("unexpected {other:?}"),
        }
    }
}
