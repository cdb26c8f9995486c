//! Sample matrices and their CSV form.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// An `m × n` matrix of samples stored row-major, with column labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    labels: Vec<String>,
    n: usize,
    values: Vec<f64>,
}

impl Dataset {
    /// Builds a dataset from row-major `values`; labels default to `x0..`.
    pub fn from_flat(n: usize, values: Vec<f64>) -> Result<Dataset> {
        if n == 0 || !values.len().is_multiple_of(n) {
            return Err(Error::Data(format!(
                "{} values do not form rows of length {n}",
                values.len()
            )));
        }
        Ok(Dataset {
            labels: default_labels(n),
            n,
            values,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Dataset> {
        let n = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: bad.len(),
            });
        }
        Dataset::from_flat(n, rows.concat())
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Dataset> {
        if labels.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: labels.len(),
            });
        }
        self.labels = labels;
        Ok(self)
    }

    /// Number of samples.
    pub fn m(&self) -> usize {
        self.values.len() / self.n
    }

    /// Number of coordinates.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.n)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.values
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    /// Rows `range` as a new dataset.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Dataset {
        Dataset {
            labels: self.labels.clone(),
            n: self.n,
            values: self.values[range.start * self.n..range.end * self.n].to_vec(),
        }
    }

    /// Applies `f` to every row.
    pub fn map_rows(&self, mut f: impl FnMut(&[f64], &mut [f64])) -> Dataset {
        let mut values = vec![0.0; self.values.len()];
        for (src, dst) in self.rows().zip(values.chunks_exact_mut(self.n)) {
            f(src, dst);
        }
        Dataset {
            labels: self.labels.clone(),
            n: self.n,
            values,
        }
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let labels: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
        if labels.is_empty() || labels.iter().all(String::is_empty) {
            return Err(Error::Data("CSV has no header row".into()));
        }
        let n = labels.len();
        let mut values = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != n {
                return Err(Error::Data(format!(
                    "row {} has {} fields, expected {n}",
                    i + 1,
                    record.len()
                )));
            }
            for (j, field) in record.iter().enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::Data(format!("row {}, column '{}': '{field}' is not a number", i + 1, labels[j]))
                })?;
                if !v.is_finite() {
                    return Err(Error::Data(format!(
                        "row {}, column '{}': value is not finite",
                        i + 1,
                        labels[j]
                    )));
                }
                values.push(v);
            }
        }
        if values.is_empty() {
            return Err(Error::Data("CSV contains no samples".into()));
        }
        Ok(Dataset { labels, n, values })
    }

    pub fn read_csv_path(path: impl AsRef<Path>) -> Result<Dataset> {
        let file = std::fs::File::open(path.as_ref()).map_err(|e| {
            Error::Data(format!("cannot open {}: {e}", path.as_ref().display()))
        })?;
        Dataset::read_csv(std::io::BufReader::new(file))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_table(writer, &self.labels, self.rows())
    }
}

pub(crate) fn default_labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("x{i}")).collect()
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:?}")
}

/// Writes a header and numeric rows as CSV.
pub fn write_table<'a, W: Write>(
    writer: W,
    labels: &[impl AsRef<str>],
    rows: impl IntoIterator<Item = &'a [f64]>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(labels.iter().map(|s| s.as_ref()))?;
    for row in rows {
        w.write_record(row.iter().map(|v| format_float(*v)))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let rows = vec![
            vec![0.1, -1e-300, 12345.678901234567],
            vec![1.0 / 3.0, 2.0f64.sqrt(), -0.0],
        ];
        let d = Dataset::from_rows(&rows).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x0,x1,x2\n"));
        let back = Dataset::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn malformed_csv_is_rejected() {
        assert!(Dataset::read_csv("a,b\n1,x\n".as_bytes()).is_err());
        assert!(Dataset::read_csv("a,b\n1,2,3\n".as_bytes()).is_err());
        assert!(Dataset::read_csv("a,b\n".as_bytes()).is_err());
        assert!(Dataset::read_csv("a,b\n1,NaN\n".as_bytes()).is_err());
    }

    #[test]
    fn shapes() {
        let d = Dataset::from_flat(2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!((d.m(), d.n()), (3, 2));
        assert_eq!(d.row(1), &[3.0, 4.0]);
        assert_eq!(d.column(1), vec![2.0, 4.0, 6.0]);
        assert_eq!(d.slice(1..3).m(), 2);
        assert!(Dataset::from_flat(4, vec![1.0; 6]).is_err());
        assert!(Dataset::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }
}
