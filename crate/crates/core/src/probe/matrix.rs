use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use super::ProbeError;

/// Per-sentence predictions from several named sources, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix {
    row_ids: Vec<String>,
    columns: Vec<String>,
    values: Vec<f64>,
}

impl PredictionMatrix {
    /// Every cell must be finite and column names unique.
    pub fn new(row_ids: Vec<String>, columns: Vec<String>, values: Vec<f64>) -> Result<Self, ProbeError> {
        if values.len() != row_ids.len() * columns.len() {
            return Err(ProbeError::Length {
                expected: row_ids.len() * columns.len(),
                found: values.len(),
            });
        }
        let unique: BTreeSet<&String> = columns.iter().collect();
        if unique.len() != columns.len() {
            return Err(ProbeError::Invalid("duplicate column name".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(ProbeError::Invalid(format!(
                "missing or non-finite cell at row {}, column {}",
                row_ids[i / columns.len()],
                columns[i % columns.len()]
            )));
        }
        Ok(PredictionMatrix {
            row_ids,
            columns,
            values,
        })
    }

    pub fn from_columns(row_ids: Vec<String>, cols: Vec<(String, Vec<f64>)>) -> Result<Self, ProbeError> {
        let n = row_ids.len();
        for (name, c) in &cols {
            if c.len() != n {
                return Err(ProbeError::Invalid(format!(
                    "column {name} has {} values for {n} rows",
                    c.len()
                )));
            }
        }
        let mut values = Vec::with_capacity(n * cols.len());
        for r in 0..n {
            values.extend(cols.iter().map(|(_, c)| c[r]));
        }
        Self::new(row_ids, cols.into_iter().map(|(name, _)| name).collect(), values)
    }

    pub fn nrows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.columns.len() + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let k = self.columns.len();
        &self.values[r * k..(r + 1) * k]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.nrows()).map(|r| self.get(r, c)).collect()
    }

    pub fn column_by_name(&self, name: &str) -> Result<Vec<f64>, ProbeError> {
        let c = self
            .column_index(name)
            .ok_or_else(|| ProbeError::Invalid(format!("no column named {name}")))?;
        Ok(self.column(c))
    }

    /// Columns whose names satisfy `keep`, in their original order.
    pub fn select<F: Fn(&str) -> bool>(&self, keep: F) -> Result<Self, ProbeError> {
        let idx: Vec<usize> = (0..self.ncols()).filter(|&c| keep(&self.columns[c])).collect();
        if idx.is_empty() {
            return Err(ProbeError::Invalid("column selection is empty".into()));
        }
        let cols = idx
            .iter()
            .map(|&c| (self.columns[c].clone(), self.column(c)))
            .collect();
        Self::from_columns(self.row_ids.clone(), cols)
    }

    /// Places `other`'s columns to the right; row ids must agree.
    pub fn hconcat(&self, other: &PredictionMatrix) -> Result<Self, ProbeError> {
        if self.row_ids != other.row_ids {
            return Err(ProbeError::Invalid("row ids differ between matrices".into()));
        }
        let mut cols: Vec<(String, Vec<f64>)> =
            (0..self.ncols()).map(|c| (self.columns[c].clone(), self.column(c))).collect();
        cols.extend((0..other.ncols()).map(|c| (other.columns[c].clone(), other.column(c))));
        Self::from_columns(self.row_ids.clone(), cols)
    }

    /// Keeps the rows at `rows`, in that order.
    pub fn subset_rows(&self, rows: &[usize]) -> Self {
        let k = self.ncols();
        let mut values = Vec::with_capacity(rows.len() * k);
        for &r in rows {
            values.extend_from_slice(self.row(r));
        }
        PredictionMatrix {
            row_ids: rows.iter().map(|&r| self.row_ids[r].clone()).collect(),
            columns: self.columns.clone(),
            values,
        }
    }

    /// TSV with a `sentence_id` column followed by one column per source.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<(), ProbeError> {
        let io = |e: std::io::Error| ProbeError::Io(e.to_string());
        write!(w, "sentence_id").map_err(io)?;
        for c in &self.columns {
            write!(w, "\t{c}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
        for r in 0..self.nrows() {
            write!(w, "{}", self.row_ids[r]).map_err(io)?;
            for v in self.row(r) {
                write!(w, "\t{v}").map_err(io)?;
            }
            writeln!(w).map_err(io)?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(reader: R) -> Result<Self, ProbeError> {
        let mut lines = reader.lines().enumerate();
        let header = match lines.next() {
            Some((_, l)) => l.map_err(|e| ProbeError::Io(e.to_string()))?,
            None => return Err(ProbeError::Parse { line: 1, message: "missing header".into() }),
        };
        let mut fields = header.split('\t');
        if fields.next() != Some("sentence_id") {
            return Err(ProbeError::Parse {
                line: 1,
                message: "first column must be sentence_id".into(),
            });
        }
        let columns: Vec<String> = fields.map(str::to_string).collect();
        let mut row_ids = Vec::new();
        let mut values = Vec::new();
        for (i, line) in lines {
            let line = line.map_err(|e| ProbeError::Io(e.to_string()))?;
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split('\t').collect();
            if parts.len() != columns.len() + 1 {
                return Err(ProbeError::Parse {
                    line: i + 1,
                    message: format!("expected {} fields, found {}", columns.len() + 1, parts.len()),
                });
            }
            row_ids.push(parts[0].to_string());
            for p in &parts[1..] {
                values.push(p.parse::<f64>().map_err(|e| ProbeError::Parse {
                    line: i + 1,
                    message: format!("{p:?}: {e}"),
                })?);
            }
        }
        Self::new(row_ids, columns, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> PredictionMatrix {
        PredictionMatrix::from_columns(
            vec!["a".into(), "b".into()],
            vec![("x".into(), vec![1.0, 2.0]), ("y".into(), vec![0.1, -3.25])],
        )
        .unwrap()
    }

    #[test]
    fn tsv_round_trip_is_exact() {
        let m = sample();
        let mut buf = Vec::new();
        m.write_tsv(&mut buf).unwrap();
        assert_eq!(PredictionMatrix::read_tsv(buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn rejects_missing_cells_and_duplicate_names() {
        assert!(PredictionMatrix::new(vec!["a".into()], vec!["x".into()], vec![f64::NAN]).is_err());
        assert!(PredictionMatrix::new(vec!["a".into()], vec!["x".into(), "x".into()], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn select_and_concat() {
        let m = sample();
        let y = m.select(|c| c == "y").unwrap();
        assert_eq!(y.column(0), vec![0.1, -3.25]);
        let both = y.hconcat(&m.select(|c| c == "x").unwrap()).unwrap();
        assert_eq!(both.columns(), &["y", "x"]);
        assert_eq!(m.subset_rows(&[1]).row(0), &[2.0, -3.25]);
    }
}
