//! Weighted binary datasets.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// A binary sample matrix with one nonnegative weight per row.
///
/// Columns are labelled with global variable ids so that restricted
/// sub-datasets keep their mapping back to the full variable set.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedDataset {
    cells: Vec<u8>,
    weights: Vec<f64>,
    variable_ids: Vec<usize>,
}

/// Weighted 2x2 contingency table, indexed `[value_i][value_j]`.
pub type PairTable = [[f64; 2]; 2];

impl WeightedDataset {
    /// Builds a dataset from row-major cells.
    pub fn new(cells: Vec<u8>, weights: Vec<f64>, variable_ids: Vec<usize>) -> Result<Self> {
        let cols = variable_ids.len();
        if variable_ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("variable ids must be strictly ascending"));
        }
        if cols == 0 {
            if !cells.is_empty() {
                return Err(Error::invalid("cells given for a dataset without variables"));
            }
        } else if cells.len() != weights.len() * cols {
            return Err(Error::invalid(format!(
                "{} cells do not fill {} rows of {} columns",
                cells.len(),
                weights.len(),
                cols
            )));
        }
        if let Some(c) = cells.iter().find(|&&c| c > 1) {
            return Err(Error::invalid(format!("cell value {c} is not binary")));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid("weights must be finite and nonnegative"));
        }
        Ok(Self {
            cells,
            weights,
            variable_ids,
        })
    }

    /// Unit-weight dataset over variables `0..rows[0].len()`.
    pub fn from_rows<R: AsRef<[u8]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut cells = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(Error::invalid(format!(
                    "row {i} has {} values, expected {cols}",
                    row.len()
                )));
            }
            cells.extend_from_slice(row);
        }
        Self::new(cells, vec![1.0; rows.len()], (0..cols).collect())
    }

    /// Same samples with replaced weights.
    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.weights.len() {
            return Err(Error::invalid("weight vector length differs from row count"));
        }
        Self::new(self.cells.clone(), weights, self.variable_ids.clone())
    }

    /// Empty dataset over the given variables.
    pub fn empty(variable_ids: Vec<usize>) -> Self {
        Self {
            cells: Vec::new(),
            weights: Vec::new(),
            variable_ids,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.weights.len()
    }

    pub fn n_vars(&self) -> usize {
        self.variable_ids.len()
    }

    pub fn variable_ids(&self) -> &[usize] {
        &self.variable_ids
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn row(&self, r: usize) -> &[u8] {
        let d = self.n_vars();
        &self.cells[r * d..(r + 1) * d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[u8]> + '_ {
        let d = self.n_vars();
        let n = self.n_rows();
        (0..n).map(move |r| &self.cells[r * d..(r + 1) * d])
    }

    /// Column position of a global variable id.
    pub fn column_of(&self, var: usize) -> Result<usize> {
        self.variable_ids
            .binary_search(&var)
            .map_err(|_| Error::UnknownVariable(var))
    }

    /// Rows whose `var` equals `value`, with that column removed.
    pub fn restrict(&self, var: usize, value: u8) -> Result<Self> {
        let col = self.column_of(var)?;
        Ok(self.restrict_column(col, value))
    }

    pub(crate) fn restrict_column(&self, col: usize, value: u8) -> Self {
        let d = self.n_vars();
        let mut variable_ids = self.variable_ids.clone();
        variable_ids.remove(col);
        let mut cells = Vec::new();
        let mut weights = Vec::new();
        for (row, &w) in self.rows().zip(&self.weights) {
            if row[col] == value {
                cells.extend_from_slice(&row[..col]);
                cells.extend_from_slice(&row[col + 1..d]);
                weights.push(w);
            }
        }
        Self {
            cells,
            weights,
            variable_ids,
        }
    }

    /// Splits on a column in a single pass: `(value 0 part, value 1 part)`.
    pub(crate) fn split_column(&self, col: usize) -> [Self; 2] {
        let d = self.n_vars();
        let mut variable_ids = self.variable_ids.clone();
        variable_ids.remove(col);
        let mut parts = [
            Self::empty(variable_ids.clone()),
            Self::empty(variable_ids),
        ];
        for (row, &w) in self.rows().zip(&self.weights) {
            let part = &mut parts[row[col] as usize];
            part.cells.extend_from_slice(&row[..col]);
            part.cells.extend_from_slice(&row[col + 1..d]);
            part.weights.push(w);
        }
        parts
    }

    /// Weighted contingency table of two distinct variables.
    pub fn pair_counts(&self, i: usize, j: usize) -> Result<PairTable> {
        if i == j {
            return Err(Error::invalid(format!("pair_counts needs two distinct variables, got {i} twice")));
        }
        let ci = self.column_of(i)?;
        let cj = self.column_of(j)?;
        let mut table = [[0.0; 2]; 2];
        for (row, &w) in self.rows().zip(&self.weights) {
            table[row[ci] as usize][row[cj] as usize] += w;
        }
        Ok(table)
    }

    /// Loads a comma-separated 0/1 file with unit weights.
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_csv(&text)
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut cells = Vec::new();
        let mut arity = None;
        let mut rows = 0usize;
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                // Trailing blank lines are tolerated, interior ones are not.
                continue;
            }
            let mut count = 0;
            for token in line.split(',') {
                let value = match token.trim() {
                    "0" => 0,
                    "1" => 1,
                    other => {
                        return Err(Error::Parse {
                            line: line_no,
                            message: format!("token {other:?} is not 0 or 1"),
                        })
                    }
                };
                cells.push(value);
                count += 1;
            }
            match arity {
                None => arity = Some(count),
                Some(a) if a != count => {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("row has {count} values, expected {a}"),
                    })
                }
                _ => {}
            }
            rows += 1;
        }
        let Some(arity) = arity else {
            return Err(Error::Parse {
                line: 1,
                message: "file contains no rows".into(),
            });
        };
        Self::new(cells, vec![1.0; rows], (0..arity).collect())
    }

    /// Comma-separated rows, one per line, newline-terminated.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.cells.len() * 2);
        for row in self.rows() {
            for (k, v) in row.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Sufficient statistics for Chow-Liu learning and tree scoring: weighted
/// marginal counts of ones and pairwise counts of co-occurring ones.
#[derive(Clone, Debug)]
pub(crate) struct PairStats {
    pub total: f64,
    pub ones: Vec<f64>,
    /// Upper-triangular `n11[i][j]` stored densely, `i < j`.
    both: Vec<f64>,
    d: usize,
}

impl PairStats {
    pub fn from_dataset(data: &WeightedDataset) -> Self {
        let d = data.n_vars();
        let mut ones = vec![0.0; d];
        let mut both = vec![0.0; d * d];
        let mut total = 0.0;
        let mut active = Vec::with_capacity(d);
        for (row, &w) in data.rows().zip(data.weights()) {
            total += w;
            if w == 0.0 {
                continue;
            }
            active.clear();
            active.extend(row.iter().enumerate().filter(|(_, &v)| v == 1).map(|(k, _)| k));
            for (a, &i) in active.iter().enumerate() {
                ones[i] += w;
                let base = i * d;
                for &j in &active[a + 1..] {
                    both[base + j] += w;
                }
            }
        }
        Self { total, ones, both, d }
    }

    pub fn n_vars(&self) -> usize {
        self.d
    }

    /// Table for local columns `i != j`, `[value_i][value_j]`.
    pub fn table(&self, i: usize, j: usize) -> PairTable {
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        let n11 = self.both[lo * self.d + hi];
        let n1i = self.ones[i];
        let n1j = self.ones[j];
        let n10 = (n1i - n11).max(0.0);
        let n01 = (n1j - n11).max(0.0);
        let n00 = (self.total - n1i - n1j + n11).max(0.0);
        [[n00, n01], [n10, n11]]
    }

    pub fn marginal(&self, i: usize) -> [f64; 2] {
        [(self.total - self.ones[i]).max(0.0), self.ones[i]]
    }
}
