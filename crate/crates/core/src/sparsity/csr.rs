use crate::error::{Error, Result};
use crate::ndmath::Tensor;

/// Compressed sparse row storage of a 2-D matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from raw parts, checking every structural invariant.
    pub fn from_parts(
        rows: usize,
        cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let bad = |msg: &str| Err(Error::Format(format!("csr {rows}x{cols}: {msg}")));
        if row_offsets.len() != rows + 1 || row_offsets[0] != 0 {
            return bad("row offsets must have rows+1 entries starting at 0");
        }
        if row_offsets.windows(2).any(|w| w[0] > w[1]) {
            return bad("row offsets decrease");
        }
        if row_offsets[rows] != values.len() || col_indices.len() != values.len() {
            return bad("offsets, indices and values disagree on nnz");
        }
        for r in 0..rows {
            let idx = &col_indices[row_offsets[r]..row_offsets[r + 1]];
            if idx.windows(2).any(|w| w[0] >= w[1]) || idx.last().is_some_and(|&c| c >= cols) {
                return bad("column indices must be increasing and in range");
            }
        }
        Ok(Self {
            rows,
            cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn to_dense(&self) -> Tensor {
        let mut out = vec![0.0; self.rows * self.cols];
        for r in 0..self.rows {
            for i in self.row_offsets[r]..self.row_offsets[r + 1] {
                out[r * self.cols + self.col_indices[i]] = self.values[i];
            }
        }
        Tensor::new(vec![self.rows, self.cols], out).expect("positive dims")
    }

    /// `x·W` for a row vector `x` of length `rows`; skips zero entries of `x`.
    pub fn vecmat(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.rows {
            return Err(Error::Shape(format!("vecmat: {} inputs for {} rows", x.len(), self.rows)));
        }
        let mut y = vec![0.0; self.cols];
        for (r, &xv) in x.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            for i in self.row_offsets[r]..self.row_offsets[r + 1] {
                y[self.col_indices[i]] += xv * self.values[i];
            }
        }
        Ok(y)
    }

    /// Row `r` of the matrix scattered into `y` (`y += W[r, :]`).
    pub fn add_row_into(&self, r: usize, y: &mut [f64]) {
        for i in self.row_offsets[r]..self.row_offsets[r + 1] {
            y[self.col_indices[i]] += self.values[i];
        }
    }
}

/// Pack the nonzero entries of a 2-D tensor.
pub fn to_csr(dense: &Tensor) -> Result<CsrMatrix> {
    if dense.shape().len() != 2 {
        return Err(Error::Shape(format!("csr needs a matrix, got {:?}", dense.shape())));
    }
    let (rows, cols) = (dense.rows(), dense.cols());
    let mut row_offsets = Vec::with_capacity(rows + 1);
    let mut col_indices = Vec::new();
    let mut values = Vec::new();
    row_offsets.push(0);
    for r in 0..rows {
        for (c, &v) in dense.row(r).iter().enumerate() {
            if v != 0.0 {
                col_indices.push(c);
                values.push(v);
            }
        }
        row_offsets.push(values.len());
    }
    Ok(CsrMatrix {
        rows,
        cols,
        row_offsets,
        col_indices,
        values,
    })
}

/// `W·x` for a column vector `x` of length `cols`.
pub fn csr_matvec(w: &CsrMatrix, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != w.cols {
        return Err(Error::Shape(format!("matvec: vector of {} for {} columns", x.len(), w.cols)));
    }
    Ok((0..w.rows)
        .map(|r| {
            (w.row_offsets[r]..w.row_offsets[r + 1])
                .map(|i| w.values[i] * x[w.col_indices[i]])
                .sum()
        })
        .collect())
}
