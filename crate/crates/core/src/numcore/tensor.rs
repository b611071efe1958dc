use crate::{Error, Result};

/// Dense row-major tensor of `f64`.
///
/// Networks accept rank-1 tensors (a single sample) or rank-2 tensors
/// `[batch, width]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(Error::Dimension(format!(
                "shape {shape:?} must have positive dimensions"
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Dimension(format!(
                "shape {shape:?} holds {expected} entries, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; len],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    /// Rank-2 tensor `[rows, cols]`.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Number of rows when viewed as `[batch, width]`.
    pub fn batch(&self) -> usize {
        if self.shape.len() == 1 {
            1
        } else {
            self.shape[0]
        }
    }

    /// Trailing width when viewed as `[batch, width]`.
    pub fn width(&self) -> usize {
        if self.shape.len() == 1 {
            self.shape[0]
        } else {
            self.shape[1..].iter().product()
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Joins two batches column-wise: `[b, n] ++ [b, m] -> [b, n + m]`.
    pub fn concat_columns(&self, other: &Tensor) -> Result<Tensor> {
        let b = self.batch();
        if other.batch() != b {
            return Err(Error::Dimension(format!(
                "cannot concatenate batches of {b} and {} rows",
                other.batch()
            )));
        }
        let (wa, wb) = (self.width(), other.width());
        let mut data = Vec::with_capacity(b * (wa + wb));
        for r in 0..b {
            data.extend_from_slice(self.row(r));
            data.extend_from_slice(other.row(r));
        }
        Tensor::matrix(b, wa + wb, data)
    }

    /// Inverse of [`Tensor::concat_columns`]: splits off the first `left` columns.
    pub fn split_columns(&self, left: usize) -> Result<(Tensor, Tensor)> {
        let (b, w) = (self.batch(), self.width());
        if left == 0 || left >= w {
            return Err(Error::Dimension(format!(
                "split point {left} outside (0, {w})"
            )));
        }
        let mut a = Vec::with_capacity(b * left);
        let mut c = Vec::with_capacity(b * (w - left));
        for r in 0..b {
            let row = self.row(r);
            a.extend_from_slice(&row[..left]);
            c.extend_from_slice(&row[left..]);
        }
        Ok((Tensor::matrix(b, left, a)?, Tensor::matrix(b, w - left, c)?))
    }

    /// Stacks rank-1 rows of equal width into `[rows.len(), width]`.
    pub fn stack_rows<'a, I>(rows: I) -> Result<Tensor>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut data = Vec::new();
        let mut width = None;
        let mut count = 0;
        for row in rows {
            match width {
                None => width = Some(row.len()),
                Some(w) if w != row.len() => {
                    return Err(Error::Dimension(format!(
                        "row {count} has width {}, expected {w}",
                        row.len()
                    )))
                }
                _ => {}
            }
            data.extend_from_slice(row);
            count += 1;
        }
        let width = width.ok_or_else(|| Error::Dimension("no rows to stack".into()))?;
        Tensor::matrix(count, width, data)
    }
}
