//! Dense double-precision kernels.
//!
//! Everything here is row-major and takes explicit shapes. The kernels are
//! the handful the factorized scoring functions need: transposed
//! matrix-vector products for the low-rank projections, the Hadamard
//! product and contiguous summation pooling, plus their adjoints for the
//! hand-written backward passes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Dense vector. Its dimension is the length of the backing storage.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DenseVector {
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                op: "DenseMatrix::from_vec",
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::DimensionMismatch {
                    op: "DenseMatrix::from_rows",
                    expected: cols,
                    actual: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Row lookup with a bounds check that names the table.
    pub fn checked_row(&self, i: usize, what: &str) -> Result<&[f64]> {
        if i >= self.rows {
            return Err(Error::IndexOutOfRange {
                what: what.to_string(),
                index: i,
                size: self.rows,
            });
        }
        Ok(self.row(i))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn fill(&mut self, value: f64) {
        self.data.fill(value);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|x| *x *= alpha);
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &DenseMatrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                op: "axpy",
                expected: self.len(),
                actual: other.len(),
            });
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    /// Rank-one accumulation `self[i, j] += left[i] * right[j]`.
    pub fn add_outer(&mut self, left: &[f64], right: &[f64]) -> Result<()> {
        if left.len() != self.rows {
            return Err(Error::DimensionMismatch {
                op: "add_outer (rows)",
                expected: self.rows,
                actual: left.len(),
            });
        }
        if right.len() != self.cols {
            return Err(Error::DimensionMismatch {
                op: "add_outer (cols)",
                expected: self.cols,
                actual: right.len(),
            });
        }
        for (i, &l) in left.iter().enumerate() {
            if l == 0.0 {
                continue;
            }
            let row = &mut self.data[i * self.cols..(i + 1) * self.cols];
            for (r, &x) in row.iter_mut().zip(right) {
                *r += l * x;
            }
        }
        Ok(())
    }

    /// Adds `values` to row `i`.
    pub fn add_to_row(&mut self, i: usize, values: &[f64]) -> Result<()> {
        if i >= self.rows {
            return Err(Error::IndexOutOfRange {
                what: "matrix row".into(),
                index: i,
                size: self.rows,
            });
        }
        if values.len() != self.cols {
            return Err(Error::DimensionMismatch {
                op: "add_to_row",
                expected: self.cols,
                actual: values.len(),
            });
        }
        for (r, v) in self.row_mut(i).iter_mut().zip(values) {
            *r += v;
        }
        Ok(())
    }
}

impl DenseVector {
    pub fn new(data: Vec<f64>) -> Self {
        Self { data }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            data: vec![0.0; dim],
        }
    }

    pub fn ones(dim: usize) -> Self {
        Self {
            data: vec![1.0; dim],
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn dot(&self, other: &DenseVector) -> Result<f64> {
        check_dims("dot", self.dim(), other.dim())?;
        Ok(dot(&self.data, &other.data))
    }
}

impl From<Vec<f64>> for DenseVector {
    fn from(data: Vec<f64>) -> Self {
        Self { data }
    }
}

impl AsRef<[f64]> for DenseVector {
    fn as_ref(&self) -> &[f64] {
        &self.data
    }
}

fn check_dims(op: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch {
            op,
            expected,
            actual,
        });
    }
    Ok(())
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `M^T x` for `M` of shape `r x c` and `x` of length `r`.
pub fn matvec_t(m: &DenseMatrix, x: &[f64]) -> Result<DenseVector> {
    check_dims("matvec_t", m.rows, x.len())?;
    let mut out = vec![0.0; m.cols];
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        for (o, &mij) in out.iter_mut().zip(m.row(i)) {
            *o += mij * xi;
        }
    }
    Ok(DenseVector::new(out))
}

/// `M y` for `M` of shape `r x c` and `y` of length `c`. This is the adjoint
/// of [`matvec_t`] and carries gradients back through a projection.
pub fn matvec(m: &DenseMatrix, y: &[f64]) -> Result<DenseVector> {
    check_dims("matvec", m.cols, y.len())?;
    Ok(DenseVector::new(
        (0..m.rows).map(|i| dot(m.row(i), y)).collect(),
    ))
}

pub fn hadamard(a: &[f64], b: &[f64]) -> Result<DenseVector> {
    check_dims("hadamard", a.len(), b.len())?;
    Ok(DenseVector::new(
        a.iter().zip(b).map(|(x, y)| x * y).collect(),
    ))
}

/// Sums contiguous non-overlapping windows of size `k`: `out[j] = x[j*k] + ... + x[j*k + k - 1]`.
pub fn sum_pool(x: &[f64], k: usize) -> Result<DenseVector> {
    if k == 0 || !x.len().is_multiple_of(k) {
        return Err(Error::PoolWindow {
            op: "sum_pool",
            dim: x.len(),
            k,
        });
    }
    Ok(DenseVector::new(
        x.chunks_exact(k).map(|w| w.iter().sum()).collect(),
    ))
}

/// Adjoint of [`sum_pool`]: each pooled coordinate is broadcast back to
/// its `k` window members.
pub fn sum_pool_adjoint(grad: &[f64], k: usize) -> Result<DenseVector> {
    if k == 0 {
        return Err(Error::PoolWindow {
            op: "sum_pool_adjoint",
            dim: grad.len(),
            k,
        });
    }
    let mut out = Vec::with_capacity(grad.len() * k);
    for &g in grad {
        out.extend(std::iter::repeat_n(g, k));
    }
    Ok(DenseVector::new(out))
}
