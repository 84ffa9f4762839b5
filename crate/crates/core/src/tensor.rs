//! Dense row-major tensors and convolution kernels.
//!
//! Every flattening in this crate is row-major (last index fastest). A signal
//! `x` with `c` channels of size `n x n` is stored with shape `[c, n, n]`, and
//! a kernel with shape `[k, k, c_in, c_out]`. All indices are 0-based,
//! including the frequency indices reported by the spectrum routines.

use crate::error::{Error, Result};

/// Real, finite, row-major dense tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorD {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl TensorD {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::Shape(format!(
                "extents must be positive and non-empty, got {shape:?}"
            )));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {len} values, got {}",
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let len = shape.iter().product();
        Self::new(shape, vec![0.0; len])
    }

    /// Builds a tensor whose entries are produced by `f` in row-major order.
    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let len: usize = shape.iter().product();
        let mut idx = vec![0usize; shape.len()];
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(f(&idx));
            for axis in (0..shape.len()).rev() {
                idx[axis] += 1;
                if idx[axis] < shape[axis] {
                    break;
                }
                idx[axis] = 0;
            }
        }
        Self::new(shape, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Row-major flat offset of a multi-index. Panics on rank or bound violations.
    pub fn offset(&self, idx: &[usize]) -> usize {
        assert_eq!(idx.len(), self.shape.len(), "index rank mismatch");
        idx.iter().zip(&self.shape).fold(0, |acc, (&i, &e)| {
            assert!(i < e, "index {i} out of bounds for extent {e}");
            acc * e + i
        })
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&self, alpha: f64) -> Result<Self> {
        Self::new(
            self.shape.clone(),
            self.data.iter().map(|v| alpha * v).collect(),
        )
    }

    /// Largest absolute elementwise difference; `None` when shapes differ.
    pub fn max_abs_diff(&self, other: &TensorD) -> Option<f64> {
        if self.shape != other.shape {
            return None;
        }
        Some(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        )
    }
}

/// Row-major flattening `vec(t)`.
pub fn vec(t: &TensorD) -> Vec<f64> {
    t.data.clone()
}

/// Reinterprets the row-major data under a new shape of equal size.
pub fn reshape(t: &TensorD, new_shape: &[usize]) -> Result<TensorD> {
    let len: usize = new_shape.iter().product();
    if len != t.len() {
        return Err(Error::Shape(format!(
            "cannot reshape {:?} ({} values) into {new_shape:?} ({len} values)",
            t.shape,
            t.len()
        )));
    }
    TensorD::new(new_shape.to_vec(), t.data.clone())
}

/// Kernel of a multichannel periodic strided convolution on `n x n` signals.
///
/// `weights` has shape `[k, k, c_in, c_out]`; the output spatial size is `n / s`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernel {
    weights: TensorD,
    stride: usize,
    signal_size: usize,
}

impl ConvKernel {
    pub fn new(weights: TensorD, stride: usize, signal_size: usize) -> Result<Self> {
        let shape = weights.shape();
        if shape.len() != 4 {
            return Err(Error::Shape(format!(
                "kernel must have shape [k, k, c_in, c_out], got {shape:?}"
            )));
        }
        if shape[0] != shape[1] {
            return Err(Error::Shape(format!(
                "only square filters are supported, got {}x{}",
                shape[0], shape[1]
            )));
        }
        validate_geometry(shape[0], stride, signal_size)?;
        Ok(Self {
            weights,
            stride,
            signal_size,
        })
    }

    pub fn weights(&self) -> &TensorD {
        &self.weights
    }

    pub fn into_weights(self) -> TensorD {
        self.weights
    }

    pub fn k(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn c_in(&self) -> usize {
        self.weights.shape()[2]
    }

    pub fn c_out(&self) -> usize {
        self.weights.shape()[3]
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn signal_size(&self) -> usize {
        self.signal_size
    }

    /// Output spatial extent `f(n, k) = n / s`.
    pub fn output_size(&self) -> usize {
        self.signal_size / self.stride
    }

    #[inline]
    pub fn weight(&self, p1: usize, p2: usize, i: usize, j: usize) -> f64 {
        let (k, c_in, c_out) = (self.k(), self.c_in(), self.c_out());
        self.weights.data()[((p1 * k + p2) * c_in + i) * c_out + j]
    }

    /// Same geometry, weights multiplied by `alpha`.
    pub fn scaled(&self, alpha: f64) -> Result<Self> {
        Self::new(self.weights.scale(alpha)?, self.stride, self.signal_size)
    }

    /// Rows of the matrix `T_K`: `c_out * (n/s)^2`.
    pub fn operator_rows(&self) -> usize {
        self.c_out() * self.output_size().pow(2)
    }

    /// Columns of the matrix `T_K`: `c_in * n^2`.
    pub fn operator_cols(&self) -> usize {
        self.c_in() * self.signal_size.pow(2)
    }
}

pub(crate) fn validate_geometry(k: usize, stride: usize, n: usize) -> Result<()> {
    if k == 0 || stride == 0 || n == 0 {
        return Err(Error::Dimension(format!(
            "k, s and n must be positive (k={k}, s={stride}, n={n})"
        )));
    }
    if k > n {
        return Err(Error::Dimension(format!(
            "filter size k={k} exceeds signal size n={n}"
        )));
    }
    if !n.is_multiple_of(stride) {
        return Err(Error::Dimension(format!(
            "signal size n={n} is not divisible by stride s={stride}"
        )));
    }
    Ok(())
}

/// Zero-pads the filter modes of the kernel to `n x n`, appending zeros at the
/// high-index side of each filter mode.
pub fn pad_kernel(kern: &ConvKernel) -> Result<TensorD> {
    let (k, n) = (kern.k(), kern.signal_size());
    if k > n {
        return Err(Error::Dimension(format!(
            "filter size k={k} exceeds signal size n={n}"
        )));
    }
    let (c_in, c_out) = (kern.c_in(), kern.c_out());
    let block = c_in * c_out;
    let src = kern.weights().data();
    let mut data = vec![0.0; n * n * block];
    for p1 in 0..k {
        for p2 in 0..k {
            let from = (p1 * k + p2) * block;
            let to = (p1 * n + p2) * block;
            data[to..to + block].copy_from_slice(&src[from..from + block]);
        }
    }
    TensorD::new(vec![n, n, c_in, c_out], data)
}

/// Restricts a `[m, m, c_in, c_out]` tensor to its leading `k x k` filter window.
pub fn leading_window(t: &TensorD, k: usize) -> Result<TensorD> {
    let shape = t.shape();
    if shape.len() != 4 || shape[0] != shape[1] || k > shape[0] || k == 0 {
        return Err(Error::Shape(format!(
            "cannot take a {k}x{k} window of {shape:?}"
        )));
    }
    let (m, block) = (shape[0], shape[2] * shape[3]);
    let mut data = Vec::with_capacity(k * k * block);
    for p1 in 0..k {
        for p2 in 0..k {
            let from = (p1 * m + p2) * block;
            data.extend_from_slice(&t.data()[from..from + block]);
        }
    }
    TensorD::new(vec![k, k, shape[2], shape[3]], data)
}
