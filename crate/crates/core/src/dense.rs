//! Explicit matrix `T_K` of a periodic strided convolution and its dense SVD.
//!
//! The matrix is assembled by applying [`conv_apply`] to standard basis
//! signals, so it knows nothing about circulant index arithmetic or Fourier
//! conventions. This is the ground truth the frequency-domain routines are
//! checked against.

use nalgebra::DMatrix;

use crate::conv::conv_apply;
use crate::error::{Error, Result};
use crate::jacobi;
use crate::spectrum::Spectrum;
use crate::tensor::{ConvKernel, TensorD};

/// Default limit on `c_in * n^2` columns for dense construction.
pub const DEFAULT_COLUMN_CAP: usize = 16384;

/// Kernel dimensions an operator was built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OperatorMeta {
    pub k: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub stride: usize,
    pub signal_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    pub matrix: DMatrix<f64>,
    pub meta: OperatorMeta,
}

impl DenseOperator {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    /// `T_K * vec(x)` reshaped to `[c_out, n/s, n/s]`.
    pub fn apply(&self, x: &TensorD) -> Result<TensorD> {
        let m = &self.meta;
        if x.len() != self.cols() {
            return Err(Error::Shape(format!(
                "operator has {} columns, input has {} values",
                self.cols(),
                x.len()
            )));
        }
        let v = nalgebra::DVector::from_column_slice(x.data());
        let y = &self.matrix * v;
        let out = m.signal_size / m.stride;
        TensorD::new(vec![m.c_out, out, out], y.as_slice().to_vec())
    }
}

pub fn build_dense_operator(kern: &ConvKernel) -> Result<DenseOperator> {
    build_dense_operator_with_cap(kern, DEFAULT_COLUMN_CAP)
}

pub fn build_dense_operator_with_cap(kern: &ConvKernel, cap: usize) -> Result<DenseOperator> {
    let (rows, cols) = (kern.operator_rows(), kern.operator_cols());
    if cols > cap {
        return Err(Error::TooLarge { columns: cols, cap });
    }
    let n = kern.signal_size();
    let mut matrix = DMatrix::<f64>::zeros(rows, cols);
    let mut basis = vec![0.0; cols];
    for col in 0..cols {
        basis[col] = 1.0;
        let probe = TensorD::new(vec![kern.c_in(), n, n], basis.clone())?;
        let image = conv_apply(kern, &probe)?;
        matrix.column_mut(col).copy_from_slice(image.data());
        basis[col] = 0.0;
    }
    Ok(DenseOperator {
        matrix,
        meta: OperatorMeta {
            k: kern.k(),
            c_in: kern.c_in(),
            c_out: kern.c_out(),
            stride: kern.stride(),
            signal_size: n,
        },
    })
}

/// All `min(rows, cols)` singular values of the explicit matrix, descending.
pub fn dense_spectrum(op: &DenseOperator) -> Result<Spectrum> {
    let values = jacobi::singular_values(op.rows(), op.cols(), op.matrix.as_slice())?;
    Ok(Spectrum::from_values(values))
}

/// Convenience: `dense_spectrum(build_dense_operator(kern))`.
pub fn dense_spectrum_of(kern: &ConvKernel) -> Result<Spectrum> {
    dense_spectrum(&build_dense_operator(kern)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{gaussian_tensor, identity_kernel, random_kernel, random_signal, rng};

    #[test]
    fn identity_kernel_gives_identity_matrix() {
        let op = build_dense_operator(&identity_kernel(1, 1, 3).unwrap()).unwrap();
        assert_eq!(op.matrix, DMatrix::identity(9, 9));
        let sp = dense_spectrum(&op).unwrap();
        assert_eq!(sp.values(), &[1.0; 9]);
    }

    #[test]
    fn strided_single_sample() {
        let w = TensorD::new(vec![1, 1, 1, 1], vec![1.5]).unwrap();
        let kern = ConvKernel::new(w, 2, 2).unwrap();
        let op = build_dense_operator(&kern).unwrap();
        assert_eq!(op.matrix.shape(), (1, 4));
        assert_eq!(op.matrix.as_slice(), &[1.5, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_kernel_has_zero_spectrum() {
        let kern = random_kernel(2, 2, 3, 1, 4, 1)
            .unwrap()
            .scaled(0.0)
            .unwrap();
        let sp = dense_spectrum_of(&kern).unwrap();
        assert_eq!(sp.len(), 32);
        assert!(sp.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn probes_agree_with_conv_apply() {
        let kern = random_kernel(3, 2, 2, 1, 4, 5).unwrap();
        let op = build_dense_operator(&kern).unwrap();
        let mut g = rng(6);
        for _ in 0..20 {
            let x = random_signal(2, 4, &mut g).unwrap();
            let want = conv_apply(&kern, &x).unwrap();
            let got = op.apply(&x).unwrap();
            let scale = want.frobenius_norm().max(1.0);
            assert!(got.max_abs_diff(&want).unwrap() <= 1e-12 * scale);
        }
    }

    #[test]
    fn size_guard() {
        let kern = random_kernel(1, 2, 1, 1, 8, 0).unwrap();
        assert!(matches!(
            build_dense_operator_with_cap(&kern, 100),
            Err(Error::TooLarge {
                columns: 128,
                cap: 100
            })
        ));
    }

    #[test]
    fn unstrided_channel_blocks_are_doubly_block_circulant() {
        let kern = random_kernel(3, 2, 2, 1, 4, 8).unwrap();
        let op = build_dense_operator(&kern).unwrap();
        let n = 4;
        let nn = n * n;
        for j in 0..2 {
            for i in 0..2 {
                let block = op.matrix.view((j * nn, i * nn), (nn, nn));
                // block (a, b) of size n x n depends only on (b - a) mod n, and
                // each block is circulant itself
                for a in 0..n {
                    for b in 0..n {
                        for r in 0..n {
                            for c in 0..n {
                                let shifted = block[(
                                    ((a + 1) % n) * n + (r + 1) % n,
                                    ((b + 1) % n) * n + (c + 1) % n,
                                )];
                                assert_eq!(block[(a * n + r, b * n + c)], shifted);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn pointwise_operator_is_kronecker_with_identity() {
        // T for a 1x1 kernel with channel matrix W (c_in x c_out) is W^T (x) I_{n^2}
        let mut g = rng(2);
        let w = gaussian_tensor(vec![1, 1, 3, 2], &mut g).unwrap();
        let kern = ConvKernel::new(w.clone(), 1, 3).unwrap();
        let op = build_dense_operator(&kern).unwrap();
        let channel = DMatrix::from_row_slice(3, 2, w.data());
        let expected = channel
            .transpose()
            .kronecker(&DMatrix::<f64>::identity(9, 9));
        assert_eq!(op.matrix, expected);
    }
}
