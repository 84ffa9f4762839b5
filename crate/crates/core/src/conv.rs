//! Multichannel periodic strided correlation and its adjoint.
//!
//! `Y[j, q1, q2] = sum_i sum_{p1,p2 < k} K[p1, p2, i, j] * X[i, (q1*s + p1) mod n, (q2*s + p2) mod n]`
//!
//! Summation order is fixed (input channel, then filter row, then filter
//! column), so results do not depend on how batches are scheduled.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{ConvKernel, TensorD};

fn check_signal(t: &TensorD, channels: usize, size: usize, what: &str) -> Result<()> {
    if t.shape() != [channels, size, size] {
        return Err(Error::Shape(format!(
            "{what} must have shape [{channels}, {size}, {size}], got {:?}",
            t.shape()
        )));
    }
    Ok(())
}

/// Applies `C_K` to a signal of shape `[c_in, n, n]`.
pub fn conv_apply(kern: &ConvKernel, x: &TensorD) -> Result<TensorD> {
    let (n, s, k) = (kern.signal_size(), kern.stride(), kern.k());
    let (c_in, c_out, m) = (kern.c_in(), kern.c_out(), kern.output_size());
    check_signal(x, c_in, n, "input")?;
    let xs = x.data();
    let mut out = vec![0.0; c_out * m * m];
    for q1 in 0..m {
        for q2 in 0..m {
            for i in 0..c_in {
                for p1 in 0..k {
                    let r = (q1 * s + p1) % n;
                    for p2 in 0..k {
                        let c = (q2 * s + p2) % n;
                        let xv = xs[(i * n + r) * n + c];
                        if xv == 0.0 {
                            continue;
                        }
                        for j in 0..c_out {
                            out[(j * m + q1) * m + q2] += kern.weight(p1, p2, i, j) * xv;
                        }
                    }
                }
            }
        }
    }
    TensorD::new(vec![c_out, m, m], out)
}

/// Applies `T_K^T` to a signal of shape `[c_out, n/s, n/s]`.
pub fn conv_adjoint_apply(kern: &ConvKernel, y: &TensorD) -> Result<TensorD> {
    let (n, s, k) = (kern.signal_size(), kern.stride(), kern.k());
    let (c_in, c_out, m) = (kern.c_in(), kern.c_out(), kern.output_size());
    check_signal(y, c_out, m, "adjoint input")?;
    let ys = y.data();
    let mut out = vec![0.0; c_in * n * n];
    for q1 in 0..m {
        for q2 in 0..m {
            for i in 0..c_in {
                for p1 in 0..k {
                    let r = (q1 * s + p1) % n;
                    for p2 in 0..k {
                        let c = (q2 * s + p2) % n;
                        let mut acc = 0.0;
                        for j in 0..c_out {
                            acc += kern.weight(p1, p2, i, j) * ys[(j * m + q1) * m + q2];
                        }
                        out[(i * n + r) * n + c] += acc;
                    }
                }
            }
        }
    }
    TensorD::new(vec![c_in, n, n], out)
}

/// `conv_apply` over many inputs; output order matches input order.
pub fn conv_apply_batch(kern: &ConvKernel, xs: &[TensorD]) -> Result<Vec<TensorD>> {
    xs.par_iter().map(|x| conv_apply(kern, x)).collect()
}

/// Euclidean inner product of two equally shaped tensors.
pub fn inner(a: &TensorD, b: &TensorD) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "inner product of {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum())
}
