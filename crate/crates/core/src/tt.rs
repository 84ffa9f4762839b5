//! Tensor-train (Tucker-2) compressed convolution kernels.
//!
//! A compressed kernel is a triple
//!
//! ```text
//! K[p1, p2, i, j] = sum_{a < r1, b < r2} K1[i, a] * K2[p1, p2, a, b] * K3[b, j]
//! ```
//!
//! with frame matrices `K1` (`c_in x r1`), `K3` (`r2 x c_out`) and a middle
//! core `K2` (`k x k x r1 x r2`). The layer is the composition of a 1x1
//! convolution with `K1`, the strided `k x k` convolution with `K2`, and a
//! 1x1 convolution with `K3`. When `K1^T K1 = I` and `K3 K3^T = I` the
//! nonzero singular values of the layer are exactly those of the core layer,
//! so [`tt_spectrum`] only has to analyse an `r1 -> r2` convolution.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::jacobi;
use crate::spectrum::{spectrum, spectrum_len, Spectrum};
use crate::tensor::{validate_geometry, ConvKernel, TensorD};

/// Weight of the orthogonality penalty in [`combined_loss`] used for wide residual networks.
pub const DEFAULT_LAMBDA_ORT: f64 = 1e5;

#[derive(Debug, Clone, PartialEq)]
pub struct TTKernel {
    k1: DMatrix<f64>,
    k2: TensorD,
    k3: DMatrix<f64>,
    stride: usize,
    signal_size: usize,
}

impl TTKernel {
    pub fn new(
        k1: DMatrix<f64>,
        k2: TensorD,
        k3: DMatrix<f64>,
        stride: usize,
        signal_size: usize,
    ) -> Result<Self> {
        let core = k2.shape();
        if core.len() != 4 || core[0] != core[1] {
            return Err(Error::Shape(format!(
                "middle core must have shape [k, k, r1, r2], got {core:?}"
            )));
        }
        let (r1, r2) = (core[2], core[3]);
        let (c_in, c_out) = (k1.nrows(), k3.ncols());
        if k1.ncols() != r1 || k3.nrows() != r2 {
            return Err(Error::Shape(format!(
                "frames {}x{} and {}x{} do not match core ranks ({r1}, {r2})",
                k1.nrows(),
                k1.ncols(),
                k3.nrows(),
                k3.ncols()
            )));
        }
        check_ranks(r1, r2, c_in, c_out)?;
        if k1.iter().chain(k3.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "frame matrices must be finite".into(),
            ));
        }
        validate_geometry(core[0], stride, signal_size)?;
        Ok(Self {
            k1,
            k2,
            k3,
            stride,
            signal_size,
        })
    }

    pub fn k1(&self) -> &DMatrix<f64> {
        &self.k1
    }

    pub fn k2(&self) -> &TensorD {
        &self.k2
    }

    pub fn k3(&self) -> &DMatrix<f64> {
        &self.k3
    }

    pub fn k(&self) -> usize {
        self.k2.shape()[0]
    }

    pub fn r1(&self) -> usize {
        self.k1.ncols()
    }

    pub fn r2(&self) -> usize {
        self.k3.nrows()
    }

    pub fn c_in(&self) -> usize {
        self.k1.nrows()
    }

    pub fn c_out(&self) -> usize {
        self.k3.ncols()
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn signal_size(&self) -> usize {
        self.signal_size
    }

    /// The middle core as an `r1 -> r2` convolution with the layer's stride.
    pub fn core_kernel(&self) -> Result<ConvKernel> {
        ConvKernel::new(self.k2.clone(), self.stride, self.signal_size)
    }

    /// The three convolutions whose composition is the layer: 1x1 with `K1`
    /// on `n x n`, the core at stride `s`, then 1x1 with `K3` on `n/s x n/s`.
    pub fn stages(&self) -> Result<[ConvKernel; 3]> {
        let (n, m) = (self.signal_size, self.signal_size / self.stride);
        let first = TensorD::new(vec![1, 1, self.c_in(), self.r1()], row_major(&self.k1))?;
        let last = TensorD::new(vec![1, 1, self.r2(), self.c_out()], row_major(&self.k3))?;
        Ok([
            ConvKernel::new(first, 1, n)?,
            self.core_kernel()?,
            ConvKernel::new(last, 1, m)?,
        ])
    }

    /// Number of stored parameters `c_in r1 + k^2 r1 r2 + r2 c_out`.
    pub fn parameter_count(&self) -> usize {
        self.k1.len() + self.k2.len() + self.k3.len()
    }
}

fn check_ranks(r1: usize, r2: usize, c_in: usize, c_out: usize) -> Result<()> {
    if r1 == 0 || r1 > c_in || r2 == 0 || r2 > c_out {
        return Err(Error::Rank(format!(
            "need 1 <= r1 <= c_in and 1 <= r2 <= c_out, got r1={r1}, r2={r2} for c_in={c_in}, c_out={c_out}"
        )));
    }
    Ok(())
}

pub(crate) fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

/// Multiplies out the factors into a full `k x k x c_in x c_out` kernel.
pub fn tt_reconstruct(tt: &TTKernel) -> Result<ConvKernel> {
    let (k, r1, r2) = (tt.k(), tt.r1(), tt.r2());
    let (c_in, c_out) = (tt.c_in(), tt.c_out());
    let mut data = Vec::with_capacity(k * k * c_in * c_out);
    for p in 0..k * k {
        let core = DMatrix::from_row_slice(r1, r2, &tt.k2.data()[p * r1 * r2..(p + 1) * r1 * r2]);
        let slice = &tt.k1 * core * &tt.k3;
        data.extend(row_major(&slice));
    }
    ConvKernel::new(
        TensorD::new(vec![k, k, c_in, c_out], data)?,
        tt.stride,
        tt.signal_size,
    )
}

/// Relative Frobenius distance between a kernel and a factorization of it.
pub fn reconstruction_error(kern: &ConvKernel, tt: &TTKernel) -> Result<f64> {
    let rebuilt = tt_reconstruct(tt)?;
    if rebuilt.weights().shape() != kern.weights().shape() {
        return Err(Error::Shape(
            "factorization does not match kernel shape".into(),
        ));
    }
    let diff: f64 = rebuilt
        .weights()
        .data()
        .iter()
        .zip(kern.weights().data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let norm = kern.weights().frobenius_norm();
    Ok(if norm == 0.0 { diff } else { diff / norm })
}

/// Thin SVD with singular triplets sorted by decreasing singular value.
fn sorted_svd(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let crate::svd::Thin { u, sigma, v_t } = crate::svd::thin_svd(a)?;
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&x, &y| sigma[y].total_cmp(&sigma[x]));
    let mut u_sorted = DMatrix::zeros(u.nrows(), order.len());
    let mut v_sorted = DMatrix::zeros(v_t.ncols(), order.len());
    for (dst, &src) in order.iter().enumerate() {
        u_sorted.set_column(dst, &u.column(src));
        v_sorted.set_column(dst, &v_t.row(src).transpose());
    }
    Ok((u_sorted, v_sorted))
}

/// Makes the largest-magnitude entry of every column positive.
fn fix_column_signs(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let pivot = col.iter().copied().fold(
            0.0f64,
            |best, v| if v.abs() > best.abs() { v } else { best },
        );
        if pivot < 0.0 {
            col.neg_mut();
        }
    }
}

/// Rank-`(r1, r2)` factorization by sequential truncated SVDs.
///
/// `K1` holds the top `r1` left singular vectors of the `c_in` unfolding;
/// after projecting onto them, `K3` holds the top `r2` right singular vectors
/// of the `c_out` unfolding; the core is what remains. `K1` and `K3` come
/// out orthonormal. The squared error is the discarded energy of the first
/// unfolding plus that of the second (projected) one.
pub fn tt_decompose(kern: &ConvKernel, r1: usize, r2: usize) -> Result<TTKernel> {
    let (k, c_in, c_out) = (kern.k(), kern.c_in(), kern.c_out());
    check_ranks(r1, r2, c_in, c_out)?;
    let kk = k * k;
    let w = kern.weights().data();

    // unfold along c_in: rows i, columns (p, j); zero columns keep U square
    let cols1 = (kk * c_out).max(c_in);
    let mut a1 = DMatrix::<f64>::zeros(c_in, cols1);
    for p in 0..kk {
        for i in 0..c_in {
            for j in 0..c_out {
                a1[(i, p * c_out + j)] = w[(p * c_in + i) * c_out + j];
            }
        }
    }
    let (u, _) = sorted_svd(&a1)?;
    let mut k1 = u.columns(0, r1).into_owned();
    fix_column_signs(&mut k1);
    let projected = k1.transpose() * &a1; // r1 x cols1, columns (p, j)

    // unfold along c_out: rows (p, a), columns j; zero rows keep V square
    let rows2 = (kk * r1).max(c_out);
    let mut a2 = DMatrix::<f64>::zeros(rows2, c_out);
    for p in 0..kk {
        for a in 0..r1 {
            for j in 0..c_out {
                a2[(p * r1 + a, j)] = projected[(a, p * c_out + j)];
            }
        }
    }
    let (_, v) = sorted_svd(&a2)?;
    let mut v_top = v.columns(0, r2).into_owned(); // c_out x r2
    fix_column_signs(&mut v_top);
    let core = a2.rows(0, kk * r1) * &v_top; // rows (p, a), columns b

    let mut k2 = Vec::with_capacity(kk * r1 * r2);
    for p in 0..kk {
        for a in 0..r1 {
            for b in 0..r2 {
                k2.push(core[(p * r1 + a, b)]);
            }
        }
    }
    TTKernel::new(
        k1,
        TensorD::new(vec![k, k, r1, r2], k2)?,
        v_top.transpose(),
        kern.stride(),
        kern.signal_size(),
    )
}

/// Orthogonality residuals `||K1^T K1 - I||_F` and `||K3 K3^T - I||_F`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrthoReport {
    pub left_residual: f64,
    pub right_residual: f64,
}

pub fn ortho_report(tt: &TTKernel) -> OrthoReport {
    OrthoReport {
        left_residual: gram_residual(&(tt.k1.transpose() * &tt.k1)),
        right_residual: gram_residual(&(&tt.k3 * tt.k3.transpose())),
    }
}

fn gram_residual(gram: &DMatrix<f64>) -> f64 {
    (gram - DMatrix::<f64>::identity(gram.nrows(), gram.ncols())).norm()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    Left,
    Right,
}

/// A frame matrix without full rank; orthonormality then only holds on its
/// column space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankDeficiency {
    pub frame: Frame,
    pub smallest_singular_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Orthogonalized {
    pub tt: TTKernel,
    pub report: OrthoReport,
    pub deficiencies: Vec<RankDeficiency>,
}

/// Householder QR of `m` (tall) with `diag(R) >= 0`.
fn positive_qr(m: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let qr = m.clone().qr();
    let (mut q, mut r) = (qr.q(), qr.r());
    for c in 0..r.nrows() {
        if r[(c, c)] < 0.0 {
            q.column_mut(c).neg_mut();
            r.row_mut(c).neg_mut();
        }
    }
    (q, r)
}

fn deficiency(frame: Frame, factor: &DMatrix<f64>) -> Result<Option<RankDeficiency>> {
    let sv = jacobi::singular_values(factor.nrows(), factor.ncols(), factor.as_slice())?;
    let (largest, smallest) = (sv[0], *sv.last().unwrap_or(&0.0));
    let dim = factor.nrows().max(factor.ncols()) as f64;
    Ok(
        (smallest <= dim * f64::EPSILON * largest).then_some(RankDeficiency {
            frame,
            smallest_singular_value: smallest,
        }),
    )
}

/// Re-parameterizes the factors so that `K1` has orthonormal columns and `K3`
/// orthonormal rows, absorbing the triangular QR factors into the core:
/// `K2'[p] = R1 K2[p] R3^T`. The reconstructed kernel is unchanged.
pub fn orthogonalize(tt: &TTKernel) -> Result<Orthogonalized> {
    let (q1, r1) = positive_qr(&tt.k1);
    let (q3, r3) = positive_qr(&tt.k3.transpose());
    let deficiencies = [
        deficiency(Frame::Left, &tt.k1)?,
        deficiency(Frame::Right, &tt.k3)?,
    ]
    .into_iter()
    .flatten()
    .collect();

    let (k, a, b) = (tt.k(), tt.r1(), tt.r2());
    let mut core = Vec::with_capacity(k * k * a * b);
    for p in 0..k * k {
        let slice = DMatrix::from_row_slice(a, b, &tt.k2.data()[p * a * b..(p + 1) * a * b]);
        core.extend(row_major(&(&r1 * slice * r3.transpose())));
    }
    let out = TTKernel::new(
        q1,
        TensorD::new(vec![k, k, a, b], core)?,
        q3.transpose(),
        tt.stride,
        tt.signal_size,
    )?;
    Ok(Orthogonalized {
        report: ortho_report(&out),
        tt: out,
        deficiencies,
    })
}

/// Nonzero singular values of the compressed layer, from the middle core
/// after orthogonalization. The zeros implied by the rank reduction are
/// counted in [`Spectrum::implied_zeros`] rather than materialized.
pub fn tt_spectrum(tt: &TTKernel) -> Result<Spectrum> {
    let ortho = orthogonalize(tt)?;
    let core = spectrum(&ortho.tt.core_kernel()?)?;
    let (s, n) = (tt.stride, tt.signal_size);
    let full = spectrum_len(tt.c_in(), tt.c_out(), s, n);
    let reduced = spectrum_len(tt.r1(), tt.r2(), s, n);
    Ok(core.with_implied_zeros(full - reduced))
}

/// Mean squared non-orthogonality of the frame matrices over all layers:
/// `sum ||K1^T K1 - I||^2 + ||K3 K3^T - I||^2` divided by `sum r1^2 + r2^2`.
pub fn orth_loss(layers: &[TTKernel]) -> Result<f64> {
    if layers.is_empty() {
        return Err(Error::InvalidArgument(
            "orthogonality loss needs at least one layer".into(),
        ));
    }
    let (num, den) = layers.iter().fold((0.0, 0usize), |(num, den), tt| {
        let rep = ortho_report(tt);
        (
            num + rep.left_residual.powi(2) + rep.right_residual.powi(2),
            den + tt.r1().pow(2) + tt.r2().pow(2),
        )
    });
    Ok(num / den as f64)
}

/// `ce + lambda_ort * orth_loss(layers)`; a network without compressed
/// layers carries no penalty.
pub fn combined_loss(ce: f64, layers: &[TTKernel], lambda_ort: f64) -> f64 {
    if lambda_ort == 0.0 || layers.is_empty() {
        return ce;
    }
    ce + lambda_ort * orth_loss(layers).expect("non-empty layers")
}
