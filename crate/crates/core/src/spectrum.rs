//! Exact singular values of periodic strided convolutions in the frequency domain.
//!
//! The padded kernel `K^` (`n x n x c_in x c_out`) is split into `s^2` stride
//! phases,
//!
//! ```text
//! R[q, a, b, i, j] = K^[q / s + a*s, q % s + b*s, i, j],   q in [0, s^2), a, b in [0, n/s)
//! ```
//!
//! Each spatial slice of `R` gets an unnormalized `(n/s) x (n/s)` DFT. For
//! every frequency `(p1, p2)` the transformed slices form a complex matrix
//! with one row per (input channel, phase) pair `d = i * s^2 + q` and one
//! column per output channel `j`:
//!
//! ```text
//! P^(p1,p2)[d, j] = DFT2(R[d % s^2, :, :, d / s^2, j])[p1, p2]
//! ```
//!
//! The singular values of `T_K` are the union of the singular values of the
//! `(n/s)^2` matrices `P^(p1,p2)`, `(n/s)^2 * min(s^2 * c_in, c_out)` values in
//! total. Stride phases multiply the input side because striding subsamples
//! the input grid.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::jacobi::sort_descending;
use crate::tensor::{leading_window, pad_kernel, validate_geometry, ConvKernel, TensorD};

/// Singular values of one frequency matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGroup {
    pub p1: usize,
    pub p2: usize,
    pub values: Vec<f64>,
}

/// Multiset of singular values, sorted descending.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    values: Vec<f64>,
    grouping: Option<Vec<FrequencyGroup>>,
    implied_zeros: usize,
}

impl Spectrum {
    pub fn from_values(mut values: Vec<f64>) -> Self {
        sort_descending(&mut values);
        Self {
            values,
            grouping: None,
            implied_zeros: 0,
        }
    }

    pub fn from_groups(groups: Vec<FrequencyGroup>) -> Self {
        let values = groups
            .iter()
            .flat_map(|g| g.values.iter().copied())
            .collect();
        Self {
            grouping: Some(groups),
            ..Self::from_values(values)
        }
    }

    pub(crate) fn with_implied_zeros(mut self, zeros: usize) -> Self {
        self.implied_zeros = zeros;
        self
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest singular value, 0 for an empty spectrum.
    pub fn sigma1(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    /// Per-frequency values in row-major `(p1, p2)` order, 0-based.
    pub fn grouping(&self) -> Option<&[FrequencyGroup]> {
        self.grouping.as_deref()
    }

    /// Zero singular values of the full operator that are not materialized
    /// (set by the tensor-train path, where rank reduction implies them).
    pub fn implied_zeros(&self) -> usize {
        self.implied_zeros
    }

    /// Values followed by the implied zeros.
    pub fn padded_values(&self) -> Vec<f64> {
        let mut v = self.values.clone();
        v.extend(std::iter::repeat_n(0.0, self.implied_zeros));
        v
    }
}

/// Number of singular values of `T_K`: `(n/s)^2 * min(s^2 * c_in, c_out)`.
pub fn spectrum_len(c_in: usize, c_out: usize, stride: usize, n: usize) -> usize {
    let m = n / stride;
    m * m * (stride * stride * c_in).min(c_out)
}

/// Stride-phase reshape of the padded kernel, shape `[s^2, n/s, n/s, c_in, c_out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StridedReshape {
    pub stride: usize,
    pub tensor: TensorD,
}

impl StridedReshape {
    pub fn phases(&self) -> usize {
        self.tensor.shape()[0]
    }

    /// Coarse grid size `n / s`.
    pub fn size(&self) -> usize {
        self.tensor.shape()[1]
    }

    pub fn c_in(&self) -> usize {
        self.tensor.shape()[3]
    }

    pub fn c_out(&self) -> usize {
        self.tensor.shape()[4]
    }

    /// Inverse of [`strided_reshape`]: the `n x n x c_in x c_out` padded kernel.
    pub fn to_padded(&self) -> Result<TensorD> {
        let (s, m, c_in, c_out) = (self.stride, self.size(), self.c_in(), self.c_out());
        let n = s * m;
        let block = c_in * c_out;
        let src = self.tensor.data();
        let mut data = vec![0.0; n * n * block];
        for q in 0..s * s {
            let (u, v) = (q / s, q % s);
            for a in 0..m {
                for b in 0..m {
                    let from = ((q * m + a) * m + b) * block;
                    let to = ((a * s + u) * n + (b * s + v)) * block;
                    data[to..to + block].copy_from_slice(&src[from..from + block]);
                }
            }
        }
        TensorD::new(vec![n, n, c_in, c_out], data)
    }
}

pub fn strided_reshape(kern: &ConvKernel) -> Result<StridedReshape> {
    let padded = pad_kernel(kern)?;
    reshape_padded(&padded, kern.stride())
}

fn reshape_padded(padded: &TensorD, s: usize) -> Result<StridedReshape> {
    let shape = padded.shape();
    let (n, c_in, c_out) = (shape[0], shape[2], shape[3]);
    validate_geometry(1, s, n)?;
    let m = n / s;
    let block = c_in * c_out;
    let src = padded.data();
    let mut data = vec![0.0; n * n * block];
    for q in 0..s * s {
        let (u, v) = (q / s, q % s);
        for a in 0..m {
            for b in 0..m {
                let from = ((a * s + u) * n + (b * s + v)) * block;
                let to = ((q * m + a) * m + b) * block;
                data[to..to + block].copy_from_slice(&src[from..from + block]);
            }
        }
    }
    Ok(StridedReshape {
        stride: s,
        tensor: TensorD::new(vec![s * s, m, m, c_in, c_out], data)?,
    })
}

/// Frequency matrix with its thin SVD `P = U diag(sigma) V^H`.
#[derive(Debug, Clone)]
pub struct FrequencyEntry {
    pub p1: usize,
    pub p2: usize,
    pub matrix: DMatrix<Complex64>,
    pub u: DMatrix<Complex64>,
    pub singular_values: Vec<f64>,
    pub v_t: DMatrix<Complex64>,
}

/// All `(n/s)^2` frequency matrices of a strided reshape, with SVD factors.
#[derive(Debug, Clone)]
pub struct FrequencyFactors {
    pub stride: usize,
    pub size: usize,
    pub c_in: usize,
    pub c_out: usize,
    /// Row-major `(p1, p2)` order.
    pub entries: Vec<FrequencyEntry>,
}

/// Row-major `[m*m][s^2*c_in][c_out]` buffer of transformed slices.
fn transform_slices(r: &StridedReshape) -> Vec<Complex64> {
    let (phases, m, c_in, c_out) = (r.phases(), r.size(), r.c_in(), r.c_out());
    let rows = phases * c_in;
    let fft = Fft2::new(m);
    let src = r.tensor.data();
    let mut out = vec![Complex64::new(0.0, 0.0); m * m * rows * c_out];
    let mut plane = vec![Complex64::new(0.0, 0.0); m * m];
    for q in 0..phases {
        for i in 0..c_in {
            let d = i * phases + q;
            for j in 0..c_out {
                for ab in 0..m * m {
                    plane[ab] = Complex64::new(src[((q * m * m + ab) * c_in + i) * c_out + j], 0.0);
                }
                fft.forward(&mut plane);
                for (f, v) in plane.iter().enumerate() {
                    out[(f * rows + d) * c_out + j] = *v;
                }
            }
        }
    }
    out
}

fn frequency_matrix(buf: &[Complex64], f: usize, rows: usize, cols: usize) -> DMatrix<Complex64> {
    DMatrix::from_row_slice(rows, cols, &buf[f * rows * cols..(f + 1) * rows * cols])
}

fn at_frequency(e: Error, f: usize, m: usize) -> Error {
    match e {
        Error::Svd(msg) => Error::Svd(format!("frequency ({}, {}): {msg}", f / m, f % m)),
        other => other,
    }
}

pub fn frequency_matrices(r: &StridedReshape) -> Result<FrequencyFactors> {
    let (m, rows, cols) = (r.size(), r.phases() * r.c_in(), r.c_out());
    let buf = transform_slices(r);
    let entries = (0..m * m)
        .into_par_iter()
        .map(|f| {
            let matrix = frequency_matrix(&buf, f, rows, cols);
            let svd = crate::svd::thin_svd(&matrix).map_err(|e| at_frequency(e, f, m))?;
            Ok(FrequencyEntry {
                p1: f / m,
                p2: f % m,
                matrix,
                u: svd.u,
                singular_values: svd.sigma,
                v_t: svd.v_t,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FrequencyFactors {
        stride: r.stride,
        size: m,
        c_in: r.c_in(),
        c_out: r.c_out(),
        entries,
    })
}

impl FrequencyFactors {
    pub fn spectrum(&self) -> Spectrum {
        Spectrum::from_groups(
            self.entries
                .iter()
                .map(|e| {
                    let mut values = e.singular_values.clone();
                    sort_descending(&mut values);
                    FrequencyGroup {
                        p1: e.p1,
                        p2: e.p2,
                        values,
                    }
                })
                .collect(),
        )
    }

    /// Rebuilds every `P` as `U diag(min(sigma, delta)) V^H`.
    pub fn clipped(&self, delta: f64) -> Result<FrequencyFactors> {
        if !delta.is_finite() || delta <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "clipping threshold must be positive, got {delta}"
            )));
        }
        let entries = self
            .entries
            .par_iter()
            .map(|e| {
                let sigma: Vec<f64> = e.singular_values.iter().map(|&v| v.min(delta)).collect();
                let mut scaled = e.u.clone();
                for (c, &sv) in sigma.iter().enumerate() {
                    scaled.column_mut(c).scale_mut(sv);
                }
                FrequencyEntry {
                    p1: e.p1,
                    p2: e.p2,
                    matrix: &scaled * &e.v_t,
                    u: e.u.clone(),
                    singular_values: sigma,
                    v_t: e.v_t.clone(),
                }
            })
            .collect();
        Ok(FrequencyFactors {
            entries,
            ..self.clone_shape()
        })
    }

    fn clone_shape(&self) -> FrequencyFactors {
        FrequencyFactors {
            stride: self.stride,
            size: self.size,
            c_in: self.c_in,
            c_out: self.c_out,
            entries: Vec::new(),
        }
    }

    /// Inverse DFT of the frequency matrices followed by the inverse stride
    /// reshape: the full-support `n x n x c_in x c_out` kernel.
    ///
    /// Fails if the imaginary part of the spatial kernel exceeds `1e-9`
    /// relative to its largest real entry (floored at 1).
    pub fn reconstruct_padded(&self) -> Result<TensorD> {
        let (s, m, c_in, c_out) = (self.stride, self.size, self.c_in, self.c_out);
        let phases = s * s;
        let rows = phases * c_in;
        let fft = Fft2::new(m);
        let mut r = vec![0.0; phases * m * m * c_in * c_out];
        let mut plane = vec![Complex64::new(0.0, 0.0); m * m];
        let mut residue: f64 = 0.0;
        let mut peak: f64 = 0.0;
        for d in 0..rows {
            let (i, q) = (d / phases, d % phases);
            for j in 0..c_out {
                for (f, e) in self.entries.iter().enumerate() {
                    plane[f] = e.matrix[(d, j)];
                }
                fft.inverse(&mut plane);
                for (ab, v) in plane.iter().enumerate() {
                    residue = residue.max(v.im.abs());
                    peak = peak.max(v.re.abs());
                    r[((q * m * m + ab) * c_in + i) * c_out + j] = v.re;
                }
            }
        }
        let limit = 1e-9 * peak.max(1.0);
        if residue > limit {
            return Err(Error::ImaginaryResidue { residue, limit });
        }
        StridedReshape {
            stride: s,
            tensor: TensorD::new(vec![phases, m, m, c_in, c_out], r)?,
        }
        .to_padded()
    }
}

/// Singular values of `T_K` grouped by frequency.
pub fn spectrum(kern: &ConvKernel) -> Result<Spectrum> {
    let r = strided_reshape(kern)?;
    let (m, rows, cols) = (r.size(), r.phases() * r.c_in(), r.c_out());
    let buf = transform_slices(&r);
    let groups = (0..m * m)
        .into_par_iter()
        .map(|f| {
            let matrix = frequency_matrix(&buf, f, rows, cols);
            let mut values =
                crate::svd::singular_values(&matrix).map_err(|e| at_frequency(e, f, m))?;
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Svd(format!("frequency ({}, {})", f / m, f % m)));
            }
            sort_descending(&mut values);
            Ok(FrequencyGroup {
                p1: f / m,
                p2: f % m,
                values,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Spectrum::from_groups(groups))
}

/// Output of [`clip_spectrum`].
#[derive(Debug, Clone)]
pub struct Clipped {
    /// Full-support kernel `K^_delta`, shape `n x n x c_in x c_out`.
    pub expanded: TensorD,
    /// `K^_delta` restricted to the leading `k x k` filter window.
    pub truncated: ConvKernel,
}

impl Clipped {
    /// The expanded kernel as an `n x n` convolution kernel with the original stride.
    pub fn expanded_kernel(&self) -> Result<ConvKernel> {
        ConvKernel::new(
            self.expanded.clone(),
            self.truncated.stride(),
            self.truncated.signal_size(),
        )
    }
}

/// Replaces every singular value above `delta` with `delta` and rebuilds the kernel.
pub fn clip_spectrum(kern: &ConvKernel, delta: f64) -> Result<Clipped> {
    let factors = frequency_matrices(&strided_reshape(kern)?)?;
    clip_factors(kern, &factors, delta)
}

pub(crate) fn clip_factors(
    kern: &ConvKernel,
    factors: &FrequencyFactors,
    delta: f64,
) -> Result<Clipped> {
    let expanded = factors.clipped(delta)?.reconstruct_padded()?;
    let truncated = ConvKernel::new(
        leading_window(&expanded, kern.k())?,
        kern.stride(),
        kern.signal_size(),
    )?;
    Ok(Clipped {
        expanded,
        truncated,
    })
}
