//! Lipschitz control of a convolution layer: rescaling by a power-iteration
//! estimate of `sigma_1`, hard clipping of the spectrum, and empirical
//! Lipschitz ratios on random probes.
//!
//! Power iteration runs on `T_K^T T_K` for the exact periodic operator
//! (the signal map), not on the unfolded weight matrix.

use rayon::prelude::*;

use crate::conv::{conv_adjoint_apply, conv_apply};
use crate::error::{Error, Result};
use crate::random::{gaussian_vec, random_signal, rng};
use crate::spectrum::{clip_factors, frequency_matrices, spectrum, strided_reshape};
use crate::tensor::{pad_kernel, ConvKernel, TensorD};

/// Iterations used by library callers that need a certification-grade estimate.
pub const DEFAULT_POWER_ITERS: usize = 100;

/// Clipping thresholds used in practice.
pub const CLIP_THRESHOLDS: [f64; 2] = [1.0, 2.0];

#[derive(Debug, Clone, PartialEq)]
pub struct PowerEstimate {
    pub estimate: f64,
    /// `||A x_t|| / ||x_t||` after each iteration.
    pub history: Vec<f64>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Estimates `sigma_1(T_K)` by `x <- normalize(A^T A x)` from a seeded
/// Gaussian start. A zero kernel yields an estimate of 0.
pub fn power_iteration_sigma1(kern: &ConvKernel, iters: usize, seed: u64) -> Result<PowerEstimate> {
    if iters == 0 {
        return Err(Error::InvalidArgument(
            "power iteration needs iters >= 1".into(),
        ));
    }
    let (c_in, n) = (kern.c_in(), kern.signal_size());
    let mut g = rng(seed);
    let mut x = gaussian_vec(c_in * n * n, &mut g);
    let start = norm(&x);
    x.iter_mut().for_each(|v| *v /= start);

    let mut history = Vec::with_capacity(iters);
    let mut estimate = 0.0;
    for _ in 0..iters {
        let ax = conv_apply(kern, &TensorD::new(vec![c_in, n, n], x)?)?;
        let z = conv_adjoint_apply(kern, &ax)?.into_data();
        let z_norm = norm(&z);
        if z_norm == 0.0 {
            estimate = 0.0;
            history.push(0.0);
            break;
        }
        x = z.into_iter().map(|v| v / z_norm).collect();
        // dividing by ||x|| instead of assuming 1 makes alpha * I give exactly |alpha|
        estimate = conv_apply(kern, &TensorD::new(vec![c_in, n, n], x.clone())?)?.frobenius_norm()
            / norm(&x);
        history.push(estimate);
    }
    Ok(PowerEstimate { estimate, history })
}

/// Rescales the kernel by `target / estimate` so that its largest singular
/// value is approximately `target`.
pub fn divide_to_target(
    kern: &ConvKernel,
    target: f64,
    iters: usize,
    seed: u64,
) -> Result<ConvKernel> {
    if !target.is_finite() || target <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "target Lipschitz constant must be positive, got {target}"
        )));
    }
    let est = power_iteration_sigma1(kern, iters, seed)?.estimate;
    if est == 0.0 {
        return Err(Error::Degenerate(
            "kernel has zero operator norm and cannot be normalized".into(),
        ));
    }
    kern.scaled(target / est)
}

/// Largest singular values around a clipping step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipReport {
    pub sigma1_pre: f64,
    /// Of the full-support reconstructed kernel; equals `min(sigma1_pre, delta)`.
    pub sigma1_expanded: f64,
    /// Of the `k x k` truncation; only approximately clipped.
    pub sigma1_truncated: f64,
}

#[derive(Debug, Clone)]
pub struct ClipOutcome {
    pub expanded: ConvKernel,
    pub truncated: ConvKernel,
    pub report: ClipReport,
}

/// Clips the spectrum at `delta` and reports `sigma_1` before, after
/// expansion, and after truncation back to `k x k`.
///
/// When nothing exceeds `delta` the input is returned untouched, so the
/// truncated kernel is bitwise equal to it rather than an FFT round trip.
pub fn clip_to_threshold(kern: &ConvKernel, delta: f64) -> Result<ClipOutcome> {
    if !delta.is_finite() || delta <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "clipping threshold must be positive, got {delta}"
        )));
    }
    let factors = frequency_matrices(&strided_reshape(kern)?)?;
    let sigma1_pre = factors.spectrum().sigma1();
    if sigma1_pre <= delta {
        let expanded = ConvKernel::new(pad_kernel(kern)?, kern.stride(), kern.signal_size())?;
        let report = ClipReport {
            sigma1_pre,
            sigma1_expanded: sigma1_pre,
            sigma1_truncated: sigma1_pre,
        };
        return Ok(ClipOutcome {
            expanded,
            truncated: kern.clone(),
            report,
        });
    }
    let clipped = clip_factors(kern, &factors, delta)?;
    let expanded = clipped.expanded_kernel()?;
    let report = ClipReport {
        sigma1_pre,
        sigma1_expanded: spectrum(&expanded)?.sigma1(),
        sigma1_truncated: spectrum(&clipped.truncated)?.sigma1(),
    };
    Ok(ClipOutcome {
        expanded,
        truncated: clipped.truncated,
        report,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzEstimate {
    pub max_ratio: f64,
    pub ratios: Vec<f64>,
}

/// `||A d|| / ||d||` over seeded Gaussian directions `d`; a lower bound on `sigma_1`.
///
/// Probe `t` uses the stream seeded by `seed + t`, so the ratios do not
/// depend on evaluation order.
pub fn empirical_lipschitz(
    kern: &ConvKernel,
    probes: usize,
    seed: u64,
) -> Result<LipschitzEstimate> {
    if probes == 0 {
        return Err(Error::InvalidArgument("need at least one probe".into()));
    }
    let ratios = (0..probes as u64)
        .into_par_iter()
        .map(|t| {
            let d = random_signal(
                kern.c_in(),
                kern.signal_size(),
                &mut rng(seed.wrapping_add(t)),
            )?;
            Ok(conv_apply(kern, &d)?.frobenius_norm() / d.frobenius_norm())
        })
        .collect::<Result<Vec<f64>>>()?;
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    Ok(LipschitzEstimate { max_ratio, ratios })
}
