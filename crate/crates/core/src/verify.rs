//! End-to-end oracle runs: every case computes a spectrum the fast way and
//! through the dense SVD of the explicit operator, then compares multisets.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::compare::{compare_multisets, Tolerance, ORACLE};
use crate::dense::dense_spectrum_of;
use crate::error::{Error, Result};
use crate::random::{random_kernel, random_tt_kernel};
use crate::spectrum::{spectrum, spectrum_len};
use crate::tensor::{ConvKernel, TensorD};
use crate::tt::{orthogonalize, tt_reconstruct, tt_spectrum};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grid {
    Small,
    Full,
}

impl FromStr for Grid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "small" => Ok(Grid::Small),
            "full" => Ok(Grid::Full),
            other => Err(Error::InvalidArgument(format!(
                "grid must be small or full, got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case {
    /// Frequency-domain spectrum of a random kernel.
    Spectrum {
        k: usize,
        c_in: usize,
        c_out: usize,
        s: usize,
        n: usize,
        seed: u64,
    },
    /// Random tensor-train layer. With `ortho` the frames are made orthonormal
    /// and the bare middle-core spectrum is checked; otherwise `tt_spectrum`
    /// runs on the raw, non-orthogonal frames.
    Tt {
        c: usize,
        r1: usize,
        r2: usize,
        k: usize,
        s: usize,
        n: usize,
        ortho: bool,
        seed: u64,
    },
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Case::Spectrum {
                k,
                c_in,
                c_out,
                s,
                n,
                seed,
            } => {
                write!(f, "spectrum/n{n}/k{k}/ci{c_in}/co{c_out}/s{s}/seed{seed}")
            }
            Case::Tt {
                c,
                r1,
                r2,
                k,
                s,
                n,
                ortho,
                seed,
            } => {
                let frames = if ortho { "ortho" } else { "raw" };
                write!(f, "tt-{frames}/n{n}/k{k}/c{c}/r{r1}x{r2}/s{s}/seed{seed}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseResult {
    pub id: String,
    /// Normalized so that the case passes iff this is at most the relative tolerance.
    pub max_deviation: f64,
    pub passed: bool,
}

/// Adds to one weight so that the fast path sees a different operator.
fn corrupt(kern: &ConvKernel) -> Result<ConvKernel> {
    let mut data = kern.weights().data().to_vec();
    data[0] += 1.0 + kern.weights().frobenius_norm();
    ConvKernel::new(
        TensorD::new(kern.weights().shape().to_vec(), data)?,
        kern.stride(),
        kern.signal_size(),
    )
}

impl Case {
    pub fn run(&self, tol: Tolerance, inject_corruption: bool) -> Result<CaseResult> {
        let (fast, oracle) = match *self {
            Case::Spectrum {
                k,
                c_in,
                c_out,
                s,
                n,
                seed,
            } => {
                let kern = random_kernel(k, c_in, c_out, s, n, seed)?;
                let probe = if inject_corruption {
                    corrupt(&kern)?
                } else {
                    kern.clone()
                };
                (spectrum(&probe)?.padded_values(), dense_spectrum_of(&kern)?)
            }
            Case::Tt {
                c,
                r1,
                r2,
                k,
                s,
                n,
                ortho,
                seed,
            } => {
                let mut tt = random_tt_kernel(k, c, c, r1, r2, s, n, seed)?;
                if ortho {
                    tt = orthogonalize(&tt)?.tt;
                }
                let full = tt_reconstruct(&tt)?;
                let fast = if inject_corruption {
                    spectrum(&corrupt(&full)?)?.padded_values()
                } else if ortho {
                    // the core layer alone, padded with the zeros of the rank reduction
                    let mut v = spectrum(&tt.core_kernel()?)?.padded_values();
                    let missing = spectrum_len(c, c, s, n) - spectrum_len(r1, r2, s, n);
                    v.extend(std::iter::repeat_n(0.0, missing));
                    v
                } else {
                    tt_spectrum(&tt)?.padded_values()
                };
                (fast, dense_spectrum_of(&full)?)
            }
        };
        let cmp = compare_multisets(&fast, oracle.values(), tol);
        Ok(CaseResult {
            id: self.to_string(),
            max_deviation: cmp.max_deviation,
            passed: cmp.passed,
        })
    }
}

/// All spectrum cases over the given axes; combinations with `n mod s != 0`
/// or `k > n` are skipped.
pub fn spectrum_grid(
    ns: &[usize],
    ks: &[usize],
    channels: &[usize],
    strides: &[usize],
    seeds: &[u64],
) -> Vec<Case> {
    let mut out = Vec::new();
    for &n in ns {
        for &s in strides {
            for &k in ks {
                for &c_in in channels {
                    for &c_out in channels {
                        for &seed in seeds {
                            if n % s == 0 && k <= n {
                                out.push(Case::Spectrum {
                                    k,
                                    c_in,
                                    c_out,
                                    s,
                                    n,
                                    seed,
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Tensor-train cases over every rank pair `1 <= r1, r2 <= c`.
pub fn tt_grid(
    cs: &[usize],
    ks: &[usize],
    ns: &[usize],
    strides: &[usize],
    ortho: bool,
    seed: u64,
) -> Vec<Case> {
    let mut out = Vec::new();
    for &c in cs {
        for &n in ns {
            for &s in strides {
                for &k in ks {
                    if n % s != 0 || k > n {
                        continue;
                    }
                    for r1 in 1..=c {
                        for r2 in 1..=c {
                            let seed = seed.wrapping_add(out.len() as u64);
                            out.push(Case::Tt {
                                c,
                                r1,
                                r2,
                                k,
                                s,
                                n,
                                ortho,
                                seed,
                            });
                        }
                    }
                }
            }
        }
    }
    out
}

/// The cases run by a named grid. Seeds are offsets from `seed`.
pub fn grid_cases(grid: Grid, seed: u64) -> Vec<Case> {
    match grid {
        Grid::Small => {
            let mut cases = spectrum_grid(&[4, 6], &[1, 2, 3], &[1, 2, 3], &[1, 2], &[seed]);
            cases.extend(tt_grid(&[2, 4], &[1, 3], &[4], &[1, 2], true, seed));
            cases.extend(tt_grid(
                &[3],
                &[3],
                &[4],
                &[1, 2],
                false,
                seed.wrapping_add(1 << 20),
            ));
            cases
        }
        Grid::Full => {
            let seeds = [seed, seed.wrapping_add(1), seed.wrapping_add(2)];
            let mut cases = spectrum_grid(&[4, 6, 8], &[1, 2, 3], &[1, 2, 3], &[1], &seeds);
            cases.extend(spectrum_grid(&[4, 8], &[1, 2, 3], &[1, 2, 3], &[2], &seeds));
            cases.extend(tt_grid(&[2, 4, 6], &[1, 3], &[4, 8], &[1, 2], true, seed));
            cases.extend(tt_grid(
                &[2, 4],
                &[1, 3],
                &[4, 8],
                &[1, 2],
                false,
                seed.wrapping_add(1 << 20),
            ));
            cases
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub cases: Vec<CaseResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.cases.iter().all(|c| c.passed)
    }

    /// The case with the largest deviation.
    pub fn worst(&self) -> Option<&CaseResult> {
        self.cases
            .iter()
            .max_by(|a, b| a.max_deviation.total_cmp(&b.max_deviation))
    }
}

/// Runs the cases in parallel; results keep the order of `cases`.
pub fn run_cases(cases: &[Case], tol: Tolerance, inject_corruption: bool) -> Result<VerifyReport> {
    let cases = cases
        .par_iter()
        .map(|c| c.run(tol, inject_corruption))
        .collect::<Result<Vec<_>>>()?;
    Ok(VerifyReport { cases })
}

pub fn verify(grid: Grid, seed: u64, inject_corruption: bool) -> Result<VerifyReport> {
    run_cases(&grid_cases(grid, seed), ORACLE, inject_corruption)
}
