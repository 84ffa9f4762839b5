//! Exact singular values of multichannel periodic convolutional layers.
//!
//! A convolution with kernel `K` (`k x k x c_in x c_out`, stride `s`, signal
//! size `n`) is a linear map `T_K` from `c_in * n^2` to `c_out * (n/s)^2`
//! values. This crate
//!
//! - applies the map and its adjoint ([`conv`]),
//! - builds `T_K` explicitly and takes its dense SVD as an oracle ([`dense`]),
//! - computes the exact spectrum through per-frequency SVDs, including strided
//!   layers, and clips it with kernel reconstruction ([`spectrum`]),
//! - handles tensor-train (Tucker-2) compressed kernels, whose nonzero spectrum
//!   is that of the small middle core once the frame matrices are orthogonal ([`tt`]),
//! - rescales kernels to a target Lipschitz constant and measures empirical
//!   Lipschitz ratios ([`control`]),
//! - reads and writes the `SPCK1` kernel file format ([`io`]) and runs
//!   verification grids and benchmarks ([`verify`], [`bench`]).

pub mod bench;
pub mod compare;
pub mod control;
pub mod conv;
pub mod dense;
pub mod error;
pub mod fft;
pub mod io;
pub mod jacobi;
pub mod random;
pub mod spectrum;
mod svd;
pub mod tensor;
pub mod tt;
pub mod verify;

pub use error::{Error, Result};
pub use spectrum::{clip_spectrum, spectrum, Spectrum};
pub use tensor::{ConvKernel, TensorD};
