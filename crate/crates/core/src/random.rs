//! Seeded random tensors. Every stochastic routine in the crate draws from
//! `ChaCha8Rng`, so results are reproducible from `(seed, shape)`.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::tensor::{ConvKernel, TensorD};
use crate::tt::TTKernel;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard normal entries.
pub fn gaussian_tensor(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Result<TensorD> {
    let len = shape.iter().product();
    let data = (0..len).map(|_| StandardNormal.sample(&mut *rng)).collect();
    TensorD::new(shape, data)
}

pub fn gaussian_vec(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(&mut *rng)).collect()
}

/// Kernel with i.i.d. standard normal weights.
pub fn random_kernel(
    k: usize,
    c_in: usize,
    c_out: usize,
    stride: usize,
    n: usize,
    seed: u64,
) -> Result<ConvKernel> {
    let mut rng = rng(seed);
    ConvKernel::new(
        gaussian_tensor(vec![k, k, c_in, c_out], &mut rng)?,
        stride,
        n,
    )
}

/// Signal of shape `[channels, n, n]` with i.i.d. standard normal entries.
pub fn random_signal(channels: usize, n: usize, rng: &mut ChaCha8Rng) -> Result<TensorD> {
    gaussian_tensor(vec![channels, n, n], rng)
}

/// `k = 1` kernel that is the identity on `c` channels.
pub fn identity_kernel(c: usize, stride: usize, n: usize) -> Result<ConvKernel> {
    let w = TensorD::from_fn(
        vec![1, 1, c, c],
        |ix| if ix[2] == ix[3] { 1.0 } else { 0.0 },
    )?;
    ConvKernel::new(w, stride, n)
}

/// Tensor-train kernel with i.i.d. standard normal factors, drawn in the
/// order `K1`, `K2`, `K3`. The frames are generically not orthogonal.
#[allow(clippy::too_many_arguments)]
pub fn random_tt_kernel(
    k: usize,
    c_in: usize,
    c_out: usize,
    r1: usize,
    r2: usize,
    stride: usize,
    n: usize,
    seed: u64,
) -> Result<TTKernel> {
    let mut g = rng(seed);
    let k1 = gaussian_vec(c_in * r1, &mut g);
    let k2 = gaussian_tensor(vec![k, k, r1, r2], &mut g)?;
    let k3 = gaussian_vec(r2 * c_out, &mut g);
    TTKernel::new(
        DMatrix::from_row_slice(c_in, r1, &k1),
        k2,
        DMatrix::from_row_slice(r2, c_out, &k3),
        stride,
        n,
    )
}
