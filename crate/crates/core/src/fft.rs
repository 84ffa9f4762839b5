//! Square 2-D DFTs on row-major buffers, backed by rustfft.
//!
//! Forward transforms are unnormalized (numpy `fft2`); the inverse divides by
//! `m^2`, so `inverse(forward(x)) == x`.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub struct Fft2 {
    size: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(size: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            size,
            forward: planner.plan_fft_forward(size),
            inverse: planner.plan_fft_inverse(size),
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.run(&*self.forward, buf);
    }

    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.run(&*self.inverse, buf);
        let norm = 1.0 / (self.size * self.size) as f64;
        buf.iter_mut().for_each(|v| *v *= norm);
    }

    fn run(&self, plan: &dyn Fft<f64>, buf: &mut [Complex64]) {
        let m = self.size;
        assert_eq!(buf.len(), m * m, "buffer must hold an {m}x{m} plane");
        // rows are contiguous
        plan.process(buf);
        let mut col = vec![Complex64::new(0.0, 0.0); m];
        for c in 0..m {
            for r in 0..m {
                col[r] = buf[r * m + c];
            }
            plan.process(&mut col);
            for r in 0..m {
                buf[r * m + c] = col[r];
            }
        }
    }
}
