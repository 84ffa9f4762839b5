//! One-sided (Hestenes) Jacobi SVD for real dense matrices.
//!
//! Used by the dense oracle. It shares no code with the frequency-domain
//! path, which runs bidiagonal SVDs on small complex matrices.

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 80;

/// All singular values of a column-major `rows x cols` matrix, sorted descending.
///
/// The count is `min(rows, cols)`. Non-convergence is an error, never a
/// silently truncated result.
pub fn singular_values(rows: usize, cols: usize, col_major: &[f64]) -> Result<Vec<f64>> {
    assert_eq!(col_major.len(), rows * cols, "matrix buffer size");
    if rows == 0 || cols == 0 {
        return Ok(Vec::new());
    }
    // Rotate whichever side is shorter so the number of vectors is min(rows, cols).
    let (count, mut vecs) = if cols <= rows {
        let v: Vec<Vec<f64>> = col_major.chunks(rows).map(|c| c.to_vec()).collect();
        (cols, v)
    } else {
        let mut v = vec![vec![0.0; cols]; rows];
        for (c, col) in col_major.chunks(rows).enumerate() {
            for (r, &x) in col.iter().enumerate() {
                v[r][c] = x;
            }
        }
        (rows, v)
    };

    let mut norms: Vec<f64> = vecs.iter().map(|v| dot(v, v)).collect();
    let tol = vecs[0].len() as f64 * f64::EPSILON;
    // Vectors at the rounding level of the whole matrix are numerically zero;
    // rotating them against large ones only churns noise. A looser cut would
    // leave unrotated residue that shows up as spurious small singular values.
    let negligible = (f64::EPSILON * norms.iter().sum::<f64>().sqrt()).powi(2);
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..count {
            for q in (p + 1)..count {
                let alpha = norms[p];
                let beta = norms[q];
                if alpha <= negligible || beta <= negligible {
                    continue;
                }
                let (head, tail) = vecs.split_at_mut(q);
                let (vp, vq) = (&mut head[p], &mut tail[0]);
                let gamma = dot(vp, vq);
                if gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for (a, b) in vp.iter_mut().zip(vq.iter_mut()) {
                    let (x, y) = (*a, *b);
                    *a = c * x - s * y;
                    *b = s * x + c * y;
                }
                norms[p] = dot(vp, vp);
                norms[q] = dot(vq, vq);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Svd(format!(
            "one-sided Jacobi failed to converge in {MAX_SWEEPS} sweeps ({rows}x{cols})"
        )));
    }
    let mut values: Vec<f64> = vecs.iter().map(|v| dot(v, v).sqrt()).collect();
    sort_descending(&mut values);
    Ok(values)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn sort_descending(values: &mut [f64]) {
    values.sort_by(|a, b| b.total_cmp(a));
}
