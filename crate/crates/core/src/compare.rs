//! Multiset comparison of singular value lists.

use crate::jacobi::sort_descending;

/// Relative tolerance `rel`, except for pairs whose larger magnitude is below
/// `floor`, which must agree to `abs` absolutely.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
    pub floor: f64,
}

impl Tolerance {
    pub const fn relative(rel: f64) -> Self {
        Self {
            rel,
            abs: rel,
            floor: 0.0,
        }
    }
}

/// Oracle agreement: `1e-8` relative, `1e-10` absolute below `1e-6`.
pub const ORACLE: Tolerance = Tolerance {
    rel: 1e-8,
    abs: 1e-10,
    floor: 1e-6,
};

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    /// Worst deviation, normalized so that the pass threshold is `tol.rel`.
    /// Infinite when the lengths differ.
    pub max_deviation: f64,
    /// Index (in descending order) of the worst pair.
    pub worst: Option<usize>,
    pub lengths: (usize, usize),
    pub passed: bool,
}

/// Sorts both lists descending and compares them pairwise.
pub fn compare_multisets(a: &[f64], b: &[f64], tol: Tolerance) -> Comparison {
    let lengths = (a.len(), b.len());
    if a.len() != b.len() {
        return Comparison {
            max_deviation: f64::INFINITY,
            worst: None,
            lengths,
            passed: false,
        };
    }
    let (mut a, mut b) = (a.to_vec(), b.to_vec());
    sort_descending(&mut a);
    sort_descending(&mut b);
    let mut max_deviation: f64 = 0.0;
    let mut worst = None;
    for (idx, (x, y)) in a.iter().zip(&b).enumerate() {
        let scale = x.abs().max(y.abs());
        let diff = (x - y).abs();
        let dev = if scale < tol.floor {
            diff / tol.abs * tol.rel
        } else if scale == 0.0 {
            0.0
        } else {
            diff / scale
        };
        // NaN deviations count as failures
        if dev.is_nan() || dev > max_deviation {
            max_deviation = if dev.is_nan() { f64::INFINITY } else { dev };
            worst = Some(idx);
        }
    }
    Comparison {
        max_deviation,
        worst,
        lengths,
        passed: max_deviation <= tol.rel,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_irrelevant() {
        let c = compare_multisets(&[1.0, 3.0, 2.0], &[3.0, 2.0, 1.0], ORACLE);
        assert!(c.passed);
        assert_eq!(c.max_deviation, 0.0);
    }

    #[test]
    fn relative_and_absolute_regimes() {
        assert!(compare_multisets(&[1.0], &[1.0 + 5e-9], ORACLE).passed);
        assert!(!compare_multisets(&[1.0], &[1.0 + 5e-8], ORACLE).passed);
        assert!(compare_multisets(&[1e-9], &[1.05e-9], ORACLE).passed);
        assert!(!compare_multisets(&[1e-9], &[1.3e-9], ORACLE).passed);
    }

    #[test]
    fn length_mismatch_fails() {
        let c = compare_multisets(&[1.0], &[1.0, 0.0], ORACLE);
        assert!(!c.passed);
        assert!(c.max_deviation.is_infinite());
    }
}
