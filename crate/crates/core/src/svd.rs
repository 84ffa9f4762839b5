//! Thin SVDs of small dense matrices, backed by `faer`.
//!
//! Runs sequentially; callers parallelize across matrices. Factorizations are
//! checked against the input so an inaccurate result is an error instead of
//! a silently wrong spectrum.

use faer::diag::Diag;
use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::svd::{self, ComputeSvdVectors};
use faer::{Mat, Par};
use nalgebra::{ComplexField, DMatrix};

use crate::error::{Error, Result};

/// Backward error allowed for `||A - U S V^H|| / ||A||`.
const RESIDUAL_LIMIT: f64 = 1e-10;

/// `A = U diag(sigma) V^H` with `U` (`rows x r`), `V^H` (`r x cols`), `r = min(rows, cols)`,
/// singular values in nonincreasing order.
pub(crate) struct Thin<T: ComplexField> {
    pub u: DMatrix<T>,
    pub sigma: Vec<f64>,
    pub v_t: DMatrix<T>,
}

pub(crate) fn thin_svd<T>(a: &DMatrix<T>) -> Result<Thin<T>>
where
    T: ComplexField<RealField = f64> + faer::traits::ComplexField + Copy,
{
    let (m, n) = a.shape();
    let r = m.min(n);
    let src = Mat::from_fn(m, n, |i, j| a[(i, j)]);
    let mut u = Mat::<T>::zeros(m, r);
    let mut v = Mat::<T>::zeros(n, r);
    let mut s = Diag::<T>::zeros(r);
    let scratch = svd::svd_scratch::<T>(
        m,
        n,
        ComputeSvdVectors::Thin,
        ComputeSvdVectors::Thin,
        Par::Seq,
        Default::default(),
    );
    svd::svd(
        src.as_ref(),
        s.as_mut(),
        Some(u.as_mut()),
        Some(v.as_mut()),
        Par::Seq,
        MemStack::new(&mut MemBuffer::new(scratch)),
        Default::default(),
    )
    .map_err(|e| Error::Svd(format!("{m}x{n}: {e:?}")))?;
    let out = Thin {
        u: DMatrix::from_fn(m, r, |i, j| u[(i, j)]),
        sigma: (0..r).map(|k| nalgebra::ComplexField::real(s[k])).collect(),
        v_t: DMatrix::from_fn(r, n, |i, j| nalgebra::ComplexField::conjugate(v[(j, i)])),
    };
    let rebuilt = &out.u
        * DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            r,
            out.sigma.iter().map(|&x| T::from_real(x)),
        ))
        * &out.v_t;
    let scale = a.norm().max(f64::MIN_POSITIVE);
    let residual = (rebuilt - a).norm() / scale;
    if residual.is_nan() || residual > RESIDUAL_LIMIT {
        return Err(Error::Svd(format!(
            "{m}x{n}: factorization residual {residual:e} exceeds {RESIDUAL_LIMIT:e}"
        )));
    }
    Ok(out)
}

/// Singular values only, nonincreasing.
pub(crate) fn singular_values<T>(a: &DMatrix<T>) -> Result<Vec<f64>>
where
    T: ComplexField<RealField = f64> + faer::traits::ComplexField + Copy,
{
    let (m, n) = a.shape();
    let r = m.min(n);
    let src = Mat::from_fn(m, n, |i, j| a[(i, j)]);
    let mut s = Diag::<T>::zeros(r);
    let scratch = svd::svd_scratch::<T>(
        m,
        n,
        ComputeSvdVectors::No,
        ComputeSvdVectors::No,
        Par::Seq,
        Default::default(),
    );
    svd::svd(
        src.as_ref(),
        s.as_mut(),
        None,
        None,
        Par::Seq,
        MemStack::new(&mut MemBuffer::new(scratch)),
        Default::default(),
    )
    .map_err(|e| Error::Svd(format!("{m}x{n}: {e:?}")))?;
    Ok((0..r).map(|k| nalgebra::ComplexField::real(s[k])).collect())
}
