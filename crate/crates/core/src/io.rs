//! The `SPCK1` kernel file format.
//!
//! ```text
//! offset  size  field
//! 0       5     magic "SPCK1"
//! 5       1     dtype tag, 1 = f64 little-endian
//! 6       1     role tag, 0 = FULL, 1 = TT
//! 7       8*d   u64 LE dimensions: k, c_in, c_out, s, n (TT adds r1, r2)
//! ...     8*N   f64 LE payload, row-major
//! ```
//!
//! A FULL payload is the `k x k x c_in x c_out` kernel. A TT payload is `K1`
//! (`c_in x r1`), then `K2` (`k x k x r1 x r2`), then `K3` (`r2 x c_out`).
//! Trailing bytes are rejected.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::tensor::{ConvKernel, TensorD};
use crate::tt::{row_major, TTKernel};

pub const MAGIC: &[u8; 5] = b"SPCK1";
pub const DTYPE_F64_LE: u8 = 1;
pub const ROLE_FULL: u8 = 0;
pub const ROLE_TT: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum KernelFile {
    Full(ConvKernel),
    Tt(TTKernel),
}

impl KernelFile {
    pub fn stride(&self) -> usize {
        match self {
            KernelFile::Full(k) => k.stride(),
            KernelFile::Tt(t) => t.stride(),
        }
    }

    pub fn signal_size(&self) -> usize {
        match self {
            KernelFile::Full(k) => k.signal_size(),
            KernelFile::Tt(t) => t.signal_size(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (role, dims, payload): (u8, Vec<usize>, Vec<f64>) = match self {
            KernelFile::Full(kern) => (
                ROLE_FULL,
                vec![
                    kern.k(),
                    kern.c_in(),
                    kern.c_out(),
                    kern.stride(),
                    kern.signal_size(),
                ],
                kern.weights().data().to_vec(),
            ),
            KernelFile::Tt(tt) => {
                let mut payload = row_major(tt.k1());
                payload.extend_from_slice(tt.k2().data());
                payload.extend(row_major(tt.k3()));
                (
                    ROLE_TT,
                    vec![
                        tt.k(),
                        tt.c_in(),
                        tt.c_out(),
                        tt.stride(),
                        tt.signal_size(),
                        tt.r1(),
                        tt.r2(),
                    ],
                    payload,
                )
            }
        };
        let mut out = Vec::with_capacity(7 + 8 * (dims.len() + payload.len()));
        out.extend_from_slice(MAGIC);
        out.push(DTYPE_F64_LE);
        out.push(role);
        for d in dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in payload {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parses a file image. Structural problems are [`Error::Format`];
    /// well-formed files with impossible geometry keep their dimension or
    /// rank error.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(5)? != MAGIC {
            return Err(Error::Format("missing SPCK1 magic".into()));
        }
        let dtype = r.take(1)?[0];
        if dtype != DTYPE_F64_LE {
            return Err(Error::Format(format!("unsupported dtype tag {dtype}")));
        }
        let role = r.take(1)?[0];
        let ndims = match role {
            ROLE_FULL => 5,
            ROLE_TT => 7,
            other => return Err(Error::Format(format!("unknown role tag {other}"))),
        };
        let dims = (0..ndims).map(|_| r.dim()).collect::<Result<Vec<_>>>()?;
        let (k, c_in, c_out, s, n) = (dims[0], dims[1], dims[2], dims[3], dims[4]);
        if let Some(zero) = dims.iter().position(|&d| d == 0) {
            return Err(Error::Dimension(format!(
                "dimension record entry {zero} is zero"
            )));
        }
        let file = if role == ROLE_FULL {
            let count = product(&[k, k, c_in, c_out])?;
            let weights = tensor(vec![k, k, c_in, c_out], r.values(count)?)?;
            KernelFile::Full(ConvKernel::new(weights, s, n)?)
        } else {
            let (r1, r2) = (dims[5], dims[6]);
            let k1 = r.values(product(&[c_in, r1])?)?;
            let k2 = r.values(product(&[k, k, r1, r2])?)?;
            let k3 = r.values(product(&[r2, c_out])?)?;
            let k2 = tensor(vec![k, k, r1, r2], k2)?;
            let k1 = frame(c_in, r1, k1)?;
            let k3 = frame(r2, c_out, k3)?;
            KernelFile::Tt(TTKernel::new(k1, k2, k3, s, n)?)
        };
        if r.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after payload",
                bytes.len() - r.pos
            )));
        }
        Ok(file)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&end| end <= self.bytes.len())
            .ok_or_else(|| {
                Error::Format(format!(
                    "truncated file: need {len} bytes at offset {}, have {}",
                    self.pos,
                    self.bytes.len() - self.pos
                ))
            })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn dim(&mut self) -> Result<usize> {
        let raw = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(raw).map_err(|_| Error::Format(format!("dimension {raw} too large")))
    }

    fn values(&mut self, count: usize) -> Result<Vec<f64>> {
        let len = count
            .checked_mul(8)
            .ok_or_else(|| Error::Format("payload size overflows".into()))?;
        Ok(self
            .take(len)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

fn product(dims: &[usize]) -> Result<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format(format!("element count of {dims:?} overflows")))
}

fn tensor(shape: Vec<usize>, data: Vec<f64>) -> Result<TensorD> {
    TensorD::new(shape, data).map_err(|e| match e {
        Error::NonFinite { index } => {
            Error::Format(format!("non-finite payload value at element {index}"))
        }
        other => other,
    })
}

fn frame(rows: usize, cols: usize, data: Vec<f64>) -> Result<DMatrix<f64>> {
    if let Some(index) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::Format(format!(
            "non-finite frame value at element {index}"
        )));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

pub fn save(file: &KernelFile, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, file.to_bytes())?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<KernelFile> {
    KernelFile::from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{identity_kernel, random_kernel, random_tt_kernel};

    #[test]
    fn full_round_trip_is_bitwise() {
        let file = KernelFile::Full(random_kernel(3, 2, 4, 2, 8, 1).unwrap());
        let bytes = file.to_bytes();
        assert_eq!(&bytes[..5], b"SPCK1");
        assert_eq!(bytes.len(), 7 + 8 * 5 + 8 * 3 * 3 * 2 * 4);
        let back = KernelFile::from_bytes(&bytes).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn tt_round_trip_is_bitwise() {
        let file = KernelFile::Tt(random_tt_kernel(3, 4, 3, 2, 2, 1, 4, 9).unwrap());
        let bytes = file.to_bytes();
        assert_eq!(bytes[6], ROLE_TT);
        assert_eq!(bytes.len(), 7 + 8 * 7 + 8 * (4 * 2 + 9 * 2 * 2 + 2 * 3));
        assert_eq!(KernelFile::from_bytes(&bytes).unwrap().to_bytes(), bytes);
    }

    #[test]
    fn identity_layout() {
        let bytes = KernelFile::Full(identity_kernel(1, 1, 4).unwrap()).to_bytes();
        let mut expected = b"SPCK1\x01\x00".to_vec();
        for d in [1u64, 1, 1, 1, 4] {
            expected.extend_from_slice(&d.to_le_bytes());
        }
        expected.extend_from_slice(&1.0f64.to_le_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn malformed_inputs() {
        let good = KernelFile::Full(random_kernel(2, 1, 1, 1, 4, 3).unwrap()).to_bytes();
        let format = |b: &[u8]| matches!(KernelFile::from_bytes(b), Err(Error::Format(_)));
        assert!(format(b""));
        assert!(format(b"SPCK2\x01\x00"));
        assert!(format(&good[..good.len() - 1]));
        let mut extra = good.clone();
        extra.push(0);
        assert!(format(&extra));
        let mut dtype = good.clone();
        dtype[5] = 2;
        assert!(format(&dtype));
        let mut role = good.clone();
        role[6] = 9;
        assert!(format(&role));
        let mut nan = good.clone();
        let at = nan.len() - 8;
        nan[at..].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(format(&nan));
        let mut huge = good.clone();
        huge[7..15].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(format(&huge));
    }

    #[test]
    fn geometry_violation_is_a_dimension_error() {
        let mut bytes = KernelFile::Full(random_kernel(2, 1, 1, 1, 4, 3).unwrap()).to_bytes();
        // stride 3 does not divide n = 4
        bytes[31..39].copy_from_slice(&3u64.to_le_bytes());
        assert!(matches!(
            KernelFile::from_bytes(&bytes),
            Err(Error::Dimension(_))
        ));
    }
}
