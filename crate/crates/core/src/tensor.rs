//! `LBBT` tensor files.
//!
//! ```text
//! "LBBT"  u8 dtype (0 = u8, 1 = f64)  u32 rank  u64 dims[rank]  payload (little endian)
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::wire::{put_f64s, put_u32, put_u64, Reader};

pub const TENSOR_MAGIC: &str = "LBBT";

#[derive(Clone, Debug, PartialEq)]
pub enum TensorData {
    U8(Vec<u8>),
    F64(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Vec<u64>,
    pub data: TensorData,
}

impl Tensor {
    /// `rows x cols` byte matrix.
    pub fn from_rows_u8(rows: &[Vec<u8>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch { expected: cols, got: r.len() });
        }
        Ok(Self { shape: vec![rows.len() as u64, cols as u64], data: TensorData::U8(rows.concat()) })
    }

    pub fn from_rows_f64(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch { expected: cols, got: r.len() });
        }
        Ok(Self { shape: vec![rows.len() as u64, cols as u64], data: TensorData::F64(rows.concat()) })
    }

    pub fn len(&self) -> usize {
        match &self.data {
            TensorData::U8(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(rows, cols)` of a rank-2 tensor; a rank-1 tensor is one row.
    pub fn matrix_shape(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [n] => Ok((1, n as usize)),
            [r, c] => Ok((r as usize, c as usize)),
            _ => Err(Error::CorruptTensor(format!("expected a matrix, got shape {:?}", self.shape))),
        }
    }

    pub fn rows_u8(&self) -> Result<Vec<Vec<u8>>> {
        let (r, c) = self.matrix_shape()?;
        match &self.data {
            TensorData::U8(v) if c > 0 => Ok(v.chunks(c).map(<[u8]>::to_vec).collect()),
            TensorData::U8(_) => Ok(vec![Vec::new(); r]),
            TensorData::F64(_) => Err(Error::CorruptTensor("expected u8 data, found f64".into())),
        }
    }

    pub fn rows_f64(&self) -> Result<Vec<Vec<f64>>> {
        let (r, c) = self.matrix_shape()?;
        let v: Vec<f64> = match &self.data {
            TensorData::U8(v) => v.iter().map(|&b| b as f64).collect(),
            TensorData::F64(v) => v.clone(),
        };
        if c == 0 {
            return Ok(vec![Vec::new(); r]);
        }
        Ok(v.chunks(c).map(<[f64]>::to_vec).collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * self.shape.len() + 8 * self.len());
        out.extend_from_slice(TENSOR_MAGIC.as_bytes());
        out.push(match self.data {
            TensorData::U8(_) => 0,
            TensorData::F64(_) => 1,
        });
        put_u32(&mut out, self.shape.len() as u32);
        for &d in &self.shape {
            put_u64(&mut out, d);
        }
        match &self.data {
            TensorData::U8(v) => out.extend_from_slice(v),
            TensorData::F64(v) => put_f64s(&mut out, v),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, Error::CorruptTensor);
        r.magic(TENSOR_MAGIC)?;
        let dtype = r.u8()?;
        let rank = r.u32()? as usize;
        if rank > 16 {
            return Err(Error::CorruptTensor(format!("rank {rank}")));
        }
        let shape = (0..rank).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        let count = shape
            .iter()
            .try_fold(1u64, |a, &d| a.checked_mul(d))
            .and_then(|n| usize::try_from(n).ok())
            .ok_or_else(|| Error::CorruptTensor(format!("shape {shape:?} overflows")))?;
        let data = match dtype {
            0 => TensorData::U8(r.take(count)?.to_vec()),
            1 => TensorData::F64(r.f64s(count)?),
            t => return Err(Error::CorruptTensor(format!("unknown dtype {t}"))),
        };
        r.finish()?;
        Ok(Self { shape, data })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(std::fs::write(path, self.to_bytes())?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_both_dtypes() {
        let t = Tensor::from_rows_u8(&[vec![1, 2, 3], vec![4, 5, 6]]).unwrap();
        assert_eq!(Tensor::from_bytes(&t.to_bytes()).unwrap(), t);
        assert_eq!(t.rows_u8().unwrap()[1], vec![4, 5, 6]);
        let t = Tensor::from_rows_f64(&[vec![0.5, -1.25]]).unwrap();
        let bytes = t.to_bytes();
        assert_eq!(bytes.len(), 4 + 1 + 4 + 16 + 16);
        assert_eq!(Tensor::from_bytes(&bytes).unwrap(), t);
    }

    #[test]
    fn rejects_damage() {
        let bytes = Tensor::from_rows_u8(&[vec![1, 2], vec![3, 4]]).unwrap().to_bytes();
        assert!(matches!(Tensor::from_bytes(b"LBBW"), Err(Error::BadMagic { .. })));
        assert!(matches!(Tensor::from_bytes(&bytes[..bytes.len() - 1]), Err(Error::CorruptTensor(_))));
        let mut extra = bytes.clone();
        extra.push(9);
        assert!(matches!(Tensor::from_bytes(&extra), Err(Error::CorruptTensor(_))));
        let mut dtype = bytes;
        dtype[4] = 7;
        assert!(matches!(Tensor::from_bytes(&dtype), Err(Error::CorruptTensor(_))));
        assert!(Tensor::from_rows_u8(&[vec![1], vec![2, 3]]).is_err());
    }
}
