//! Self-describing little-endian arrays.
//!
//! Layout: `DKA1`, dtype byte, ndim byte, two reserved zero bytes, `ndim`
//! u64 dimensions, then the packed elements.

use super::DatasetError;

const MAGIC: &[u8; 4] = b"DKA1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum DType {
    F64 = 0,
    U32 = 1,
    U8 = 2,
}

impl DType {
    fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Self::F64),
            1 => Some(Self::U32),
            2 => Some(Self::U8),
            _ => None,
        }
    }

    pub fn width(self) -> usize {
        match self {
            Self::F64 => 8,
            Self::U32 => 4,
            Self::U8 => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ArrayData {
    F64(Vec<f64>),
    U32(Vec<u32>),
    U8(Vec<u8>),
}

impl ArrayData {
    pub fn dtype(&self) -> DType {
        match self {
            Self::F64(_) => DType::F64,
            Self::U32(_) => DType::U32,
            Self::U8(_) => DType::U8,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Self::F64(v) => v.len(),
            Self::U32(v) => v.len(),
            Self::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Array {
    pub shape: Vec<usize>,
    pub data: ArrayData,
}

impl Array {
    pub fn new(shape: Vec<usize>, data: ArrayData) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(
            8 + 8 * self.shape.len() + self.data.len() * self.data.dtype().width(),
        );
        out.extend_from_slice(MAGIC);
        out.push(self.data.dtype() as u8);
        out.push(self.shape.len() as u8);
        out.extend_from_slice(&[0, 0]);
        for &d in &self.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        match &self.data {
            ArrayData::F64(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            ArrayData::U32(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            ArrayData::U8(v) => out.extend_from_slice(v),
        }
        out
    }

    pub fn decode(file: &str, bytes: &[u8]) -> Result<Self, DatasetError> {
        let bad = |msg: &str| DatasetError::Array {
            file: file.to_string(),
            msg: msg.to_string(),
        };
        if bytes.len() < 8 || &bytes[..4] != MAGIC {
            return Err(bad("missing array header"));
        }
        let dtype = DType::from_byte(bytes[4]).ok_or_else(|| bad("unknown dtype"))?;
        let ndim = bytes[5] as usize;
        let dims_end = 8 + 8 * ndim;
        if bytes.len() < dims_end {
            return Err(DatasetError::Truncated(file.to_string()));
        }
        let mut shape = Vec::with_capacity(ndim);
        let mut count: usize = 1;
        for c in bytes[8..dims_end].chunks_exact(8) {
            let d = usize::try_from(u64::from_le_bytes(c.try_into().expect("8 bytes")))
                .map_err(|_| bad("dimension overflow"))?;
            count = count
                .checked_mul(d)
                .ok_or_else(|| bad("dimension overflow"))?;
            shape.push(d);
        }
        let body = &bytes[dims_end..];
        let need = count
            .checked_mul(dtype.width())
            .ok_or_else(|| bad("dimension overflow"))?;
        if body.len() < need {
            return Err(DatasetError::Truncated(file.to_string()));
        }
        if body.len() > need {
            return Err(bad("trailing bytes after array data"));
        }
        let data = match dtype {
            DType::F64 => ArrayData::F64(
                body.chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect(),
            ),
            DType::U32 => ArrayData::U32(
                body.chunks_exact(4)
                    .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")))
                    .collect(),
            ),
            DType::U8 => ArrayData::U8(body.to_vec()),
        };
        Ok(Self { shape, data })
    }
}
