//! Versioned binary container of named dense tensors.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "NOPC"                      4 bytes magic
//! version                     u32
//! metadata length             u32, followed by that many bytes of UTF-8 JSON
//! tensor count                u32
//! per tensor:
//!   name length               u16, followed by the UTF-8 name
//!   dtype                     u8   (0 = f32, 1 = f64)
//!   ndim                      u8
//!   dims                      ndim × u64
//!   data                      row-major, little-endian
//! ```
//!
//! Complex tensors carry a trailing dimension of size 2 (real, imag) and a
//! `.c` name suffix.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"NOPC";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("bad magic {found:?}, expected \"NOPC\"")]
    BadMagic { found: Vec<u8> },
    #[error("container version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("file ends inside {context}")]
    ShortRead { context: String },
    #[error("tensor `{name}`: unknown dtype code {code}")]
    BadDtype { name: String, code: u8 },
    #[error("tensor `{name}`: {len} values do not fill dims {dims:?}")]
    SizeMismatch { name: String, dims: Vec<usize>, len: usize },
    #[error("duplicate tensor name `{0}`")]
    DuplicateName(String),
    #[error("metadata: {0}")]
    Metadata(#[from] serde_json::Error),
    #[error("invalid UTF-8 in {0}")]
    Utf8(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32 = 0,
    F64 = 1,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> Dtype {
        match self {
            TensorData::F32(_) => Dtype::F32,
            TensorData::F64(_) => Dtype::F64,
        }
    }

    /// Values widened to `f64`.
    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            TensorData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::F64(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: TensorData,
}

impl Tensor {
    pub fn new(name: impl Into<String>, dims: Vec<usize>, data: TensorData) -> Result<Self, ContainerError> {
        let name = name.into();
        if dims.iter().product::<usize>() != data.len() {
            return Err(ContainerError::SizeMismatch {
                name,
                dims,
                len: data.len(),
            });
        }
        Ok(Self { name, dims, data })
    }

    pub fn f64(name: impl Into<String>, dims: Vec<usize>, data: Vec<f64>) -> Result<Self, ContainerError> {
        Self::new(name, dims, TensorData::F64(data))
    }

    pub fn f32(name: impl Into<String>, dims: Vec<usize>, data: Vec<f32>) -> Result<Self, ContainerError> {
        Self::new(name, dims, TensorData::F32(data))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorContainer {
    pub metadata: serde_json::Value,
    tensors: Vec<Tensor>,
}

impl TensorContainer {
    pub fn new(metadata: serde_json::Value) -> Self {
        Self {
            metadata,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, tensor: Tensor) -> Result<(), ContainerError> {
        if self.get(&tensor.name).is_some() {
            return Err(ContainerError::DuplicateName(tensor.name));
        }
        self.tensors.push(tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.iter_mut().find(|t| t.name == name)
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), ContainerError> {
        let meta = serde_json::to_vec(&self.metadata)?;
        w.write_all(&MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(meta.len() as u32).to_le_bytes())?;
        w.write_all(&meta)?;
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for t in &self.tensors {
            let name = t.name.as_bytes();
            w.write_all(&(name.len() as u16).to_le_bytes())?;
            w.write_all(name)?;
            w.write_all(&[t.data.dtype() as u8, t.dims.len() as u8])?;
            for &d in &t.dims {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            match &t.data {
                TensorData::F32(v) => {
                    for x in v {
                        w.write_all(&x.to_le_bytes())?;
                    }
                }
                TensorData::F64(v) => {
                    for x in v {
                        w.write_all(&x.to_le_bytes())?;
                    }
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self, ContainerError> {
        let mut r = Reader { inner: r };
        let mut magic = [0u8; 4];
        let got = r.fill_prefix(&mut magic)?;
        if got < 4 || magic != MAGIC {
            return Err(ContainerError::BadMagic {
                found: magic[..got].to_vec(),
            });
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(ContainerError::VersionMismatch {
                found: version,
                expected: VERSION,
            });
        }
        let meta_len = r.u32("metadata length")? as usize;
        let meta = r.bytes(meta_len, "metadata")?;
        let metadata = serde_json::from_slice(&meta)?;
        let count = r.u32("tensor count")?;
        let mut out = TensorContainer::new(metadata);
        for i in 0..count {
            let name_len = r.u16("tensor name length")? as usize;
            let name = String::from_utf8(r.bytes(name_len, "tensor name")?)
                .map_err(|_| ContainerError::Utf8(format!("name of tensor #{i}")))?;
            let head = r.bytes(2, &name)?;
            let ndim = head[1] as usize;
            let mut dims = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                dims.push(r.u64(&name)? as usize);
            }
            let len: usize = dims.iter().product();
            let data = match head[0] {
                0 => TensorData::F32(
                    r.bytes(4 * len, &name)?
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                ),
                1 => TensorData::F64(
                    r.bytes(8 * len, &name)?
                        .chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                ),
                code => return Err(ContainerError::BadDtype { name, code }),
            };
            out.push(Tensor { name, dims, data })?;
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ContainerError> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ContainerError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn fill_prefix(&mut self, buf: &mut [u8]) -> Result<usize, ContainerError> {
        let mut got = 0;
        while got < buf.len() {
            match self.inner.read(&mut buf[got..])? {
                0 => break,
                n => got += n,
            }
        }
        Ok(got)
    }

    fn bytes(&mut self, n: usize, context: &str) -> Result<Vec<u8>, ContainerError> {
        let mut buf = Vec::new();
        (&mut self.inner).take(n as u64).read_to_end(&mut buf)?;
        if buf.len() < n {
            return Err(ContainerError::ShortRead {
                context: context.to_string(),
            });
        }
        Ok(buf)
    }

    fn u16(&mut self, context: &str) -> Result<u16, ContainerError> {
        Ok(u16::from_le_bytes(self.bytes(2, context)?.try_into().unwrap()))
    }

    fn u32(&mut self, context: &str) -> Result<u32, ContainerError> {
        Ok(u32::from_le_bytes(self.bytes(4, context)?.try_into().unwrap()))
    }

    fn u64(&mut self, context: &str) -> Result<u64, ContainerError> {
        Ok(u64::from_le_bytes(self.bytes(8, context)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    fn sample() -> TensorContainer {
        let mut c = TensorContainer::new(json!({"resolution": 4, "note": "x"}));
        c.push(Tensor::f64("grid", vec![4], vec![0.0, 1.0, 2.0, 3.0]).unwrap()).unwrap();
        c.push(Tensor::f32("w.c", vec![1, 2, 2], vec![1.0, -1.0, 0.5, 0.25]).unwrap()).unwrap();
        c
    }

    #[test]
    fn byte_layout() {
        let mut c = TensorContainer::new(json!({}));
        c.push(Tensor::f64("x", vec![1], vec![1.0]).unwrap()).unwrap();
        let mut buf = Vec::new();
        c.write_to(&mut buf).unwrap();
        let mut expect = Vec::new();
        expect.extend_from_slice(b"NOPC");
        expect.extend_from_slice(&1u32.to_le_bytes());
        expect.extend_from_slice(&2u32.to_le_bytes());
        expect.extend_from_slice(b"{}");
        expect.extend_from_slice(&1u32.to_le_bytes());
        expect.extend_from_slice(&1u16.to_le_bytes());
        expect.extend_from_slice(b"x");
        expect.extend_from_slice(&[1, 1]);
        expect.extend_from_slice(&1u64.to_le_bytes());
        expect.extend_from_slice(&1.0f64.to_le_bytes());
        assert_eq!(buf, expect);
    }

    #[test]
    fn truncation_is_reported() {
        let mut buf = Vec::new();
        sample().write_to(&mut buf).unwrap();
        for cut in [0, 2, 4, 7, 12, 30, buf.len() - 1] {
            let err = TensorContainer::read_from(&buf[..cut]).unwrap_err();
            assert!(
                matches!(err, ContainerError::BadMagic { .. } | ContainerError::ShortRead { .. }),
                "cut {cut}: {err}"
            );
        }
    }

    #[test]
    fn wrong_magic_and_version() {
        let mut buf = Vec::new();
        sample().write_to(&mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(TensorContainer::read_from(&bad[..]), Err(ContainerError::BadMagic { .. })));
        let mut bad = buf;
        bad[4] = 9;
        assert!(matches!(
            TensorContainer::read_from(&bad[..]),
            Err(ContainerError::VersionMismatch { found: 9, expected: 1 })
        ));
    }

    #[test]
    fn bad_dtype_and_duplicates() {
        let mut c = TensorContainer::new(json!({}));
        c.push(Tensor::f64("x", vec![1], vec![1.0]).unwrap()).unwrap();
        assert!(matches!(
            c.push(Tensor::f64("x", vec![1], vec![2.0]).unwrap()),
            Err(ContainerError::DuplicateName(_))
        ));
        let mut buf = Vec::new();
        c.write_to(&mut buf).unwrap();
        // dtype byte sits right after the one-byte name
        let pos = 4 + 4 + 4 + 2 + 4 + 2 + 1;
        buf[pos] = 7;
        assert!(matches!(
            TensorContainer::read_from(&buf[..]),
            Err(ContainerError::BadDtype { code: 7, .. })
        ));
        assert!(matches!(
            Tensor::f64("y", vec![2, 2], vec![0.0; 3]),
            Err(ContainerError::SizeMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn round_trip_is_bitwise(
            a in proptest::collection::vec(any::<f64>(), 0..40),
            b in proptest::collection::vec(any::<f32>(), 0..40),
            note in "[a-z]{0,12}",
        ) {
            let mut c = TensorContainer::new(json!({"note": note}));
            c.push(Tensor::f64("a", vec![a.len()], a.clone()).unwrap()).unwrap();
            c.push(Tensor::f32("b.c", vec![b.len(), 1], b.clone()).unwrap()).unwrap();
            let mut buf = Vec::new();
            c.write_to(&mut buf).unwrap();
            let back = TensorContainer::read_from(&buf[..]).unwrap();
            let mut buf2 = Vec::new();
            back.write_to(&mut buf2).unwrap();
            prop_assert_eq!(buf, buf2);
            prop_assert_eq!(back.metadata, c.metadata);
        }
    }
}
