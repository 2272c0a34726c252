//! Binary tensor container plus JSON sidecar manifests.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic  "G2DTNSR1"
//! u64    record count
//! record*:
//!   u64  id            (graph id, or parameter index)
//!   u16  name length, then UTF-8 name
//!   u8   dtype         (0 = f32, 1 = f64, 2 = u32)
//!   u8   rank
//!   u64  dims[rank]
//!   ..   row-major data
//! ```

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::linalg::Matrix;
use crate::Scalar;

const MAGIC: &[u8; 8] = b"G2DTNSR1";
const DTYPE_U32: u8 = 2;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("not a tensor container (bad magic)")]
    BadMagic,
    #[error("container truncated")]
    Truncated,
    #[error("unknown dtype tag {0}")]
    UnknownDtype(u8),
    #[error("record `{0}` not found")]
    MissingRecord(String),
    #[error("record `{name}` has dtype {found}, expected {expected}")]
    DtypeMismatch { name: String, found: u8, expected: u8 },
    #[error("record `{name}` has rank {rank}, expected {expected}")]
    RankMismatch { name: String, rank: usize, expected: usize },
    #[error("manifest error on {path}: {source}")]
    Manifest { path: PathBuf, source: serde_json::Error },
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U32(Vec<u32>),
}

impl TensorData {
    fn dtype(&self) -> u8 {
        match self {
            TensorData::F32(_) => f32::DTYPE,
            TensorData::F64(_) => f64::DTYPE,
            TensorData::U32(_) => DTYPE_U32,
        }
    }

    fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
            TensorData::U32(v) => v.len(),
        }
    }

    fn from_scalars<T: Scalar>(values: &[T]) -> Self {
        if T::DTYPE == f32::DTYPE {
            TensorData::F32(values.iter().map(|x| x.as_f64() as f32).collect())
        } else {
            TensorData::F64(values.iter().map(|x| x.as_f64()).collect())
        }
    }

    /// Real-valued view converted to `T` (u32 counts convert exactly).
    pub fn to_scalars<T: Scalar>(&self) -> Vec<T> {
        match self {
            TensorData::F32(v) => v.iter().map(|&x| T::of(x as f64)).collect(),
            TensorData::F64(v) => v.iter().map(|&x| T::of(x)).collect(),
            TensorData::U32(v) => v.iter().map(|&x| T::of(x as f64)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub id: u64,
    pub name: String,
    pub shape: Vec<usize>,
    pub data: TensorData,
}

impl Record {
    pub fn new(id: u64, name: impl Into<String>, shape: Vec<usize>, data: TensorData) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "record shape/data mismatch");
        Self { id, name: name.into(), shape, data }
    }

    pub fn from_matrix<T: Scalar>(id: u64, name: impl Into<String>, m: &Matrix<T>) -> Self {
        Self::new(id, name, vec![m.rows(), m.cols()], TensorData::from_scalars(m.as_slice()))
    }

    pub fn from_slice<T: Scalar>(id: u64, name: impl Into<String>, shape: Vec<usize>, v: &[T]) -> Self {
        Self::new(id, name, shape, TensorData::from_scalars(v))
    }

    pub fn to_matrix<T: Scalar>(&self) -> Result<Matrix<T>, ContainerError> {
        if self.shape.len() != 2 {
            return Err(ContainerError::RankMismatch { name: self.name.clone(), rank: self.shape.len(), expected: 2 });
        }
        Ok(Matrix::from_vec(self.shape[0], self.shape[1], self.data.to_scalars()))
    }

    pub fn to_u32(&self) -> Result<&[u32], ContainerError> {
        match &self.data {
            TensorData::U32(v) => Ok(v),
            other => Err(ContainerError::DtypeMismatch {
                name: self.name.clone(),
                found: other.dtype(),
                expected: DTYPE_U32,
            }),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorContainer {
    pub records: Vec<Record>,
}

impl TensorContainer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: Record) {
        self.records.push(record);
    }

    pub fn get(&self, name: &str) -> Result<&Record, ContainerError> {
        self.records.iter().find(|r| r.name == name).ok_or_else(|| ContainerError::MissingRecord(name.to_owned()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.records.len() as u64).to_le_bytes());
        for r in &self.records {
            out.extend_from_slice(&r.id.to_le_bytes());
            let name = r.name.as_bytes();
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name);
            out.push(r.data.dtype());
            out.push(r.shape.len() as u8);
            for &d in &r.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            match &r.data {
                TensorData::F32(v) => v.iter().for_each(|x| x.write_le(&mut out)),
                TensorData::F64(v) => v.iter().for_each(|x| x.write_le(&mut out)),
                TensorData::U32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ContainerError> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(8)? != MAGIC {
            return Err(ContainerError::BadMagic);
        }
        let count = cur.u64()?;
        let mut records = Vec::new();
        for _ in 0..count {
            let id = cur.u64()?;
            let name_len = u16::from_le_bytes(cur.take(2)?.try_into().expect("2 bytes")) as usize;
            let name = String::from_utf8_lossy(cur.take(name_len)?).into_owned();
            let dtype = cur.take(1)?[0];
            let rank = cur.take(1)?[0] as usize;
            let shape = (0..rank).map(|_| cur.u64().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            let n: usize = shape.iter().product();
            let data = match dtype {
                0 => TensorData::F32(cur.take(n * 4)?.chunks_exact(4).map(f32::read_le).collect()),
                1 => TensorData::F64(cur.take(n * 8)?.chunks_exact(8).map(f64::read_le).collect()),
                DTYPE_U32 => TensorData::U32(
                    cur.take(n * 4)?
                        .chunks_exact(4)
                        .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")))
                        .collect(),
                ),
                other => return Err(ContainerError::UnknownDtype(other)),
            };
            records.push(Record { id, name, shape, data });
        }
        Ok(Self { records })
    }

    pub fn save(&self, path: &Path) -> Result<(), ContainerError> {
        fs::write(path, self.to_bytes()).map_err(|source| ContainerError::Io { path: path.to_path_buf(), source })
    }

    pub fn load(path: &Path) -> Result<Self, ContainerError> {
        let bytes = fs::read(path).map_err(|source| ContainerError::Io { path: path.to_path_buf(), source })?;
        Self::from_bytes(&bytes)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ContainerError> {
        let end = self.pos.checked_add(n).ok_or(ContainerError::Truncated)?;
        let out = self.bytes.get(self.pos..end).ok_or(ContainerError::Truncated)?;
        self.pos = end;
        Ok(out)
    }

    fn u64(&mut self) -> Result<u64, ContainerError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Sidecar manifest path: `foo.bin` -> `foo.json`.
pub fn manifest_path(container: &Path) -> PathBuf {
    container.with_extension("json")
}

pub fn write_manifest<M: Serialize>(path: &Path, manifest: &M) -> Result<(), ContainerError> {
    let text = serde_json::to_string_pretty(manifest)
        .map_err(|source| ContainerError::Manifest { path: path.to_path_buf(), source })?;
    fs::write(path, text).map_err(|source| ContainerError::Io { path: path.to_path_buf(), source })
}

pub fn read_manifest<M: DeserializeOwned>(path: &Path) -> Result<M, ContainerError> {
    let text = fs::read_to_string(path).map_err(|source| ContainerError::Io { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text).map_err(|source| ContainerError::Manifest { path: path.to_path_buf(), source })
}
