//! Row-aligned embedding matrix and its binary file format.
//!
//! Layout (little-endian): `"VFEM"`, version (u32), N (u32), D (u32), then
//! N·D f32 values row-major, then N sample ids as u32 length + UTF-8 bytes.

use std::path::Path;

use crate::binio::{read_file, ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::objectives::UNIT_TOLERANCE;

pub const EMBEDDING_MAGIC: &[u8; 4] = b"VFEM";
pub const EMBEDDING_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    ids: Vec<String>,
    dim: usize,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    /// Rows must be unit norm; `rows.len()` must equal `ids.len()`.
    pub fn new(ids: Vec<String>, rows: Vec<Vec<f32>>) -> Result<Self> {
        if ids.len() != rows.len() {
            return Err(Error::dim("embedding_matrix", format!("{} ids for {} rows", ids.len(), rows.len())));
        }
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(Error::dim("embedding_matrix", format!("row {i} has length {} != {dim}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Self::from_flat(ids, dim, data)
    }

    pub fn from_flat(ids: Vec<String>, dim: usize, data: Vec<f32>) -> Result<Self> {
        if ids.len() * dim != data.len() {
            return Err(Error::dim("embedding_matrix", format!("{} values for {}×{dim}", data.len(), ids.len())));
        }
        let m = Self { ids, dim, data };
        for i in 0..m.len() {
            let n = m.row(i).iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt();
            if !((n - 1.0).abs() <= UNIT_TOLERANCE) {
                return Err(Error::Normalization(format!("row {i} (`{}`) has norm {n}", m.ids[i])));
            }
        }
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        (0..self.len()).map(|i| self.row(i))
    }

    /// Rows widened to f64, the precision clustering runs in.
    pub fn to_f64_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(|r| r.iter().map(|&v| f64::from(v)).collect()).collect()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = ByteWriter::default();
        w.bytes(EMBEDDING_MAGIC);
        w.u32(EMBEDDING_VERSION);
        w.usize(self.len())?;
        w.usize(self.dim)?;
        w.f32s(&self.data);
        for id in &self.ids {
            w.string(id)?;
        }
        Ok(w.buf)
    }

    pub fn from_bytes(bytes: &[u8], context: &str) -> Result<Self> {
        let mut r = ByteReader::new(bytes, context);
        let magic = r.take(4, "magic")?;
        if magic != EMBEDDING_MAGIC {
            return Err(r.error_at(0, format!("bad magic {magic:?}, expected \"VFEM\"")));
        }
        let version = r.u32("version")?;
        if version != EMBEDDING_VERSION {
            return Err(r.error_at(4, format!("unsupported version {version}")));
        }
        let n = r.usize("row count")?;
        let d = r.usize("dimension")?;
        let count = n.checked_mul(d).ok_or_else(|| r.error_at(8, "matrix size overflows"))?;
        let data_at = r.pos();
        let data = r.f32s(count, "embedding values")?;
        let mut ids = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            ids.push(r.string("sample id")?);
        }
        r.finish()?;
        Self::from_flat(ids, d, data).map_err(|e| r.error_at(data_at, e))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        ByteWriter { buf: self.to_bytes()? }.write_to(path.as_ref())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&read_file(path)?, &path.display().to_string())
    }
}
