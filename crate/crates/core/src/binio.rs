//! Little-endian helpers for the checkpoint and embedding file formats.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Default)]
pub(crate) struct ByteWriter {
    pub buf: Vec<u8>,
}

impl ByteWriter {
    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn usize(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::Argument(format!("{v} does not fit in 32 bits")))?;
        self.u32(v);
        Ok(())
    }

    pub fn f32s(&mut self, values: &[f32]) {
        self.buf.reserve(values.len() * 4);
        for v in values {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    pub fn string(&mut self, s: &str) -> Result<()> {
        self.usize(s.len())?;
        self.bytes(s.as_bytes());
        Ok(())
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        std::fs::write(path, &self.buf).map_err(|e| Error::io(path, e))
    }
}

/// Cursor that reports the byte offset of whatever it fails to read.
pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    context: String,
}

impl<'a> ByteReader<'a> {
    pub fn new(bytes: &'a [u8], context: impl Into<String>) -> Self {
        Self {
            bytes,
            pos: 0,
            context: context.into(),
        }
    }

    pub fn pos(&self) -> usize {
        self.pos
    }

    pub fn error_at(&self, offset: usize, detail: impl std::fmt::Display) -> Error {
        Error::format(self.context.clone(), format!("byte offset {offset}: {detail}"))
    }

    pub fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(self.error_at(
                self.pos,
                format!("truncated reading {what} ({n} bytes needed, {} left)", self.bytes.len() - self.pos),
            ));
        };
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    pub fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn usize(&mut self, what: &str) -> Result<usize> {
        Ok(self.u32(what)? as usize)
    }

    pub fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let len = n
            .checked_mul(4)
            .ok_or_else(|| self.error_at(self.pos, format!("{what} length overflows")))?;
        let b = self.take(len, what)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    pub fn string(&mut self, what: &str) -> Result<String> {
        let n = self.usize(what)?;
        let start = self.pos;
        let b = self.take(n, what)?;
        String::from_utf8(b.to_vec()).map_err(|e| self.error_at(start, format!("{what} is not UTF-8: {e}")))
    }

    pub fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(self.error_at(self.pos, format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}
