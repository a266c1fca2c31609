use std::path::Path;

use crate::binio::{read_file, ByteReader, ByteWriter};
use crate::error::Result;
use crate::numeric::{ParamSet, Tensor};
use crate::trainer::TrainMode;

use super::EncoderConfig;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"VFCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Trained query-encoder weights plus the configuration that produced them.
///
/// Layout (little-endian): magic, version, mode tag (u8), input_size,
/// width count, widths, embedding_dim, projector flag (u8), parameter count,
/// then per parameter: name, rank, dims, f32 values.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub mode: TrainMode,
    pub encoder: EncoderConfig,
    pub params: ParamSet<f32>,
}

impl Checkpoint {
    pub fn new(mode: TrainMode, encoder: EncoderConfig, params: ParamSet<f32>) -> Result<Self> {
        encoder.validate()?;
        encoder.check_params(&params)?;
        Ok(Self { mode, encoder, params })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = ByteWriter::default();
        w.bytes(CHECKPOINT_MAGIC);
        w.u32(CHECKPOINT_VERSION);
        w.u8(self.mode.tag());
        w.usize(self.encoder.input_size)?;
        w.usize(self.encoder.channel_widths.len())?;
        for &c in &self.encoder.channel_widths {
            w.usize(c)?;
        }
        w.usize(self.encoder.embedding_dim)?;
        w.u8(self.encoder.use_projector as u8);
        w.usize(self.params.len())?;
        for p in self.params.iter() {
            w.string(&p.name)?;
            w.usize(p.value.ndim())?;
            for &d in p.value.shape() {
                w.usize(d)?;
            }
            w.f32s(p.value.data());
        }
        Ok(w.buf)
    }

    pub fn from_bytes(bytes: &[u8], context: &str) -> Result<Self> {
        let mut r = ByteReader::new(bytes, context);
        let magic = r.take(4, "magic")?;
        if magic != CHECKPOINT_MAGIC {
            return Err(r.error_at(0, format!("bad magic {magic:?}, expected \"VFCK\"")));
        }
        let version = r.u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(r.error_at(4, format!("unsupported version {version}")));
        }
        let tag_at = r.pos();
        let tag = r.u8("mode")?;
        let mode = TrainMode::from_tag(tag).ok_or_else(|| r.error_at(tag_at, format!("unknown mode tag {tag}")))?;
        let input_size = r.usize("input_size")?;
        let n_widths = r.usize("width count")?;
        let mut channel_widths = Vec::new();
        for _ in 0..n_widths {
            channel_widths.push(r.usize("channel width")?);
        }
        let embedding_dim = r.usize("embedding_dim")?;
        let flag_at = r.pos();
        let use_projector = match r.u8("projector flag")? {
            0 => false,
            1 => true,
            v => return Err(r.error_at(flag_at, format!("projector flag {v} is not 0/1"))),
        };
        let encoder = EncoderConfig {
            input_size,
            channel_widths,
            embedding_dim,
            use_projector,
        };
        encoder
            .validate()
            .map_err(|e| r.error_at(8, format!("invalid encoder config: {e}")))?;
        let n_params = r.usize("parameter count")?;
        let mut params = ParamSet::new();
        for _ in 0..n_params {
            let at = r.pos();
            let name = r.string("parameter name")?;
            let rank = r.usize("rank")?;
            if rank == 0 || rank > 4 {
                return Err(r.error_at(at, format!("parameter `{name}` has rank {rank}")));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.usize("dimension")?);
            }
            let n = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
            let n = n.ok_or_else(|| r.error_at(at, "parameter size overflows"))?;
            let data = r.f32s(n, "parameter values")?;
            let value = Tensor::from_vec(&shape, data).map_err(|e| r.error_at(at, e))?;
            params.push(name, value).map_err(|e| r.error_at(at, e))?;
        }
        r.finish()?;
        encoder
            .check_params(&params)
            .map_err(|e| r.error_at(0, format!("parameters do not match config: {e}")))?;
        Ok(Self { mode, encoder, params })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let w = ByteWriter { buf: self.to_bytes()? };
        w.write_to(path.as_ref())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&read_file(path)?, &path.display().to_string())
    }
}

impl From<Checkpoint> for ParamSet<f32> {
    fn from(c: Checkpoint) -> Self {
        c.params
    }
}
