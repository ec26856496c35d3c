//! Binary parameter files: everything needed to rebuild the synthesis
//! objective without the original recording.
//!
//! Layout (little-endian throughout):
//!
//! ```text
//! "TXP1"  u32 version
//! u32 window_length  u32 hop  u32 fft_size  u32 sample_rate
//! f64 compression  f64 scale  u8 normalize_frames  u8 loss_norm  u32 frames
//! u64 bank_seed  u32 layers
//!   per layer: u32 height  u32 width  u32 filters  f64 weights[filters*height*width*2]
//! per layer: u32 filters  u32 height  f64 gram[filters*filters*height]
//! ```

use std::path::Path;

use texsynth_core::featurebank::{ConvLayer, LayerShape, LossNorm};
use texsynth_core::{FilterBank, GramTensor, ParameterMeta, ParameterSet, StftConfig};

pub const MAGIC: &[u8; 4] = b"TXP1";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ParamFileError {
    #[error("I/O error on {path}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("not a texture parameter file (bad magic)")]
    BadMagic,
    #[error("parameter file version {found} is not supported (this build reads version {VERSION})")]
    Version { found: u32 },
    #[error("parameter file is truncated")]
    Truncated,
    #[error("parameter file has {0} unexpected trailing bytes")]
    TrailingBytes(usize),
    #[error("invalid parameter file: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamFile {
    pub params: ParameterSet,
    pub bank: FilterBank,
}

impl ParamFile {
    pub fn new(params: ParameterSet, bank: FilterBank) -> Result<Self, ParamFileError> {
        if params.meta.shapes != bank.shapes() || params.meta.bank_seed != bank.seed() {
            return Err(ParamFileError::Invalid("statistics and filter bank disagree".into()));
        }
        if params.grams.len() != bank.layers().len() {
            return Err(ParamFileError::Invalid("one Gram tensor per layer expected".into()));
        }
        Ok(Self { params, bank })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = &self.params.meta;
        let mut w = Vec::new();
        w.extend_from_slice(MAGIC);
        put_u32(&mut w, VERSION);
        for v in [meta.stft.window_length, meta.stft.hop, meta.stft.fft_size] {
            put_usize(&mut w, v);
        }
        put_u32(&mut w, meta.stft.sample_rate);
        put_f64(&mut w, meta.compression);
        put_f64(&mut w, meta.scale);
        w.push(meta.normalize_frames as u8);
        w.push(match meta.loss_norm {
            LossNorm::GlobalFrobenius => 0,
        });
        put_usize(&mut w, meta.frames);
        w.extend_from_slice(&self.bank.seed().to_le_bytes());
        put_usize(&mut w, self.bank.layers().len());
        for layer in self.bank.layers() {
            let s = layer.shape();
            for v in [s.height, s.width, s.filters] {
                put_usize(&mut w, v);
            }
            for &x in layer.weights() {
                put_f64(&mut w, x);
            }
        }
        for g in &self.params.grams {
            put_usize(&mut w, g.filters);
            put_usize(&mut w, g.height);
            for &x in &g.data {
                put_f64(&mut w, x);
            }
        }
        w
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ParamFileError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(ParamFileError::BadMagic);
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(ParamFileError::Version { found: version });
        }
        let stft = StftConfig {
            window_length: r.usize()?,
            hop: r.usize()?,
            fft_size: r.usize()?,
            sample_rate: r.u32()?,
        };
        stft.validate().map_err(invalid)?;
        let compression = r.f64()?;
        let scale = r.f64()?;
        let normalize_frames = match r.u8()? {
            0 => false,
            1 => true,
            v => return Err(ParamFileError::Invalid(format!("frame-normalization flag {v}"))),
        };
        let loss_norm = match r.u8()? {
            0 => LossNorm::GlobalFrobenius,
            v => return Err(ParamFileError::Invalid(format!("unknown loss-norm tag {v}"))),
        };
        let frames = r.usize()?;
        let bank_seed = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
        let count = r.usize()?;
        let mut layers = Vec::new();
        for _ in 0..count {
            let shape = LayerShape {
                height: r.usize()?,
                width: r.usize()?,
                filters: r.usize()?,
            };
            let n = shape
                .filters
                .checked_mul(shape.weights_per_filter())
                .ok_or(ParamFileError::Truncated)?;
            layers.push(ConvLayer::new(shape, r.f64s(n)?).map_err(invalid)?);
        }
        let bank = FilterBank::from_layers(bank_seed, layers).map_err(invalid)?;
        let mut grams = Vec::with_capacity(count);
        for _ in 0..count {
            let filters = r.usize()?;
            let height = r.usize()?;
            let n = filters
                .checked_mul(filters)
                .and_then(|v| v.checked_mul(height))
                .ok_or(ParamFileError::Truncated)?;
            grams.push(GramTensor {
                filters,
                height,
                data: r.f64s(n)?,
            });
        }
        if r.pos != bytes.len() {
            return Err(ParamFileError::TrailingBytes(bytes.len() - r.pos));
        }
        let params = ParameterSet {
            grams,
            meta: ParameterMeta {
                bank_seed,
                shapes: bank.shapes(),
                stft,
                compression,
                scale,
                normalize_frames,
                frames,
                loss_norm,
            },
        };
        Self::new(params, bank)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ParamFileError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|source| ParamFileError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ParamFileError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| ParamFileError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

/// True if `bytes` starts with the parameter-file magic.
pub fn looks_like_param_file(bytes: &[u8]) -> bool {
    bytes.starts_with(MAGIC)
}

fn invalid(e: texsynth_core::Error) -> ParamFileError {
    ParamFileError::Invalid(e.to_string())
}

fn put_u32(w: &mut Vec<u8>, v: u32) {
    w.extend_from_slice(&v.to_le_bytes());
}

fn put_usize(w: &mut Vec<u8>, v: usize) {
    put_u32(w, u32::try_from(v).expect("dimension fits in u32"));
}

fn put_f64(w: &mut Vec<u8>, v: f64) {
    w.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ParamFileError> {
        let end = self.pos.checked_add(n).ok_or(ParamFileError::Truncated)?;
        let s = self.bytes.get(self.pos..end).ok_or(ParamFileError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, ParamFileError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, ParamFileError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn usize(&mut self) -> Result<usize, ParamFileError> {
        Ok(self.u32()? as usize)
    }

    fn f64(&mut self) -> Result<f64, ParamFileError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, ParamFileError> {
        let raw = self.take(n.checked_mul(8).ok_or(ParamFileError::Truncated)?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}
