//! WAV reading (PCM16 or float32, any channel count) and float32 mono writing.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use texsynth_core::AudioBuffer;

#[derive(Debug, thiserror::Error)]
pub enum WavError {
    #[error("cannot read {path}")]
    Read { path: String, source: hound::Error },
    #[error("cannot write {path}")]
    Write { path: String, source: hound::Error },
    #[error("unsupported WAV encoding: {0} (expected 16-bit PCM or 32-bit float)")]
    Unsupported(String),
    #[error("{0} contains no audio")]
    Empty(String),
    #[error("refusing to write an empty buffer")]
    EmptyBuffer,
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer, WavError> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let read_err = |source| WavError::Read {
        path: shown.clone(),
        source,
    };
    let reader = WavReader::open(path).map_err(read_err)?;
    let spec = reader.spec();
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(read_err)?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(read_err)?,
        (fmt, bits) => return Err(WavError::Unsupported(format!("{fmt:?} {bits}-bit"))),
    };
    let channels = spec.channels.max(1) as usize;
    let mono: Vec<f64> = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    if mono.is_empty() {
        return Err(WavError::Empty(shown));
    }
    AudioBuffer::new(mono, spec.sample_rate).map_err(|e| WavError::Unsupported(e.to_string()))
}

/// Writes 32-bit float mono. Samples are rounded to the nearest `f32`.
pub fn write_wav(buf: &AudioBuffer, path: impl AsRef<Path>) -> Result<(), WavError> {
    if buf.is_empty() {
        return Err(WavError::EmptyBuffer);
    }
    let path = path.as_ref();
    let write_err = |source| WavError::Write {
        path: path.display().to_string(),
        source,
    };
    let spec = WavSpec {
        channels: 1,
        sample_rate: buf.sample_rate(),
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut w = WavWriter::create(path, spec).map_err(write_err)?;
    for &s in buf.samples() {
        w.write_sample(s as f32).map_err(write_err)?;
    }
    w.finalize().map_err(write_err)
}
