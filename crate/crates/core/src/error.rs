use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("audio buffer is empty")]
    EmptyBuffer,
    #[error("sample rate must be positive")]
    ZeroSampleRate,
    #[error("expected {expected} Hz audio, got {actual} Hz")]
    WrongSampleRate { expected: u32, actual: u32 },
    #[error("signal has zero variance")]
    ZeroVariance,
    #[error("signal of {len} samples is shorter than one {window}-sample window")]
    SignalTooShort { len: usize, window: usize },
    #[error("spectrogram is all zero, own-max scale is undefined")]
    ZeroSpectrogram,
    #[error("input of {bins}x{frames} is smaller than a {height}x{width} filter")]
    InputSmallerThanFilter {
        bins: usize,
        frames: usize,
        height: usize,
        width: usize,
    },
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("target gram tensor of layer {0} has zero norm")]
    DegenerateTarget(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::ShapeMismatch {
            context,
            expected,
            actual,
        })
    }
}
