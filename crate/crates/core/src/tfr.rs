//! STFT framing, the compressed real/imaginary stack, and their adjoints.
//!
//! Frame `t` covers samples `[t * hop, t * hop + window_length)`; no padding is
//! added at the signal edges. Spectrogram and RI data are stored bin-major with
//! frames contiguous, the layout the convolution kernels scan.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{check_len, Error, Result};
use crate::fft::{Complex64, Fft};

/// Compression factor applied before the sigmoid squashing.
pub const DEFAULT_COMPRESSION: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftConfig {
    pub window_length: usize,
    pub hop: usize,
    pub fft_size: usize,
    pub sample_rate: u32,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            window_length: 512,
            hop: 256,
            fft_size: 512,
            sample_rate: crate::ANALYSIS_RATE,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_length == 0 || self.hop == 0 || self.sample_rate == 0 {
            return Err(Error::InvalidConfig("stft sizes must be positive".into()));
        }
        if self.hop > self.window_length {
            return Err(Error::InvalidConfig("hop exceeds window length".into()));
        }
        if self.fft_size < self.window_length {
            return Err(Error::InvalidConfig("fft size below window length".into()));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn frames_for(&self, num_samples: usize) -> Option<usize> {
        if num_samples < self.window_length {
            None
        } else {
            Some(1 + (num_samples - self.window_length) / self.hop)
        }
    }

    /// Shortest signal that yields exactly `frames` frames.
    pub fn samples_for(&self, frames: usize) -> usize {
        (frames.max(1) - 1) * self.hop + self.window_length
    }
}

/// Periodic Hann window.
pub fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * libm::cos(2.0 * PI * n as f64 / len as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    bins: usize,
    frames: usize,
    data: Vec<Complex64>,
    config: StftConfig,
}

impl ComplexSpectrogram {
    pub fn zeros(config: StftConfig, frames: usize) -> Self {
        let bins = config.bins();
        Self {
            bins,
            frames,
            data: vec![Complex64::new(0.0, 0.0); bins * frames],
            config,
        }
    }

    pub fn from_data(config: StftConfig, frames: usize, data: Vec<Complex64>) -> Result<Self> {
        check_len("spectrogram data", config.bins() * frames, data.len())?;
        Ok(Self {
            bins: config.bins(),
            frames,
            data,
            config,
        })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn get(&self, bin: usize, frame: usize) -> Complex64 {
        self.data[bin * self.frames + frame]
    }

    pub fn set(&mut self, bin: usize, frame: usize, v: Complex64) {
        self.data[bin * self.frames + frame] = v;
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn max_modulus(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, z| m.max(z.norm()))
    }

    /// Real inner product treating each complex entry as two real coordinates.
    pub fn real_dot(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum()
    }
}

/// Reusable STFT plan: window and FFT are computed once per configuration.
#[derive(Debug, Clone)]
pub struct Stft {
    config: StftConfig,
    window: Vec<f64>,
    fft: Fft,
}

impl Stft {
    pub fn new(config: StftConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            window: hann(config.window_length),
            fft: Fft::new(config.fft_size),
            config,
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    pub fn forward(&self, samples: &[f64]) -> Result<ComplexSpectrogram> {
        let cfg = self.config;
        let frames = cfg.frames_for(samples.len()).ok_or(Error::SignalTooShort {
            len: samples.len(),
            window: cfg.window_length,
        })?;
        let mut spec = ComplexSpectrogram::zeros(cfg, frames);
        let mut buf = vec![Complex64::new(0.0, 0.0); cfg.fft_size];
        for t in 0..frames {
            let start = t * cfg.hop;
            let frame = &samples[start..start + cfg.window_length];
            for (b, (x, w)) in buf.iter_mut().zip(frame.iter().zip(&self.window)) {
                *b = Complex64::new(x * w, 0.0);
            }
            for b in buf[cfg.window_length..].iter_mut() {
                *b = Complex64::new(0.0, 0.0);
            }
            self.fft.forward(&mut buf);
            for (k, v) in buf.iter().take(spec.bins).enumerate() {
                spec.data[k * frames + t] = *v;
            }
        }
        Ok(spec)
    }

    /// Vector-Jacobian product of [`Stft::forward`].
    ///
    /// `grad` holds the cotangent of each kept bin with the real part pairing
    /// with `Re X` and the imaginary part with `Im X`. Only the one-sided bins
    /// exist in the forward map, so no mirrored bins are added back here.
    pub fn adjoint(&self, grad: &ComplexSpectrogram, num_samples: usize) -> Result<Vec<f64>> {
        let cfg = self.config;
        let frames = cfg.frames_for(num_samples).ok_or(Error::SignalTooShort {
            len: num_samples,
            window: cfg.window_length,
        })?;
        check_len("stft adjoint frames", frames, grad.frames)?;
        check_len("stft adjoint bins", cfg.bins(), grad.bins)?;
        let mut out = vec![0.0; num_samples];
        let mut buf = vec![Complex64::new(0.0, 0.0); cfg.fft_size];
        for t in 0..frames {
            for b in buf.iter_mut() {
                *b = Complex64::new(0.0, 0.0);
            }
            for k in 0..grad.bins {
                buf[k] = grad.data[k * frames + t];
            }
            // d Re X_k / dx_n = w_n cos(theta), d Im X_k / dx_n = -w_n sin(theta)
            // so the sample gradient is w_n * Re(sum_k G_k e^{+i theta}).
            self.fft.inverse(&mut buf);
            let start = t * cfg.hop;
            for (n, o) in out[start..start + cfg.window_length].iter_mut().enumerate() {
                *o += self.window[n] * buf[n].re;
            }
        }
        Ok(out)
    }

    /// Weighted overlap-add inverse with the Hann synthesis window,
    /// normalized by the summed squared window.
    pub fn inverse(&self, spec: &ComplexSpectrogram) -> Result<Vec<f64>> {
        let cfg = self.config;
        check_len("istft bins", cfg.bins(), spec.bins)?;
        let frames = spec.frames;
        let n = cfg.fft_size;
        let len = cfg.samples_for(frames);
        let mut out = vec![0.0; len];
        let mut norm = vec![0.0; len];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for t in 0..frames {
            for k in 0..n {
                buf[k] = if k < spec.bins {
                    spec.data[k * frames + t]
                } else {
                    spec.data[(n - k) * frames + t].conj()
                };
            }
            self.fft.inverse(&mut buf);
            let start = t * cfg.hop;
            for j in 0..cfg.window_length {
                let w = self.window[j];
                out[start + j] += w * buf[j].re / n as f64;
                norm[start + j] += w * w;
            }
        }
        for (o, d) in out.iter_mut().zip(&norm) {
            if *d > 1e-12 {
                *o /= d;
            } else {
                *o = 0.0;
            }
        }
        Ok(out)
    }
}

pub fn stft(samples: &[f64], config: StftConfig) -> Result<ComplexSpectrogram> {
    Stft::new(config)?.forward(samples)
}

pub fn istft(spec: &ComplexSpectrogram) -> Result<Vec<f64>> {
    Stft::new(spec.config)?.inverse(spec)
}

pub fn stft_adjoint(
    grad: &ComplexSpectrogram,
    config: StftConfig,
    num_samples: usize,
) -> Result<Vec<f64>> {
    Stft::new(config)?.adjoint(grad, num_samples)
}

/// How the spectrogram is normalized before compression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScaleMode {
    /// Divide by the spectrogram's own largest modulus.
    OwnMax,
    /// Divide by a caller-supplied constant.
    Fixed(f64),
}

/// Real and imaginary channels squashed into (-1, 1).
///
/// `data` is laid out as `[channel][bin][frame]`; channel 0 carries the real
/// part and channel 1 the imaginary part.
#[derive(Debug, Clone, PartialEq)]
pub struct RiStack {
    bins: usize,
    frames: usize,
    data: Vec<f64>,
    scale: f64,
    compression: f64,
}

impl RiStack {
    pub fn from_data(bins: usize, frames: usize, data: Vec<f64>) -> Result<Self> {
        check_len("ri stack data", 2 * bins * frames, data.len())?;
        Ok(Self {
            bins,
            frames,
            data,
            scale: 1.0,
            compression: DEFAULT_COMPRESSION,
        })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn compression(&self) -> f64 {
        self.compression
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, bin: usize, frame: usize, channel: usize) -> f64 {
        self.data[(channel * self.bins + bin) * self.frames + frame]
    }

    pub fn channel(&self, channel: usize) -> &[f64] {
        let plane = self.bins * self.frames;
        &self.data[channel * plane..(channel + 1) * plane]
    }
}

#[inline]
fn squash(z: f64) -> f64 {
    // 2 * sigmoid(z) - 1 == tanh(z / 2)
    libm::tanh(0.5 * z)
}

pub fn compress_ri(spec: &ComplexSpectrogram, compression: f64, mode: ScaleMode) -> Result<RiStack> {
    if !(compression > 0.0) {
        return Err(Error::InvalidConfig("compression must be positive".into()));
    }
    let scale = match mode {
        ScaleMode::OwnMax => {
            let m = spec.max_modulus();
            if m == 0.0 {
                return Err(Error::ZeroSpectrogram);
            }
            m
        }
        ScaleMode::Fixed(s) if s > 0.0 => s,
        ScaleMode::Fixed(_) => return Err(Error::InvalidConfig("scale must be positive".into())),
    };
    let plane = spec.bins * spec.frames;
    let mut data = vec![0.0; 2 * plane];
    let (re, im) = data.split_at_mut(plane);
    for ((z, r), i) in spec.data.iter().zip(re.iter_mut()).zip(im.iter_mut()) {
        *r = squash(compression * (z.re / scale));
        *i = squash(compression * (z.im / scale));
    }
    Ok(RiStack {
        bins: spec.bins,
        frames: spec.frames,
        data,
        scale,
        compression,
    })
}

/// Chain rule through the squashing. The scale is a constant here.
pub fn compress_ri_adjoint(
    grad_ri: &[f64],
    spec: &ComplexSpectrogram,
    compression: f64,
    scale: f64,
) -> Result<ComplexSpectrogram> {
    let plane = spec.bins * spec.frames;
    check_len("compress adjoint", 2 * plane, grad_ri.len())?;
    let (gre, gim) = grad_ri.split_at(plane);
    // d/dz tanh(C z / 2) = (C / 2) (1 - tanh^2)
    let local = |v: f64| {
        let t = squash(compression * (v / scale));
        0.5 * compression * (1.0 - t * t) / scale
    };
    let mut out = ComplexSpectrogram::zeros(spec.config, spec.frames);
    for (((o, z), gr), gi) in out.data.iter_mut().zip(&spec.data).zip(gre).zip(gim) {
        *o = Complex64::new(gr * local(z.re), gi * local(z.im));
    }
    Ok(out)
}
