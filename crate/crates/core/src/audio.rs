//! Mono sample buffers and the in-memory DSP around them: rate conversion,
//! energy normalization, and spectrum-matched noise anchors.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fft::{Complex64, Fft};
use crate::rng::{streams, SeededRng};

#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::ZeroSampleRate);
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn mean(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    /// Population variance (divides by N).
    pub fn variance(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let m = self.mean();
        self.samples.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / self.samples.len() as f64
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        libm::sqrt(self.samples.iter().map(|x| x * x).sum::<f64>() / self.samples.len() as f64)
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Scale so the largest magnitude equals `target`. Silent buffers are
    /// returned unchanged.
    pub fn peak_normalized(&self, target: f64) -> Self {
        let p = self.peak();
        let k = if p > 0.0 { target / p } else { 1.0 };
        Self {
            samples: self.samples.iter().map(|v| v * k).collect(),
            sample_rate: self.sample_rate,
        }
    }
}

const RESAMPLE_TAPS: usize = 64;
const KAISER_BETA: f64 = 8.6;
const CUTOFF_FRACTION: f64 = 0.9;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term > 1e-17 * sum {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = core::f64::consts::PI * x;
        libm::sin(px) / px
    }
}

/// Kaiser-windowed sinc rate conversion with 64 taps per output phase and the
/// cutoff at 0.9 of the lower Nyquist frequency.
pub fn resample(buf: &AudioBuffer, target_rate: u32) -> Result<AudioBuffer> {
    if target_rate == 0 {
        return Err(Error::ZeroSampleRate);
    }
    let src = buf.sample_rate;
    if src == target_rate {
        return Ok(buf.clone());
    }
    let g = gcd(src as u64, target_rate as u64);
    let up = (target_rate as u64 / g) as usize;
    let down = (src as u64 / g) as usize;
    // cycles per input sample
    let fc = CUTOFF_FRACTION * 0.5 * src.min(target_rate) as f64 / src as f64;
    let half = (RESAMPLE_TAPS / 2) as f64;
    let i0_beta = bessel_i0(KAISER_BETA);
    let table: Vec<[f64; RESAMPLE_TAPS]> = (0..up)
        .map(|p| {
            let frac = p as f64 / up as f64;
            let mut taps = [0.0; RESAMPLE_TAPS];
            for (i, tap) in taps.iter_mut().enumerate() {
                // tap i sits at input index floor(pos) + i - 31
                let tau = frac + (RESAMPLE_TAPS / 2 - 1) as f64 - i as f64;
                let r = tau / half;
                let win = if r.abs() >= 1.0 {
                    0.0
                } else {
                    bessel_i0(KAISER_BETA * libm::sqrt(1.0 - r * r)) / i0_beta
                };
                *tap = 2.0 * fc * sinc(2.0 * fc * tau) * win;
            }
            let total: f64 = taps.iter().sum();
            for t in taps.iter_mut() {
                *t /= total;
            }
            taps
        })
        .collect();
    let n_in = buf.samples.len();
    let n_out = (n_in * up).div_ceil(down);
    let x = &buf.samples;
    let out = (0..n_out)
        .map(|k| {
            let num = k * down;
            let base = (num / up) as isize - (RESAMPLE_TAPS / 2 - 1) as isize;
            let taps = &table[num % up];
            let mut acc = 0.0;
            for (i, t) in taps.iter().enumerate() {
                let j = base + i as isize;
                if j >= 0 && (j as usize) < n_in {
                    acc += t * x[j as usize];
                }
            }
            acc
        })
        .collect();
    AudioBuffer::new(out, target_rate)
}

/// Mean-center and rescale so the population variance equals `target_variance`.
pub fn normalize_energy(buf: &AudioBuffer, target_variance: f64) -> Result<AudioBuffer> {
    if buf.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    if !(target_variance > 0.0) {
        return Err(Error::InvalidConfig("target variance must be positive".into()));
    }
    let var = buf.variance();
    if !(var > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let m = buf.mean();
    let k = libm::sqrt(target_variance / var);
    AudioBuffer::new(buf.samples.iter().map(|x| (x - m) * k).collect(), buf.sample_rate)
}

/// Half-width of the moving average applied to the reference magnitude.
const ANCHOR_SMOOTH_HALF: usize = 4;

/// Circular moving average of the DFT magnitude of `x` (9 bins wide).
pub fn smoothed_magnitude(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut spec: Vec<Complex64> = x.iter().map(|v| Complex64::new(*v, 0.0)).collect();
    Fft::new(n).forward(&mut spec);
    smooth_circular(&spec.iter().map(|z| z.norm()).collect::<Vec<_>>())
}

fn smooth_circular(mag: &[f64]) -> Vec<f64> {
    let n = mag.len();
    let width = 2 * ANCHOR_SMOOTH_HALF + 1;
    (0..n)
        .map(|k| {
            let mut s = 0.0;
            for d in 0..width {
                s += mag[(k + n * width + d - ANCHOR_SMOOTH_HALF) % n];
            }
            s / width as f64
        })
        .collect()
}

/// Gaussian noise whose whole-signal spectrum magnitude is replaced by the
/// (smoothed) magnitude of `reference`, rescaled to the reference variance.
pub fn make_anchor(reference: &AudioBuffer, seed: u64) -> Result<AudioBuffer> {
    let n = reference.len();
    if n == 0 {
        return Err(Error::EmptyBuffer);
    }
    let mut rng = SeededRng::new(seed, streams::ANCHOR);
    let mut noise: Vec<Complex64> = (0..n).map(|_| Complex64::new(rng.gaussian(), 0.0)).collect();
    let fft = Fft::new(n);
    fft.forward(&mut noise);
    let target = smoothed_magnitude(reference.samples());
    for (z, m) in noise.iter_mut().zip(&target) {
        let r = z.norm();
        *z = if r > 0.0 { *z * (m / r) } else { Complex64::new(*m, 0.0) };
    }
    fft.inverse(&mut noise);
    let inv = 1.0 / n as f64;
    let shaped = AudioBuffer::new(noise.iter().map(|z| z.re * inv).collect(), reference.sample_rate)?;
    normalize_energy(&shaped, reference.variance())
}

/// Seeded Gaussian noise with the given RMS.
pub fn gaussian_noise(len: usize, rms: f64, seed: u64, sample_rate: u32) -> Result<AudioBuffer> {
    let mut rng = SeededRng::new(seed, streams::SYNTH_INIT);
    AudioBuffer::new((0..len).map(|_| rms * rng.gaussian()).collect(), sample_rate)
}
