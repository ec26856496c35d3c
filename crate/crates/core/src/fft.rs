//! Complex FFT for arbitrary lengths.
//!
//! Powers of two use an iterative radix-2 kernel; every other length goes
//! through Bluestein's chirp-z reformulation on top of a radix-2 plan.
//! Neither direction is normalized.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

pub use num_complex::Complex64;

#[derive(Debug, Clone)]
pub struct Fft {
    len: usize,
    kind: Kind,
}

#[derive(Debug, Clone)]
enum Kind {
    Trivial,
    Radix2(Radix2),
    Bluestein(Bluestein),
}

impl Fft {
    pub fn new(len: usize) -> Self {
        let kind = if len <= 1 {
            Kind::Trivial
        } else if len.is_power_of_two() {
            Kind::Radix2(Radix2::new(len))
        } else {
            Kind::Bluestein(Bluestein::new(len))
        };
        Self { len, kind }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// In-place `X[k] = sum_n x[n] e^{-2 pi i k n / N}`.
    pub fn forward(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.len, "fft length mismatch");
        match &self.kind {
            Kind::Trivial => {}
            Kind::Radix2(p) => p.run(buf),
            Kind::Bluestein(p) => p.run(buf),
        }
    }

    /// In-place `x[n] = sum_k X[k] e^{+2 pi i k n / N}` (no 1/N factor).
    pub fn inverse(&self, buf: &mut [Complex64]) {
        for v in buf.iter_mut() {
            *v = v.conj();
        }
        self.forward(buf);
        for v in buf.iter_mut() {
            *v = v.conj();
        }
    }
}

#[derive(Debug, Clone)]
struct Radix2 {
    twiddles: Vec<Complex64>,
    bitrev: Vec<u32>,
}

impl Radix2 {
    fn new(len: usize) -> Self {
        let bits = len.trailing_zeros();
        let twiddles = (0..len / 2)
            .map(|k| {
                let a = -2.0 * PI * k as f64 / len as f64;
                Complex64::new(libm::cos(a), libm::sin(a))
            })
            .collect();
        let bitrev = (0..len as u32)
            .map(|i| i.reverse_bits() >> (32 - bits))
            .collect();
        Self { twiddles, bitrev }
    }

    fn run(&self, buf: &mut [Complex64]) {
        let n = buf.len();
        for (i, &j) in self.bitrev.iter().enumerate() {
            let j = j as usize;
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut half = 1;
        while half < n {
            let stride = n / (2 * half);
            for block in buf.chunks_exact_mut(2 * half) {
                let (lo, hi) = block.split_at_mut(half);
                for (k, (a, b)) in lo.iter_mut().zip(hi.iter_mut()).enumerate() {
                    let t = *b * self.twiddles[k * stride];
                    *b = *a - t;
                    *a += t;
                }
            }
            half *= 2;
        }
    }
}

#[derive(Debug, Clone)]
struct Bluestein {
    inner: Radix2,
    chirp: Vec<Complex64>,
    kernel_spectrum: Vec<Complex64>,
}

impl Bluestein {
    fn new(len: usize) -> Self {
        let m = (2 * len - 1).next_power_of_two();
        let inner = Radix2::new(m);
        // k^2 mod 2N keeps the chirp angle small for large k.
        let modulus = 2 * len as u128;
        let chirp: Vec<Complex64> = (0..len)
            .map(|k| {
                let k2 = (k as u128 * k as u128) % modulus;
                let a = PI * k2 as f64 / len as f64;
                Complex64::new(libm::cos(a), libm::sin(a))
            })
            .collect();
        let mut kernel = vec![Complex64::new(0.0, 0.0); m];
        kernel[0] = chirp[0];
        for k in 1..len {
            kernel[k] = chirp[k];
            kernel[m - k] = chirp[k];
        }
        inner.run(&mut kernel);
        Self {
            inner,
            chirp,
            kernel_spectrum: kernel,
        }
    }

    fn run(&self, buf: &mut [Complex64]) {
        let n = buf.len();
        let m = self.kernel_spectrum.len();
        let mut work = vec![Complex64::new(0.0, 0.0); m];
        for ((w, x), c) in work.iter_mut().zip(buf.iter()).zip(&self.chirp) {
            *w = *x * c.conj();
        }
        self.inner.run(&mut work);
        for (w, k) in work.iter_mut().zip(&self.kernel_spectrum) {
            *w = (*w * k).conj();
        }
        // Inverse via conjugation; scale by 1/m.
        self.inner.run(&mut work);
        let scale = 1.0 / m as f64;
        for (k, out) in buf.iter_mut().enumerate().take(n) {
            *out = work[k].conj() * scale * self.chirp[k].conj();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter().enumerate().fold(Complex64::new(0.0, 0.0), |acc, (j, v)| {
                    let a = -2.0 * PI * ((k * j) % n) as f64 / n as f64;
                    acc + v * Complex64::new(libm::cos(a), libm::sin(a))
                })
            })
            .collect()
    }

    fn signal(n: usize) -> Vec<Complex64> {
        let mut rng = crate::rng::SeededRng::new(11, n as u64);
        (0..n)
            .map(|_| Complex64::new(rng.gaussian(), rng.gaussian()))
            .collect()
    }

    #[test]
    fn matches_naive_dft_for_many_lengths() {
        for n in [1usize, 2, 3, 5, 8, 12, 17, 64, 100, 257, 512] {
            let x = signal(n);
            let expected = naive_dft(&x);
            let mut got = x.clone();
            Fft::new(n).forward(&mut got);
            for (a, b) in got.iter().zip(&expected) {
                assert!((a - b).norm() < 1e-9 * (n as f64), "n={n}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn inverse_round_trip() {
        for n in [16usize, 30, 1000] {
            let x = signal(n);
            let plan = Fft::new(n);
            let mut y = x.clone();
            plan.forward(&mut y);
            plan.inverse(&mut y);
            for (a, b) in y.iter().zip(&x) {
                assert!((a / n as f64 - b).norm() < 1e-12);
            }
        }
    }
}
