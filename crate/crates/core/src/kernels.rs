//! Inner loops of the feature bank.
//!
//! Every kernel has a scalar reference version. With the `std` feature on
//! x86_64, AVX2+FMA versions are selected at runtime; they agree with the
//! reference to rounding (well inside 1e-10 relative) but not bit-for-bit.
//! [`set_reference_kernels`] forces the scalar path everywhere.

use core::sync::atomic::{AtomicBool, Ordering};

static FORCE_REFERENCE: AtomicBool = AtomicBool::new(false);

/// Force (or stop forcing) the scalar reference kernels process-wide.
pub fn set_reference_kernels(on: bool) {
    FORCE_REFERENCE.store(on, Ordering::SeqCst);
}

pub fn reference_kernels_forced() -> bool {
    FORCE_REFERENCE.load(Ordering::SeqCst)
}

/// Whether the vectorized kernels are in use right now.
pub fn fast_kernels_active() -> bool {
    !reference_kernels_forced() && simd_available()
}

#[cfg(all(feature = "std", target_arch = "x86_64"))]
fn simd_available() -> bool {
    use std::sync::OnceLock;
    static DETECTED: OnceLock<bool> = OnceLock::new();
    *DETECTED.get_or_init(|| {
        std::is_x86_feature_detected!("avx2") && std::is_x86_feature_detected!("fma")
    })
}

#[cfg(not(all(feature = "std", target_arch = "x86_64")))]
fn simd_available() -> bool {
    false
}

/// `acc[n] += sum_k taps[k] * src[n + k]` for every `n < acc.len()`.
#[inline]
pub(crate) fn correlate(acc: &mut [f64], src: &[f64], taps: &[f64]) {
    assert!(src.len() + 1 >= acc.len() + taps.len());
    #[cfg(all(feature = "std", target_arch = "x86_64"))]
    if fast_kernels_active() {
        // SAFETY: AVX2 and FMA support was verified at runtime and the
        // length precondition is asserted above.
        unsafe { avx2::correlate(acc, src, taps) };
        return;
    }
    correlate_reference(acc, src, taps);
}

pub(crate) fn correlate_reference(acc: &mut [f64], src: &[f64], taps: &[f64]) {
    let n = acc.len();
    for (k, &t) in taps.iter().enumerate() {
        for (a, s) in acc.iter_mut().zip(&src[k..k + n]) {
            *a += t * s;
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    #[cfg(all(feature = "std", target_arch = "x86_64"))]
    if fast_kernels_active() {
        // SAFETY: features verified at runtime; equal lengths asserted.
        return unsafe { avx2::dot(a, b) };
    }
    crate::linalg::dot(a, b)
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    assert_eq!(x.len(), y.len());
    #[cfg(all(feature = "std", target_arch = "x86_64"))]
    if fast_kernels_active() {
        // SAFETY: features verified at runtime; equal lengths asserted.
        unsafe { avx2::axpy(alpha, x, y) };
        return;
    }
    crate::linalg::axpy(alpha, x, y)
}

#[cfg(all(feature = "std", target_arch = "x86_64"))]
mod avx2 {
    use core::arch::x86_64::*;

    const LANES: usize = 4;
    const BLOCK: usize = 4 * LANES;

    #[target_feature(enable = "avx2,fma")]
    pub(super) unsafe fn correlate(acc: &mut [f64], src: &[f64], taps: &[f64]) {
        let n = acc.len();
        let ap = acc.as_mut_ptr();
        let sp = src.as_ptr();
        let mut i = 0;
        while i + BLOCK <= n {
            let mut a0 = _mm256_loadu_pd(ap.add(i));
            let mut a1 = _mm256_loadu_pd(ap.add(i + LANES));
            let mut a2 = _mm256_loadu_pd(ap.add(i + 2 * LANES));
            let mut a3 = _mm256_loadu_pd(ap.add(i + 3 * LANES));
            for (k, &t) in taps.iter().enumerate() {
                let w = _mm256_set1_pd(t);
                let s = sp.add(i + k);
                a0 = _mm256_fmadd_pd(w, _mm256_loadu_pd(s), a0);
                a1 = _mm256_fmadd_pd(w, _mm256_loadu_pd(s.add(LANES)), a1);
                a2 = _mm256_fmadd_pd(w, _mm256_loadu_pd(s.add(2 * LANES)), a2);
                a3 = _mm256_fmadd_pd(w, _mm256_loadu_pd(s.add(3 * LANES)), a3);
            }
            _mm256_storeu_pd(ap.add(i), a0);
            _mm256_storeu_pd(ap.add(i + LANES), a1);
            _mm256_storeu_pd(ap.add(i + 2 * LANES), a2);
            _mm256_storeu_pd(ap.add(i + 3 * LANES), a3);
            i += BLOCK;
        }
        while i + LANES <= n {
            let mut a0 = _mm256_loadu_pd(ap.add(i));
            for (k, &t) in taps.iter().enumerate() {
                a0 = _mm256_fmadd_pd(_mm256_set1_pd(t), _mm256_loadu_pd(sp.add(i + k)), a0);
            }
            _mm256_storeu_pd(ap.add(i), a0);
            i += LANES;
        }
        while i < n {
            let mut a = *ap.add(i);
            for (k, &t) in taps.iter().enumerate() {
                a = t.mul_add(*sp.add(i + k), a);
            }
            *ap.add(i) = a;
            i += 1;
        }
    }

    #[target_feature(enable = "avx2,fma")]
    pub(super) unsafe fn dot(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len();
        let (pa, pb) = (a.as_ptr(), b.as_ptr());
        let mut s0 = _mm256_setzero_pd();
        let mut s1 = _mm256_setzero_pd();
        let mut i = 0;
        while i + 2 * LANES <= n {
            s0 = _mm256_fmadd_pd(_mm256_loadu_pd(pa.add(i)), _mm256_loadu_pd(pb.add(i)), s0);
            s1 = _mm256_fmadd_pd(
                _mm256_loadu_pd(pa.add(i + LANES)),
                _mm256_loadu_pd(pb.add(i + LANES)),
                s1,
            );
            i += 2 * LANES;
        }
        let mut lanes = [0.0f64; LANES];
        _mm256_storeu_pd(lanes.as_mut_ptr(), _mm256_add_pd(s0, s1));
        let mut tail = 0.0;
        while i < n {
            tail = (*pa.add(i)).mul_add(*pb.add(i), tail);
            i += 1;
        }
        (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]) + tail
    }

    #[target_feature(enable = "avx2,fma")]
    pub(super) unsafe fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
        let n = x.len();
        let (px, py) = (x.as_ptr(), y.as_mut_ptr());
        let w = _mm256_set1_pd(alpha);
        let mut i = 0;
        while i + LANES <= n {
            let v = _mm256_fmadd_pd(w, _mm256_loadu_pd(px.add(i)), _mm256_loadu_pd(py.add(i)));
            _mm256_storeu_pd(py.add(i), v);
            i += LANES;
        }
        while i < n {
            *py.add(i) = alpha.mul_add(*px.add(i), *py.add(i));
            i += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use alloc::vec::Vec;

    fn rand_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut r = SeededRng::new(seed, 0);
        (0..n).map(|_| r.uniform(-1.0, 1.0)).collect()
    }

    #[test]
    fn correlate_matches_reference() {
        for (n, k) in [(1usize, 1usize), (5, 3), (16, 2), (37, 27), (123, 11)] {
            let src = rand_vec(n + k - 1, 1);
            let taps = rand_vec(k, 2);
            let init = rand_vec(n, 3);
            let mut fast = init.clone();
            correlate(&mut fast, &src, &taps);
            let mut slow = init.clone();
            correlate_reference(&mut slow, &src, &taps);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn dot_and_axpy_match_reference() {
        for n in [0usize, 3, 8, 19, 200] {
            let a = rand_vec(n, 4);
            let b = rand_vec(n, 5);
            assert!((dot(&a, &b) - crate::linalg::dot(&a, &b)).abs() < 1e-12);
            let mut y1 = b.clone();
            let mut y2 = b.clone();
            axpy(0.3, &a, &mut y1);
            crate::linalg::axpy(0.3, &a, &mut y2);
            for (u, v) in y1.iter().zip(&y2) {
                assert!((u - v).abs() < 1e-15);
            }
        }
    }
}
