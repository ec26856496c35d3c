use proptest::prelude::*;
use texsynth_core::fft::Complex64;
use texsynth_core::rng::SeededRng;
use texsynth_core::tfr::{
    compress_ri, istft, stft, stft_adjoint, ComplexSpectrogram, ScaleMode, StftConfig,
};

fn noise(n: usize, seed: u64) -> Vec<f64> {
    let mut r = SeededRng::new(seed, 7);
    (0..n).map(|_| r.gaussian()).collect()
}

fn random_spec(cfg: StftConfig, frames: usize, seed: u64) -> ComplexSpectrogram {
    let mut r = SeededRng::new(seed, 8);
    let data = (0..cfg.bins() * frames)
        .map(|_| Complex64::new(r.gaussian(), r.gaussian()))
        .collect();
    ComplexSpectrogram::from_data(cfg, frames, data).unwrap()
}

#[test]
fn round_trip_interior_on_random_one_second_signals() {
    let cfg = StftConfig::default();
    for seed in 0..10 {
        let x = noise(16_000, seed);
        let y = istft(&stft(&x, cfg).unwrap()).unwrap();
        let lo = cfg.window_length;
        let hi = y.len() - cfg.window_length;
        let peak = x[lo..hi].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = (lo..hi).fold(0.0f64, |m, i| m.max((x[i] - y[i]).abs()));
        assert!(err / peak < 1e-10, "seed {seed}: relative error {}", err / peak);
    }
}

#[test]
fn random_complex_matrices_are_inconsistent() {
    let cfg = StftConfig::default();
    for seed in 0..3 {
        let m = random_spec(cfg, 20, seed);
        let back = stft(&istft(&m).unwrap(), cfg).unwrap();
        let num: f64 = m.data().iter().zip(back.data()).map(|(a, b)| (a - b).norm_sqr()).sum();
        let den: f64 = m.data().iter().map(|a| a.norm_sqr()).sum();
        assert!((num / den).sqrt() > 1e-3);
    }
}

#[test]
fn zero_in_zero_out() {
    let cfg = StftConfig::default();
    let s = stft(&vec![0.0; 4096], cfg).unwrap();
    assert!(s.data().iter().all(|z| z.re == 0.0 && z.im == 0.0));
    assert!(istft(&s).unwrap().iter().all(|v| *v == 0.0));
    assert!(stft_adjoint(&s, cfg, 4096).unwrap().iter().all(|v| *v == 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn adjoint_identity(seed in any::<u64>(), extra in 0usize..300) {
        let cfg = StftConfig::default();
        let n = 2048 + extra;
        let x = noise(n, seed);
        let sx = stft(&x, cfg).unwrap();
        let u = random_spec(cfg, sx.frames(), seed ^ 0x55);
        let lhs = sx.real_dot(&u);
        let atu = stft_adjoint(&u, cfg, n).unwrap();
        let rhs: f64 = x.iter().zip(&atu).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()));
    }

    #[test]
    fn compression_is_odd_and_bounded(
        vals in proptest::collection::vec((-1e6f64..1e6, -1e6f64..1e6), 257 * 2),
        c in 0.5f64..20.0,
    ) {
        let cfg = StftConfig::default();
        let data: Vec<Complex64> = vals.iter().map(|(a, b)| Complex64::new(*a, *b)).collect();
        prop_assume!(data.iter().any(|z| z.norm() > 0.0));
        let spec = ComplexSpectrogram::from_data(cfg, 2, data.clone()).unwrap();
        let neg = ComplexSpectrogram::from_data(cfg, 2, data.iter().map(|z| -z).collect()).unwrap();
        let a = compress_ri(&spec, c, ScaleMode::OwnMax).unwrap();
        let b = compress_ri(&neg, c, ScaleMode::OwnMax).unwrap();
        for (u, v) in a.data().iter().zip(b.data()) {
            prop_assert_eq!(*u, -*v);
            prop_assert!(u.abs() < 1.0);
        }
    }
}
