use std::f64::consts::TAU;

use texsynth_core::audio::{make_anchor, smoothed_magnitude};
use texsynth_core::featurebank::init_bank_with;
use texsynth_core::fft::{Complex64, Fft};
use texsynth_core::objective::{analyze, TextureObjective};
use texsynth_core::rng::SeededRng;
use texsynth_core::{AudioBuffer, StftConfig};

const RATE: u32 = 16_000;

fn sine(freq: f64, len: usize) -> AudioBuffer {
    AudioBuffer::new(
        (0..len).map(|i| 0.3 * (TAU * freq * i as f64 / RATE as f64).sin()).collect(),
        RATE,
    )
    .unwrap()
}

/// Fraction of signal energy within `half_width` Hz of `freq`, measured on the
/// full-length DFT.
fn band_energy_fraction(x: &[f64], freq: f64, half_width: f64) -> f64 {
    let n = x.len();
    let mut spec: Vec<Complex64> = x.iter().map(|v| Complex64::new(*v, 0.0)).collect();
    Fft::new(n).forward(&mut spec);
    let (mut inside, mut total) = (0.0, 0.0);
    for (k, z) in spec.iter().enumerate() {
        let hz = k.min(n - k) as f64 * RATE as f64 / n as f64;
        let e = z.norm_sqr();
        total += e;
        if (hz - freq).abs() <= half_width {
            inside += e;
        }
    }
    inside / total
}

#[test]
fn anchor_energy_stays_in_the_reference_band() {
    for (freq, len) in [(1000.0, 16_000), (440.0, 24_000), (3150.0, 12_345)] {
        let reference = sine(freq, len);
        assert!(band_energy_fraction(reference.samples(), freq, 50.0) > 0.99);
        let anchor = make_anchor(&reference, 0).unwrap();
        let frac = band_energy_fraction(anchor.samples(), freq, 50.0);
        assert!(frac >= 0.9, "{freq} Hz: only {frac} of the energy in band");
        let rel = (anchor.variance() - reference.variance()).abs() / reference.variance();
        assert!(rel < 1e-6);
    }
}

#[test]
fn anchors_with_different_seeds_share_an_envelope() {
    let mut r = SeededRng::new(3, 0);
    // crude coloured reference: noise through a two-tap smoother plus a tone
    let raw: Vec<f64> = (0..20_000).map(|_| r.gaussian()).collect();
    let x: Vec<f64> = raw
        .windows(2)
        .enumerate()
        .map(|(i, w)| w[0] + w[1] + (TAU * 700.0 * i as f64 / RATE as f64).sin())
        .collect();
    let reference = AudioBuffer::new(x, RATE).unwrap();
    let a = make_anchor(&reference, 1).unwrap();
    let b = make_anchor(&reference, 2).unwrap();
    assert_ne!(a.samples(), b.samples());
    let ea = smoothed_magnitude(a.samples());
    let eb = smoothed_magnitude(b.samples());
    let num: f64 = ea.iter().zip(&eb).map(|(u, v)| (u - v) * (u - v)).sum();
    let den: f64 = ea.iter().map(|u| u * u).sum();
    assert!((num / den).sqrt() < 0.01);
}

#[test]
fn frame_normalized_statistics_are_stationary_under_repetition() {
    let mut r = SeededRng::new(9, 0);
    let four: Vec<f64> = (0..4 * RATE as usize).map(|_| 0.1 * r.gaussian()).collect();
    let eight: Vec<f64> = four.iter().chain(&four).copied().collect();
    let bank = init_bank_with(0, 8, &[0, 3, 7]).unwrap();
    let cfg = StftConfig::default();
    let a = analyze(&AudioBuffer::new(four, RATE).unwrap(), &bank, cfg, 10.0, true).unwrap();
    let b = analyze(&AudioBuffer::new(eight, RATE).unwrap(), &bank, cfg, 10.0, true).unwrap();
    for (ga, gb) in a.grams.iter().zip(&b.grams) {
        let num: f64 = ga.data.iter().zip(&gb.data).map(|(u, v)| (u - v) * (u - v)).sum();
        assert!(num.sqrt() / ga.frobenius() < 0.05);
    }
}

#[test]
fn loss_is_zero_at_the_original_and_one_per_layer_at_silence() {
    let mut r = SeededRng::new(4, 0);
    let x = AudioBuffer::new((0..8000).map(|_| 0.1 * r.gaussian()).collect(), RATE).unwrap();
    let bank = init_bank_with(1, 16, &[0, 1, 2, 3, 4, 5, 6, 7]).unwrap();
    let p = analyze(&x, &bank, StftConfig::default(), 10.0, true).unwrap();
    let obj = TextureObjective::new(p, bank).unwrap();
    assert!(obj.loss(x.samples()).unwrap().abs() < 1e-10);
    assert!((obj.loss(&vec![0.0; 8000]).unwrap() - 8.0).abs() < 1e-9);
    let per_layer = obj.layer_losses(&vec![0.0; 8000]).unwrap();
    assert!(per_layer.iter().all(|v| *v == 1.0));
}

#[test]
fn signals_shorter_than_the_widest_filter_are_rejected() {
    let bank = init_bank_with(0, 2, &[7]).unwrap();
    let cfg = StftConfig::default();
    // 26 frames, one short of the 27-wide filter
    let x = AudioBuffer::new(vec![0.1; cfg.samples_for(26)], RATE).unwrap();
    assert!(analyze(&x, &bank, cfg, 10.0, true).is_err());
}
