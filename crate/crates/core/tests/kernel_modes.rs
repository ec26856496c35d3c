//! Runs in its own process: it flips the global kernel switch.

use texsynth_core::featurebank::init_bank_with;
use texsynth_core::kernels::set_reference_kernels;
use texsynth_core::objective::{analyze, TextureObjective};
use texsynth_core::rng::SeededRng;
use texsynth_core::{AudioBuffer, StftConfig};

fn noise(n: usize, seed: u64) -> Vec<f64> {
    let mut r = SeededRng::new(seed, 9);
    (0..n).map(|_| 0.1 * r.gaussian()).collect()
}

#[test]
fn fast_and_reference_kernels_agree() {
    let bank = init_bank_with(2, 8, &[0, 3, 7]).unwrap();
    let x = AudioBuffer::new(noise(9000, 1), 16_000).unwrap();
    let target = analyze(&x, &bank, StftConfig::default(), 10.0, true).unwrap();
    let obj = TextureObjective::new(target, bank).unwrap();
    let y = noise(9000, 2);

    set_reference_kernels(true);
    let (l_ref, g_ref) = obj.loss_and_gradient(&y).unwrap();
    let (l_ref2, g_ref2) = obj.loss_and_gradient(&y).unwrap();
    set_reference_kernels(false);
    let (l_fast, g_fast) = obj.loss_and_gradient(&y).unwrap();

    assert_eq!(l_ref.to_bits(), l_ref2.to_bits());
    assert_eq!(g_ref, g_ref2);
    assert!((l_ref - l_fast).abs() <= 1e-10 * l_ref.abs());
    let gmax = g_ref.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (a, b) in g_ref.iter().zip(&g_fast) {
        assert!((a - b).abs() <= 1e-10 * gmax);
    }
}
