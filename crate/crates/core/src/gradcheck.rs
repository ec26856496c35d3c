//! Finite-difference verification of every adjoint in the synthesis chain.
//!
//! Each stage is checked on a small random instance by comparing its
//! vector-Jacobian product against central differences of `<u, f(x)>`; the
//! STFT is also checked through the inner-product identity
//! `<A x, u> = <x, A' u>`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::audio::AudioBuffer;
use crate::error::Result;
use crate::featurebank::{
    forward, forward_adjoint, gram, gram_adjoint, init_bank_with, ConvLayer, FeatureMaps,
    FilterBank, LayerMaps, LayerShape,
};
use crate::fft::Complex64;
use crate::objective::{analyze, TextureObjective};
use crate::rng::{streams, SeededRng};
use crate::tfr::{
    compress_ri, compress_ri_adjoint, ComplexSpectrogram, RiStack, ScaleMode, Stft, StftConfig,
    DEFAULT_COMPRESSION,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Stft,
    CompressRi,
    Forward,
    Gram,
    EndToEnd,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Stft,
        Stage::CompressRi,
        Stage::Forward,
        Stage::Gram,
        Stage::EndToEnd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Stft => "stft",
            Stage::CompressRi => "compress_ri",
            Stage::Forward => "forward",
            Stage::Gram => "gram",
            Stage::EndToEnd => "end_to_end",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }
}

#[derive(Debug, Clone)]
pub struct GradcheckOptions {
    pub seed: u64,
    pub filters: usize,
    /// Indices into the default shape list for the end-to-end check.
    pub layers: Vec<usize>,
    pub num_samples: usize,
    pub coordinates: usize,
    pub tolerance: f64,
    /// Scale the named stage's adjoint by 1.01; negative control only.
    pub corrupt: Option<Stage>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            filters: 8,
            layers: vec![0, 1],
            num_samples: 4000,
            coordinates: 20,
            tolerance: 1e-4,
            corrupt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub tolerance: f64,
    pub checks: Vec<CheckResult>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn error_of(&self, name: &str) -> Option<f64> {
        self.checks.iter().find(|c| c.name == name).map(|c| c.max_rel_error)
    }
}

impl fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{:<24} max rel err {:.3e}  {}",
                c.name,
                c.max_rel_error,
                if c.passed { "ok" } else { "FAILED" }
            )?;
        }
        if self.passed() {
            writeln!(f, "all checks passed")
        } else {
            writeln!(f, "gradient check failed (tolerance {:.1e})", self.tolerance)
        }
    }
}

/// `|a - b| / max(|a|, |b|, floor)`
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    let d = (a - b).abs();
    if d == 0.0 {
        return 0.0;
    }
    d / a.abs().max(b.abs()).max(floor)
}

/// Central difference of `f` along coordinate `i`.
pub fn central_difference<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], i: usize, h: f64) -> f64 {
    let mut xp = x.to_vec();
    xp[i] = x[i] + h;
    let fp = f(&xp);
    xp[i] = x[i] - h;
    let fm = f(&xp);
    (fp - fm) / (2.0 * h)
}

/// Largest per-coordinate relative error between `analytic` and central
/// differences of `f` over `coords`. Components are compared against a floor
/// of `1e-3 * max |analytic|` so that rounding noise in the differences of
/// near-zero entries does not dominate.
pub fn compare_with_differences<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x: &[f64],
    analytic: &[f64],
    coords: &[usize],
    h: f64,
) -> f64 {
    let scale = coords.iter().fold(0.0f64, |m, &i| m.max(analytic[i].abs()));
    let floor = (1e-3 * scale).max(1e-300);
    coords
        .iter()
        .map(|&i| relative_error(analytic[i], central_difference(&mut f, x, i, h), floor))
        .fold(0.0, f64::max)
}

/// Normwise relative error `max |analytic - fd| / max |analytic|` over `coords`.
pub fn normwise_difference_error<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x: &[f64],
    analytic: &[f64],
    coords: &[usize],
    h: f64,
) -> f64 {
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for &i in coords {
        let fd = central_difference(&mut f, x, i, h);
        num = num.max((analytic[i] - fd).abs());
        den = den.max(analytic[i].abs()).max(fd.abs());
    }
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// True when moving coordinate `i` by `+-h` leaves every ReLU gate as it is
/// at `x`, i.e. the difference quotient does not straddle a kink.
pub fn is_kink_free<G: FnMut(&[f64]) -> Vec<bool>>(mut gates: G, x: &[f64], i: usize, h: f64) -> bool {
    let at = gates(x);
    let mut xp = x.to_vec();
    xp[i] = x[i] + h;
    if gates(&xp) != at {
        return false;
    }
    xp[i] = x[i] - h;
    gates(&xp) == at
}

fn active(maps: &FeatureMaps) -> Vec<bool> {
    maps.layers
        .iter()
        .flat_map(|l| l.data.iter().map(|v| *v > 0.0))
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn flatten(spec: &ComplexSpectrogram) -> Vec<f64> {
    spec.data().iter().flat_map(|z| [z.re, z.im]).collect()
}

fn unflatten(cfg: StftConfig, frames: usize, v: &[f64]) -> ComplexSpectrogram {
    let data = v.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
    ComplexSpectrogram::from_data(cfg, frames, data).expect("consistent shape")
}

fn corrupt(stage: Stage, opts: &GradcheckOptions, v: &mut [f64]) {
    if opts.corrupt == Some(stage) {
        v.iter_mut().for_each(|x| *x *= 1.01);
    }
}

pub fn run(opts: &GradcheckOptions) -> Result<GradcheckReport> {
    let mut rng = SeededRng::new(opts.seed, streams::GRADCHECK);
    let checks = vec![
        ("stft adjoint identity", stft_identity(&mut rng, opts)?),
        ("stft jacobian", stft_jacobian(&mut rng, opts)?),
        ("compress_ri jacobian", compress_jacobian(&mut rng, opts)?),
        ("forward jacobian", forward_jacobian(&mut rng, opts)?),
        ("gram jacobian", gram_jacobian(&mut rng, opts)?),
        ("end-to-end gradient", end_to_end(&mut rng, opts)?),
    ];
    Ok(GradcheckReport {
        tolerance: opts.tolerance,
        checks: checks
            .into_iter()
            .map(|(name, err)| CheckResult {
                name: name.into(),
                max_rel_error: err,
                passed: err < opts.tolerance,
            })
            .collect(),
    })
}

fn stft_identity(rng: &mut SeededRng, opts: &GradcheckOptions) -> Result<f64> {
    let cfg = StftConfig::default();
    let n = 2048;
    let stft = Stft::new(cfg)?;
    let x: Vec<f64> = (0..n).map(|_| rng.gaussian()).collect();
    let frames = cfg.frames_for(n).expect("long enough");
    let u: Vec<f64> = (0..2 * cfg.bins() * frames).map(|_| rng.gaussian()).collect();
    let lhs = dot(&flatten(&stft.forward(&x)?), &u);
    let mut back = stft.adjoint(&unflatten(cfg, frames, &u), n)?;
    corrupt(Stage::Stft, opts, &mut back);
    let rhs = dot(&x, &back);
    Ok(relative_error(lhs, rhs, 0.0))
}

fn small_cfg() -> StftConfig {
    StftConfig {
        window_length: 16,
        hop: 8,
        fft_size: 16,
        sample_rate: 16_000,
    }
}

fn stft_jacobian(rng: &mut SeededRng, opts: &GradcheckOptions) -> Result<f64> {
    let cfg = small_cfg();
    let stft = Stft::new(cfg)?;
    let n = 48;
    let frames = cfg.frames_for(n).expect("long enough");
    let x: Vec<f64> = (0..n).map(|_| rng.gaussian()).collect();
    let u: Vec<f64> = (0..2 * cfg.bins() * frames).map(|_| rng.gaussian()).collect();
    let mut g = stft.adjoint(&unflatten(cfg, frames, &u), n)?;
    corrupt(Stage::Stft, opts, &mut g);
    let coords: Vec<usize> = (0..n).collect();
    let f = |y: &[f64]| dot(&flatten(&stft.forward(y).expect("valid")), &u);
    // linear map: a wide step only reduces rounding noise
    Ok(normwise_difference_error(f, &x, &g, &coords, 1e-3))
}

fn compress_jacobian(rng: &mut SeededRng, opts: &GradcheckOptions) -> Result<f64> {
    // 4 bins x 3 frames
    let cfg = StftConfig {
        window_length: 6,
        hop: 3,
        fft_size: 6,
        sample_rate: 16_000,
    };
    let frames = 3;
    let plane = cfg.bins() * frames;
    let scale = 1.7;
    let z: Vec<f64> = (0..2 * plane).map(|_| rng.uniform(-0.4, 0.4)).collect();
    let u: Vec<f64> = (0..2 * plane).map(|_| rng.gaussian()).collect();
    let spec = unflatten(cfg, frames, &z);
    let back = compress_ri_adjoint(&u, &spec, DEFAULT_COMPRESSION, scale)?;
    let mut g = flatten(&back);
    corrupt(Stage::CompressRi, opts, &mut g);
    let f = |v: &[f64]| {
        let ri = compress_ri(&unflatten(cfg, frames, v), DEFAULT_COMPRESSION, ScaleMode::Fixed(scale))
            .expect("valid");
        dot(ri.data(), &u)
    };
    let coords: Vec<usize> = (0..2 * plane).collect();
    Ok(normwise_difference_error(f, &z, &g, &coords, 1e-6))
}

fn toy_bank(rng: &mut SeededRng) -> FilterBank {
    let layers = [(3usize, 3usize, 3usize), (5, 2, 2)]
        .iter()
        .map(|&(h, w, n)| {
            let shape = LayerShape {
                height: h,
                width: w,
                filters: n,
            };
            let weights = (0..n * shape.weights_per_filter())
                .map(|_| rng.uniform(-0.5, 0.5))
                .collect();
            ConvLayer::new(shape, weights).expect("valid layer")
        })
        .collect();
    FilterBank::from_layers(0, layers).expect("non-empty")
}

fn forward_jacobian(rng: &mut SeededRng, opts: &GradcheckOptions) -> Result<f64> {
    let (bins, frames) = (12, 12);
    let bank = toy_bank(rng);
    let x: Vec<f64> = (0..2 * bins * frames).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let ri = RiStack::from_data(bins, frames, x.clone())?;
    let maps = forward(&ri, &bank)?;
    let cot = FeatureMaps {
        layers: maps
            .layers
            .iter()
            .map(|l| LayerMaps {
                data: (0..l.data.len()).map(|_| rng.gaussian()).collect(),
                ..l.clone()
            })
            .collect(),
    };
    let mut g = forward_adjoint(&cot, &ri, &bank)?;
    corrupt(Stage::Forward, opts, &mut g);
    let f = |v: &[f64]| {
        let ri = RiStack::from_data(bins, frames, v.to_vec()).expect("shape");
        let m = forward(&ri, &bank).expect("fits");
        m.layers
            .iter()
            .zip(&cot.layers)
            .map(|(a, b)| dot(&a.data, &b.data))
            .sum::<f64>()
    };
    let h = 1e-6;
    let gates = |v: &[f64]| {
        let ri = RiStack::from_data(bins, frames, v.to_vec()).expect("shape");
        active(&forward(&ri, &bank).expect("fits"))
    };
    let coords: Vec<usize> = (0..x.len())
        .filter(|&i| is_kink_free(gates, &x, i, h))
        .collect();
    Ok(normwise_difference_error(f, &x, &g, &coords, h))
}

fn gram_jacobian(rng: &mut SeededRng, opts: &GradcheckOptions) -> Result<f64> {
    let (nf, oh, ow) = (3, 4, 5);
    let x: Vec<f64> = (0..nf * oh * ow).map(|_| rng.uniform(0.0, 1.0)).collect();
    let maps = |v: &[f64]| FeatureMaps {
        layers: vec![LayerMaps {
            filters: nf,
            height: oh,
            width: ow,
            data: v.to_vec(),
        }],
    };
    let mut cot = gram(&maps(&x), true);
    for v in cot[0].data.iter_mut() {
        *v = rng.gaussian();
    }
    let back = gram_adjoint(&cot, &maps(&x), true)?;
    let mut g = back.layers[0].data.clone();
    corrupt(Stage::Gram, opts, &mut g);
    let f = |v: &[f64]| dot(&gram(&maps(v), true)[0].data, &cot[0].data);
    let coords: Vec<usize> = (0..x.len()).collect();
    // quadratic map: central differences are exact up to rounding
    Ok(normwise_difference_error(f, &x, &g, &coords, 1e-3))
}

fn end_to_end(rng: &mut SeededRng, opts: &GradcheckOptions) -> Result<f64> {
    let n = opts.num_samples;
    if n < 3 * StftConfig::default().window_length {
        return Err(crate::Error::InvalidConfig(
            "gradient check signal must span at least three windows".into(),
        ));
    }
    let bank = init_bank_with(opts.seed, opts.filters, &opts.layers)?;
    let original: Vec<f64> = (0..n).map(|_| 0.1 * rng.gaussian()).collect();
    let original = AudioBuffer::new(original, crate::ANALYSIS_RATE)?;
    let params = analyze(&original, &bank, StftConfig::default(), DEFAULT_COMPRESSION, true)?;
    let objective = TextureObjective::new(params, bank)?;
    let x: Vec<f64> = (0..n).map(|_| 0.1 * rng.gaussian()).collect();
    let (_, mut g) = objective.loss_and_gradient(&x)?;
    corrupt(Stage::EndToEnd, opts, &mut g);
    let h = 1e-6 * x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let (scale, compression) = (objective.scale(), objective.compression());
    let stft = Stft::new(*objective.stft_config())?;
    let gates = |v: &[f64]| {
        let spec = stft.forward(v).expect("valid length");
        let ri = compress_ri(&spec, compression, ScaleMode::Fixed(scale)).expect("valid");
        active(&forward(&ri, objective.bank()).expect("fits"))
    };
    // Interior samples only: the Hann taper leaves the first and last few
    // samples with gradients far below the differencing noise.
    let window = StftConfig::default().window_length;
    let interior = (n - 2 * window) as u64;
    let mut coords = Vec::with_capacity(opts.coordinates);
    let mut attempts = 0;
    while coords.len() < opts.coordinates && attempts < 50 * opts.coordinates {
        attempts += 1;
        let i = window + (rng.next_u64() % interior) as usize;
        if is_kink_free(gates, &x, i, h) {
            coords.push(i);
        }
    }
    let f = |v: &[f64]| objective.loss(v).expect("valid length");
    Ok(compare_with_differences(f, &x, &g, &coords, h))
}

