//! Random single-layer convolutional feature extractors and Gram statistics.
//!
//! Each layer is an untrained bank of 2-channel filters applied as a valid
//! cross-correlation (stride 1, no padding, no bias) followed by a ReLU. The
//! texture statistics are the filter-by-filter inner products of the feature
//! maps summed over time only, so the frequency index survives.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_len, Error, Result};
use crate::kernels::{axpy, correlate, dot};
use crate::par;
use crate::rng::SeededRng;
use crate::tfr::{RiStack, StftConfig};

/// Filter extents as (frequency, time), in network order.
pub const DEFAULT_SHAPES: [(usize, usize); 8] = [
    (101, 2),
    (53, 3),
    (11, 5),
    (3, 3),
    (5, 5),
    (11, 11),
    (19, 19),
    (27, 27),
];
pub const DEFAULT_FILTERS: usize = 128;
pub const WEIGHT_BOUND: f64 = 0.05;
pub const INPUT_CHANNELS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub height: usize,
    pub width: usize,
    pub filters: usize,
}

impl LayerShape {
    pub fn weights_per_filter(&self) -> usize {
        self.height * self.width * INPUT_CHANNELS
    }

    pub fn output_dims(&self, bins: usize, frames: usize) -> Option<(usize, usize)> {
        if bins < self.height || frames < self.width {
            None
        } else {
            Some((bins - self.height + 1, frames - self.width + 1))
        }
    }
}

/// One convolutional layer. Weights are stored `[filter][height][width][channel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    shape: LayerShape,
    weights: Vec<f64>,
    // weights regrouped as contiguous time taps: [filter][channel][dm][dn]
    fwd_taps: Vec<f64>,
    // time-reversed taps for the adjoint: [channel][filter][dm][dn]
    bwd_taps: Vec<f64>,
}

impl ConvLayer {
    pub fn new(shape: LayerShape, weights: Vec<f64>) -> Result<Self> {
        if shape.height == 0 || shape.width == 0 || shape.filters == 0 {
            return Err(Error::InvalidConfig("empty layer shape".into()));
        }
        check_len(
            "layer weights",
            shape.filters * shape.weights_per_filter(),
            weights.len(),
        )?;
        let (h, w, nf) = (shape.height, shape.width, shape.filters);
        let mut fwd_taps = vec![0.0; weights.len()];
        let mut bwd_taps = vec![0.0; weights.len()];
        for f in 0..nf {
            for c in 0..INPUT_CHANNELS {
                for dm in 0..h {
                    for dn in 0..w {
                        let v = weights[((f * h + dm) * w + dn) * INPUT_CHANNELS + c];
                        fwd_taps[((f * INPUT_CHANNELS + c) * h + dm) * w + dn] = v;
                        bwd_taps[((c * nf + f) * h + dm) * w + (w - 1 - dn)] = v;
                    }
                }
            }
        }
        Ok(Self {
            shape,
            weights,
            fwd_taps,
            bwd_taps,
        })
    }

    pub fn shape(&self) -> LayerShape {
        self.shape
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn taps<'a>(&self, table: &'a [f64], outer: usize, dm: usize) -> &'a [f64] {
        let (h, w) = (self.shape.height, self.shape.width);
        let at = (outer * h + dm) * w;
        &table[at..at + w]
    }

    fn check_input(&self, ri: &RiStack) -> Result<(usize, usize)> {
        self.shape
            .output_dims(ri.bins(), ri.frames())
            .ok_or(Error::InputSmallerThanFilter {
                bins: ri.bins(),
                frames: ri.frames(),
                height: self.shape.height,
                width: self.shape.width,
            })
    }

    /// Convolution followed by ReLU.
    pub fn forward(&self, ri: &RiStack) -> Result<LayerMaps> {
        let (oh, ow) = self.check_input(ri)?;
        let s = self.shape;
        let frames = ri.frames();
        let chans = [ri.channel(0), ri.channel(1)];
        let mut data = vec![0.0; s.filters * oh * ow];
        par::for_each_chunk(&mut data, ow, |idx, row| {
            let f = idx / oh;
            let m = idx % oh;
            for dm in 0..s.height {
                let base = (m + dm) * frames;
                for (c, chan) in chans.iter().enumerate() {
                    let taps = self.taps(&self.fwd_taps, f * INPUT_CHANNELS + c, dm);
                    correlate(row, &chan[base..base + frames], taps);
                }
            }
            for v in row.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        });
        Ok(LayerMaps {
            filters: s.filters,
            height: oh,
            width: ow,
            data,
        })
    }

    /// Vector-Jacobian product of [`ConvLayer::forward`] given its output.
    ///
    /// The ReLU gate is read from `maps`: an output is active iff it is
    /// strictly positive. The result is added into `grad_ri`, which has the
    /// `[channel][bin][frame]` layout of `ri`.
    pub fn backward_into(
        &self,
        grad_maps: &LayerMaps,
        maps: &LayerMaps,
        bins: usize,
        frames: usize,
        grad_ri: &mut [f64],
    ) -> Result<()> {
        let s = self.shape;
        let (oh, ow) = s.output_dims(bins, frames).ok_or(Error::InputSmallerThanFilter {
            bins,
            frames,
            height: s.height,
            width: s.width,
        })?;
        check_len("layer adjoint cotangent", s.filters * oh * ow, grad_maps.data.len())?;
        check_len("layer adjoint maps", s.filters * oh * ow, maps.data.len())?;
        check_len("layer adjoint input", INPUT_CHANNELS * bins * frames, grad_ri.len())?;
        // Gated cotangent rows, zero-padded by width-1 on both sides so the
        // adjoint becomes a plain correlation with time-reversed taps.
        let pad = s.width - 1;
        let plen = ow + 2 * pad;
        let mut padded = vec![0.0; s.filters * oh * plen];
        for (k, prow) in padded.chunks_exact_mut(plen).enumerate() {
            let g = &grad_maps.data[k * ow..(k + 1) * ow];
            let v = &maps.data[k * ow..(k + 1) * ow];
            for ((p, g), v) in prow[pad..pad + ow].iter_mut().zip(g).zip(v) {
                *p = if *v > 0.0 { *g } else { 0.0 };
            }
        }
        // Each input row gathers from every output row it fed, which keeps
        // the summation order independent of how rows are scheduled.
        par::for_each_chunk(grad_ri, frames, |idx, row| {
            let c = idx / bins;
            let r = idx % bins;
            let dm_lo = (r + 1).saturating_sub(oh);
            let dm_hi = s.height.min(r + 1);
            for f in 0..s.filters {
                for dm in dm_lo..dm_hi {
                    let at = (f * oh + r - dm) * plen;
                    let taps = self.taps(&self.bwd_taps, c * s.filters + f, dm);
                    correlate(row, &padded[at..at + plen], taps);
                }
            }
        });
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    seed: u64,
    layers: Vec<ConvLayer>,
}

impl FilterBank {
    pub fn from_layers(seed: u64, layers: Vec<ConvLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidConfig("filter bank has no layers".into()));
        }
        Ok(Self { seed, layers })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn layers(&self) -> &[ConvLayer] {
        &self.layers
    }

    pub fn shapes(&self) -> Vec<LayerShape> {
        self.layers.iter().map(|l| l.shape).collect()
    }

    /// Largest (height, width) over all layers.
    pub fn max_extent(&self) -> (usize, usize) {
        self.layers.iter().fold((0, 0), |(h, w), l| {
            (h.max(l.shape.height), w.max(l.shape.width))
        })
    }
}

/// Full-size bank: all eight shapes with 128 filters each.
pub fn init_bank(seed: u64) -> FilterBank {
    init_bank_with(seed, DEFAULT_FILTERS, &[0, 1, 2, 3, 4, 5, 6, 7])
        .expect("default bank layout is valid")
}

/// Bank restricted to `filters` filters and a subset of the default shapes.
///
/// Layer `i` of [`DEFAULT_SHAPES`] always draws from RNG stream `i`, and
/// filters are drawn in order, so a reduced bank is a prefix-slice of the
/// full one.
pub fn init_bank_with(seed: u64, filters: usize, layer_indices: &[usize]) -> Result<FilterBank> {
    if filters == 0 {
        return Err(Error::InvalidConfig("filter count must be positive".into()));
    }
    let layers = layer_indices
        .iter()
        .map(|&i| {
            let &(height, width) = DEFAULT_SHAPES
                .get(i)
                .ok_or_else(|| Error::InvalidConfig(alloc::format!("no layer {i}")))?;
            let shape = LayerShape {
                height,
                width,
                filters,
            };
            let mut rng = SeededRng::new(seed, i as u64);
            let weights = (0..filters * shape.weights_per_filter())
                .map(|_| rng.uniform(-WEIGHT_BOUND, WEIGHT_BOUND))
                .collect();
            ConvLayer::new(shape, weights)
        })
        .collect::<Result<Vec<_>>>()?;
    FilterBank::from_layers(seed, layers)
}

/// Post-ReLU outputs of one layer, stored `[filter][freq][time]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerMaps {
    pub filters: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl LayerMaps {
    pub fn zeros(filters: usize, height: usize, width: usize) -> Self {
        Self {
            filters,
            height,
            width,
            data: vec![0.0; filters * height * width],
        }
    }

    pub fn get(&self, filter: usize, m: usize, n: usize) -> f64 {
        self.data[(filter * self.height + m) * self.width + n]
    }

    pub fn row(&self, filter: usize, m: usize) -> &[f64] {
        let start = (filter * self.height + m) * self.width;
        &self.data[start..start + self.width]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMaps {
    pub layers: Vec<LayerMaps>,
}

pub fn forward(ri: &RiStack, bank: &FilterBank) -> Result<FeatureMaps> {
    for layer in &bank.layers {
        layer.check_input(ri)?;
    }
    let layers = bank
        .layers
        .iter()
        .map(|l| l.forward(ri))
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureMaps { layers })
}

/// Gradient with respect to the RI stack. Recomputes the forward pass to
/// obtain the ReLU gates.
pub fn forward_adjoint(grad: &FeatureMaps, ri: &RiStack, bank: &FilterBank) -> Result<Vec<f64>> {
    check_len("feature adjoint layers", bank.layers.len(), grad.layers.len())?;
    let maps = forward(ri, bank)?;
    let mut out = vec![0.0; ri.data().len()];
    for ((layer, g), m) in bank.layers.iter().zip(&grad.layers).zip(&maps.layers) {
        layer.backward_into(g, m, ri.bins(), ri.frames(), &mut out)?;
    }
    Ok(out)
}

/// Per-layer Gram tensor stored `[i][j][m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramTensor {
    pub filters: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl GramTensor {
    pub fn zeros(filters: usize, height: usize) -> Self {
        Self {
            filters,
            height,
            data: vec![0.0; filters * filters * height],
        }
    }

    pub fn get(&self, i: usize, j: usize, m: usize) -> f64 {
        self.data[(i * self.filters + j) * self.height + m]
    }

    pub fn set(&mut self, i: usize, j: usize, m: usize, v: f64) {
        self.data[(i * self.filters + j) * self.height + m] = v;
    }

    pub fn frobenius(&self) -> f64 {
        libm::sqrt(crate::linalg::norm_sq(&self.data))
    }
}

pub fn gram_layer(maps: &LayerMaps, normalize_frames: bool) -> GramTensor {
    let (nf, oh) = (maps.filters, maps.height);
    let norm = if normalize_frames {
        1.0 / maps.width as f64
    } else {
        1.0
    };
    let mut out = GramTensor::zeros(nf, oh);
    // dot(a, b) and dot(b, a) round identically, so the full tensor is
    // exactly symmetric without mirroring.
    par::for_each_chunk(&mut out.data, nf * oh, |i, block| {
        for j in 0..nf {
            for m in 0..oh {
                block[j * oh + m] = dot(maps.row(i, m), maps.row(j, m)) * norm;
            }
        }
    });
    out
}

pub fn gram(maps: &FeatureMaps, normalize_frames: bool) -> Vec<GramTensor> {
    maps.layers
        .iter()
        .map(|l| gram_layer(l, normalize_frames))
        .collect()
}

pub fn gram_adjoint_layer(
    grad: &GramTensor,
    maps: &LayerMaps,
    normalize_frames: bool,
) -> Result<LayerMaps> {
    let (nf, oh, ow) = (maps.filters, maps.height, maps.width);
    check_len("gram adjoint filters", nf, grad.filters)?;
    check_len("gram adjoint height", oh, grad.height)?;
    let norm = if normalize_frames { 1.0 / ow as f64 } else { 1.0 };
    let mut out = LayerMaps::zeros(nf, oh, ow);
    par::for_each_chunk(&mut out.data, oh * ow, |i, block| {
        for m in 0..oh {
            let dst = &mut block[m * ow..(m + 1) * ow];
            for j in 0..nf {
                let coeff = (grad.get(i, j, m) + grad.get(j, i, m)) * norm;
                if coeff != 0.0 {
                    axpy(coeff, maps.row(j, m), dst);
                }
            }
        }
    });
    Ok(out)
}

pub fn gram_adjoint(
    grad: &[GramTensor],
    maps: &FeatureMaps,
    normalize_frames: bool,
) -> Result<FeatureMaps> {
    check_len("gram adjoint layers", maps.layers.len(), grad.len())?;
    let layers = grad
        .iter()
        .zip(&maps.layers)
        .map(|(g, m)| gram_adjoint_layer(g, m, normalize_frames))
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureMaps { layers })
}

/// Convention used to turn Gram differences into a scalar loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossNorm {
    /// Frobenius norm over the whole `(i, j, m)` tensor of each layer.
    GlobalFrobenius,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterMeta {
    pub bank_seed: u64,
    pub shapes: Vec<LayerShape>,
    pub stft: StftConfig,
    pub compression: f64,
    pub scale: f64,
    pub normalize_frames: bool,
    /// Frame count of the analyzed signal.
    pub frames: usize,
    pub loss_norm: LossNorm,
}

/// The texture fingerprint: one Gram tensor per layer plus how it was made.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    pub grams: Vec<GramTensor>,
    pub meta: ParameterMeta,
}
