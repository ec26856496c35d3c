//! Texture loss over the full analysis pipeline and its gradient with respect
//! to raw time samples.
//!
//! The loss is `sum_l ||H_target^l - H^l||_F / ||H_target^l||_F`. Candidates
//! are compressed with the target's fixed spectrogram scale.

use alloc::vec;
use alloc::vec::Vec;

use crate::audio::AudioBuffer;
use crate::error::{check_len, Error, Result};
use crate::featurebank::{
    forward, gram, gram_adjoint_layer, gram_layer, FilterBank, GramTensor, LayerMaps, LossNorm,
    ParameterMeta, ParameterSet, INPUT_CHANNELS,
};
use crate::linalg::{axpy, norm_sq};
use crate::par;
use crate::tfr::{compress_ri, compress_ri_adjoint, RiStack, ScaleMode, Stft, StftConfig};

/// Relative distance below which a layer counts as matched and contributes
/// no gradient.
pub const MATCH_TOLERANCE: f64 = 1e-12;

/// Extract the texture parameters of `buf`, normalizing its spectrogram by
/// its own largest modulus.
pub fn analyze(
    buf: &AudioBuffer,
    bank: &FilterBank,
    config: StftConfig,
    compression: f64,
    normalize_frames: bool,
) -> Result<ParameterSet> {
    if buf.sample_rate() != config.sample_rate {
        return Err(Error::WrongSampleRate {
            expected: config.sample_rate,
            actual: buf.sample_rate(),
        });
    }
    let stft = Stft::new(config)?;
    let spec = stft.forward(buf.samples())?;
    let ri = compress_ri(&spec, compression, ScaleMode::OwnMax)?;
    let maps = forward(&ri, bank)?;
    Ok(ParameterSet {
        grams: gram(&maps, normalize_frames),
        meta: ParameterMeta {
            bank_seed: bank.seed(),
            shapes: bank.shapes(),
            stft: config,
            compression,
            scale: ri.scale(),
            normalize_frames,
            frames: spec.frames(),
            loss_norm: LossNorm::GlobalFrobenius,
        },
    })
}

#[derive(Debug, Clone)]
pub struct TextureObjective {
    target: ParameterSet,
    bank: FilterBank,
    stft: Stft,
    target_norms: Vec<f64>,
}

struct LayerTerm {
    loss: f64,
    grad_ri: Option<Vec<f64>>,
}

impl TextureObjective {
    pub fn new(target: ParameterSet, bank: FilterBank) -> Result<Self> {
        let shapes = bank.shapes();
        check_len("objective layers", shapes.len(), target.grams.len())?;
        if target.meta.shapes != shapes {
            return Err(Error::InvalidConfig(
                "parameter set was computed with a different filter bank".into(),
            ));
        }
        if !(target.meta.scale > 0.0) || !(target.meta.compression > 0.0) {
            return Err(Error::InvalidConfig("scale and compression must be positive".into()));
        }
        let mut target_norms = Vec::with_capacity(shapes.len());
        for (l, (g, s)) in target.grams.iter().zip(&shapes).enumerate() {
            check_len("target gram filters", s.filters, g.filters)?;
            check_len("target gram size", g.filters * g.filters * g.height, g.data.len())?;
            let n = g.frobenius();
            if !(n > 0.0) {
                return Err(Error::DegenerateTarget(l));
            }
            target_norms.push(n);
        }
        let stft = Stft::new(target.meta.stft)?;
        Ok(Self {
            target,
            bank,
            stft,
            target_norms,
        })
    }

    pub fn target(&self) -> &ParameterSet {
        &self.target
    }

    pub fn bank(&self) -> &FilterBank {
        &self.bank
    }

    pub fn scale(&self) -> f64 {
        self.target.meta.scale
    }

    pub fn compression(&self) -> f64 {
        self.target.meta.compression
    }

    pub fn stft_config(&self) -> &StftConfig {
        &self.target.meta.stft
    }

    /// Shortest signal accepted by the objective.
    pub fn min_samples(&self) -> usize {
        let (_, w) = self.bank.max_extent();
        self.stft_config().samples_for(w)
    }

    pub fn loss(&self, x: &[f64]) -> Result<f64> {
        Ok(self.evaluate(x, None)?.0)
    }

    pub fn loss_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.loss_and_vjp(x, 1.0)
    }

    /// Loss plus `cotangent * dL/dx`.
    pub fn loss_and_vjp(&self, x: &[f64], cotangent: f64) -> Result<(f64, Vec<f64>)> {
        let (loss, grad) = self.evaluate(x, Some(cotangent))?;
        Ok((loss, grad.expect("gradient requested")))
    }

    /// Per-layer loss terms, in bank order.
    pub fn layer_losses(&self, x: &[f64]) -> Result<Vec<f64>> {
        let ri = self.compress(x)?.1;
        self.layer_terms(&ri, None)
            .map(|terms| terms.into_iter().map(|t| t.loss).collect())
    }

    fn compress(&self, x: &[f64]) -> Result<(crate::tfr::ComplexSpectrogram, RiStack)> {
        let spec = self.stft.forward(x)?;
        let ri = compress_ri(&spec, self.compression(), ScaleMode::Fixed(self.scale()))?;
        Ok((spec, ri))
    }

    fn layer_terms(&self, ri: &RiStack, cotangent: Option<f64>) -> Result<Vec<LayerTerm>> {
        let (h, w) = self.bank.max_extent();
        if ri.bins() < h || ri.frames() < w {
            return Err(Error::InputSmallerThanFilter {
                bins: ri.bins(),
                frames: ri.frames(),
                height: h,
                width: w,
            });
        }
        let terms = par::map_indexed(self.bank.layers().len(), |l| self.layer_term(l, ri, cotangent));
        terms.into_iter().collect()
    }

    fn layer_term(&self, l: usize, ri: &RiStack, cotangent: Option<f64>) -> Result<LayerTerm> {
        let layer = &self.bank.layers()[l];
        let target = &self.target.grams[l];
        let normalize = self.target.meta.normalize_frames;
        let maps = layer.forward(ri)?;
        check_len("candidate gram height", target.height, maps.height)?;
        let h = gram_layer(&maps, normalize);
        let diff: Vec<f64> = h.data.iter().zip(&target.data).map(|(a, b)| a - b).collect();
        let dist = libm::sqrt(norm_sq(&diff));
        let tn = self.target_norms[l];
        let loss = dist / tn;
        let Some(seed) = cotangent else {
            return Ok(LayerTerm { loss, grad_ri: None });
        };
        let mut grad_ri = vec![0.0; INPUT_CHANNELS * ri.bins() * ri.frames()];
        if dist >= MATCH_TOLERANCE * tn {
            let k = seed / (tn * dist);
            let g = GramTensor {
                filters: h.filters,
                height: h.height,
                data: diff.iter().map(|d| d * k).collect(),
            };
            let dmaps: LayerMaps = gram_adjoint_layer(&g, &maps, normalize)?;
            layer.backward_into(&dmaps, &maps, ri.bins(), ri.frames(), &mut grad_ri)?;
        }
        Ok(LayerTerm {
            loss,
            grad_ri: Some(grad_ri),
        })
    }

    fn evaluate(&self, x: &[f64], cotangent: Option<f64>) -> Result<(f64, Option<Vec<f64>>)> {
        let (spec, ri) = self.compress(x)?;
        let terms = self.layer_terms(&ri, cotangent)?;
        let mut loss = 0.0;
        for t in &terms {
            loss += t.loss;
        }
        if cotangent.is_none() {
            return Ok((loss, None));
        }
        let mut grad_ri = vec![0.0; ri.data().len()];
        for t in &terms {
            if let Some(g) = &t.grad_ri {
                axpy(1.0, g, &mut grad_ri);
            }
        }
        let grad_spec = compress_ri_adjoint(&grad_ri, &spec, self.compression(), self.scale())?;
        let grad = self.stft.adjoint(&grad_spec, x.len())?;
        Ok((loss, Some(grad)))
    }
}
