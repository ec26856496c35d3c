//! Analysis and synthesis orchestration shared by the CLI and the tests.

use std::time::{Duration, Instant};

use texsynth_core::audio::{gaussian_noise, normalize_energy, resample};
use texsynth_core::featurebank::{init_bank_with, DEFAULT_FILTERS, DEFAULT_SHAPES};
use texsynth_core::lbfgs::{
    minimize_with_observer, IterationRecord, LbfgsError, LbfgsOptions, RunTrace, Termination,
};
use texsynth_core::objective::analyze;
use texsynth_core::tfr::DEFAULT_COMPRESSION;
use texsynth_core::{AudioBuffer, FilterBank, StftConfig, TextureObjective, ANALYSIS_RATE};

use crate::paramfile::{ParamFile, ParamFileError};

/// Variance every input is brought to before analysis.
pub const ANALYSIS_VARIANCE: f64 = 0.01;
/// Peak level of written synthesis output.
pub const OUTPUT_PEAK: f64 = 0.9;
/// RMS of the initial noise; equals the RMS of every analyzed input.
pub const DEFAULT_INIT_RMS: f64 = 0.1;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("input shorter than minimum analyzable duration ({got:.3} s < {min:.3} s)")]
    TooShort { got: f64, min: f64 },
    #[error("requested duration {got:.3} s is below the minimum of {min:.3} s")]
    DurationTooShort { got: f64, min: f64 },
    #[error(transparent)]
    Core(#[from] texsynth_core::Error),
    #[error(transparent)]
    ParamFile(#[from] ParamFileError),
    #[error("optimizer: {0}")]
    Optimizer(String),
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

/// Which random filters to build.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BankConfig {
    pub seed: u64,
    pub filters: usize,
    /// Indices into the default shape list.
    pub layers: Vec<usize>,
}

impl Default for BankConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            filters: DEFAULT_FILTERS,
            layers: (0..DEFAULT_SHAPES.len()).collect(),
        }
    }
}

impl BankConfig {
    pub fn build(&self) -> Result<FilterBank> {
        Ok(init_bank_with(self.seed, self.filters, &self.layers)?)
    }
}

/// Shortest signal (in samples at the analysis rate) the bank can analyze.
pub fn min_samples(bank: &FilterBank) -> usize {
    StftConfig::default().samples_for(bank.max_extent().1)
}

/// Resample to the analysis rate and normalize the variance.
pub fn prepare_input(buf: &AudioBuffer, bank: &FilterBank) -> Result<AudioBuffer> {
    let at_rate = resample(buf, ANALYSIS_RATE)?;
    let min = min_samples(bank);
    if at_rate.len() < min {
        return Err(PipelineError::TooShort {
            got: at_rate.duration_secs(),
            min: min as f64 / ANALYSIS_RATE as f64,
        });
    }
    Ok(normalize_energy(&at_rate, ANALYSIS_VARIANCE)?)
}

pub fn analyze_audio(buf: &AudioBuffer, bank_cfg: &BankConfig) -> Result<ParamFile> {
    let bank = bank_cfg.build()?;
    let x = prepare_input(buf, &bank)?;
    let params = analyze(&x, &bank, StftConfig::default(), DEFAULT_COMPRESSION, true)?;
    Ok(ParamFile::new(params, bank)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    /// Output length in seconds; `None` keeps the analyzed length.
    pub duration: Option<f64>,
    pub iterations: usize,
    pub init_rms: f64,
    pub seed: u64,
    pub lbfgs: LbfgsOptions,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            duration: None,
            iterations: 5000,
            init_rms: DEFAULT_INIT_RMS,
            seed: 0,
            lbfgs: LbfgsOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthesisRun {
    /// Optimized samples before output normalization.
    pub raw: AudioBuffer,
    /// Peak-normalized output.
    pub output: AudioBuffer,
    pub trace: RunTrace,
    pub termination: Termination,
    pub elapsed: Duration,
}

/// Sample count for a synthesis run, snapped to a whole number of frames.
pub fn synthesis_length(pf: &ParamFile, duration: Option<f64>) -> Result<usize> {
    let cfg = pf.params.meta.stft;
    let min_frames = pf.bank.max_extent().1;
    let frames = match duration {
        None => pf.params.meta.frames,
        Some(d) => {
            let n = (d * cfg.sample_rate as f64).round().max(0.0) as usize;
            cfg.frames_for(n).unwrap_or(0)
        }
    };
    if frames < min_frames {
        let min = cfg.samples_for(min_frames) as f64 / cfg.sample_rate as f64;
        return Err(PipelineError::DurationTooShort {
            got: duration.unwrap_or(cfg.samples_for(frames) as f64 / cfg.sample_rate as f64),
            min,
        });
    }
    Ok(cfg.samples_for(frames))
}

pub fn synthesize<O>(pf: &ParamFile, cfg: &SynthConfig, observe: O) -> Result<SynthesisRun>
where
    O: FnMut(&IterationRecord),
{
    let start = Instant::now();
    let n = synthesis_length(pf, cfg.duration)?;
    let rate = pf.params.meta.stft.sample_rate;
    let objective = TextureObjective::new(pf.params.clone(), pf.bank.clone())?;
    let x0 = gaussian_noise(n, cfg.init_rms, cfg.seed, rate)?;
    let opts = LbfgsOptions {
        max_iterations: cfg.iterations,
        ..cfg.lbfgs
    };
    let found = minimize_with_observer(
        |x: &[f64]| objective.loss_and_gradient(x),
        x0.samples(),
        &opts,
        observe,
    )
    .map_err(|e| match e {
        LbfgsError::Objective(inner) => PipelineError::Core(inner),
        other => PipelineError::Optimizer(other.to_string()),
    })?;
    let raw = AudioBuffer::new(found.x, rate)?;
    Ok(SynthesisRun {
        output: raw.peak_normalized(OUTPUT_PEAK),
        raw,
        trace: found.trace,
        termination: found.termination,
        elapsed: start.elapsed(),
    })
}

/// Process-wide reference mode: scalar kernels on a single thread.
pub fn enable_deterministic_mode() -> std::result::Result<(), rayon::ThreadPoolBuildError> {
    texsynth_core::kernels::set_reference_kernels(true);
    rayon::ThreadPoolBuilder::new().num_threads(1).build_global()
}
