//! Sound texture analysis and resynthesis.
//!
//! A recording is described by the filter-by-filter cross-correlations of
//! random single-layer convolutional feature maps computed on a compressed
//! real/imaginary STFT. Synthesis optimizes raw time samples with L-BFGS until
//! the candidate's statistics match.
//!
//! The crate is `no_std` and needs only `alloc`. The `std` feature enables
//! runtime-detected SIMD kernels (see [`kernels`]); `parallel` adds rayon.
//! Every reduction keeps a fixed order, so results do not depend on the
//! thread count.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod audio;
pub mod error;
pub mod featurebank;
pub mod fft;
pub mod gradcheck;
pub mod kernels;
pub mod lbfgs;
mod linalg;
mod par;
pub mod objective;
pub mod rng;
pub mod tfr;

pub use audio::AudioBuffer;
pub use error::{Error, Result};
pub use featurebank::{FilterBank, GramTensor, ParameterMeta, ParameterSet};
pub use objective::TextureObjective;
pub use tfr::{ScaleMode, StftConfig};

/// Sample rate every analysis and synthesis entry point runs at.
pub const ANALYSIS_RATE: u32 = 16_000;
