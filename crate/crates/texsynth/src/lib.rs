//! File formats and orchestration around `texsynth-core`: WAV input/output,
//! parameter files, optimizer traces, and the analyze/synthesize pipeline
//! used by the `texsynth` binary.

pub mod paramfile;
pub mod pipeline;
pub mod trace;
pub mod wav;

pub use paramfile::ParamFile;
pub use pipeline::{BankConfig, SynthConfig, SynthesisRun};
