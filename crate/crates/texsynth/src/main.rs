use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use texsynth::paramfile::{looks_like_param_file, ParamFile};
use texsynth::pipeline::{
    analyze_audio, enable_deterministic_mode, synthesize, BankConfig, SynthConfig,
    DEFAULT_INIT_RMS,
};
use texsynth::{trace, wav};
use texsynth_core::audio::{make_anchor, resample};
use texsynth_core::featurebank::{DEFAULT_FILTERS, DEFAULT_SHAPES};
use texsynth_core::gradcheck::{self, GradcheckOptions, Stage};
use texsynth_core::lbfgs::Termination;
use texsynth_core::ANALYSIS_RATE;

/// Sound texture analysis and resynthesis.
#[derive(Parser)]
#[command(name = "texsynth", version)]
struct Cli {
    /// Single-threaded scalar reference mode; runs are bit-reproducible.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract texture statistics from a WAV file into a parameter file.
    Analyze {
        input: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        bank: BankArgs,
    },
    /// Synthesize a texture from a parameter file or directly from a WAV file.
    Synthesize {
        /// Parameter file or WAV file.
        input: PathBuf,
        output: PathBuf,
        /// Output length in seconds [default: length of the analyzed input].
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, default_value_t = 5000)]
        iterations: usize,
        /// RMS of the initial noise.
        #[arg(long, default_value_t = DEFAULT_INIT_RMS)]
        init_rms: f64,
        /// Trace CSV path [default: OUTPUT with a .csv extension].
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Seeds the initial noise, and the filter bank when INPUT is a WAV file.
        #[command(flatten)]
        bank: BankArgs,
    },
    /// Spectrum-matched noise with the energy of the input.
    Anchor {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Finite-difference check of every gradient stage.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Filters per layer for the end-to-end check.
        #[arg(long, default_value_t = 8)]
        filters: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [0usize, 1])]
        layers: Vec<usize>,
        /// Signal length for the end-to-end check.
        #[arg(long, default_value_t = 4000)]
        samples: usize,
        #[arg(long, hide = true, value_parser = parse_stage)]
        corrupt: Option<Stage>,
    },
}

#[derive(Args)]
struct BankArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Filters per layer.
    #[arg(long, default_value_t = DEFAULT_FILTERS)]
    filters: usize,
    /// Comma-separated layer indices into the default shape list.
    #[arg(long, value_delimiter = ',', default_values_t = 0..DEFAULT_SHAPES.len())]
    layers: Vec<usize>,
}

impl BankArgs {
    fn config(&self) -> BankConfig {
        BankConfig {
            seed: self.seed,
            filters: self.filters,
            layers: self.layers.clone(),
        }
    }
}

fn parse_stage(s: &str) -> Result<Stage, String> {
    Stage::from_name(s).ok_or_else(|| {
        let names: Vec<_> = Stage::ALL.iter().map(|s| s.name()).collect();
        format!("unknown stage {s:?}; expected one of {}", names.join(", "))
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    if cli.deterministic {
        if let Err(e) = enable_deterministic_mode() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Analyze {
            input,
            output,
            bank,
        } => {
            let pf = analyze_file(&input, &bank.config())?;
            pf.save(&output)?;
            for (l, (g, s)) in pf.params.grams.iter().zip(pf.bank.shapes()).enumerate() {
                println!(
                    "layer {l}: filter {}x{}, gram {}x{}x{}",
                    s.height, s.width, g.filters, g.filters, g.height
                );
            }
            println!("wrote {}", output.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Synthesize {
            input,
            output,
            duration,
            iterations,
            init_rms,
            trace: trace_path,
            bank,
        } => {
            let head = std::fs::read(&input)
                .with_context(|| format!("cannot read {}", input.display()))?;
            let pf = if looks_like_param_file(&head) {
                ParamFile::from_bytes(&head)?
            } else {
                analyze_file(&input, &bank.config())?
            };
            let cfg = SynthConfig {
                duration,
                iterations,
                init_rms,
                seed: bank.seed,
                ..Default::default()
            };
            let run = synthesize(&pf, &cfg, |r| {
                if r.iteration % 50 == 0 {
                    info!("iter {:5}  loss {:.6e}  |g| {:.3e}", r.iteration, r.loss, r.grad_inf_norm);
                }
            })?;
            let trace_path = trace_path.unwrap_or_else(|| output.with_extension("csv"));
            wav::write_wav(&run.output, &output)?;
            trace::save_trace(&run.trace, &trace_path)
                .with_context(|| format!("cannot write {}", trace_path.display()))?;
            let last = run.trace.records.last().expect("trace has the initial record");
            info!(
                "{} iterations, {} evaluations, final loss {:.6e}, {:.1} s",
                run.trace.iterations(),
                run.trace.total_fevals(),
                last.loss,
                run.elapsed.as_secs_f64()
            );
            println!("wrote {} and {}", output.display(), trace_path.display());
            if run.termination == Termination::LineSearchFailed {
                warn!("line search failed at iteration {}; partial result written", last.iteration);
                return Ok(ExitCode::from(3));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Anchor {
            input,
            output,
            seed,
        } => {
            let buf = resample(&wav::read_wav(&input)?, ANALYSIS_RATE)?;
            wav::write_wav(&make_anchor(&buf, seed)?, &output)?;
            println!("wrote {}", output.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Gradcheck {
            seed,
            filters,
            layers,
            samples,
            corrupt,
        } => {
            let opts = GradcheckOptions {
                seed,
                filters,
                layers,
                num_samples: samples,
                corrupt,
                ..Default::default()
            };
            let report = gradcheck::run(&opts)?;
            print!("{report}");
            Ok(if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
    }
}

fn analyze_file(input: &Path, bank: &BankConfig) -> Result<ParamFile> {
    Ok(analyze_audio(&wav::read_wav(input)?, bank)?)
}
