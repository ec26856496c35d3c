use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use texsynth::pipeline::{synthesis_length, DEFAULT_INIT_RMS, OUTPUT_PEAK};
use texsynth::trace::read_trace;
use texsynth::wav::{read_wav, write_wav};
use texsynth::ParamFile;
use texsynth_core::audio::gaussian_noise;
use texsynth_core::rng::SeededRng;
use texsynth_core::AudioBuffer;

const SMALL_BANK: [&str; 4] = ["--filters", "4", "--layers", "0,3"];

fn texsynth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_texsynth"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn noise_wav(dir: &Path, name: &str, secs: f64, seed: u64) -> PathBuf {
    let mut r = SeededRng::new(seed, 0);
    let n = (secs * 16_000.0) as usize;
    let buf = AudioBuffer::new((0..n).map(|_| 0.2 * r.gaussian()).collect(), 16_000).unwrap();
    let p = dir.join(name);
    write_wav(&buf, &p).unwrap();
    p
}

fn analyze(dir: &Path, input: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let out = dir.join(name);
    let mut args = vec!["analyze", s(input), s(&out)];
    args.extend_from_slice(extra);
    let o = texsynth(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn analyze_is_deterministic_and_reports_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let wav = noise_wav(dir.path(), "in.wav", 1.0, 1);
    let mut args = SMALL_BANK.to_vec();
    args.extend(["--seed", "9"]);
    let a = analyze(dir.path(), &wav, "a.txp", &args);
    let b = analyze(dir.path(), &wav, "b.txp", &args);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let o = texsynth(&["analyze", s(&wav), s(&dir.path().join("c.txp")), "--filters", "4", "--layers", "0"]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("layer 0: filter 101x2, gram 4x4x157"), "{stdout}");
}

#[test]
fn short_input_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let wav = noise_wav(dir.path(), "short.wav", 0.3, 1);
    let o = texsynth(&["analyze", s(&wav), s(&dir.path().join("x.txp"))]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr)
        .contains("input shorter than minimum analyzable duration"));
}

#[test]
fn synthesis_from_params_equals_synthesis_from_wav() {
    let dir = tempfile::tempdir().unwrap();
    let wav = noise_wav(dir.path(), "in.wav", 1.0, 2);
    let mut bank = SMALL_BANK.to_vec();
    bank.extend(["--seed", "4"]);
    let params = analyze(dir.path(), &wav, "p.txp", &bank);
    let run = |input: &Path, name: &str| {
        let out = dir.path().join(name);
        let mut args = vec!["--deterministic", "synthesize", s(input), s(&out), "--iterations", "8"];
        args.extend_from_slice(&bank);
        let o = texsynth(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(out).unwrap()
    };
    let from_params = run(&params, "a.wav");
    assert_eq!(from_params, run(&params, "b.wav"));
    assert_eq!(from_params, run(&wav, "c.wav"));
}

#[test]
fn zero_iterations_writes_the_initial_noise() {
    let dir = tempfile::tempdir().unwrap();
    let wav = noise_wav(dir.path(), "in.wav", 1.0, 3);
    let params = analyze(dir.path(), &wav, "p.txp", &SMALL_BANK);
    let out = dir.path().join("o.wav");
    let o = texsynth(&["synthesize", s(&params), s(&out), "--iterations", "0", "--seed", "6"]);
    assert!(o.status.success());
    let pf = ParamFile::load(&params).unwrap();
    let n = synthesis_length(&pf, None).unwrap();
    let expect = gaussian_noise(n, DEFAULT_INIT_RMS, 6, 16_000)
        .unwrap()
        .peak_normalized(OUTPUT_PEAK);
    let got = read_wav(&out).unwrap();
    assert_eq!(got.len(), n);
    for (a, b) in got.samples().iter().zip(expect.samples()) {
        assert_eq!(*a, *b as f32 as f64);
    }
}

#[test]
fn trace_is_written_and_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let wav = noise_wav(dir.path(), "in.wav", 1.0, 4);
    let params = analyze(dir.path(), &wav, "p.txp", &SMALL_BANK);
    let out = dir.path().join("o.wav");
    let csv = dir.path().join("run.csv");
    let o = texsynth(&["synthesize", s(&params), s(&out), "--iterations", "15", "--trace", s(&csv)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("iter,loss,grad_inf_norm,step,fevals\n"));
    let trace = read_trace(&csv).unwrap();
    assert_eq!(trace.records[0].iteration, 0);
    for w in trace.records.windows(2) {
        assert!(w[1].loss <= w[0].loss);
    }
    assert!((read_wav(&out).unwrap().peak() - OUTPUT_PEAK).abs() < 1e-6);
}

#[test]
fn duration_below_minimum_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let wav = noise_wav(dir.path(), "in.wav", 1.0, 5);
    let params = analyze(dir.path(), &wav, "p.txp", &[]);
    let o = texsynth(&["synthesize", s(&params), s(&dir.path().join("o.wav")), "--duration", "0.3"]);
    assert!(!o.status.success());
}

#[test]
fn wrong_version_param_file_fails() {
    let dir = tempfile::tempdir().unwrap();
    let wav = noise_wav(dir.path(), "in.wav", 1.0, 5);
    let params = analyze(dir.path(), &wav, "p.txp", &SMALL_BANK);
    let mut bytes = std::fs::read(&params).unwrap();
    bytes[4] = 99;
    std::fs::write(&params, bytes).unwrap();
    let o = texsynth(&["synthesize", s(&params), s(&dir.path().join("o.wav"))]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("version 99"));
}

#[test]
fn anchor_defaults_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let wav = noise_wav(dir.path(), "in.wav", 0.5, 6);
    let a = dir.path().join("a.wav");
    let b = dir.path().join("b.wav");
    assert!(texsynth(&["anchor", s(&wav), s(&a)]).status.success());
    assert!(texsynth(&["anchor", s(&wav), s(&b), "--seed", "0"]).status.success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let reference = read_wav(&wav).unwrap();
    let anchor = read_wav(&a).unwrap();
    assert!((anchor.variance() - reference.variance()).abs() / reference.variance() < 1e-5);

    let o = texsynth(&["anchor", s(&dir.path().join("nope.wav")), s(&a)]);
    assert!(!o.status.success());
}

#[test]
fn gradcheck_passes_and_catches_corruption() {
    let ok = texsynth(&["gradcheck", "--seed", "42"]);
    assert!(ok.status.success());
    let text = String::from_utf8_lossy(&ok.stdout).to_string();
    assert!(text.contains("all checks passed"));
    assert_eq!(String::from_utf8_lossy(&texsynth(&["gradcheck", "--seed", "42"]).stdout), text);

    for stage in ["stft", "compress_ri", "forward", "gram", "end_to_end"] {
        let bad = texsynth(&["gradcheck", "--corrupt", stage]);
        assert!(!bad.status.success(), "{stage} corruption not detected");
    }
}
