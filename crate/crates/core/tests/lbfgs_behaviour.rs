use std::cell::RefCell;
use std::convert::Infallible;

use proptest::prelude::*;
use texsynth_core::lbfgs::{minimize, LbfgsOptions, Minimum, Termination};

type Eval = (Vec<f64>, f64, Vec<f64>);

/// Runs the minimizer while logging every objective evaluation.
fn instrumented<F>(f: F, x0: &[f64], opts: &LbfgsOptions) -> (Minimum, Vec<Eval>)
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let log = RefCell::new(Vec::new());
    let m = minimize(
        |x: &[f64]| -> Result<_, Infallible> {
            let (v, g) = f(x);
            log.borrow_mut().push((x.to_vec(), v, g.clone()));
            Ok((v, g))
        },
        x0,
        opts,
    )
    .unwrap();
    (m, log.into_inner())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Recover accepted iterates from the evaluation log and check both strong
/// Wolfe conditions along every accepted step.
fn assert_strong_wolfe(m: &Minimum, log: &[Eval], opts: &LbfgsOptions) {
    let mut prev = &log[0];
    for rec in &m.trace.records[1..] {
        let next = log
            .iter()
            .rev()
            .find(|e| e.1.to_bits() == rec.loss.to_bits())
            .expect("accepted point was evaluated");
        let step: Vec<f64> = next.0.iter().zip(&prev.0).map(|(a, b)| a - b).collect();
        let slope0 = dot(&prev.2, &step);
        let slope1 = dot(&next.2, &step);
        assert!(slope0 < 0.0, "iteration {}: not a descent step", rec.iteration);
        assert!(
            next.1 <= prev.1 + opts.wolfe_c1 * slope0,
            "iteration {}: sufficient decrease violated",
            rec.iteration
        );
        assert!(
            slope1.abs() <= opts.wolfe_c2 * slope0.abs(),
            "iteration {}: curvature condition violated",
            rec.iteration
        );
        assert!(next.1 < prev.1);
        prev = next;
    }
}

fn rosenbrock(x: &[f64]) -> (f64, Vec<f64>) {
    let (a, b) = (x[0], x[1]);
    let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
    let g = vec![
        -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
        200.0 * (b - a * a),
    ];
    (f, g)
}

#[test]
fn quadratic_converges_quickly() {
    let a: Vec<f64> = (0..10).map(|i| i as f64 - 4.5).collect();
    let f = |x: &[f64]| {
        let d: Vec<f64> = x.iter().zip(&a).map(|(u, v)| u - v).collect();
        (dot(&d, &d), d.iter().map(|v| 2.0 * v).collect())
    };
    let opts = LbfgsOptions::default();
    let (m, log) = instrumented(f, &[0.0; 10], &opts);
    assert!(m.trace.iterations() <= 15, "{} iterations", m.trace.iterations());
    for (u, v) in m.x.iter().zip(&a) {
        assert!((u - v).abs() < 1e-8);
    }
    assert_strong_wolfe(&m, &log, &opts);
}

#[test]
fn rosenbrock_converges() {
    let opts = LbfgsOptions::default();
    let (m, log) = instrumented(rosenbrock, &[-1.2, 1.0], &opts);
    assert!(m.trace.iterations() <= 100, "{} iterations", m.trace.iterations());
    assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6, "{:?}", m.x);
    assert_strong_wolfe(&m, &log, &opts);
}

#[test]
fn stationary_start_takes_no_steps() {
    let (m, _) = instrumented(rosenbrock, &[1.0, 1.0], &LbfgsOptions::default());
    assert_eq!(m.trace.iterations(), 0);
    assert_eq!(m.termination, Termination::GradientTolerance);
    assert_eq!(m.x, vec![1.0, 1.0]);
}

#[test]
fn runs_are_deterministic() {
    let opts = LbfgsOptions {
        memory: 3,
        ..Default::default()
    };
    let (a, _) = instrumented(rosenbrock, &[-1.2, 1.0], &opts);
    let (b, _) = instrumented(rosenbrock, &[-1.2, 1.0], &opts);
    assert_eq!(a.x, b.x);
    assert_eq!(a.trace, b.trace);
}

fn ill_conditioned(scales: &[f64]) -> impl Fn(&[f64]) -> (f64, Vec<f64>) + '_ {
    move |x: &[f64]| {
        let f = x.iter().zip(scales).map(|(v, s)| s * v * v + 0.1 * v.powi(4)).sum();
        let g = x.iter().zip(scales).map(|(v, s)| 2.0 * s * v + 0.4 * v.powi(3)).collect();
        (f, g)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn accepted_steps_satisfy_strong_wolfe_and_decrease(
        x0 in proptest::collection::vec(-3.0f64..3.0, 6),
        scales in proptest::collection::vec(0.01f64..100.0, 6),
        memory in 1usize..12,
    ) {
        let opts = LbfgsOptions { memory, max_iterations: 60, ..Default::default() };
        let (m, log) = instrumented(ill_conditioned(&scales), &x0, &opts);
        assert_strong_wolfe(&m, &log, &opts);
        for w in m.trace.records.windows(2) {
            prop_assert!(w[1].loss < w[0].loss);
        }
    }
}
