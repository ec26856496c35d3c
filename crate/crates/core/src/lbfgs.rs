//! Limited-memory BFGS with a strong Wolfe line search.
//!
//! The minimizer is generic: it sees a vector in and a value plus gradient
//! out. Search directions come from the standard two-loop recursion over the
//! most recent `memory` curvature pairs, with the initial inverse Hessian
//! scaled by `s'y / y'y`. The line search brackets and then zooms with
//! safeguarded cubic interpolation.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{axpy, dot, inf_norm};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop once `||g||_inf` falls below this.
    pub gradient_tolerance: f64,
    pub wolfe_c1: f64,
    pub wolfe_c2: f64,
    /// Function evaluations allowed per line search.
    pub max_line_search_steps: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iterations: 5000,
            gradient_tolerance: 1e-9,
            wolfe_c1: 1e-4,
            wolfe_c2: 0.9,
            max_line_search_steps: 20,
        }
    }
}

impl LbfgsOptions {
    fn validate(&self) -> Result<(), &'static str> {
        if self.memory == 0 {
            return Err("memory must be at least 1");
        }
        if !(0.0 < self.wolfe_c1 && self.wolfe_c1 < self.wolfe_c2 && self.wolfe_c2 < 1.0) {
            return Err("wolfe constants must satisfy 0 < c1 < c2 < 1");
        }
        if self.max_line_search_steps == 0 {
            return Err("line search needs at least one step");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub loss: f64,
    pub grad_inf_norm: f64,
    /// Accepted step length (0 for the initial record).
    pub step: f64,
    /// Function evaluations spent on this iteration.
    pub fevals: usize,
}

/// Iteration 0 is the starting point; every later record is an accepted step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunTrace {
    pub records: Vec<IterationRecord>,
}

impl RunTrace {
    pub fn total_fevals(&self) -> usize {
        self.records.iter().map(|r| r.fevals).sum()
    }

    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    MaxIterations,
    GradientTolerance,
    /// No step satisfying the Wolfe conditions was found; `x` is the best
    /// accepted iterate.
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub loss: f64,
    pub gradient: Vec<f64>,
    pub trace: RunTrace,
    pub termination: Termination,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LbfgsError<E> {
    #[error("invalid options: {0}")]
    InvalidOptions(&'static str),
    #[error("objective returned a non-finite value or gradient at iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error("gradient has length {actual}, expected {expected}")]
    GradientLength { expected: usize, actual: usize },
    #[error("objective failed: {0}")]
    Objective(E),
}

pub fn minimize<F, E>(f: F, x0: &[f64], opts: &LbfgsOptions) -> Result<Minimum, LbfgsError<E>>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>), E>,
{
    minimize_with_observer(f, x0, opts, |_| {})
}

/// Same as [`minimize`], calling `observe` with every trace record as it is
/// produced.
pub fn minimize_with_observer<F, E, O>(
    mut f: F,
    x0: &[f64],
    opts: &LbfgsOptions,
    mut observe: O,
) -> Result<Minimum, LbfgsError<E>>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>), E>,
    O: FnMut(&IterationRecord),
{
    opts.validate().map_err(LbfgsError::InvalidOptions)?;
    let n = x0.len();
    let mut eval = |x: &[f64]| -> Result<(f64, Vec<f64>), LbfgsError<E>> {
        let (v, g) = f(x).map_err(LbfgsError::Objective)?;
        if g.len() != n {
            return Err(LbfgsError::GradientLength {
                expected: n,
                actual: g.len(),
            });
        }
        Ok((v, g))
    };

    let mut x = x0.to_vec();
    let (mut fx, mut g) = eval(&x)?;
    if !is_finite(fx, &g) {
        return Err(LbfgsError::NonFinite { iteration: 0 });
    }
    let mut trace = RunTrace::default();
    let first = IterationRecord {
        iteration: 0,
        loss: fx,
        grad_inf_norm: inf_norm(&g),
        step: 0.0,
        fevals: 1,
    };
    observe(&first);
    trace.records.push(first);

    let mut history: VecDeque<Pair> = VecDeque::with_capacity(opts.memory);
    let mut termination = Termination::MaxIterations;

    for iteration in 1..=opts.max_iterations {
        if inf_norm(&g) < opts.gradient_tolerance {
            termination = Termination::GradientTolerance;
            break;
        }
        let mut fevals = 0;
        let mut accepted = None;
        // A failed search along the quasi-Newton direction is retried once
        // along steepest descent with the memory cleared.
        for attempt in 0..2 {
            let mut d = two_loop(&g, &history);
            let mut slope = dot(&g, &d);
            if !(slope < 0.0) || !slope.is_finite() {
                history.clear();
                d = g.iter().map(|v| -v).collect();
                slope = dot(&g, &d);
            }
            let alpha0 = if history.is_empty() {
                (1.0 / libm::sqrt(-slope)).min(1.0)
            } else {
                1.0
            };
            let ls = line_search(&mut eval, &x, fx, slope, &d, alpha0, opts)?;
            fevals += ls.evals;
            match ls.point {
                Some(p) => {
                    accepted = Some((d, p));
                    break;
                }
                None if attempt == 0 && !history.is_empty() => history.clear(),
                None => break,
            }
        }
        let Some((d, point)) = accepted else {
            termination = Termination::LineSearchFailed;
            break;
        };
        let s: Vec<f64> = d.iter().map(|v| point.alpha * v).collect();
        let y: Vec<f64> = point.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        let bound = 1e-10 * libm::sqrt(dot(&s, &s)) * libm::sqrt(dot(&y, &y));
        if sy > bound {
            if history.len() == opts.memory {
                history.pop_front();
            }
            let yy = dot(&y, &y);
            history.push_back(Pair {
                rho: 1.0 / sy,
                gamma: sy / yy,
                s,
                y,
            });
        }
        axpy(point.alpha, &d, &mut x);
        fx = point.f;
        g = point.g;
        let rec = IterationRecord {
            iteration,
            loss: fx,
            grad_inf_norm: inf_norm(&g),
            step: point.alpha,
            fevals,
        };
        observe(&rec);
        trace.records.push(rec);
    }
    if termination == Termination::MaxIterations && inf_norm(&g) < opts.gradient_tolerance {
        termination = Termination::GradientTolerance;
    }
    Ok(Minimum {
        x,
        loss: fx,
        gradient: g,
        trace,
        termination,
    })
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
    gamma: f64,
}

fn is_finite(v: f64, g: &[f64]) -> bool {
    v.is_finite() && g.iter().all(|x| x.is_finite())
}

/// Returns `-H g` for the implicit inverse Hessian `H`.
fn two_loop(g: &[f64], history: &VecDeque<Pair>) -> Vec<f64> {
    let mut q: Vec<f64> = g.to_vec();
    let mut alphas = vec![0.0; history.len()];
    for (i, p) in history.iter().enumerate().rev() {
        let a = p.rho * dot(&p.s, &q);
        alphas[i] = a;
        axpy(-a, &p.y, &mut q);
    }
    let gamma = history.back().map_or(1.0, |p| p.gamma);
    for v in q.iter_mut() {
        *v *= gamma;
    }
    for (i, p) in history.iter().enumerate() {
        let b = p.rho * dot(&p.y, &q);
        axpy(alphas[i] - b, &p.s, &mut q);
    }
    for v in q.iter_mut() {
        *v = -*v;
    }
    q
}

struct Point {
    alpha: f64,
    f: f64,
    g: Vec<f64>,
}

struct Sample {
    alpha: f64,
    f: f64,
    slope: f64,
}

struct SearchOutcome {
    point: Option<Point>,
    evals: usize,
}

fn line_search<E, F>(
    eval: &mut F,
    x: &[f64],
    f0: f64,
    slope0: f64,
    d: &[f64],
    alpha0: f64,
    opts: &LbfgsOptions,
) -> Result<SearchOutcome, LbfgsError<E>>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>), LbfgsError<E>>,
{
    let (c1, c2) = (opts.wolfe_c1, opts.wolfe_c2);
    let mut evals = 0;
    let mut trial = x.to_vec();
    let mut probe = |alpha: f64, evals: &mut usize| -> Result<(Sample, Vec<f64>), LbfgsError<E>> {
        trial.copy_from_slice(x);
        axpy(alpha, d, &mut trial);
        let (f, g) = eval(&trial)?;
        *evals += 1;
        let slope = dot(&g, d);
        let f = if is_finite(f, &g) { f } else { f64::INFINITY };
        Ok((Sample { alpha, f, slope }, g))
    };
    let armijo = |s: &Sample| s.f <= f0 + c1 * s.alpha * slope0;
    let curvature = |s: &Sample| s.slope.abs() <= -c2 * slope0;

    let mut prev = Sample {
        alpha: 0.0,
        f: f0,
        slope: slope0,
    };
    let mut alpha = alpha0;
    let (mut lo, mut hi);
    loop {
        if evals >= opts.max_line_search_steps {
            return Ok(SearchOutcome { point: None, evals });
        }
        let (cur, g) = probe(alpha, &mut evals)?;
        if !armijo(&cur) || (evals > 1 && cur.f >= prev.f) {
            lo = prev;
            hi = cur;
            break;
        }
        if curvature(&cur) {
            return Ok(SearchOutcome {
                point: Some(Point { alpha, f: cur.f, g }),
                evals,
            });
        }
        if cur.slope >= 0.0 {
            lo = cur;
            hi = prev;
            break;
        }
        alpha = 4.0 * cur.alpha;
        prev = cur;
    }

    // zoom: `lo` satisfies Armijo with the lowest value seen, `hi` brackets.
    loop {
        if evals >= opts.max_line_search_steps {
            return Ok(SearchOutcome { point: None, evals });
        }
        let a = interpolate(&lo, &hi);
        let (cur, g) = probe(a, &mut evals)?;
        if !armijo(&cur) || cur.f >= lo.f {
            hi = cur;
        } else {
            if curvature(&cur) {
                return Ok(SearchOutcome {
                    point: Some(Point { alpha: a, f: cur.f, g }),
                    evals,
                });
            }
            if cur.slope * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = cur;
        }
        if (hi.alpha - lo.alpha).abs() <= 1e-16 * lo.alpha.abs().max(1e-300) {
            return Ok(SearchOutcome { point: None, evals });
        }
    }
}

/// Cubic minimizer of the interval, kept at least 10% away from both ends;
/// bisection when the fit is unusable.
fn interpolate(lo: &Sample, hi: &Sample) -> f64 {
    let (a, b) = (lo.alpha, hi.alpha);
    let mid = 0.5 * (a + b);
    let left = a.min(b);
    let width = (b - a).abs();
    let clamp = |t: f64| t.clamp(left + 0.1 * width, left + 0.9 * width);
    if !hi.f.is_finite() || !hi.slope.is_finite() {
        return mid;
    }
    let d1 = lo.slope + hi.slope - 3.0 * (lo.f - hi.f) / (a - b);
    let disc = d1 * d1 - lo.slope * hi.slope;
    if !(disc >= 0.0) {
        return mid;
    }
    let d2 = (b - a).signum() * libm::sqrt(disc);
    let denom = hi.slope - lo.slope + 2.0 * d2;
    if denom == 0.0 {
        return mid;
    }
    let t = b - (b - a) * (hi.slope + d2 - d1) / denom;
    if t.is_finite() {
        clamp(t)
    } else {
        mid
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::convert::Infallible;

    fn quad(a: &[f64]) -> impl FnMut(&[f64]) -> Result<(f64, Vec<f64>), Infallible> + '_ {
        move |x: &[f64]| {
            let d: Vec<f64> = x.iter().zip(a).map(|(u, v)| u - v).collect();
            Ok((dot(&d, &d), d.iter().map(|v| 2.0 * v).collect()))
        }
    }

    #[test]
    fn stationary_start_returns_immediately() {
        let a = [1.0, 2.0];
        let m = minimize(quad(&a), &a, &LbfgsOptions::default()).unwrap();
        assert_eq!(m.x, a.to_vec());
        assert_eq!(m.trace.iterations(), 0);
        assert_eq!(m.termination, Termination::GradientTolerance);
    }

    #[test]
    fn non_finite_start_is_an_error() {
        let f = |_: &[f64]| -> Result<(f64, Vec<f64>), Infallible> { Ok((f64::NAN, vec![0.0])) };
        assert!(matches!(
            minimize(f, &[0.0], &LbfgsOptions::default()),
            Err(LbfgsError::NonFinite { iteration: 0 })
        ));
    }

    #[test]
    fn invalid_options_rejected() {
        let opts = LbfgsOptions {
            wolfe_c1: 0.95,
            ..Default::default()
        };
        assert!(matches!(
            minimize(quad(&[0.0]), &[1.0], &opts),
            Err(LbfgsError::InvalidOptions(_))
        ));
    }

    #[test]
    fn infinite_trial_points_are_backtracked() {
        // f = x^2 for |x| < 3, undefined beyond.
        let f = |x: &[f64]| -> Result<(f64, Vec<f64>), Infallible> {
            if x[0].abs() >= 3.0 {
                Ok((f64::INFINITY, vec![f64::NAN]))
            } else {
                Ok((x[0] * x[0], vec![2.0 * x[0]]))
            }
        };
        let m = minimize(f, &[2.5], &LbfgsOptions::default()).unwrap();
        assert!(m.x[0].abs() < 1e-6);
    }

    #[test]
    fn memory_one_still_converges() {
        let a: Vec<f64> = (0..5).map(|i| i as f64).collect();
        let opts = LbfgsOptions {
            memory: 1,
            ..Default::default()
        };
        let m = minimize(quad(&a), &[0.0; 5], &opts).unwrap();
        for (u, v) in m.x.iter().zip(&a) {
            assert!((u - v).abs() < 1e-8);
        }
    }
}
