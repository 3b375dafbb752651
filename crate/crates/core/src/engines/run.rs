use std::time::Instant;

use crate::analysis::{Termination, Trace, TraceRecord};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::objectives::{residual, ObjectiveSuite};
use crate::scalar::Real;

use super::{AlgorithmState, EngineConfig};

#[derive(Clone, Copy, Debug)]
pub struct RunOptions<T> {
    pub max_iter: usize,
    /// Stop once the residual drops below this; zero disables early stop.
    pub stop_residual: T,
    /// Residuals above this (or non-finite iterates) end the run as diverged.
    pub divergence_threshold: T,
    /// Record wall-clock time per record; off keeps traces reproducible.
    pub record_wall_clock: bool,
    /// Bound on `‖Σ y − Σ ∇f‖ / (1 + ‖Σ ∇f‖)` checked every step for the
    /// doubly and row/column tracking engines, plus an accumulated rounding
    /// allowance. `None` disables the check.
    pub invariant_tol: Option<T>,
}

impl<T: Real> Default for RunOptions<T> {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            stop_residual: T::zero(),
            divergence_threshold: T::lit(1e12),
            record_wall_clock: false,
            invariant_tol: Some(T::lit(1e-10).max(T::epsilon() * T::lit(1e4))),
        }
    }
}

impl<T: Real> RunOptions<T> {
    pub fn with_max_iter(max_iter: usize) -> Self {
        Self { max_iter, ..Self::default() }
    }
}

/// Runs `cfg` from `x0` and records `(1/n) Σ ‖x_i − x*‖` at every iteration,
/// starting with `k = 0`.
pub fn run<T: Real>(
    cfg: &EngineConfig<T>,
    suite: &ObjectiveSuite<T>,
    x0: &Mat<T>,
    x_star: &[T],
    opts: &RunOptions<T>,
) -> Result<Trace<T>> {
    run_with_state(cfg, suite, x0, x_star, opts).map(|(trace, _)| trace)
}

/// [`run`] that also returns the final state.
pub fn run_with_state<T: Real>(
    cfg: &EngineConfig<T>,
    suite: &ObjectiveSuite<T>,
    x0: &Mat<T>,
    x_star: &[T],
    opts: &RunOptions<T>,
) -> Result<(Trace<T>, AlgorithmState<T>)> {
    if x_star.len() != suite.p() {
        return Err(Error::ShapeMismatch(format!("x* has length {}, expected {}", x_star.len(), suite.p())));
    }
    let kind = cfg.kind();
    let start = Instant::now();
    let elapsed = || if opts.record_wall_clock { start.elapsed().as_secs_f64() } else { 0.0 };
    let mut trace = Trace::new(kind.name());
    let mut state = cfg.init_state(suite, x0)?;
    let mut monitor = GapMonitor::new(opts.invariant_tol.filter(|_| kind.asserts_gradient_sum()), state.x.rows());
    let mut record = |s: &AlgorithmState<T>| -> Result<TraceRecord<T>> {
        let res = residual(&s.x, x_star);
        let tracking_error = if kind.preserves_gradient_sum() {
            let (gap, norm) = s.gradient_sum_gap();
            if classify(res, opts) != Some(Termination::Diverged) {
                monitor.check(s, gap, norm)?;
            }
            Some(gap)
        } else {
            None
        };
        Ok(TraceRecord { k: s.k, residual: res, tracking_error, elapsed_s: elapsed() })
    };

    let first = record(&state)?;
    let mut termination = classify(first.residual, opts);
    trace.records.push(first);
    while termination.is_none() && state.k < opts.max_iter {
        match cfg.step(&state, suite) {
            Ok(next) => state = next,
            Err(Error::NonFinite { k }) => {
                let r = TraceRecord { k, residual: T::infinity(), tracking_error: None, elapsed_s: elapsed() };
                trace.records.push(r);
                termination = Some(Termination::Diverged);
                break;
            }
            Err(e) => return Err(e),
        }
        let rec = record(&state)?;
        termination = classify(rec.residual, opts);
        trace.records.push(rec);
    }
    trace.meta.termination = termination.unwrap_or(Termination::MaxIter);
    Ok((trace, state))
}

/// Checks `‖Σ y − Σ ∇f‖ ≤ tol (1 + ‖Σ ∇f‖) + drift`, where `drift` accumulates
/// a rounding allowance of `n ε (Σ|y| + Σ|∇f|)` per step. Over short runs the
/// allowance is far below `tol`; over very long runs it absorbs the random
/// walk of rounding errors, which a logic error would exceed at once.
struct GapMonitor<T> {
    tol: Option<T>,
    per_step: T,
    drift: T,
}

impl<T: Real> GapMonitor<T> {
    fn new(tol: Option<T>, n: usize) -> Self {
        Self { tol, per_step: T::epsilon() * T::from_usize_lossy(n), drift: T::zero() }
    }

    fn check(&mut self, s: &AlgorithmState<T>, gap: T, norm: T) -> Result<()> {
        let Some(tol) = self.tol else { return Ok(()) };
        let mass: T = s.y.as_slice().iter().chain(s.grad.as_slice()).map(|v| v.abs()).sum();
        if s.k > 0 {
            self.drift = self.drift + self.per_step * mass;
        }
        if gap > tol * (T::one() + norm) + self.drift {
            return Err(Error::InvariantViolated { k: s.k, error: (gap / (T::one() + norm)).as_f64() });
        }
        Ok(())
    }
}

fn classify<T: Real>(r: T, opts: &RunOptions<T>) -> Option<Termination> {
    if !r.is_finite() || r > opts.divergence_threshold {
        Some(Termination::Diverged)
    } else if r < opts.stop_residual {
        Some(Termination::Converged)
    } else {
        None
    }
}
