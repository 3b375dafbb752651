use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

use crate::analysis::Termination;
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::objectives::ObjectiveSuite;
use crate::scalar::Real;

use super::{run, EngineConfig, RunOptions};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TunePoint<T> {
    pub alpha: T,
    pub beta: T,
    /// Iterations to reach the threshold; `None` if not reached (or pruned).
    pub iterations: Option<usize>,
    pub termination: Termination,
}

#[derive(Clone, Debug)]
pub struct TuneResult<T> {
    /// Fewest iterations; ties go to the smaller `α`, then the smaller `β`.
    pub best: Option<TunePoint<T>>,
    /// Every grid point, `α`-major.
    pub grid: Vec<TunePoint<T>>,
}

/// `count` points from `lo` to `hi`, log-spaced.
pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect()
        }
    }
}

/// `count` points from `lo` to `hi`, evenly spaced.
pub fn lin_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect(),
    }
}

/// Grid search for the `(α, β)` minimizing iterations until the residual
/// drops below `threshold`.
///
/// With `prune`, each run is capped at the best count found so far and points
/// slower than the final best are reported as not reached, so the output is
/// independent of scheduling.
#[allow(clippy::too_many_arguments)]
pub fn tune<T, F>(
    build: F,
    alphas: &[T],
    betas: &[T],
    suite: &ObjectiveSuite<T>,
    x0: &Mat<T>,
    x_star: &[T],
    threshold: T,
    opts: &RunOptions<T>,
    prune: bool,
) -> Result<TuneResult<T>>
where
    T: Real,
    F: Fn(T, T) -> Result<EngineConfig<T>> + Sync,
{
    if alphas.is_empty() || betas.is_empty() {
        return Err(Error::InvalidParameter("empty tuning grid".into()));
    }
    let best = AtomicUsize::new(opts.max_iter);
    let points: Vec<(T, T)> = alphas.iter().flat_map(|&a| betas.iter().map(move |&b| (a, b))).collect();
    // Aggressive parameters first: they either diverge quickly or set a low cap.
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| {
        let ((ai, bi), (aj, bj)) = (points[i], points[j]);
        aj.partial_cmp(&ai)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(bj.partial_cmp(&bi).unwrap_or(std::cmp::Ordering::Equal))
    });
    let mut evaluated = order
        .par_iter()
        .map(|&idx| {
            let (alpha, beta) = points[idx];
            let cfg = build(alpha, beta)?;
            let cap = if prune { best.load(Ordering::Relaxed) } else { opts.max_iter };
            let run_opts = RunOptions { max_iter: cap, stop_residual: threshold, ..*opts };
            let (iterations, termination, end) = match run(&cfg, suite, x0, x_star, &run_opts) {
                Ok(trace) => {
                    let end = trace.records.last().map_or(0, |r| r.k);
                    (trace.iterations_to(threshold), trace.meta.termination, end)
                }
                Err(Error::DegenerateEstimate { .. }) => (None, Termination::Diverged, 0),
                Err(e) => return Err(e),
            };
            if let Some(it) = iterations {
                best.fetch_min(it, Ordering::Relaxed);
            }
            Ok((idx, TunePoint { alpha, beta, iterations, termination }, end))
        })
        .collect::<Result<Vec<_>>>()?;
    evaluated.sort_by_key(|&(idx, ..)| idx);
    let mut grid: Vec<(TunePoint<T>, usize)> = evaluated.into_iter().map(|(_, p, end)| (p, end)).collect();

    let winner = grid
        .iter()
        .map(|(p, _)| p)
        .filter_map(|p| p.iterations.map(|it| (it, *p)))
        .min_by(|(ia, pa), (ib, pb)| {
            ia.cmp(ib)
                .then(pa.alpha.partial_cmp(&pb.alpha).unwrap_or(std::cmp::Ordering::Equal))
                .then(pa.beta.partial_cmp(&pb.beta).unwrap_or(std::cmp::Ordering::Equal))
        })
        .map(|(_, p)| p);
    if prune {
        if let Some(w) = winner.and_then(|w| w.iterations) {
            for (p, end) in &mut grid {
                let slower = p.iterations.is_some_and(|it| it > w);
                let late_divergence = p.termination == Termination::Diverged && *end > w;
                if slower || late_divergence {
                    p.iterations = None;
                    p.termination = Termination::MaxIter;
                }
            }
        }
    }
    Ok(TuneResult { best: winner, grid: grid.into_iter().map(|(p, _)| p).collect() })
}
