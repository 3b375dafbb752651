//! Synchronous distributed and centralized optimization engines.
//!
//! One step is one round of neighbor exchange followed by a local update at
//! every agent. Engines are value-semantics state machines: a step reads an
//! [`AlgorithmState`] and returns the next one.
//!
//! Conventions shared by all gradient-tracking engines: `x_0` is arbitrary,
//! `x_{-1} = 0` and `y_0 = ∇f(x_0)`; tracker updates are combine-then-adapt.

mod diagnostics;
mod run;
pub mod steps;
mod tuning;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

pub use diagnostics::{step_condition_lambda, StepCondition};
pub use run::{run, run_with_state, RunOptions};
pub use tuning::{lin_space, log_space, tune, TunePoint, TuneResult};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::objectives::ObjectiveSuite;
use crate::scalar::Real;
use crate::weights::{PowerIteration, StochasticKind, WeightMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EngineKind {
    /// Distributed heavy-ball with row- and column-stochastic weights.
    Abm,
    /// `Abm` without momentum.
    Ab,
    /// Gradient tracking with one doubly-stochastic matrix (Aug-DGM, DIGing).
    DsTracking,
    Extra,
    /// AB with the tracker eliminated, written as a two-history recursion.
    AbExtraForm,
    /// Column-stochastic only, with eigenvector estimation (ADD-OPT, Push-DIGing).
    AddOpt,
    /// Row-stochastic only, with eigenvector estimation.
    Frost,
    /// AB in the `Π_r`-scaled coordinates using the exact Perron vector.
    AbTransformedExact,
    CentralizedGd,
    CentralizedHeavyBall,
}

impl EngineKind {
    pub const ALL: [EngineKind; 10] = [
        Self::Abm,
        Self::Ab,
        Self::DsTracking,
        Self::Extra,
        Self::AbExtraForm,
        Self::AddOpt,
        Self::Frost,
        Self::AbTransformedExact,
        Self::CentralizedGd,
        Self::CentralizedHeavyBall,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Abm => "abm",
            Self::Ab => "ab",
            Self::DsTracking => "ds-tracking",
            Self::Extra => "extra",
            Self::AbExtraForm => "ab-extra-form",
            Self::AddOpt => "add-opt",
            Self::Frost => "frost",
            Self::AbTransformedExact => "ab-transformed-exact",
            Self::CentralizedGd => "gd",
            Self::CentralizedHeavyBall => "heavy-ball",
        }
    }

    pub fn is_centralized(self) -> bool {
        matches!(self, Self::CentralizedGd | Self::CentralizedHeavyBall)
    }

    pub fn uses_momentum(self) -> bool {
        matches!(self, Self::Abm | Self::CentralizedHeavyBall)
    }

    /// Engines whose `y` preserves the sum of local gradients.
    pub fn preserves_gradient_sum(self) -> bool {
        matches!(self, Self::Abm | Self::Ab | Self::DsTracking | Self::AddOpt | Self::AbTransformedExact)
    }

    /// Engines on which the gradient-sum identity is asserted during a run.
    pub fn asserts_gradient_sum(self) -> bool {
        matches!(self, Self::Abm | Self::Ab | Self::DsTracking)
    }
}

impl fmt::Display for EngineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EngineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| Error::Parse(format!("unknown engine {s:?}")))
    }
}

/// Engine plus the weight matrices it mixes with.
#[derive(Clone, Debug)]
pub enum Algorithm<T> {
    Abm { a: Arc<WeightMatrix<T>>, b: Arc<WeightMatrix<T>> },
    Ab { a: Arc<WeightMatrix<T>>, b: Arc<WeightMatrix<T>> },
    DsTracking { w: Arc<WeightMatrix<T>> },
    Extra { w: Arc<WeightMatrix<T>>, w_tilde: Arc<WeightMatrix<T>> },
    AbExtraForm { a: Arc<WeightMatrix<T>>, b: Arc<WeightMatrix<T>> },
    AddOpt { b_tilde: Arc<WeightMatrix<T>>, b: Arc<WeightMatrix<T>> },
    Frost { a: Arc<WeightMatrix<T>>, a_tilde: Arc<WeightMatrix<T>> },
    AbTransformedExact { b_tilde: Arc<WeightMatrix<T>>, b: Arc<WeightMatrix<T>>, scale: Arc<[T]> },
    CentralizedGd,
    CentralizedHeavyBall,
}

fn require(w: &WeightMatrix<impl Real>, row: bool, column: bool, role: &str) -> Result<()> {
    let k = w.kind();
    if (row && !k.is_row()) || (column && !k.is_column()) {
        return Err(Error::InvalidWeights(format!("{role} has kind {k:?}")));
    }
    Ok(())
}

fn same_size<T>(a: &WeightMatrix<T>, b: &WeightMatrix<T>) -> Result<()>
where
    T: Real,
{
    if a.n() != b.n() {
        return Err(Error::ShapeMismatch(format!("weight matrices of size {} and {}", a.n(), b.n())));
    }
    Ok(())
}

impl<T: Real> Algorithm<T> {
    pub fn abm(a: Arc<WeightMatrix<T>>, b: Arc<WeightMatrix<T>>) -> Result<Self> {
        require(&a, true, false, "A")?;
        require(&b, false, true, "B")?;
        same_size(&a, &b)?;
        Ok(Self::Abm { a, b })
    }

    pub fn ab(a: Arc<WeightMatrix<T>>, b: Arc<WeightMatrix<T>>) -> Result<Self> {
        require(&a, true, false, "A")?;
        require(&b, false, true, "B")?;
        same_size(&a, &b)?;
        Ok(Self::Ab { a, b })
    }

    pub fn ds_tracking(w: Arc<WeightMatrix<T>>) -> Result<Self> {
        require(&w, true, true, "W")?;
        Ok(Self::DsTracking { w })
    }

    /// EXTRA with `W̃ = (I + W) / 2` unless another mixing matrix is given.
    pub fn extra(w: Arc<WeightMatrix<T>>, w_tilde: Option<Arc<WeightMatrix<T>>>) -> Result<Self> {
        require(&w, true, true, "W")?;
        if !w.entries().is_symmetric(T::structural_tol()) {
            return Err(Error::InvalidWeights("EXTRA needs a symmetric W".into()));
        }
        let w_tilde = match w_tilde {
            Some(wt) => {
                require(&wt, true, true, "W~")?;
                same_size(&w, &wt)?;
                wt
            }
            None => {
                let n = w.n();
                let half = T::lit(0.5);
                let m = Mat::identity(n).add(w.entries()).scale(half);
                Arc::new(WeightMatrix::new(m, StochasticKind::DoublyStochastic)?)
            }
        };
        Ok(Self::Extra { w, w_tilde })
    }

    pub fn ab_extra_form(a: Arc<WeightMatrix<T>>, b: Arc<WeightMatrix<T>>) -> Result<Self> {
        require(&a, true, false, "A")?;
        require(&b, false, true, "B")?;
        same_size(&a, &b)?;
        Ok(Self::AbExtraForm { a, b })
    }

    pub fn add_opt(b_tilde: Arc<WeightMatrix<T>>, b: Arc<WeightMatrix<T>>) -> Result<Self> {
        require(&b_tilde, false, true, "B~")?;
        require(&b, false, true, "B")?;
        same_size(&b_tilde, &b)?;
        Ok(Self::AddOpt { b_tilde, b })
    }

    pub fn frost(a: Arc<WeightMatrix<T>>, a_tilde: Arc<WeightMatrix<T>>) -> Result<Self> {
        require(&a, true, false, "A")?;
        require(&a_tilde, true, false, "A~")?;
        same_size(&a, &a_tilde)?;
        Ok(Self::Frost { a, a_tilde })
    }

    /// Builds `B̃ = Π_r A Π_r^{-1}` with `Π_r = diag(n π_r)` from the
    /// row-stochastic `a`.
    pub fn ab_transformed_exact(a: &WeightMatrix<T>, b: Arc<WeightMatrix<T>>) -> Result<Self> {
        require(&b, false, true, "B")?;
        same_size(a, &b)?;
        let (b_tilde, scale) = row_to_column_transform(a)?;
        Ok(Self::AbTransformedExact { b_tilde: Arc::new(b_tilde), b, scale: scale.into() })
    }

    pub fn kind(&self) -> EngineKind {
        match self {
            Self::Abm { .. } => EngineKind::Abm,
            Self::Ab { .. } => EngineKind::Ab,
            Self::DsTracking { .. } => EngineKind::DsTracking,
            Self::Extra { .. } => EngineKind::Extra,
            Self::AbExtraForm { .. } => EngineKind::AbExtraForm,
            Self::AddOpt { .. } => EngineKind::AddOpt,
            Self::Frost { .. } => EngineKind::Frost,
            Self::AbTransformedExact { .. } => EngineKind::AbTransformedExact,
            Self::CentralizedGd => EngineKind::CentralizedGd,
            Self::CentralizedHeavyBall => EngineKind::CentralizedHeavyBall,
        }
    }

    /// Number of agents, `None` for centralized engines.
    pub fn n(&self) -> Option<usize> {
        match self {
            Self::Abm { a, .. } | Self::Ab { a, .. } | Self::AbExtraForm { a, .. } | Self::Frost { a, .. } => {
                Some(a.n())
            }
            Self::DsTracking { w } | Self::Extra { w, .. } => Some(w.n()),
            Self::AddOpt { b, .. } | Self::AbTransformedExact { b, .. } => Some(b.n()),
            Self::CentralizedGd | Self::CentralizedHeavyBall => None,
        }
    }
}

/// `B̃ = Π_r A Π_r^{-1}` (column-stochastic, `B̃ π_r = π_r`) and the diagonal
/// `n π_r` of `Π_r`. The Perron vector is recomputed to near machine precision
/// so the column sums of `B̃` are exact to rounding.
pub fn row_to_column_transform<T: Real>(a: &WeightMatrix<T>) -> Result<(WeightMatrix<T>, Vec<T>)> {
    require(a, true, false, "A")?;
    let n = a.n();
    let power = PowerIteration { tol: T::epsilon() * T::lit(8.0), max_iter: 1000 * n.max(10) };
    let pi = crate::weights::left_perron(a.entries(), a.pi_r(), power)?;
    let scale: Vec<T> = pi.iter().map(|&v| v * T::from_usize_lossy(n)).collect();
    let m = Mat::from_fn(n, n, |i, j| scale[i] * a.entries()[(i, j)] / scale[j]);
    Ok((WeightMatrix::new(m, StochasticKind::ColumnStochastic)?, scale))
}

/// Per-agent state of any engine; centralized engines use a single row.
#[derive(Clone, Debug)]
pub struct AlgorithmState<T> {
    /// `x_k`
    pub x: Mat<T>,
    /// `x_{k-1}`
    pub x_prev: Mat<T>,
    /// Gradient tracker `y_k`. Engines without a tracker keep `∇f(x_k)` here.
    pub y: Mat<T>,
    /// `∇f(x_k)`, row `i` evaluated by agent `i` at its own iterate.
    pub grad: Mat<T>,
    /// `∇f(x_{k-1})`
    pub grad_prev: Mat<T>,
    /// Unnormalized iterate `x̃_k` (ADD-OPT, exact transform).
    pub aux: Option<Mat<T>>,
    /// Eigenvector estimate: `w_k` as `n x 1` (ADD-OPT) or the `n x n`
    /// matrix iterate whose diagonal is used (FROST).
    pub eig: Option<Mat<T>>,
    pub k: usize,
}

impl<T: Real> AlgorithmState<T> {
    /// Standard bootstrap: `x_{-1} = 0`, `y_0 = ∇f(x_0)`.
    pub fn bootstrap(suite: &ObjectiveSuite<T>, x0: Mat<T>) -> Result<Self> {
        check_state_shape(suite, &x0)?;
        let grad = suite.gradients(&x0);
        let x_prev = Mat::zeros(x0.rows(), x0.cols());
        let grad_prev = suite.gradients(&x_prev);
        Ok(Self { y: grad.clone(), x: x0, x_prev, grad, grad_prev, aux: None, eig: None, k: 0 })
    }

    /// Single-row state for centralized methods, using `∇F`.
    pub fn bootstrap_centralized(suite: &ObjectiveSuite<T>, x0: &[T]) -> Result<Self> {
        if x0.len() != suite.p() {
            return Err(Error::ShapeMismatch(format!("x0 has length {}, expected {}", x0.len(), suite.p())));
        }
        let x = Mat::from_vec(1, x0.len(), x0.to_vec())?;
        let grad = Mat::from_vec(1, x0.len(), suite.global_gradient(x0))?;
        let x_prev = Mat::zeros(1, x0.len());
        let grad_prev = Mat::from_vec(1, x0.len(), suite.global_gradient(x_prev.as_slice()))?;
        Ok(Self { y: grad.clone(), x, x_prev, grad, grad_prev, aux: None, eig: None, k: 0 })
    }

    /// `‖Σ_i y_i − Σ_i ∇f_i(x_i)‖` and `‖Σ_i ∇f_i(x_i)‖`.
    pub fn gradient_sum_gap(&self) -> (T, T) {
        let sy = self.y.sum_rows();
        let sg = self.grad.sum_rows();
        let gap = sy.iter().zip(&sg).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>().sqrt();
        let norm = sg.iter().map(|&v| v * v).sum::<T>().sqrt();
        (gap, norm)
    }
}

fn check_state_shape<T: Real>(suite: &ObjectiveSuite<T>, x: &Mat<T>) -> Result<()> {
    if x.shape() != (suite.n(), suite.p()) {
        return Err(Error::ShapeMismatch(format!(
            "state is {}x{}, suite expects {}x{}",
            x.rows(),
            x.cols(),
            suite.n(),
            suite.p()
        )));
    }
    Ok(())
}

/// Algorithm with its per-agent step-sizes and momentum parameters.
#[derive(Clone, Debug)]
pub struct EngineConfig<T> {
    pub algorithm: Algorithm<T>,
    /// `diag(α)`; one entry for centralized engines.
    pub alphas: Vec<T>,
    /// `diag(β)`; only read by momentum engines, may be empty otherwise.
    pub betas: Vec<T>,
}

impl<T: Real> EngineConfig<T> {
    pub fn new(algorithm: Algorithm<T>, alphas: Vec<T>, betas: Vec<T>) -> Result<Self> {
        let kind = algorithm.kind();
        let n = algorithm.n().unwrap_or(1);
        if alphas.len() != n {
            return Err(Error::ShapeMismatch(format!("{} step-sizes for {n} agents", alphas.len())));
        }
        if kind.uses_momentum() && betas.len() != n {
            return Err(Error::ShapeMismatch(format!("{} momentum parameters for {n} agents", betas.len())));
        }
        if alphas.iter().chain(&betas).any(|v| !v.is_finite() || *v < T::zero()) {
            return Err(Error::InvalidParameter("step-sizes and momenta must be finite and nonnegative".into()));
        }
        let max_alpha = alphas.iter().copied().fold(T::zero(), T::max);
        if !(max_alpha > T::zero()) {
            return Err(Error::InvalidParameter("at least one step-size must be positive".into()));
        }
        if kind == EngineKind::AbExtraForm && alphas.iter().any(|&a| a != alphas[0]) {
            return Err(Error::InvalidParameter("the EXTRA-form rewrite of AB needs identical step-sizes".into()));
        }
        Ok(Self { algorithm, alphas, betas })
    }

    /// Identical step-size and momentum at every agent.
    pub fn uniform(algorithm: Algorithm<T>, alpha: T, beta: T) -> Result<Self> {
        let n = algorithm.n().unwrap_or(1);
        let betas = if algorithm.kind().uses_momentum() { vec![beta; n] } else { Vec::new() };
        Self::new(algorithm, vec![alpha; n], betas)
    }

    pub fn kind(&self) -> EngineKind {
        self.algorithm.kind()
    }

    /// Initial state from `x0` (`n x p`). Centralized engines start at the
    /// average of the rows.
    pub fn init_state(&self, suite: &ObjectiveSuite<T>, x0: &Mat<T>) -> Result<AlgorithmState<T>> {
        if let Some(n) = self.algorithm.n() {
            if n != suite.n() {
                return Err(Error::ShapeMismatch(format!("engine has {n} agents, suite has {}", suite.n())));
            }
        }
        match &self.algorithm {
            Algorithm::CentralizedGd | Algorithm::CentralizedHeavyBall => {
                let mean: Vec<T> = x0.sum_rows().into_iter().map(|v| v / T::from_usize_lossy(x0.rows())).collect();
                AlgorithmState::bootstrap_centralized(suite, &mean)
            }
            Algorithm::AddOpt { .. } => {
                let mut s = AlgorithmState::bootstrap(suite, x0.clone())?;
                s.aux = Some(x0.clone());
                s.eig = Some(Mat::filled(x0.rows(), 1, T::one()));
                Ok(s)
            }
            Algorithm::Frost { .. } => {
                let mut s = AlgorithmState::bootstrap(suite, x0.clone())?;
                s.eig = Some(Mat::identity(x0.rows()));
                Ok(s)
            }
            Algorithm::AbTransformedExact { scale, .. } => {
                let mut s = AlgorithmState::bootstrap(suite, x0.clone())?;
                s.aux = Some(x0.scale_rows(scale));
                Ok(s)
            }
            _ => AlgorithmState::bootstrap(suite, x0.clone()),
        }
    }

    pub fn step(&self, state: &AlgorithmState<T>, suite: &ObjectiveSuite<T>) -> Result<AlgorithmState<T>> {
        let (alphas, betas) = (&self.alphas[..], &self.betas[..]);
        match &self.algorithm {
            Algorithm::Abm { a, b } => steps::abm_step(state, a, b, alphas, betas, suite),
            Algorithm::Ab { a, b } => steps::ab_step(state, a, b, alphas, suite),
            Algorithm::DsTracking { w } => steps::ds_gradient_tracking_step(state, w, alphas, suite),
            Algorithm::Extra { w, w_tilde } => steps::extra_step(state, w, w_tilde, alphas, suite),
            Algorithm::AbExtraForm { a, b } => steps::ab_extra_form_step(state, a, b, alphas[0], suite),
            Algorithm::AddOpt { b_tilde, b } => steps::addopt_step(state, b_tilde, b, alphas, suite),
            Algorithm::Frost { a, a_tilde } => steps::frost_step(state, a, a_tilde, alphas, suite),
            Algorithm::AbTransformedExact { b_tilde, b, scale } => {
                steps::transformed_ab_exact_step(state, b_tilde, b, scale, alphas, suite)
            }
            Algorithm::CentralizedGd => steps::centralized_gd_step(state, alphas[0], suite),
            Algorithm::CentralizedHeavyBall => steps::centralized_hb_step(state, alphas[0], betas[0], suite),
        }
    }
}

/// Polyak's heavy-ball parameters `α = 4/(√l + √μ)²`, `β = ((√Q − 1)/(√Q + 1))²`.
pub fn polyak_parameters<T: Real>(mu: T, l: T) -> (T, T) {
    let (sm, sl) = (mu.sqrt(), l.sqrt());
    let alpha = T::lit(4.0) / ((sl + sm) * (sl + sm));
    let sq = (l / mu).sqrt();
    let r = (sq - T::one()) / (sq + T::one());
    (alpha, r * r)
}

/// Optimal constant gradient-descent step `2 / (μ + l)`.
pub fn optimal_gd_step<T: Real>(mu: T, l: T) -> T {
    T::lit(2.0) / (mu + l)
}
