//! Local objective families and the global-minimizer oracle.
//!
//! The global objective is `F(x) = (1/n) Σ_i f_i(x)`; its minimizer is the
//! same as that of the plain sum. Decision variables for logistic regression
//! are `(b, c)` stacked as a `p + 1` vector with the intercept last.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{norm2, Mat};
use crate::scalar::Real;

#[derive(Clone, Debug)]
pub enum LocalObjective<T> {
    /// `f(x) = xᵀ diag(q) x + bᵀ x`.
    Quadratic { diag: Vec<T>, linear: Vec<T> },
    /// `f(b, c) = Σ_j ln(1 + exp(-(bᵀ c_j + c) y_j)) + (λ/2)‖b‖²`.
    Logistic { features: Mat<T>, labels: Vec<T>, reg: T },
}

impl<T: Real> LocalObjective<T> {
    pub fn dim(&self) -> usize {
        match self {
            Self::Quadratic { diag, .. } => diag.len(),
            Self::Logistic { features, .. } => features.cols() + 1,
        }
    }

    pub fn value(&self, x: &[T]) -> T {
        match self {
            Self::Quadratic { diag, linear } => {
                diag.iter().zip(linear).zip(x).map(|((&q, &b), &xi)| q * xi * xi + b * xi).sum()
            }
            Self::Logistic { features, labels, reg } => {
                let p = features.cols();
                let (b, c) = (&x[..p], x[p]);
                let loss: T = (0..features.rows()).map(|j| softplus(-(dot(features.row(j), b) + c) * labels[j])).sum();
                loss + *reg * T::lit(0.5) * dot(b, b)
            }
        }
    }

    /// Writes `∇f(x)` into `out`.
    pub fn gradient_into(&self, x: &[T], out: &mut [T]) {
        match self {
            Self::Quadratic { diag, linear } => {
                let two = T::lit(2.0);
                for (((o, &q), &b), &xi) in out.iter_mut().zip(diag).zip(linear).zip(x) {
                    *o = two * q * xi + b;
                }
            }
            Self::Logistic { features, labels, reg } => {
                let p = features.cols();
                let (b, c) = (&x[..p], x[p]);
                for (o, &bi) in out[..p].iter_mut().zip(b) {
                    *o = *reg * bi;
                }
                out[p] = T::zero();
                for (j, &y) in labels.iter().enumerate() {
                    let margin = (dot(features.row(j), b) + c) * y;
                    // d/dm ln(1 + e^{-m}) = -σ(-m)
                    let coef = -y * sigmoid(-margin);
                    for (o, &f) in out[..p].iter_mut().zip(features.row(j)) {
                        *o = *o + coef * f;
                    }
                    out[p] = out[p] + coef;
                }
            }
        }
    }

    pub fn gradient(&self, x: &[T]) -> Vec<T> {
        let mut g = vec![T::zero(); self.dim()];
        self.gradient_into(x, &mut g);
        g
    }

    /// Strong-convexity constant `μ_i` over the full decision variable.
    pub fn strong_convexity(&self) -> T {
        match self {
            Self::Quadratic { diag, .. } => T::lit(2.0) * diag.iter().copied().fold(T::infinity(), T::min),
            // The intercept is unregularized.
            Self::Logistic { .. } => T::zero(),
        }
    }

    /// Smoothness constant `l_i`.
    pub fn smoothness(&self) -> T {
        match self {
            Self::Quadratic { diag, .. } => T::lit(2.0) * diag.iter().copied().fold(T::zero(), T::max),
            Self::Logistic { features, reg, .. } => {
                let data: T = (0..features.rows()).map(|j| dot(features.row(j), features.row(j)) + T::one()).sum();
                *reg + T::lit(0.25) * data
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SuiteKind {
    Quadratic,
    Logistic,
}

/// `n` local objectives over a common decision space of dimension `p`.
#[derive(Clone, Debug)]
pub struct ObjectiveSuite<T> {
    kind: SuiteKind,
    p: usize,
    locals: Vec<LocalObjective<T>>,
    mu_i: Vec<T>,
    l_i: Vec<T>,
    mu: T,
    l: T,
    l_bar: T,
}

impl<T: Real> ObjectiveSuite<T> {
    /// `f_i(x) = xᵀ Q_i x + b_iᵀ x` with diagonal positive `Q_i`.
    pub fn quadratic(q_diags: Vec<Vec<T>>, b_vecs: Vec<Vec<T>>) -> Result<Self> {
        let n = q_diags.len();
        if n == 0 || b_vecs.len() != n {
            return Err(Error::ShapeMismatch(format!("{n} Q diagonals and {} linear terms", b_vecs.len())));
        }
        let p = q_diags[0].len();
        if p == 0 {
            return Err(Error::InvalidParameter("decision dimension must be positive".into()));
        }
        for (q, b) in q_diags.iter().zip(&b_vecs) {
            if q.len() != p || b.len() != p {
                return Err(Error::ShapeMismatch(format!("expected dimension {p} for every agent")));
            }
            if q.iter().any(|&v| !(v > T::zero()) || !v.is_finite()) {
                return Err(Error::InvalidParameter("quadratic diagonals must be positive".into()));
            }
        }
        let locals =
            q_diags.into_iter().zip(b_vecs).map(|(diag, linear)| LocalObjective::Quadratic { diag, linear }).collect();
        Ok(Self::assemble(SuiteKind::Quadratic, p, locals, None))
    }

    /// Random quadratic whose global Hessian `(1/n) Σ 2 Q_i` is diagonal with
    /// entries log-spaced between 1 and `condition_number`.
    ///
    /// Each spectrum entry is split among the agents with random positive
    /// shares, and the linear terms are chosen so that the minimizer is a
    /// standard-normal draw while each local minimizer differs from it.
    pub fn quadratic_with_condition(n: usize, p: usize, condition_number: f64, seed: u64) -> Result<Self> {
        if n == 0 || p == 0 {
            return Err(Error::InvalidParameter("n and p must be positive".into()));
        }
        if !(condition_number >= 1.0) || !condition_number.is_finite() {
            return Err(Error::InvalidParameter(format!("condition number {condition_number} must be >= 1")));
        }
        if p == 1 && condition_number != 1.0 {
            return Err(Error::InvalidParameter("p = 1 only admits condition number 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spectrum: Vec<f64> =
            (0..p).map(|j| if p == 1 { 1.0 } else { condition_number.powf(j as f64 / (p - 1) as f64) }).collect();
        let mut q = vec![vec![0.0f64; p]; n];
        for (j, &d) in spectrum.iter().enumerate() {
            let shares: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
            let total: f64 = shares.iter().sum();
            for i in 0..n {
                q[i][j] = 0.5 * n as f64 * d * shares[i] / total;
            }
        }
        let x_star: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let noise: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| rng.sample(StandardNormal)).collect()).collect();
        let mean_noise: Vec<f64> = (0..p).map(|j| noise.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
        let b: Vec<Vec<T>> = (0..n)
            .map(|i| (0..p).map(|j| T::lit(-2.0 * q[i][j] * x_star[j] + noise[i][j] - mean_noise[j])).collect())
            .collect();
        let q: Vec<Vec<T>> = q.into_iter().map(|r| r.into_iter().map(T::lit).collect()).collect();
        Self::quadratic(q, b)
    }

    /// Regularized logistic regression; labels must be ±1.
    pub fn logistic(features: Vec<Mat<T>>, labels: Vec<Vec<T>>, reg: T) -> Result<Self> {
        let n = features.len();
        if n == 0 || labels.len() != n {
            return Err(Error::ShapeMismatch(format!("{n} feature blocks and {} label vectors", labels.len())));
        }
        if !(reg > T::zero()) {
            return Err(Error::InvalidParameter("regularization must be positive".into()));
        }
        let p = features[0].cols();
        let mut locals = Vec::with_capacity(n);
        for (f, y) in features.into_iter().zip(labels) {
            if f.cols() != p || f.rows() != y.len() {
                return Err(Error::ShapeMismatch("features and labels disagree".into()));
            }
            if let Some(bad) = y.iter().find(|&&v| v != T::one() && v != -T::one()) {
                return Err(Error::InvalidParameter(format!("label {bad} is not -1 or +1")));
            }
            locals.push(LocalObjective::Logistic { features: f, labels: y, reg });
        }
        Ok(Self::assemble(SuiteKind::Logistic, p + 1, locals, Some(reg)))
    }

    fn assemble(kind: SuiteKind, p: usize, locals: Vec<LocalObjective<T>>, mu_override: Option<T>) -> Self {
        let n = T::from_usize_lossy(locals.len());
        let mu_i: Vec<T> = locals.iter().map(LocalObjective::strong_convexity).collect();
        let l_i: Vec<T> = locals.iter().map(LocalObjective::smoothness).collect();
        let mu = mu_override.unwrap_or_else(|| mu_i.iter().copied().sum::<T>() / n);
        let l = l_i.iter().copied().sum::<T>() / n;
        let l_bar = l_i.iter().copied().fold(T::zero(), T::max);
        Self { kind, p, locals, mu_i, l_i, mu, l, l_bar }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.locals.len()
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn kind(&self) -> SuiteKind {
        self.kind
    }

    pub fn local(&self, i: usize) -> &LocalObjective<T> {
        &self.locals[i]
    }

    pub fn mu_i(&self) -> &[T] {
        &self.mu_i
    }

    pub fn l_i(&self) -> &[T] {
        &self.l_i
    }

    /// `μ = (1/n) Σ μ_i`. For logistic suites this is the regularization `λ`,
    /// an optimistic constant used only for step-size heuristics.
    pub fn mu(&self) -> T {
        self.mu
    }

    /// `l = (1/n) Σ l_i`.
    pub fn l(&self) -> T {
        self.l
    }

    /// `max_i l_i`.
    pub fn l_bar(&self) -> T {
        self.l_bar
    }

    /// Quadratic: ratio of extreme eigenvalues of `Σ Q_i`. Logistic: `l / μ`.
    pub fn condition_number(&self) -> T {
        let (lo, hi) = self.curvature_bounds();
        hi / lo
    }

    /// Bounds `(μ_F, l_F)` on the Hessian of `F = (1/n) Σ f_i`; exact for
    /// quadratics, `(μ, l)` otherwise.
    pub fn curvature_bounds(&self) -> (T, T) {
        match self.kind {
            SuiteKind::Quadratic => {
                let h = self.quadratic_hessian_diag();
                (h.iter().copied().fold(T::infinity(), T::min), h.iter().copied().fold(T::zero(), T::max))
            }
            SuiteKind::Logistic => (self.mu, self.l),
        }
    }

    /// Diagonal of `∇²F = (2/n) Σ Q_i` for quadratic suites.
    fn quadratic_hessian_diag(&self) -> Vec<T> {
        let n = T::from_usize_lossy(self.n());
        let mut h = vec![T::zero(); self.p];
        for f in &self.locals {
            if let LocalObjective::Quadratic { diag, .. } = f {
                for (acc, &q) in h.iter_mut().zip(diag) {
                    *acc = *acc + T::lit(2.0) * q;
                }
            }
        }
        h.into_iter().map(|v| v / n).collect()
    }

    /// Stacked local gradients: row `i` is `∇f_i(x_i)`.
    pub fn gradients(&self, x: &Mat<T>) -> Mat<T> {
        debug_assert_eq!(x.shape(), (self.n(), self.p));
        let mut g = Mat::zeros(self.n(), self.p);
        for (i, f) in self.locals.iter().enumerate() {
            f.gradient_into(x.row(i), g.row_mut(i));
        }
        g
    }

    pub fn global_value(&self, x: &[T]) -> T {
        self.locals.iter().map(|f| f.value(x)).sum::<T>() / T::from_usize_lossy(self.n())
    }

    /// `∇F(x) = (1/n) Σ_i ∇f_i(x)`.
    pub fn global_gradient(&self, x: &[T]) -> Vec<T> {
        let mut acc = vec![T::zero(); self.p];
        let mut g = vec![T::zero(); self.p];
        for f in &self.locals {
            f.gradient_into(x, &mut g);
            for (a, &gi) in acc.iter_mut().zip(&g) {
                *a = *a + gi;
            }
        }
        let n = T::from_usize_lossy(self.n());
        acc.into_iter().map(|a| a / n).collect()
    }

    /// Global minimizer with `‖∇F(x*)‖ < tol`.
    ///
    /// Quadratics use the closed form `x* = -(2 Σ Q_i)^{-1} Σ b_i`, checked
    /// against `tol` or the rounding floor of the gradient, whichever is
    /// larger. Logistic suites run centralized gradient descent with step
    /// `2 / (μ + l)`.
    pub fn global_minimizer(&self, tol: T) -> Result<Vec<T>> {
        match self.kind {
            SuiteKind::Quadratic => {
                let mut q = vec![T::zero(); self.p];
                let mut b = vec![T::zero(); self.p];
                for f in &self.locals {
                    if let LocalObjective::Quadratic { diag, linear } = f {
                        for j in 0..self.p {
                            q[j] = q[j] + diag[j];
                            b[j] = b[j] + linear[j];
                        }
                    }
                }
                let x: Vec<T> = q.iter().zip(&b).map(|(&qj, &bj)| -bj / (T::lit(2.0) * qj)).collect();
                // Evaluating ∇F at the rounded x* carries error of order ε times the
                // magnitudes summed, so that floor is accepted even when tol is lower.
                let magnitude: T = q.iter().zip(&x).zip(&b).map(|((&qj, &xj), &bj)| (qj * xj).abs() + bj.abs()).sum();
                let floor = T::lit(64.0) * T::epsilon() * magnitude / T::from_usize_lossy(self.locals.len());
                let gnorm = norm2(&self.global_gradient(&x));
                if gnorm < tol.max(floor) {
                    Ok(x)
                } else {
                    Err(Error::NoConvergence {
                        what: "closed-form quadratic minimizer (tolerance below rounding)",
                        iterations: 0,
                    })
                }
            }
            SuiteKind::Logistic => {
                const BUDGET: usize = 2_000_000;
                let step = T::lit(2.0) / (self.mu + self.l);
                let mut x = vec![T::zero(); self.p];
                for _ in 0..BUDGET {
                    let g = self.global_gradient(&x);
                    if norm2(&g) < tol {
                        return Ok(x);
                    }
                    for (xi, gi) in x.iter_mut().zip(g) {
                        *xi = *xi - step * gi;
                    }
                }
                Err(Error::NoConvergence { what: "logistic minimizer gradient descent", iterations: BUDGET })
            }
        }
    }

    /// `(1/n) Σ_i ‖x_i − x*‖₂`.
    pub fn residual(x: &Mat<T>, x_star: &[T]) -> T {
        residual(x, x_star)
    }
}

/// `(1/rows) Σ_i ‖x_i − target‖₂` over the rows of `x`.
pub fn residual<T: Real>(x: &Mat<T>, target: &[T]) -> T {
    let total: T =
        (0..x.rows()).map(|i| x.row(i).iter().zip(target).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>().sqrt()).sum();
    total / T::from_usize_lossy(x.rows())
}

/// Standard-normal features and fair ±1 labels, deterministic in `seed`.
pub fn synthesize_logistic_data<T: Real>(n: usize, samples_per_agent: usize, p: usize, seed: u64) -> Dataset<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let f = Mat::from_fn(samples_per_agent, p, |_, _| T::lit(rng.sample::<f64, _>(StandardNormal)));
        let y = (0..samples_per_agent).map(|_| if rng.random_bool(0.5) { T::one() } else { -T::one() }).collect();
        features.push(f);
        labels.push(y);
    }
    (features, labels)
}

/// Writes `agent_<i>.csv` (1-based) per agent: feature columns then the label.
pub fn save_dataset<T: Real>(dir: impl AsRef<Path>, features: &[Mat<T>], labels: &[Vec<T>]) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    for (i, (f, y)) in features.iter().zip(labels).enumerate() {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_path(dir.join(format!("agent_{}.csv", i + 1)))?;
        for (j, label) in y.iter().enumerate() {
            let mut rec: Vec<String> = f.row(j).iter().map(|v| v.to_string()).collect();
            rec.push(label.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
    }
    Ok(())
}

/// Per-agent feature matrices and label vectors.
pub type Dataset<T> = (Vec<Mat<T>>, Vec<Vec<T>>);

/// Reads the files written by [`save_dataset`] for agents `1..=n`.
pub fn load_dataset<T: Real>(dir: impl AsRef<Path>, n: usize) -> Result<Dataset<T>> {
    let dir = dir.as_ref();
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let path = dir.join(format!("agent_{}.csv", i + 1));
        let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(&path)?;
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let mut vals = rec
                .iter()
                .map(|s| {
                    s.trim().parse::<f64>().map(T::lit).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
                })
                .collect::<Result<Vec<T>>>()?;
            let label = vals.pop().ok_or_else(|| Error::Parse(format!("{}: empty row", path.display())))?;
            rows.push(vals);
            y.push(label);
        }
        features.push(Mat::from_rows(&rows)?);
        labels.push(y);
    }
    Ok((features, labels))
}

#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// `ln(1 + e^t)` without overflow.
#[inline]
fn softplus<T: Real>(t: T) -> T {
    t.max(T::zero()) + (-t.abs()).exp().ln_1p()
}

#[inline]
fn sigmoid<T: Real>(t: T) -> T {
    if t >= T::zero() {
        T::one() / (T::one() + (-t).exp())
    } else {
        let e = t.exp();
        e / (T::one() + e)
    }
}
