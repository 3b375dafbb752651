//! Average consensus as a linear system `z⁺ = H z`.
//!
//! Two forms are built from a row-stochastic `A` and a column-stochastic `B`:
//!
//! * `Abmc`, the heavy-ball consensus iteration with state `[x; y; x_prev]`,
//! * `Surplus`, the surplus iteration with state `[x; y]`.
//!
//! Starting from `x_0 = v`, `y_0 = 0` (and `x_{-1} = v`), every agent's `x`
//! converges to the average of `v` for small enough `α`.

use nalgebra::{DMatrix, Schur};

use crate::analysis::{Termination, Trace, TraceRecord};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::objectives::residual;
use crate::scalar::Real;
use crate::weights::WeightMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConsensusForm {
    Abmc,
    Surplus,
}

impl ConsensusForm {
    pub fn name(self) -> &'static str {
        match self {
            Self::Abmc => "abm-c",
            Self::Surplus => "surplus",
        }
    }

    /// Number of `n p` blocks in the state.
    pub fn blocks(self) -> usize {
        match self {
            Self::Abmc => 3,
            Self::Surplus => 2,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ConsensusSystem<T> {
    form: ConsensusForm,
    n: usize,
    p: usize,
    alpha: T,
    beta: T,
    h: Mat<T>,
    h_inf: Mat<T>,
    /// `H` for `p = 1`. `H(p) = H(1) ⊗ I_p` has the same spectrum.
    h_scalar: Mat<T>,
    h_scalar_inf: Mat<T>,
}

fn check_inputs<T: Real>(a: &WeightMatrix<T>, b: &WeightMatrix<T>, alpha: T, beta: T, p: usize) -> Result<()> {
    if !a.kind().is_row() || !b.kind().is_column() {
        return Err(Error::InvalidWeights(format!(
            "consensus needs row-stochastic A and column-stochastic B, got {:?} and {:?}",
            a.kind(),
            b.kind()
        )));
    }
    if a.n() != b.n() {
        return Err(Error::ShapeMismatch(format!("A is {0}x{0}, B is {1}x{1}", a.n(), b.n())));
    }
    if !(alpha.is_finite() && alpha > T::zero()) || !(beta.is_finite() && beta >= T::zero()) {
        return Err(Error::InvalidParameter(format!("need α > 0 and β ≥ 0, got α = {alpha}, β = {beta}")));
    }
    if p == 0 {
        return Err(Error::InvalidParameter("dimension p must be positive".into()));
    }
    Ok(())
}

fn abmc_blocks<T: Real>(a: &Mat<T>, b: &Mat<T>, alpha: T, beta: T) -> (Mat<T>, Mat<T>) {
    let n = a.rows();
    let i = Mat::identity(n);
    let z = Mat::zeros(n, n);
    let bi = i.scale(beta);
    let ai = i.scale(alpha);
    let a_b = a.add(&bi);
    let a_b_i = a_b.sub(&i);
    let b_a = b.sub(&ai);
    let nai = ai.scale(-T::one());
    let nbi = bi.scale(-T::one());
    let h = Mat::from_blocks(&[vec![&a_b, &nai, &nbi], vec![&a_b_i, &b_a, &nbi], vec![&i, &z, &z]]);
    let w = Mat::filled(n, n, T::one() / T::from_usize_lossy(n));
    let nw = w.scale(-T::one());
    let h_inf = Mat::from_blocks(&[vec![&w, &nw, &z], vec![&z, &z, &z], vec![&w, &nw, &z]]);
    (h, h_inf)
}

fn surplus_blocks<T: Real>(a: &Mat<T>, b: &Mat<T>, alpha: T) -> (Mat<T>, Mat<T>) {
    let n = a.rows();
    let i = Mat::identity(n);
    let z = Mat::zeros(n, n);
    let ai = i.scale(alpha);
    let nai = ai.scale(-T::one());
    let a_i = a.sub(&i);
    let b_a = b.sub(&ai);
    let h = Mat::from_blocks(&[vec![a, &nai], vec![&a_i, &b_a]]);
    let w = Mat::filled(n, n, T::one() / T::from_usize_lossy(n));
    let nw = w.scale(-T::one());
    let h_inf = Mat::from_blocks(&[vec![&w, &nw], vec![&z, &z]]);
    (h, h_inf)
}

/// The surplus iteration in its original sign convention,
/// `[[A, αI], [I − A, B − αI]]`; similar to the `Surplus` form via
/// `diag(I, −I)`.
pub fn surplus_original_form<T: Real>(a: &WeightMatrix<T>, b: &WeightMatrix<T>, alpha: T, p: usize) -> Result<Mat<T>> {
    check_inputs(a, b, alpha, T::zero(), p)?;
    let n = a.n();
    let i = Mat::identity(n);
    let ai = i.scale(alpha);
    let i_a = i.sub(a.entries());
    let b_a = b.entries().sub(&ai);
    Ok(Mat::from_blocks(&[vec![a.entries(), &ai], vec![&i_a, &b_a]]).kron_identity(p))
}

impl<T: Real> ConsensusSystem<T> {
    /// Heavy-ball consensus:
    /// `H̃ = [[A+βI, −αI, −βI], [A+βI−I, B−αI, −βI], [I, 0, 0]] ⊗ I_p`.
    pub fn abmc(a: &WeightMatrix<T>, b: &WeightMatrix<T>, alpha: T, beta: T, p: usize) -> Result<Self> {
        check_inputs(a, b, alpha, beta, p)?;
        let (h1, h1_inf) = abmc_blocks(a.entries(), b.entries(), alpha, beta);
        Ok(Self::assemble(ConsensusForm::Abmc, a.n(), p, alpha, beta, h1, h1_inf))
    }

    /// Surplus consensus: `H = [[A, −αI], [A − I, B − αI]] ⊗ I_p`.
    pub fn surplus(a: &WeightMatrix<T>, b: &WeightMatrix<T>, alpha: T, p: usize) -> Result<Self> {
        check_inputs(a, b, alpha, T::zero(), p)?;
        let (h1, h1_inf) = surplus_blocks(a.entries(), b.entries(), alpha);
        Ok(Self::assemble(ConsensusForm::Surplus, a.n(), p, alpha, T::zero(), h1, h1_inf))
    }

    pub fn build(
        form: ConsensusForm,
        a: &WeightMatrix<T>,
        b: &WeightMatrix<T>,
        alpha: T,
        beta: T,
        p: usize,
    ) -> Result<Self> {
        match form {
            ConsensusForm::Abmc => Self::abmc(a, b, alpha, beta, p),
            ConsensusForm::Surplus => Self::surplus(a, b, alpha, p),
        }
    }

    fn assemble(form: ConsensusForm, n: usize, p: usize, alpha: T, beta: T, h1: Mat<T>, h1_inf: Mat<T>) -> Self {
        let (h, h_inf) =
            if p == 1 { (h1.clone(), h1_inf.clone()) } else { (h1.kron_identity(p), h1_inf.kron_identity(p)) };
        Self { form, n, p, alpha, beta, h, h_inf, h_scalar: h1, h_scalar_inf: h1_inf }
    }

    pub fn form(&self) -> ConsensusForm {
        self.form
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn h(&self) -> &Mat<T> {
        &self.h
    }

    /// `lim H^k`.
    pub fn h_inf(&self) -> &Mat<T> {
        &self.h_inf
    }

    /// Length of the stacked state.
    pub fn dim(&self) -> usize {
        self.form.blocks() * self.n * self.p
    }

    /// `[v; 0]` or `[v; 0; v]` flattened row-major per block.
    pub fn initial_state(&self, v: &Mat<T>) -> Result<Vec<T>> {
        if v.shape() != (self.n, self.p) {
            return Err(Error::ShapeMismatch(format!(
                "v is {}x{}, expected {}x{}",
                v.rows(),
                v.cols(),
                self.n,
                self.p
            )));
        }
        let np = self.n * self.p;
        let mut z = vec![T::zero(); self.dim()];
        z[..np].copy_from_slice(v.as_slice());
        if self.form == ConsensusForm::Abmc {
            z[2 * np..].copy_from_slice(v.as_slice());
        }
        Ok(z)
    }

    /// The `x` block of a stacked state as `n x p`.
    pub fn x_block(&self, z: &[T]) -> Mat<T> {
        let np = self.n * self.p;
        Mat::from_vec(self.n, self.p, z[..np].to_vec()).expect("state length matches")
    }

    pub fn step(&self, z: &[T]) -> Vec<T> {
        self.h.mul_vec(z)
    }

    /// `H^∞ z_0`.
    pub fn limit(&self, z0: &[T]) -> Vec<T> {
        self.h_inf.mul_vec(z0)
    }

    /// Iterates from `v` and records `(1/n) Σ ‖x_i − mean(v)‖`. Returns the
    /// trace and the final stacked state.
    pub fn run(&self, v: &Mat<T>, iterations: usize, divergence_threshold: T) -> Result<(Trace<T>, Vec<T>)> {
        let mean: Vec<T> = v.sum_rows().into_iter().map(|s| s / T::from_usize_lossy(self.n)).collect();
        let mut z = self.initial_state(v)?;
        let mut trace = Trace::new(self.form.name());
        let rec = |k: usize, z: &[T]| TraceRecord {
            k,
            residual: residual(&self.x_block(z), &mean),
            tracking_error: None,
            elapsed_s: 0.0,
        };
        trace.records.push(rec(0, &z));
        for k in 1..=iterations {
            z = self.step(&z);
            let r = rec(k, &z);
            let diverged = !r.residual.is_finite() || r.residual > divergence_threshold;
            trace.records.push(r);
            if diverged {
                trace.meta.termination = Termination::Diverged;
                return Ok((trace, z));
            }
        }
        Ok((trace, z))
    }

    /// `ρ(H − H^∞)`, the asymptotic rate of consensus.
    pub fn effective_radius(&self) -> f64 {
        let m = self.h_scalar.sub(&self.h_scalar_inf).cast::<f64>();
        spectral_radius(&m).unwrap_or_else(|| gelfand_radius(&m, 14))
    }
}

/// Spectral radius from the real Schur form; `None` if the QR iteration did
/// not converge.
pub fn spectral_radius(m: &Mat<f64>) -> Option<f64> {
    let n = m.rows();
    let dm = DMatrix::from_row_slice(n, m.cols(), m.as_slice());
    let schur = Schur::try_new(dm, f64::EPSILON, 10_000 * n.max(1))?;
    Some(schur.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Gelfand estimate `‖M^k‖^{1/k}` with `k = 2^squarings`, rescaled at every
/// squaring to stay in range.
pub fn gelfand_radius(m: &Mat<f64>, squarings: u32) -> f64 {
    let mut cur = m.clone();
    let mut log_scale = 0.0;
    for _ in 0..squarings {
        cur = cur.matmul(&cur);
        let s = cur.norm_inf();
        if s == 0.0 {
            return 0.0;
        }
        cur = cur.scale(1.0 / s);
        log_scale = 2.0 * log_scale + s.ln();
    }
    // cur = M^k / exp(log_scale) at k = 2^squarings, and ‖cur‖ = 1.
    if squarings == 0 {
        return m.norm_inf();
    }
    (log_scale / 2f64.powi(squarings as i32)).exp()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadiusPoint {
    pub alpha: f64,
    pub beta: f64,
    pub radius: f64,
}

/// `ρ(H − H^∞)` over an `(α, β)` grid, `α`-major, and the minimizer (ties to
/// the earlier grid point). The surplus form ignores `β`; pass `[0.0]`.
pub fn radius_grid<T: Real>(
    form: ConsensusForm,
    a: &WeightMatrix<T>,
    b: &WeightMatrix<T>,
    alphas: &[f64],
    betas: &[f64],
) -> Result<(Vec<RadiusPoint>, RadiusPoint)> {
    let mut grid = Vec::with_capacity(alphas.len() * betas.len());
    for &alpha in alphas {
        for &beta in betas {
            let sys = ConsensusSystem::build(form, a, b, T::lit(alpha), T::lit(beta), 1)?;
            grid.push(RadiusPoint { alpha, beta, radius: sys.effective_radius() });
        }
    }
    let best = grid
        .iter()
        .copied()
        .reduce(|best, p| if p.radius < best.radius { p } else { best })
        .ok_or_else(|| Error::InvalidParameter("empty radius grid".into()))?;
    Ok((grid, best))
}
