//! One synchronous iteration of each engine.
//!
//! Every function returns the next state or [`Error::NonFinite`] if the new
//! iterate overflowed.

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::objectives::ObjectiveSuite;
use crate::scalar::Real;
use crate::weights::WeightMatrix;

use super::AlgorithmState;

fn finite<T: Real>(m: Mat<T>, k: usize) -> Result<Mat<T>> {
    if m.all_finite() {
        Ok(m)
    } else {
        Err(Error::NonFinite { k })
    }
}

fn check_len<T>(v: &[T], n: usize, what: &str) -> Result<()> {
    if v.len() != n {
        return Err(Error::ShapeMismatch(format!("{} {what} for {n} agents", v.len())));
    }
    Ok(())
}

/// Row `i` of `base − α_i y_i`.
fn descend<T: Real>(base: &Mat<T>, alphas: &[T], y: &Mat<T>) -> Mat<T> {
    let p = base.cols();
    Mat::from_fn(base.rows(), p, |i, d| base[(i, d)] - alphas[i] * y[(i, d)])
}

/// `B y + g_new − g`.
fn track<T: Real>(b: &WeightMatrix<T>, y: &Mat<T>, g_new: &Mat<T>, g: &Mat<T>) -> Mat<T> {
    let by = b.apply(y);
    Mat::from_fn(y.rows(), y.cols(), |i, d| (by[(i, d)] + g_new[(i, d)]) - g[(i, d)])
}

fn advance<T: Real>(state: &AlgorithmState<T>, x: Mat<T>, y: Mat<T>, grad: Mat<T>) -> AlgorithmState<T> {
    AlgorithmState {
        x,
        x_prev: state.x.clone(),
        y,
        grad,
        grad_prev: state.grad.clone(),
        aux: None,
        eig: None,
        k: state.k + 1,
    }
}

fn tracking_step<T: Real>(
    state: &AlgorithmState<T>,
    a: &WeightMatrix<T>,
    b: &WeightMatrix<T>,
    alphas: &[T],
    betas: Option<&[T]>,
    suite: &ObjectiveSuite<T>,
) -> Result<AlgorithmState<T>> {
    let n = state.x.rows();
    check_len(alphas, n, "step-sizes")?;
    let mut x = descend(&a.apply(&state.x), alphas, &state.y);
    if let Some(betas) = betas {
        check_len(betas, n, "momenta")?;
        for (i, &beta) in betas.iter().enumerate() {
            let (cur, prev) = (state.x.row(i), state.x_prev.row(i));
            for (d, v) in x.row_mut(i).iter_mut().enumerate() {
                *v = *v + beta * (cur[d] - prev[d]);
            }
        }
    }
    let x = finite(x, state.k + 1)?;
    let g = suite.gradients(&x);
    let y = track(b, &state.y, &g, &state.grad);
    Ok(advance(state, x, y, g))
}

/// `x⁺ = A x − D_α y + D_β (x − x_prev)`, `y⁺ = B y + ∇f(x⁺) − ∇f(x)`.
pub fn abm_step<T: Real>(
    state: &AlgorithmState<T>,
    a: &WeightMatrix<T>,
    b: &WeightMatrix<T>,
    alphas: &[T],
    betas: &[T],
    suite: &ObjectiveSuite<T>,
) -> Result<AlgorithmState<T>> {
    tracking_step(state, a, b, alphas, Some(betas), suite)
}

/// `x⁺ = A x − D_α y`, `y⁺ = B y + ∇f(x⁺) − ∇f(x)`.
pub fn ab_step<T: Real>(
    state: &AlgorithmState<T>,
    a: &WeightMatrix<T>,
    b: &WeightMatrix<T>,
    alphas: &[T],
    suite: &ObjectiveSuite<T>,
) -> Result<AlgorithmState<T>> {
    tracking_step(state, a, b, alphas, None, suite)
}

/// AB with `A = B = W`.
pub fn ds_gradient_tracking_step<T: Real>(
    state: &AlgorithmState<T>,
    w: &WeightMatrix<T>,
    alphas: &[T],
    suite: &ObjectiveSuite<T>,
) -> Result<AlgorithmState<T>> {
    tracking_step(state, w, w, alphas, None, suite)
}

/// `x_1 = W x_0 − α ∇f(x_0)`, then
/// `x⁺ = (I + W) x − W̃ x_prev − α (∇f(x) − ∇f(x_prev))`.
pub fn extra_step<T: Real>(
    state: &AlgorithmState<T>,
    w: &WeightMatrix<T>,
    w_tilde: &WeightMatrix<T>,
    alphas: &[T],
    suite: &ObjectiveSuite<T>,
) -> Result<AlgorithmState<T>> {
    check_len(alphas, state.x.rows(), "step-sizes")?;
    let wx = w.apply(&state.x);
    let x = if state.k == 0 {
        descend(&wx, alphas, &state.grad)
    } else {
        let wtx = w_tilde.apply(&state.x_prev);
        let dg = state.grad.sub(&state.grad_prev);
        let base = Mat::from_fn(wx.rows(), wx.cols(), |i, d| (state.x[(i, d)] + wx[(i, d)]) - wtx[(i, d)]);
        descend(&base, alphas, &dg)
    };
    let x = finite(x, state.k + 1)?;
    let g = suite.gradients(&x);
    Ok(advance(state, x, g.clone(), g))
}

/// AB with the tracker eliminated:
/// `x⁺ = (A + B) x − B A x_prev − α (∇f(x) − ∇f(x_prev))`, primed by
/// `x_1 = A x_0 − α ∇f(x_0)`.
pub fn ab_extra_form_step<T: Real>(
    state: &AlgorithmState<T>,
    a: &WeightMatrix<T>,
    b: &WeightMatrix<T>,
    alpha: T,
    suite: &ObjectiveSuite<T>,
) -> Result<AlgorithmState<T>> {
    let ax = a.apply(&state.x);
    let x = if state.k == 0 {
        ax.zip_map(&state.grad, |v, g| v - alpha * g)
    } else {
        let bx = b.apply(&state.x);
        let bax = b.apply(&a.apply(&state.x_prev));
        Mat::from_fn(ax.rows(), ax.cols(), |i, d| {
            (ax[(i, d)] + bx[(i, d)]) - bax[(i, d)] - alpha * (state.grad[(i, d)] - state.grad_prev[(i, d)])
        })
    };
    let x = finite(x, state.k + 1)?;
    let g = suite.gradients(&x);
    Ok(advance(state, x, g.clone(), g))
}

fn degenerate<T: Real>(values: impl Iterator<Item = T>) -> Result<()> {
    for (agent, v) in values.enumerate() {
        if !(v > T::epsilon()) {
            return Err(Error::DegenerateEstimate { agent, value: v.as_f64() });
        }
    }
    Ok(())
}

/// `x̃⁺ = B̃ x̃ − D_α y`, `w⁺ = B̃ w`, `x⁺ = x̃⁺ / w⁺`, `y⁺ = B y + ∇f(x⁺) − ∇f(x)`.
pub fn addopt_step<T: Real>(
    state: &AlgorithmState<T>,
    b_tilde: &WeightMatrix<T>,
    b: &WeightMatrix<T>,
    alphas: &[T],
    suite: &ObjectiveSuite<T>,
) -> Result<AlgorithmState<T>> {
    check_len(alphas, state.x.rows(), "step-sizes")?;
    let (Some(xt), Some(w)) = (&state.aux, &state.eig) else {
        return Err(Error::InvalidParameter("ADD-OPT state needs x~ and w".into()));
    };
    let xt = finite(descend(&b_tilde.apply(xt), alphas, &state.y), state.k + 1)?;
    let w = b_tilde.apply(w);
    degenerate(w.as_slice().iter().copied())?;
    let inv: Vec<T> = w.as_slice().iter().map(|&v| T::one() / v).collect();
    let x = finite(xt.scale_rows(&inv), state.k + 1)?;
    let g = suite.gradients(&x);
    let y = track(b, &state.y, &g, &state.grad);
    let mut next = advance(state, x, y, g);
    next.aux = Some(xt);
    next.eig = Some(w);
    Ok(next)
}

/// `x⁺ = A x − D_α z`, `Y⁺ = Ã Y`, `z⁺ = Ã z + ∇f(x⁺)/[Y⁺]_ii − ∇f(x)/[Y]_ii`
/// with `Y_0 = I` and `z_0 = ∇f(x_0)`; the tracker `z` lives in `y`.
pub fn frost_step<T: Real>(
    state: &AlgorithmState<T>,
    a: &WeightMatrix<T>,
    a_tilde: &WeightMatrix<T>,
    alphas: &[T],
    suite: &ObjectiveSuite<T>,
) -> Result<AlgorithmState<T>> {
    let n = state.x.rows();
    check_len(alphas, n, "step-sizes")?;
    let Some(est) = &state.eig else {
        return Err(Error::InvalidParameter("FROST state needs the eigenvector estimate".into()));
    };
    let x = finite(descend(&a.apply(&state.x), alphas, &state.y), state.k + 1)?;
    let est_new = a_tilde.apply(est);
    degenerate((0..n).map(|i| est[(i, i)]))?;
    degenerate((0..n).map(|i| est_new[(i, i)]))?;
    let g = suite.gradients(&x);
    let az = a_tilde.apply(&state.y);
    let z =
        Mat::from_fn(n, x.cols(), |i, d| (az[(i, d)] + g[(i, d)] / est_new[(i, i)]) - state.grad[(i, d)] / est[(i, i)]);
    let mut next = advance(state, x, z, g);
    next.eig = Some(est_new);
    Ok(next)
}

/// AB in scaled coordinates `x̃ = Π_r x`:
/// `x̃⁺ = B̃ x̃ − Π_r D_α y`, `x⁺ = Π_r^{-1} x̃⁺`, `y⁺ = B y + ∇f(x⁺) − ∇f(x)`.
pub fn transformed_ab_exact_step<T: Real>(
    state: &AlgorithmState<T>,
    b_tilde: &WeightMatrix<T>,
    b: &WeightMatrix<T>,
    scale: &[T],
    alphas: &[T],
    suite: &ObjectiveSuite<T>,
) -> Result<AlgorithmState<T>> {
    let n = state.x.rows();
    check_len(alphas, n, "step-sizes")?;
    check_len(scale, n, "scale factors")?;
    let Some(xt) = &state.aux else {
        return Err(Error::InvalidParameter("transformed AB state needs x~".into()));
    };
    let scaled: Vec<T> = scale.iter().zip(alphas).map(|(&s, &a)| s * a).collect();
    let xt = finite(descend(&b_tilde.apply(xt), &scaled, &state.y), state.k + 1)?;
    let inv: Vec<T> = scale.iter().map(|&s| T::one() / s).collect();
    let x = xt.scale_rows(&inv);
    let g = suite.gradients(&x);
    let y = track(b, &state.y, &g, &state.grad);
    let mut next = advance(state, x, y, g);
    next.aux = Some(xt);
    Ok(next)
}

fn global_grad<T: Real>(suite: &ObjectiveSuite<T>, x: &Mat<T>) -> Result<Mat<T>> {
    Mat::from_vec(1, x.cols(), suite.global_gradient(x.as_slice()))
}

/// `x⁺ = x − α ∇F(x)` on the average objective.
pub fn centralized_gd_step<T: Real>(
    state: &AlgorithmState<T>,
    alpha: T,
    suite: &ObjectiveSuite<T>,
) -> Result<AlgorithmState<T>> {
    let x = finite(state.x.zip_map(&state.grad, |v, g| v - alpha * g), state.k + 1)?;
    let g = global_grad(suite, &x)?;
    Ok(advance(state, x, g.clone(), g))
}

/// `x⁺ = x − α ∇F(x) + β (x − x_prev)`.
pub fn centralized_hb_step<T: Real>(
    state: &AlgorithmState<T>,
    alpha: T,
    beta: T,
    suite: &ObjectiveSuite<T>,
) -> Result<AlgorithmState<T>> {
    let p = state.x.cols();
    let x = Mat::from_fn(1, p, |_, d| {
        (state.x[(0, d)] - alpha * state.grad[(0, d)]) + beta * (state.x[(0, d)] - state.x_prev[(0, d)])
    });
    let x = finite(x, state.k + 1)?;
    let g = global_grad(suite, &x)?;
    Ok(advance(state, x, g.clone(), g))
}
