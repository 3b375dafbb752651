use crate::error::{Error, Result};
use crate::scalar::Real;

/// Contraction of the averaged gradient step in the row/column tracking
/// analysis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepCondition<T> {
    /// `s = π_rᵀ diag(α) π_c`
    pub s: T,
    /// `max(|1 − μ n s|, |1 − l n s|)`
    pub lambda: T,
    /// `0 < s < 2 / (n l)`
    pub ok: bool,
}

pub fn step_condition_lambda<T: Real>(pi_r: &[T], alphas: &[T], pi_c: &[T], mu: T, l: T) -> Result<StepCondition<T>> {
    let n = pi_r.len();
    if alphas.len() != n || pi_c.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "pi_r, alphas, pi_c have lengths {n}, {}, {}",
            alphas.len(),
            pi_c.len()
        )));
    }
    let s: T = pi_r.iter().zip(alphas).zip(pi_c).map(|((&r, &a), &c)| r * a * c).sum();
    let ns = T::from_usize_lossy(n) * s;
    let lambda = (T::one() - mu * ns).abs().max((T::one() - l * ns).abs());
    let ok = s > T::zero() && s < T::lit(2.0) / (T::from_usize_lossy(n) * l);
    Ok(StepCondition { s, lambda, ok })
}
