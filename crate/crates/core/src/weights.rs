//! Row-, column- and doubly-stochastic weights and their Perron vectors.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::graph::Digraph;
use crate::linalg::{Csr, Mat};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StochasticKind {
    RowStochastic,
    ColumnStochastic,
    DoublyStochastic,
}

impl StochasticKind {
    pub fn is_row(self) -> bool {
        matches!(self, Self::RowStochastic | Self::DoublyStochastic)
    }

    pub fn is_column(self) -> bool {
        matches!(self, Self::ColumnStochastic | Self::DoublyStochastic)
    }
}

/// A nonnegative stochastic matrix with its cached Perron vectors.
///
/// `pi_r` is the left eigenvector at eigenvalue 1 of a row-stochastic matrix
/// (`π_rᵀ A = π_rᵀ`, `π_rᵀ 1 = 1`), `pi_c` the right eigenvector of a
/// column-stochastic one (`B π_c = π_c`, `1ᵀ π_c = 1`).
#[derive(Clone, Debug)]
pub struct WeightMatrix<T> {
    kind: StochasticKind,
    entries: Mat<T>,
    csr: Csr<T>,
    pi_r: Option<Vec<T>>,
    pi_c: Option<Vec<T>>,
}

/// Power-iteration controls for Perron vectors.
#[derive(Clone, Copy, Debug)]
pub struct PowerIteration<T> {
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Real> PowerIteration<T> {
    /// `tol = 1e-12` (floored for `f32`) and `max_iter = 100 n`.
    pub fn default_for(n: usize) -> Self {
        Self { tol: T::structural_tol(), max_iter: 100 * n.max(1) }
    }
}

impl<T: Real> WeightMatrix<T> {
    /// Validates `entries` against `kind` and computes the Perron vectors
    /// with the default power iteration.
    pub fn new(entries: Mat<T>, kind: StochasticKind) -> Result<Self> {
        let n = entries.rows();
        Self::with_power_iteration(entries, kind, PowerIteration::default_for(n))
    }

    pub fn with_power_iteration(entries: Mat<T>, kind: StochasticKind, power: PowerIteration<T>) -> Result<Self> {
        validate(&entries, kind)?;
        let pi_r = if kind == StochasticKind::DoublyStochastic {
            Some(uniform(entries.rows()))
        } else if kind.is_row() {
            Some(left_perron(&entries, None, power)?)
        } else {
            None
        };
        let pi_c = match kind {
            StochasticKind::DoublyStochastic => Some(uniform(entries.rows())),
            StochasticKind::ColumnStochastic => Some(right_perron(&entries, None, power)?),
            StochasticKind::RowStochastic => None,
        };
        let csr = Csr::from_dense(&entries);
        Ok(Self { kind, entries, csr, pi_r, pi_c })
    }

    /// `a_ij = 1 / |N_i^in|` for `j ∈ N_i^in`.
    pub fn uniform_row_stochastic(g: &Digraph) -> Result<Self> {
        let n = g.n();
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            let ins = g.in_neighbors(i);
            let w = T::one() / T::from_usize_lossy(ins.len());
            for &j in ins {
                m[(i, j)] = w;
            }
        }
        Self::new(m, StochasticKind::RowStochastic)
    }

    /// `b_ij = 1 / |N_j^out|` for `i ∈ N_j^out`.
    pub fn uniform_column_stochastic(g: &Digraph) -> Result<Self> {
        let n = g.n();
        let mut m = Mat::zeros(n, n);
        for j in 0..n {
            let outs = g.out_neighbors(j);
            let w = T::one() / T::from_usize_lossy(outs.len());
            for &i in outs {
                m[(i, j)] = w;
            }
        }
        Self::new(m, StochasticKind::ColumnStochastic)
    }

    /// `W = I - L / (max_i deg_i + 1)` on an undirected graph.
    pub fn laplacian_doubly_stochastic(g: &Digraph) -> Result<Self> {
        if !g.is_symmetric() {
            return Err(Error::InvalidWeights(
                "Laplacian weights need an undirected graph (in-neighbors equal to out-neighbors)".into(),
            ));
        }
        let n = g.n();
        let max_deg = (0..n).map(|i| g.degree(i)).max().unwrap_or(0);
        let scale = T::one() / T::from_usize_lossy(max_deg + 1);
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            for &j in g.in_neighbors(i) {
                if j != i {
                    m[(i, j)] = scale;
                }
            }
            m[(i, i)] = T::one() - T::from_usize_lossy(g.degree(i)) * scale;
        }
        Self::new(m, StochasticKind::DoublyStochastic)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.entries.rows()
    }

    #[inline]
    pub fn kind(&self) -> StochasticKind {
        self.kind
    }

    #[inline]
    pub fn entries(&self) -> &Mat<T> {
        &self.entries
    }

    #[inline]
    pub fn csr(&self) -> &Csr<T> {
        &self.csr
    }

    pub fn pi_r(&self) -> Option<&[T]> {
        self.pi_r.as_deref()
    }

    pub fn pi_c(&self) -> Option<&[T]> {
        self.pi_c.as_deref()
    }

    /// `W · x` for an `n x p` stacked state.
    #[inline]
    pub fn apply(&self, x: &Mat<T>) -> Mat<T> {
        self.csr.apply(x)
    }

    /// `lim W^k`: `1 π_rᵀ`, `π_c 1ᵀ`, or `(1/n) 1 1ᵀ`.
    pub fn infinite_power(&self) -> Mat<T> {
        let n = self.n();
        match self.kind {
            StochasticKind::RowStochastic => {
                let pi = self.pi_r.as_ref().expect("row-stochastic matrices carry pi_r");
                Mat::from_fn(n, n, |_, j| pi[j])
            }
            StochasticKind::ColumnStochastic => {
                let pi = self.pi_c.as_ref().expect("column-stochastic matrices carry pi_c");
                Mat::from_fn(n, n, |i, _| pi[i])
            }
            StochasticKind::DoublyStochastic => Mat::filled(n, n, T::one() / T::from_usize_lossy(n)),
        }
    }

    /// Largest deviation of the relevant row/column sums from one.
    pub fn stochasticity_residual(&self) -> T {
        stochasticity_residual(&self.entries, self.kind)
    }

    /// Whether every positive entry is an edge of `g` (`a_ij > 0` only when
    /// `j ∈ N_i^in`).
    pub fn respects(&self, g: &Digraph) -> bool {
        let n = self.n();
        n == g.n() && (0..n).all(|i| (0..n).all(|j| self.entries[(i, j)] == T::zero() || g.has_edge(j, i)))
    }

    /// Row-major CSV dump, shortest round-trip decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n() {
            let row: Vec<String> = self.entries.row(i).iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }
}

fn uniform<T: Real>(n: usize) -> Vec<T> {
    vec![T::one() / T::from_usize_lossy(n); n]
}

fn stochasticity_residual<T: Real>(m: &Mat<T>, kind: StochasticKind) -> T {
    let dev = |sums: Vec<T>| sums.into_iter().map(|s| (s - T::one()).abs()).fold(T::zero(), T::max);
    let mut r = T::zero();
    if kind.is_row() {
        r = r.max(dev(m.row_sums()));
    }
    if kind.is_column() {
        r = r.max(dev(m.column_sums()));
    }
    r
}

fn validate<T: Real>(m: &Mat<T>, kind: StochasticKind) -> Result<()> {
    let (r, c) = m.shape();
    if r != c || r == 0 {
        return Err(Error::InvalidWeights(format!("expected a nonempty square matrix, got {r}x{c}")));
    }
    if m.as_slice().iter().any(|v| !v.is_finite() || *v < T::zero()) {
        return Err(Error::InvalidWeights("entries must be finite and nonnegative".into()));
    }
    if (0..r).any(|i| m[(i, i)] <= T::zero()) {
        return Err(Error::InvalidWeights("diagonal must be strictly positive".into()));
    }
    let residual = stochasticity_residual(m, kind);
    if residual > T::structural_tol() {
        return Err(Error::InvalidWeights(format!("{kind:?} sums off by {residual:e}")));
    }
    Ok(())
}

/// `(π_r, π_c)`, each present only for the matching stochasticity.
pub type PerronPair<T> = (Option<Vec<T>>, Option<Vec<T>>);

/// Perron vectors of `w` recomputed with explicit power-iteration controls.
pub fn perron_vectors<T: Real>(w: &WeightMatrix<T>, tol: T, max_iter: usize) -> Result<PerronPair<T>> {
    let power = PowerIteration { tol, max_iter };
    let pi_r = if w.kind.is_row() { Some(left_perron(&w.entries, None, power)?) } else { None };
    let pi_c = if w.kind.is_column() { Some(right_perron(&w.entries, None, power)?) } else { None };
    Ok((pi_r, pi_c))
}

/// Left Perron vector `πᵀ A = πᵀ` of a row-stochastic matrix.
pub fn left_perron<T: Real>(a: &Mat<T>, start: Option<&[T]>, power: PowerIteration<T>) -> Result<Vec<T>> {
    let at = Csr::from_dense(&a.transpose());
    power_iterate(&at, start, power)
}

/// Right Perron vector `B π = π` of a column-stochastic matrix.
pub fn right_perron<T: Real>(b: &Mat<T>, start: Option<&[T]>, power: PowerIteration<T>) -> Result<Vec<T>> {
    power_iterate(&Csr::from_dense(b), start, power)
}

fn power_iterate<T: Real>(m: &Csr<T>, start: Option<&[T]>, power: PowerIteration<T>) -> Result<Vec<T>> {
    let mut v: Vec<T> = match start {
        Some(s) if s.len() == m.n_rows() => s.to_vec(),
        Some(s) => {
            return Err(Error::ShapeMismatch(format!("start vector of length {} for n = {}", s.len(), m.n_rows())))
        }
        None => uniform(m.n_rows()),
    };
    normalize_l1(&mut v)?;
    for _ in 0..power.max_iter {
        let mut next = m.apply_vec(&v);
        normalize_l1(&mut next)?;
        let diff = next.iter().zip(&v).map(|(&a, &b)| (a - b).abs()).fold(T::zero(), T::max);
        v = next;
        if diff < power.tol {
            return Ok(v);
        }
    }
    Err(Error::NoConvergence { what: "Perron power iteration", iterations: power.max_iter })
}

fn normalize_l1<T: Real>(v: &mut [T]) -> Result<()> {
    let s: T = v.iter().map(|x| x.abs()).sum();
    if !(s > T::zero()) || !s.is_finite() {
        return Err(Error::InvalidParameter("power iteration start vector has zero mass".into()));
    }
    for x in v.iter_mut() {
        *x = *x / s;
    }
    Ok(())
}
