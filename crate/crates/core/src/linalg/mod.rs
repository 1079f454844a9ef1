//! Least-squares fitting over column subsets, projector quadratic forms and
//! the signal-misfit functional `mu^T [I - H(s)] mu`.
//!
//! `H(s)` is never materialised: every operation goes through an orthogonal
//! factorisation of the selected columns `X(s)`.

mod incremental;
mod qr;

pub use incremental::{extend_fit, FactorState};
pub(crate) use qr::HouseholderQr;

use std::fmt;

use crate::error::{Error, Result};
use crate::num::{sum_sq, Scalar};

/// Relative agreement required between incremental and from-scratch fits.
pub const INCREMENTAL_TOL: f64 = 1e-8;
/// Tolerance for algebraic identities (projector forms, nestedness).
pub const ALGEBRAIC_TOL: f64 = 1e-9;
/// Tolerance against independent oracles (normal equations, dense projectors).
pub const ORACLE_TOL: f64 = 1e-10;
/// Pivot threshold relative to the largest pivot; smaller directions are
/// treated as numerically dependent.
pub const PIVOT_TOL: f64 = 1e-10;

/// Dense `n x p` design, stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix<T> {
    n: usize,
    p: usize,
    data: Vec<T>,
}

impl<T: Scalar> DesignMatrix<T> {
    /// Builds from column-major storage.
    pub fn from_col_major(n: usize, p: usize, data: Vec<T>) -> Result<Self> {
        if n == 0 || p == 0 {
            return Err(Error::input(format!("design must be non-empty, got {n}x{p}")));
        }
        if data.len() != n * p {
            return Err(Error::input(format!(
                "design storage has {} entries, expected {n}x{p}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::input(format!(
                "non-finite design entry at row {}, column {}",
                pos % n + 1,
                pos / n + 1
            )));
        }
        Ok(DesignMatrix { n, p, data })
    }

    pub fn from_columns(columns: &[Vec<T>]) -> Result<Self> {
        let p = columns.len();
        let n = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::input("columns have unequal lengths"));
        }
        Self::from_col_major(n, p, columns.concat())
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::input("rows have unequal lengths"));
        }
        let mut data = Vec::with_capacity(n * p);
        for j in 0..p {
            data.extend(rows.iter().map(|r| r[j]));
        }
        Self::from_col_major(n, p, data)
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![T::zero(); n * n];
        for i in 0..n {
            data[i * n + i] = T::one();
        }
        DesignMatrix { n, p: n, data }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.p
    }

    /// Column `j`, zero-based.
    #[inline]
    pub fn column(&self, j: usize) -> &[T] {
        &self.data[j * self.n..(j + 1) * self.n]
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[col * self.n + row]
    }

    pub fn as_col_major(&self) -> &[T] {
        &self.data
    }

    /// Column-major copy of the columns in `s`.
    pub fn gather(&self, s: &ModelIndexSet) -> Vec<T> {
        let mut out = Vec::with_capacity(self.n * s.len());
        for &j in s.iter() {
            out.extend_from_slice(self.column(j));
        }
        out
    }

    fn check_model(&self, s: &ModelIndexSet) -> Result<()> {
        match s.max() {
            Some(j) if j >= self.p => Err(Error::input(format!(
                "model index {} outside 1..={}",
                j + 1,
                self.p
            ))),
            _ => Ok(()),
        }
    }

    fn check_vector(&self, v: &[T], what: &str) -> Result<()> {
        if v.len() != self.n {
            return Err(Error::input(format!(
                "{what} has length {}, design has {} rows",
                v.len(),
                self.n
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::input(format!("{what} has non-finite entries")));
        }
        Ok(())
    }
}

/// A model: sorted, duplicate-free set of zero-based column positions.
///
/// Displayed one-based (`{1, 3}`), matching the `x1..xp` column names.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModelIndexSet(Vec<usize>);

impl serde::Serialize for ModelIndexSet {
    /// Serialised one-based, like its display form.
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_seq(self.0.iter().map(|j| j + 1))
    }
}

impl ModelIndexSet {
    pub fn empty() -> Self {
        ModelIndexSet(Vec::new())
    }

    /// Sorts and deduplicates zero-based indices.
    pub fn new(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        ModelIndexSet(indices)
    }

    /// From one-based indices; zero is rejected.
    pub fn from_one_based(indices: &[usize]) -> Result<Self> {
        if indices.contains(&0) {
            return Err(Error::input("one-based model index 0"));
        }
        Ok(Self::new(indices.iter().map(|i| i - 1).collect()))
    }

    /// `{0, .., k-1}`.
    pub fn prefix(k: usize) -> Self {
        ModelIndexSet((0..k).collect())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &usize> + '_ {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn max(&self) -> Option<usize> {
        self.0.last().copied()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.0.binary_search(&j).is_ok()
    }

    pub fn is_subset_of(&self, other: &ModelIndexSet) -> bool {
        self.0.iter().all(|&j| other.contains(j))
    }

    pub fn with(&self, j: usize) -> Self {
        let mut v = self.0.clone();
        if let Err(pos) = v.binary_search(&j) {
            v.insert(pos, j);
        }
        ModelIndexSet(v)
    }

    pub fn without(&self, j: usize) -> Self {
        ModelIndexSet(self.0.iter().copied().filter(|&i| i != j).collect())
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.0.iter().map(|i| i + 1).collect()
    }
}

impl fmt::Display for ModelIndexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (k, i) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}", i + 1)?;
        }
        f.write_str("}")
    }
}

/// Noise-free mean response `mu = X(s0) beta(s0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalVector<T>(pub Vec<T>);

impl<T: Scalar> SignalVector<T> {
    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn energy(&self) -> T {
        sum_sq(&self.0)
    }
}

/// Least-squares fit of `y` on `X(s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult<T> {
    /// `y^T [I - H(s)] y`.
    pub rss: T,
    /// Numerical rank of `X(s)`.
    pub rank: usize,
    /// One coefficient per index of `s`, in index order.
    pub coefficients: Vec<T>,
    /// `[I - H(s)] y`.
    pub residuals: Vec<T>,
}

/// Pivoted factorisation of `X(s)` plus helpers on top of it.
struct Projection<T> {
    qr: Option<HouseholderQr<T>>,
}

impl<T: Scalar> Projection<T> {
    fn new(x: &DesignMatrix<T>, s: &ModelIndexSet) -> Self {
        if s.is_empty() {
            return Projection { qr: None };
        }
        let qr = HouseholderQr::factor(x.gather(s), x.n(), s.len(), true, T::lit(PIVOT_TOL));
        Projection { qr: Some(qr) }
    }

    fn rank(&self) -> usize {
        self.qr.as_ref().map_or(0, HouseholderQr::rank)
    }

    /// `Q^T v`; the first `rank` entries are coordinates in `span X(s)`.
    fn rotate(&self, v: &[T]) -> Vec<T> {
        let mut w = v.to_vec();
        if let Some(qr) = &self.qr {
            qr.apply_qt(&mut w);
        }
        w
    }

    /// `v^T H(s) v`.
    fn form(&self, v: &[T]) -> T {
        sum_sq(&self.rotate(v)[..self.rank()])
    }
}

/// Fits `y` on the columns `s` of `x`.
///
/// Rank-deficient `X(s)` gets the minimum-norm coefficient vector; the
/// residual is always the projection residual `[I - H(s)] y`.
pub fn fit_model<T: Scalar>(
    x: &DesignMatrix<T>,
    y: &[T],
    s: &ModelIndexSet,
) -> Result<FitResult<T>> {
    x.check_vector(y, "response")?;
    x.check_model(s)?;
    let proj = Projection::new(x, s);
    let Some(qr) = &proj.qr else {
        return Ok(FitResult {
            rss: sum_sq(y),
            rank: 0,
            coefficients: Vec::new(),
            residuals: y.to_vec(),
        });
    };
    let rank = qr.rank();
    let qty = proj.rotate(y);
    let coefficients = qr.min_norm_solution(&qty);
    let mut residuals = qty;
    residuals[..rank].iter_mut().for_each(|v| *v = T::zero());
    qr.apply_q(&mut residuals);
    Ok(FitResult {
        rss: sum_sq(&residuals),
        rank,
        coefficients,
        residuals,
    })
}

/// `mu^T [I - H(s)] mu`: the squared distance from the signal to `span X(s)`.
pub fn delta<T: Scalar>(x: &DesignMatrix<T>, mu: &SignalVector<T>, s: &ModelIndexSet) -> Result<T> {
    x.check_vector(mu.as_slice(), "signal")?;
    x.check_model(s)?;
    // a sum of squared projection residuals, so never negative
    Ok(fit_model(x, mu.as_slice(), s)?.rss)
}

/// `u^T H(s) u`, clamped to `[0, u^T u]`.
pub fn quadratic_form<T: Scalar>(x: &DesignMatrix<T>, u: &[T], s: &ModelIndexSet) -> Result<T> {
    x.check_vector(u, "vector")?;
    x.check_model(s)?;
    let total = sum_sq(u);
    Ok(Projection::new(x, s).form(u).min(total))
}

/// `u^T [H(s_big) - H(s_small)] u` for nested models `s_small ⊂ s_big`.
///
/// Computed as the energy of `u` along the directions that `s_big` adds to
/// `span X(s_small)`, so the result is nonnegative by construction.
pub fn nested_form<T: Scalar>(
    x: &DesignMatrix<T>,
    u: &[T],
    s_small: &ModelIndexSet,
    s_big: &ModelIndexSet,
) -> Result<T> {
    x.check_vector(u, "vector")?;
    x.check_model(s_big)?;
    if !s_small.is_subset_of(s_big) {
        return Err(Error::input(format!("{s_small} is not a subset of {s_big}")));
    }
    let mut state = FactorState::new(x, u)?;
    for &j in s_small.iter() {
        state.extend(x, j)?;
    }
    let before = state.rss();
    for &j in s_big.iter().filter(|&&j| !s_small.contains(j)) {
        state.extend(x, j)?;
    }
    Ok((before - state.rss()).max(T::zero()))
}

/// Dense `H(s)` as a row-major `n x n` matrix. Only for small checks.
pub fn dense_projector<T: Scalar>(x: &DesignMatrix<T>, s: &ModelIndexSet) -> Result<Vec<T>> {
    x.check_model(s)?;
    let n = x.n();
    let mut h = vec![T::zero(); n * n];
    let proj = Projection::new(x, s);
    if let Some(qr) = &proj.qr {
        let q = qr.thin_q();
        let r = qr.rank();
        for i in 0..n {
            for j in 0..n {
                h[i * n + j] = (0..r).map(|c| q[c * n + i] * q[c * n + j]).sum();
            }
        }
    }
    Ok(h)
}
