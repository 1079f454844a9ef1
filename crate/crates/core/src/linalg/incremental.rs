//! Column-by-column least-squares updating.
//!
//! Keeps an explicit orthonormal basis of the current column span (classical
//! Gram-Schmidt with one reorthogonalisation pass) together with the current
//! residual, so adding a column costs `O(n * |s|)`.

use crate::error::{Error, Result};
use crate::linalg::{DesignMatrix, FitResult, PIVOT_TOL};
use crate::num::{axpy, dot, sum_sq, Scalar};

/// Incremental factor of `X(s)` for a fixed response.
///
/// Single owner: cloning is cheap enough for depth-first enumeration, but a
/// state is never shared mutably.
#[derive(Debug, Clone)]
pub struct FactorState<T> {
    n: usize,
    /// Model columns in insertion order.
    order: Vec<usize>,
    /// Orthonormal basis vectors, one per independent column.
    basis: Vec<Vec<T>>,
    /// For each inserted column, its coordinates in `basis` at insertion
    /// time, with the new diagonal entry last when the column was independent.
    r_cols: Vec<Vec<T>>,
    independent: Vec<bool>,
    /// `Q^T y`.
    qty: Vec<T>,
    residual: Vec<T>,
    largest_pivot: T,
}

impl<T: Scalar> FactorState<T> {
    /// State of the empty model for response `y`.
    pub fn new(x: &DesignMatrix<T>, y: &[T]) -> Result<Self> {
        if y.len() != x.n() {
            return Err(Error::input(format!(
                "response has length {}, design has {} rows",
                y.len(),
                x.n()
            )));
        }
        Ok(FactorState {
            n: x.n(),
            order: Vec::new(),
            basis: Vec::new(),
            r_cols: Vec::new(),
            independent: Vec::new(),
            qty: Vec::new(),
            residual: y.to_vec(),
            largest_pivot: T::zero(),
        })
    }

    pub fn size(&self) -> usize {
        self.order.len()
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn rss(&self) -> T {
        sum_sq(&self.residual)
    }

    pub fn residual(&self) -> &[T] {
        &self.residual
    }

    /// Model columns in insertion order.
    pub fn columns(&self) -> &[usize] {
        &self.order
    }

    pub fn contains(&self, j: usize) -> bool {
        self.order.contains(&j)
    }

    /// Orthonormal basis of the current span.
    pub fn basis(&self) -> &[Vec<T>] {
        &self.basis
    }

    /// Removes the components of `v` along the current basis, twice.
    /// Returns the accumulated coordinates.
    fn orthogonalize(&self, v: &mut [T]) -> Vec<T> {
        let mut coords = vec![T::zero(); self.basis.len()];
        for _ in 0..2 {
            for (c, q) in coords.iter_mut().zip(&self.basis) {
                let h = dot(q, v);
                axpy(-h, q, v);
                *c = *c + h;
            }
        }
        coords
    }

    /// Adds column `j` of `x` to the model.
    ///
    /// A column whose component outside the current span is at most
    /// `PIVOT_TOL` times the largest pivot seen (or its own norm) is recorded
    /// as dependent and leaves the span and the residual unchanged.
    pub fn extend(&mut self, x: &DesignMatrix<T>, j: usize) -> Result<()> {
        if x.n() != self.n {
            return Err(Error::input("design row count differs from factor state"));
        }
        if j >= x.p() {
            return Err(Error::input(format!("model index {} outside 1..={}", j + 1, x.p())));
        }
        if self.contains(j) {
            return Err(Error::input(format!("index {} already in the model", j + 1)));
        }
        let col = x.column(j);
        let mut w = col.to_vec();
        let mut coords = self.orthogonalize(&mut w);
        let norm = sum_sq(&w).sqrt();
        let scale = self.largest_pivot.max(sum_sq(col).sqrt());
        let independent = norm > T::lit(PIVOT_TOL) * scale && norm > T::zero();
        if independent {
            self.largest_pivot = self.largest_pivot.max(norm);
            let inv = T::one() / norm;
            w.iter_mut().for_each(|v| *v = *v * inv);
            let h = dot(&w, &self.residual);
            axpy(-h, &w, &mut self.residual);
            self.qty.push(h);
            self.basis.push(w);
            coords.push(norm);
        }
        self.order.push(j);
        self.r_cols.push(coords);
        self.independent.push(independent);
        Ok(())
    }

    /// Current fit. Coefficients of dependent columns are zero (basic
    /// solution); the residual is the exact projection residual.
    pub fn fit(&self) -> FitResult<T> {
        let rank = self.rank();
        // Upper-triangular system over independent columns only.
        let ind: Vec<usize> = (0..self.order.len()).filter(|&i| self.independent[i]).collect();
        let mut z = vec![T::zero(); rank];
        for row in (0..rank).rev() {
            let mut s = self.qty[row];
            for (k, &col) in ind.iter().enumerate().skip(row + 1) {
                s = s - self.r_cols[col][row] * z[k];
            }
            z[row] = s / self.r_cols[ind[row]][row];
        }
        let mut by_position = vec![T::zero(); self.order.len()];
        for (k, &i) in ind.iter().enumerate() {
            by_position[i] = z[k];
        }
        // reorder to ascending column index
        let mut pairs: Vec<(usize, T)> = self.order.iter().copied().zip(by_position).collect();
        pairs.sort_by_key(|&(c, _)| c);
        FitResult {
            rss: self.rss(),
            rank,
            coefficients: pairs.into_iter().map(|(_, b)| b).collect(),
            residuals: self.residual.clone(),
        }
    }
}

/// Extends `prior` by column `new_index`, returning the enlarged fit and the
/// reusable state. The response is the one `prior` was created with.
pub fn extend_fit<T: Scalar>(
    mut prior: FactorState<T>,
    x: &DesignMatrix<T>,
    new_index: usize,
) -> Result<(FitResult<T>, FactorState<T>)> {
    prior.extend(x, new_index)?;
    Ok((prior.fit(), prior))
}
