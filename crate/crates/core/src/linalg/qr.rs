//! Householder QR with optional column pivoting on a column-major work array.

use crate::num::{sum_sq, Scalar};

/// Factorisation `A P = Q R` of an `m x k` matrix, stored LAPACK-style:
/// `R` in the upper triangle, reflector tails below the diagonal.
#[derive(Debug, Clone)]
pub(crate) struct HouseholderQr<T> {
    m: usize,
    k: usize,
    a: Vec<T>,
    tau: Vec<T>,
    /// `perm[i]` is the original column sitting at factor position `i`.
    perm: Vec<usize>,
    rank: usize,
}

/// Generates a reflector `H = I - tau v v^T` with `v[0] = 1` such that
/// `H x = beta e_1`. On exit `x[0] = beta` and `x[1..]` holds `v[1..]`.
fn make_reflector<T: Scalar>(x: &mut [T]) -> T {
    let alpha = x[0];
    let tail = sum_sq(&x[1..]);
    if tail == T::zero() {
        return T::zero();
    }
    let norm = (alpha * alpha + tail).sqrt();
    let beta = if alpha >= T::zero() { -norm } else { norm };
    let tau = (beta - alpha) / beta;
    let scale = T::one() / (alpha - beta);
    for v in &mut x[1..] {
        *v = *v * scale;
    }
    x[0] = beta;
    tau
}

/// Applies `I - tau v v^T` (with implicit `v[0] = 1`) to `target`.
#[inline]
fn apply_reflector<T: Scalar>(v_tail: &[T], tau: T, target: &mut [T]) {
    if tau == T::zero() {
        return;
    }
    let mut s = target[0];
    for (t, &v) in target[1..].iter().zip(v_tail) {
        s = s + *t * v;
    }
    s = s * tau;
    target[0] = target[0] - s;
    for (t, &v) in target[1..].iter_mut().zip(v_tail) {
        *t = *t - s * v;
    }
}

impl<T: Scalar> HouseholderQr<T> {
    /// Factorises the columns in `a` (column-major, `m` rows).
    ///
    /// With `pivot`, the remaining column of largest norm is moved forward at
    /// every step and the factorisation stops once that norm falls to
    /// `rel_tol` times the first pivot; the step count is the numerical rank.
    /// Without pivoting every column is processed.
    pub(crate) fn factor(a: Vec<T>, m: usize, k: usize, pivot: bool, rel_tol: T) -> Self {
        debug_assert_eq!(a.len(), m * k);
        let mut qr = HouseholderQr {
            m,
            k,
            a,
            tau: Vec::with_capacity(k.min(m)),
            perm: (0..k).collect(),
            rank: 0,
        };
        let steps = k.min(m);
        let mut first_pivot = T::zero();
        for i in 0..steps {
            if pivot {
                let (best, best_norm) = (i..k)
                    .map(|c| (c, sum_sq(&qr.a[c * m + i..(c + 1) * m])))
                    .fold((i, T::neg_infinity()), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
                let best_norm = best_norm.sqrt();
                if i == 0 {
                    first_pivot = best_norm;
                }
                if best_norm <= rel_tol * first_pivot || best_norm == T::zero() {
                    break;
                }
                if best != i {
                    qr.swap_columns(i, best);
                }
            }
            let tau = make_reflector(&mut qr.a[i * m + i..(i + 1) * m]);
            qr.tau.push(tau);
            let (head, tail) = qr.a.split_at_mut((i + 1) * m);
            let v_tail = &head[i * m + i + 1..(i + 1) * m];
            for c in 0..(k - i - 1) {
                apply_reflector(v_tail, tau, &mut tail[c * m + i..(c + 1) * m]);
            }
            qr.rank += 1;
        }
        qr
    }

    fn swap_columns(&mut self, a: usize, b: usize) {
        let m = self.m;
        for r in 0..m {
            self.a.swap(a * m + r, b * m + r);
        }
        self.perm.swap(a, b);
    }

    pub(crate) fn rank(&self) -> usize {
        self.rank
    }

    #[cfg(test)]
    pub(crate) fn perm(&self) -> &[usize] {
        &self.perm
    }

    #[inline]
    pub(crate) fn r(&self, row: usize, col: usize) -> T {
        self.a[col * self.m + row]
    }

    /// `v <- Q^T v`, using the `rank` computed reflectors.
    pub(crate) fn apply_qt(&self, v: &mut [T]) {
        let m = self.m;
        for (i, &tau) in self.tau.iter().enumerate() {
            apply_reflector(&self.a[i * m + i + 1..(i + 1) * m], tau, &mut v[i..]);
        }
    }

    /// `v <- Q v`.
    pub(crate) fn apply_q(&self, v: &mut [T]) {
        let m = self.m;
        for (i, &tau) in self.tau.iter().enumerate().rev() {
            apply_reflector(&self.a[i * m + i + 1..(i + 1) * m], tau, &mut v[i..]);
        }
    }

    /// Thin orthonormal factor: the first `rank` columns of `Q`, column-major.
    pub(crate) fn thin_q(&self) -> Vec<T> {
        let m = self.m;
        let mut q = vec![T::zero(); m * self.rank];
        for c in 0..self.rank {
            let col = &mut q[c * m..(c + 1) * m];
            col[c] = T::one();
            self.apply_q(col);
        }
        q
    }

    /// Solves `R[..rank, ..rank] x = rhs[..rank]` by back substitution.
    pub(crate) fn solve_upper(&self, rhs: &[T]) -> Vec<T> {
        let r = self.rank;
        let mut x = rhs[..r].to_vec();
        for i in (0..r).rev() {
            let mut s = x[i];
            for j in i + 1..r {
                s = s - self.r(i, j) * x[j];
            }
            x[i] = s / self.r(i, i);
        }
        x
    }

    /// Minimum-norm solution of `A z = b` in the original column order,
    /// given `qtb = Q^T b`.
    pub(crate) fn min_norm_solution(&self, qtb: &[T]) -> Vec<T> {
        let (r, k) = (self.rank, self.k);
        let mut z = vec![T::zero(); k];
        if r == 0 {
            return z;
        }
        let permuted = if r == k {
            self.solve_upper(qtb)
        } else {
            // Complete orthogonal decomposition: W = [R11 R12] is r x k with
            // full row rank; factor W^T = Z T and solve T^T w = c, z = Z w.
            let mut wt = vec![T::zero(); k * r];
            for row in 0..r {
                for col in row..k {
                    // W[row, col] becomes W^T[col, row]
                    wt[row * k + col] = self.r(row, col);
                }
            }
            let inner = HouseholderQr::factor(wt, k, r, false, T::zero());
            let mut w = vec![T::zero(); k];
            for i in 0..r {
                let mut s = qtb[i];
                for j in 0..i {
                    s = s - inner.r(j, i) * w[j];
                }
                w[i] = s / inner.r(i, i);
            }
            inner.apply_q(&mut w);
            w
        };
        for (pos, &col) in self.perm.iter().enumerate() {
            z[col] = permuted[pos];
        }
        z
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matmul(a: &[f64], m: usize, k: usize, x: &[f64]) -> Vec<f64> {
        (0..m).map(|i| (0..k).map(|j| a[j * m + i] * x[j]).sum()).collect()
    }

    #[test]
    fn reconstructs_q_times_r() {
        let (m, k) = (5, 3);
        let a: Vec<f64> = (0..m * k).map(|i| ((i * 7 + 3) % 11) as f64 - 5.0).collect();
        let qr = HouseholderQr::factor(a.clone(), m, k, true, 1e-10);
        assert_eq!(qr.rank(), 3);
        let q = qr.thin_q();
        for c in 0..k {
            let orig = qr.perm()[c];
            for i in 0..m {
                let v: f64 = (0..=c).map(|t| q[t * m + i] * qr.r(t, c)).sum();
                assert!((v - a[orig * m + i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn detects_rank_deficiency_and_min_norm() {
        // third column = first + second
        let (m, k) = (4, 3);
        let c1 = [1.0, 0.0, 2.0, 1.0];
        let c2 = [0.0, 1.0, 1.0, -1.0];
        let c3: Vec<f64> = c1.iter().zip(&c2).map(|(a, b)| a + b).collect();
        let a: Vec<f64> = c1.iter().chain(&c2).chain(&c3).copied().collect();
        let qr = HouseholderQr::factor(a.clone(), m, k, true, 1e-10);
        assert_eq!(qr.rank(), 2);
        // b in the column span: b = 1*c3
        let b = c3.clone();
        let mut qtb = b.clone();
        qr.apply_qt(&mut qtb);
        let z = qr.min_norm_solution(&qtb);
        let fitted = matmul(&a, m, k, &z);
        for (f, t) in fitted.iter().zip(&b) {
            assert!((f - t).abs() < 1e-12);
        }
        // minimum norm solution of z1 + z3 = 1, z2 + z3 = 1 is (1/3, 1/3, 2/3)
        assert!((z[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((z[1] - 1.0 / 3.0).abs() < 1e-12);
        assert!((z[2] - 2.0 / 3.0).abs() < 1e-12);
    }
}
