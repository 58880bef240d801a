//! Small dense linear algebra on flat row-major buffers.
//!
//! Everything here targets matrices up to a few hundred rows/cols (hidden
//! width 64, TR counts in the hundreds), with fixed loop order so results are
//! reproducible regardless of thread count. Cholesky covers the ridge normal
//! equations; the cyclic Jacobi eigensolver covers PCA and the minimum-norm
//! fallback for rank-deficient systems.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<S: Scalar> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<S>,
}

impl<S: Scalar> Mat<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix data length mismatch");
        Self { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = S::one();
        }
        m
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> S {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut S {
        &mut self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[S] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [S] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.at(r, c);
            }
        }
        out
    }

    pub fn cast<T: Scalar>(&self) -> Mat<T> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| T::of(v.to_f64())).collect(),
        }
    }
}

/// C = A · B. Inner loop runs over columns of B so it vectorizes.
pub fn matmul<S: Scalar>(a: &Mat<S>, b: &Mat<S>) -> Mat<S> {
    assert_eq!(a.cols, b.rows, "matmul dims");
    let mut c = Mat::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let arow = a.row(i);
        let crow = c.row_mut(i);
        for (k, &aik) in arow.iter().enumerate() {
            let brow = b.row(k);
            for (cj, &bkj) in crow.iter_mut().zip(brow) {
                *cj += aik * bkj;
            }
        }
    }
    c
}

/// C = Aᵀ · B without materializing the transpose.
pub fn matmul_at_b<S: Scalar>(a: &Mat<S>, b: &Mat<S>) -> Mat<S> {
    assert_eq!(a.rows, b.rows, "matmul_at_b dims");
    let mut c = Mat::zeros(a.cols, b.cols);
    for r in 0..a.rows {
        let arow = a.row(r);
        let brow = b.row(r);
        for (i, &ari) in arow.iter().enumerate() {
            let crow = c.row_mut(i);
            for (cj, &brj) in crow.iter_mut().zip(brow) {
                *cj += ari * brj;
            }
        }
    }
    c
}

/// C = A · Bᵀ without materializing the transpose.
pub fn matmul_a_bt<S: Scalar>(a: &Mat<S>, b: &Mat<S>) -> Mat<S> {
    assert_eq!(a.cols, b.cols, "matmul_a_bt dims");
    let mut c = Mat::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let arow = a.row(i);
        let crow = c.row_mut(i);
        for (j, cij) in crow.iter_mut().enumerate() {
            *cij = dot(arow, b.row(j));
        }
    }
    c
}

/// y = x · A for a row vector x.
pub fn vecmat<S: Scalar>(x: &[S], a: &Mat<S>) -> Vec<S> {
    assert_eq!(x.len(), a.rows, "vecmat dims");
    let mut y = vec![S::zero(); a.cols];
    for (k, &xk) in x.iter().enumerate() {
        let arow = a.row(k);
        for (yj, &akj) in y.iter_mut().zip(arow) {
            *yj += xk * akj;
        }
    }
    y
}

pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Cholesky factorization A = L·Lᵀ of a symmetric positive-definite matrix.
/// Returns the lower factor; fails on non-positive pivots.
pub fn cholesky<S: Scalar>(a: &Mat<S>) -> Result<Mat<S>> {
    assert_eq!(a.rows, a.cols, "cholesky needs square input");
    let n = a.rows;
    let mut l = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a.at(i, j);
            for k in 0..j {
                sum = sum - l.at(i, k) * l.at(j, k);
            }
            if i == j {
                if sum <= S::zero() {
                    return Err(Error::numeric(format!(
                        "cholesky: non-positive pivot {} at index {i}",
                        sum.to_f64()
                    )));
                }
                *l.at_mut(i, j) = sum.sqrt();
            } else {
                *l.at_mut(i, j) = sum / l.at(j, j);
            }
        }
    }
    Ok(l)
}

/// Solves A · X = B for SPD A given its Cholesky factor L.
/// B has one right-hand side per column.
pub fn cholesky_solve<S: Scalar>(l: &Mat<S>, b: &Mat<S>) -> Mat<S> {
    let n = l.rows;
    assert_eq!(b.rows, n, "cholesky_solve dims");
    let mut x = b.clone();
    // forward: L·Z = B
    for i in 0..n {
        for k in 0..i {
            let lik = l.at(i, k);
            for c in 0..x.cols {
                let zk = x.at(k, c);
                *x.at_mut(i, c) -= lik * zk;
            }
        }
        let lii = l.at(i, i);
        for c in 0..x.cols {
            *x.at_mut(i, c) /= lii;
        }
    }
    // backward: Lᵀ·X = Z
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            let lki = l.at(k, i);
            for c in 0..x.cols {
                let xk = x.at(k, c);
                *x.at_mut(i, c) -= lki * xk;
            }
        }
        let lii = l.at(i, i);
        for c in 0..x.cols {
            *x.at_mut(i, c) /= lii;
        }
    }
    x
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns (eigenvalues, eigenvectors as columns), sorted descending.
pub fn jacobi_eigh<S: Scalar>(a: &Mat<S>, max_sweeps: usize) -> (Vec<S>, Mat<S>) {
    assert_eq!(a.rows, a.cols, "jacobi_eigh needs square input");
    let n = a.rows;
    let mut m = a.clone();
    let mut v = Mat::identity(n);
    let tol = S::of(1e-30);
    for _ in 0..max_sweeps {
        let mut off = S::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off += m.at(p, q) * m.at(p, q);
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.at(p, q);
                if apq == S::zero() {
                    continue;
                }
                let app = m.at(p, p);
                let aqq = m.at(q, q);
                let theta = (aqq - app) / (S::of(2.0) * apq);
                let t = {
                    let s = if theta >= S::zero() {
                        S::one()
                    } else {
                        -S::one()
                    };
                    s / (theta.abs() + (theta * theta + S::one()).sqrt())
                };
                let c = S::one() / (t * t + S::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m.at(k, p);
                    let mkq = m.at(k, q);
                    *m.at_mut(k, p) = c * mkp - s * mkq;
                    *m.at_mut(k, q) = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m.at(p, k);
                    let mqk = m.at(q, k);
                    *m.at_mut(p, k) = c * mpk - s * mqk;
                    *m.at_mut(q, k) = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v.at(k, p);
                    let vkq = v.at(k, q);
                    *v.at_mut(k, p) = c * vkp - s * vkq;
                    *v.at_mut(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.at(j, j).partial_cmp(&m.at(i, i)).unwrap());
    let eigvals: Vec<S> = order.iter().map(|&i| m.at(i, i)).collect();
    let mut eigvecs = Mat::zeros(n, n);
    for (new_c, &old_c) in order.iter().enumerate() {
        for r in 0..n {
            *eigvecs.at_mut(r, new_c) = v.at(r, old_c);
        }
    }
    (eigvals, eigvecs)
}

/// Minimum-norm solution of (G)·X = B for symmetric positive-semidefinite G,
/// via eigendecomposition with relative cutoff on small eigenvalues.
pub fn pinv_solve_psd<S: Scalar>(g: &Mat<S>, b: &Mat<S>) -> Mat<S> {
    let n = g.rows;
    let (vals, vecs) = jacobi_eigh(g, 60);
    let max_ev = vals.first().copied().unwrap_or(S::zero()).max(S::zero());
    let cutoff = max_ev * S::of(1e-12);
    // X = V · diag(1/λ where λ > cutoff) · Vᵀ · B
    let vt_b = matmul_at_b(&vecs, b);
    let mut scaled = vt_b;
    for (i, &ev) in vals.iter().enumerate() {
        let inv = if ev > cutoff { S::one() / ev } else { S::zero() };
        for c in 0..scaled.cols {
            *scaled.at_mut(i, c) *= inv;
        }
    }
    let mut out = Mat::zeros(n, scaled.cols);
    for i in 0..n {
        for (k, &vik) in vecs.row(i).iter().enumerate() {
            let srow = scaled.row(k);
            let orow = out.row_mut(i);
            for (oj, &skj) in orow.iter_mut().zip(srow) {
                *oj += vik * skj;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn matmul_small() {
        let a = Mat::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Mat::from_vec(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let c = matmul(&a, &b);
        assert_eq!(c.data, vec![58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn at_b_matches_explicit_transpose() {
        let a = Mat::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Mat::from_vec(3, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let c1 = matmul_at_b(&a, &b);
        let c2 = matmul(&a.transpose(), &b);
        for (x, y) in c1.data.iter().zip(&c2.data) {
            assert_relative_eq!(x, y, max_relative = 1e-12);
        }
    }

    #[test]
    fn cholesky_reconstructs() {
        let a = Mat::from_vec(3, 3, vec![4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0]);
        let l = cholesky(&a).unwrap();
        let lt = l.transpose();
        let back = matmul(&l, &lt);
        for (x, y) in a.data.iter().zip(&back.data) {
            assert_relative_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn cholesky_solve_identity_rhs_inverts() {
        let a = Mat::from_vec(2, 2, vec![2.0, 0.5, 0.5, 1.0]);
        let l = cholesky(&a).unwrap();
        let inv = cholesky_solve(&l, &Mat::identity(2));
        let prod = matmul(&a, &inv);
        assert_relative_eq!(prod.at(0, 0), 1.0, epsilon = 1e-12);
        assert_relative_eq!(prod.at(0, 1), 0.0, epsilon = 1e-12);
        assert_relative_eq!(prod.at(1, 1), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = Mat::from_vec(2, 2, vec![1.0, 2.0, 2.0, 1.0]);
        assert!(cholesky(&a).is_err());
    }

    #[test]
    fn jacobi_diagonalizes_known_matrix() {
        // Eigenvalues of [[2,1],[1,2]] are 3 and 1.
        let a = Mat::<f64>::from_vec(2, 2, vec![2.0, 1.0, 1.0, 2.0]);
        let (vals, vecs) = jacobi_eigh(&a, 30);
        assert_relative_eq!(vals[0], 3.0, epsilon = 1e-12);
        assert_relative_eq!(vals[1], 1.0, epsilon = 1e-12);
        // first eigenvector proportional to (1,1)/sqrt(2)
        let d = (vecs.at(0, 0) * vecs.at(1, 0)).signum();
        assert!(d > 0.0);
        assert_relative_eq!(vecs.at(0, 0).abs(), 1.0 / 2f64.sqrt(), epsilon = 1e-10);
    }

    #[test]
    fn pinv_solve_handles_singular() {
        // G = diag(2, 0): min-norm solution zeroes the null-space component.
        let g = Mat::from_vec(2, 2, vec![2.0, 0.0, 0.0, 0.0]);
        let b = Mat::from_vec(2, 1, vec![4.0, 9.0]);
        let x = pinv_solve_psd(&g, &b);
        assert_relative_eq!(x.at(0, 0), 2.0, epsilon = 1e-10);
        assert_relative_eq!(x.at(1, 0), 0.0, epsilon = 1e-10);
    }
}
