//! Dense linear-algebra kernels used by the optimizer: thin SVD, symmetric
//! positive-definite solve, orthonormal completion, and column centering.
//!
//! The SVD is a one-sided Jacobi on the tall side of the input. It is slower
//! than blocked bidiagonalization but simple, deterministic, and accurate to
//! machine precision at the sizes this crate works with.

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};
use crate::rng::{gaussian_vec, rng_for};
use crate::scalar::{real, Real};

/// Thin singular value decomposition `M = P · diag(Θ) · Qᵀ`.
///
/// `left` (P) is `m×r` and `right` (Q) is `n×r`, both column-orthonormal;
/// `singulars` (Θ) is non-increasing and strictly above `rank_tol · σ_max`.
/// Directions below the tolerance are omitted; they span the complement.
#[derive(Debug, Clone)]
pub struct ThinSvd<T> {
    pub left: Matrix<T>,
    pub singulars: Vec<T>,
    pub right: Matrix<T>,
}

impl<T: Real> ThinSvd<T> {
    pub fn rank(&self) -> usize {
        self.singulars.len()
    }

    /// `P · diag(Θ) · Qᵀ`
    pub fn reconstruct(&self) -> Matrix<T> {
        let mut scaled = self.left.clone();
        for (j, &s) in self.singulars.iter().enumerate() {
            for v in scaled.col_mut(j) {
                *v *= s;
            }
        }
        scaled.mul_transpose(&self.right)
    }
}

/// Default relative threshold separating retained singular values from the
/// numerical null space.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Computes the thin SVD of `m`, dropping singular values below
/// `rank_tol · σ_max`.
pub fn thin_svd<T: Real>(m: &Matrix<T>, rank_tol: T) -> Result<ThinSvd<T>> {
    if m.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "svd input contains non-finite values".into(),
        ));
    }
    let transposed = m.rows() <= m.cols();
    let a = if transposed { m.transpose() } else { m.clone() };
    let (w, v) = jacobi_orthogonalize(a);

    // Column norms of w are the singular values.
    let n_small = w.cols();
    let mut order: Vec<usize> = (0..n_small).collect();
    let norms: Vec<T> = (0..n_small)
        .map(|j| dot(w.col(j), w.col(j)).sqrt())
        .collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap());
    let sigma_max = order.first().map(|&i| norms[i]).unwrap_or_else(T::zero);
    let threshold = rank_tol * sigma_max;
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&i| norms[i] > threshold && norms[i] > T::zero())
        .collect();

    let singulars: Vec<T> = kept.iter().map(|&i| norms[i]).collect();
    let mut u = w.select_cols(&kept);
    for (j, &s) in singulars.iter().enumerate() {
        let inv = T::one() / s;
        for x in u.col_mut(j) {
            *x *= inv;
        }
    }
    let v_kept = v.select_cols(&kept);

    let (left, right) = if transposed { (v_kept, u) } else { (u, v_kept) };
    Ok(ThinSvd {
        left,
        singulars,
        right,
    })
}

/// One-sided Jacobi: post-multiplies `a` by plane rotations until its columns
/// are mutually orthogonal. Returns the rotated matrix and the accumulated
/// rotation product.
fn jacobi_orthogonalize<T: Real>(mut a: Matrix<T>) -> (Matrix<T>, Matrix<T>) {
    let n = a.cols();
    let mut v = Matrix::identity(n);
    if n < 2 {
        return (a, v);
    }
    let eps = T::epsilon() * real::<T>(4.0);
    let max_sweeps = 64;
    for _ in 0..max_sweeps {
        let mut rotated = false;
        for i in 0..n - 1 {
            for j in i + 1..n {
                let aii = dot(a.col(i), a.col(i));
                let ajj = dot(a.col(j), a.col(j));
                let aij = dot(a.col(i), a.col(j));
                if aij.abs() <= eps * (aii * ajj).sqrt() || aij == T::zero() {
                    continue;
                }
                rotated = true;
                let zeta = (ajj - aii) / ((T::one() + T::one()) * aij);
                let t = {
                    let s = if zeta >= T::zero() {
                        T::one()
                    } else {
                        -T::one()
                    };
                    s / (zeta.abs() + (T::one() + zeta * zeta).sqrt())
                };
                let cs = T::one() / (T::one() + t * t).sqrt();
                let sn = cs * t;
                rotate_cols(&mut a, i, j, cs, sn);
                rotate_cols(&mut v, i, j, cs, sn);
            }
        }
        if !rotated {
            break;
        }
    }
    (a, v)
}

/// Applies the Givens rotation `[c, s; -s, c]` to columns `i`, `j`.
fn rotate_cols<T: Real>(m: &mut Matrix<T>, i: usize, j: usize, cs: T, sn: T) {
    for r in 0..m.rows() {
        let x = m.at(r, i);
        let y = m.at(r, j);
        m.set(r, i, cs * x - sn * y);
        m.set(r, j, sn * x + cs * y);
    }
}

/// Solves `a · x = b` for symmetric positive-definite `a` via Cholesky.
pub fn solve_spd<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::Dimension(format!(
            "spd matrix must be square, got {}x{}",
            n,
            a.cols()
        )));
    }
    if b.rows() != n {
        return Err(Error::Dimension(format!(
            "rhs has {} rows, expected {n}",
            b.rows()
        )));
    }
    let sym_tol = real::<T>(1e-10).max(T::epsilon() * real::<T>(64.0)) * T::one().max(a.max_abs());
    for i in 0..n {
        for j in i + 1..n {
            if (a.at(i, j) - a.at(j, i)).abs() > sym_tol {
                return Err(Error::Numerical(format!(
                    "matrix is not symmetric at ({i},{j})"
                )));
            }
        }
    }

    // Lower-triangular Cholesky factor, column by column.
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a.at(j, j);
        for k in 0..j {
            let v = l.at(j, k);
            d -= v * v;
        }
        if !(d > T::zero()) || !d.is_finite() {
            return Err(Error::Numerical(
                "matrix is not positive definite; increase the ridge weight".into(),
            ));
        }
        let dj = d.sqrt();
        l.set(j, j, dj);
        for i in j + 1..n {
            let mut s = a.at(i, j);
            for k in 0..j {
                s -= l.at(i, k) * l.at(j, k);
            }
            l.set(i, j, s / dj);
        }
    }

    // Forward and backward substitution per right-hand-side column.
    let mut x = b.clone();
    for c in 0..b.cols() {
        for i in 0..n {
            let mut s = x.at(i, c);
            for k in 0..i {
                s -= l.at(i, k) * x.at(k, c);
            }
            x.set(i, c, s / l.at(i, i));
        }
        for i in (0..n).rev() {
            let mut s = x.at(i, c);
            for k in i + 1..n {
                s -= l.at(k, i) * x.at(k, c);
            }
            x.set(i, c, s / l.at(i, i));
        }
    }
    Ok(x)
}

/// Draws `k` orthonormal columns orthogonal to every column of `basis` and,
/// when given, to `also_orthogonal_to`. Candidates are seeded Gaussian
/// vectors passed through Gram-Schmidt with a second re-orthogonalization
/// pass.
pub fn orthonormal_complement<T: Real>(
    basis: &Matrix<T>,
    also_orthogonal_to: Option<&[T]>,
    k: usize,
    seed: u64,
) -> Result<Matrix<T>> {
    let m = basis.rows();
    let mut against: Vec<Vec<T>> = (0..basis.cols()).map(|c| basis.col(c).to_vec()).collect();
    let mut capacity = m - basis.cols();

    if let Some(extra) = also_orthogonal_to {
        assert_eq!(extra.len(), m, "extra vector length must match basis rows");
        let mut v = extra.to_vec();
        let norm0 = dot(&v, &v).sqrt();
        for _ in 0..2 {
            for b in &against {
                let c = dot(&v, b);
                for (x, &y) in v.iter_mut().zip(b) {
                    *x -= c * y;
                }
            }
        }
        let norm = dot(&v, &v).sqrt();
        // Only an independent direction consumes a dimension.
        if norm > real::<T>(1e-12).max(T::epsilon() * real::<T>(64.0)) * T::one().max(norm0) {
            let inv = T::one() / norm;
            for x in &mut v {
                *x *= inv;
            }
            against.push(v);
            capacity -= 1;
        }
    }

    if k > capacity {
        return Err(Error::Config(format!(
            "requested {k} complement directions, only {capacity} available in dimension {m}"
        )));
    }

    let mut rng = rng_for(seed);
    let mut out = Matrix::zeros(m, k);
    let mut accepted = 0;
    let mut attempts = 0;
    let max_attempts = 32 + 16 * k;
    while accepted < k {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::Numerical(
                "failed to draw an independent complement candidate".into(),
            ));
        }
        let mut v = gaussian_vec::<T>(m, &mut rng);
        let norm0 = dot(&v, &v).sqrt();
        for _ in 0..2 {
            for b in &against {
                let c = dot(&v, b);
                for (x, &y) in v.iter_mut().zip(b) {
                    *x -= c * y;
                }
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm <= real::<T>(1e-6) * norm0 {
            continue; // nearly dependent draw, retry
        }
        let inv = T::one() / norm;
        for x in &mut v {
            *x *= inv;
        }
        out.col_mut(accepted).copy_from_slice(&v);
        against.push(v);
        accepted += 1;
    }
    Ok(out)
}

/// Subtracts each row's mean: returns `m − (1/N)·(m·1)·1ᵀ`. Every row of the
/// result sums to zero.
pub fn center_columns<T: Real>(m: &Matrix<T>) -> Matrix<T> {
    let n = m.cols();
    let inv_n = T::one() / real::<T>(n as f64);
    let means: Vec<T> = m.row_sums().into_iter().map(|s| s * inv_n).collect();
    let mut out = m.clone();
    for c in 0..n {
        for (v, &mean) in out.col_mut(c).iter_mut().zip(&means) {
            *v -= mean;
        }
    }
    out
}
