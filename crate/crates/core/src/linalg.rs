//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::scalar::Real;

/// Largest absolute entry of `m - mᵀ`.
pub fn max_asymmetry<T: Real>(m: &DMatrix<T>) -> T {
    let mut worst = T::zero();
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            let d = (m[(i, j)] - m[(j, i)]).abs();
            if d > worst {
                worst = d;
            }
        }
    }
    worst
}

/// Maximum absolute row sum, `max_i Σ_j |m_ij|`.
pub fn row_sum_norm<T: Real>(m: &DMatrix<T>) -> T {
    m.row_iter()
        .map(|r| r.iter().fold(T::zero(), |acc, x| acc + x.abs()))
        .fold(T::zero(), |a, b| if b > a { b } else { a })
}

pub fn symmetrize<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * T::lit(0.5)
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue<T: Real>(m: &DMatrix<T>) -> T {
    if m.nrows() == 0 {
        return T::zero();
    }
    symmetrize(m)
        .symmetric_eigenvalues()
        .iter()
        .fold(T::max_value().unwrap(), |a, &b| if b < a { b } else { a })
}

/// Ratio of the largest to the smallest absolute eigenvalue of a symmetric
/// matrix. Infinite when the matrix is exactly singular.
pub fn symmetric_condition<T: Real>(m: &DMatrix<T>) -> T {
    let ev = m.clone().symmetric_eigenvalues();
    condition_from_eigenvalues(ev.as_slice())
}

fn condition_from_eigenvalues<T: Real>(ev: &[T]) -> T {
    let mut hi = T::zero();
    let mut lo = T::max_value().unwrap();
    for &v in ev {
        let a = v.abs();
        if a > hi {
            hi = a;
        }
        if a < lo {
            lo = a;
        }
    }
    if lo == T::zero() {
        T::max_value().unwrap()
    } else {
        hi / lo
    }
}

/// Inverse of a symmetric matrix through its eigendecomposition.
///
/// Returns `Err(condition)` when the condition number exceeds `limit`.
pub fn guarded_symmetric_inverse<T: Real>(m: &DMatrix<T>, limit: T) -> Result<(DMatrix<T>, T), T> {
    let eig = symmetrize(m).symmetric_eigen();
    let cond = condition_from_eigenvalues(eig.eigenvalues.as_slice());
    if !(cond <= limit) {
        return Err(cond);
    }
    let inv_vals = eig.eigenvalues.map(|v| T::one() / v);
    let q = &eig.eigenvectors;
    let scaled = q * DMatrix::from_diagonal(&inv_vals);
    let inv = scaled * q.transpose();
    Ok((symmetrize(&inv), cond))
}

/// `log |det m|` and the sign of the determinant via LU with partial pivoting.
/// `None` when a pivot is exactly zero or the result is not finite.
pub fn log_abs_det<T: Real>(m: DMatrix<T>) -> Option<(T, T)> {
    let lu = m.lu();
    let u = lu.u();
    let mut log_abs = T::zero();
    let mut sign = lu.p().determinant::<T>();
    for i in 0..u.nrows() {
        let d = u[(i, i)];
        if d == T::zero() {
            return None;
        }
        if d < T::zero() {
            sign = -sign;
        }
        log_abs += d.abs().ln();
    }
    if log_abs.is_finite() {
        Some((log_abs, sign))
    } else {
        None
    }
}

const BLOCK_BASE: usize = 96;

/// Inverse by recursive 2×2 block elimination on Schur complements.
///
/// No pivoting: meant for strictly diagonally dominant matrices such as
/// `I − ρL` with `|ρ| < 1`, where every Schur complement stays dominant. All
/// the work is matrix products. `None` if a base block is singular.
pub fn block_inverse<T: Real>(m: &DMatrix<T>) -> Option<DMatrix<T>> {
    let n = m.nrows();
    if n <= BLOCK_BASE {
        return m.clone().try_inverse();
    }
    let k = n / 2;
    let r = n - k;
    let a_inv = block_inverse(&m.view((0, 0), (k, k)).into_owned())?;
    let b = m.view((0, k), (k, r));
    let c = m.view((k, 0), (r, k));
    let ai_b = &a_inv * b;
    let c_ai = c * &a_inv;
    let schur = m.view((k, k), (r, r)) - c * &ai_b;
    let s_inv = block_inverse(&schur)?;
    let upper_right = -(&ai_b * &s_inv);
    let mut out = DMatrix::zeros(n, n);
    out.view_mut((0, 0), (k, k))
        .copy_from(&(a_inv - &upper_right * &c_ai));
    out.view_mut((k, 0), (r, k)).copy_from(&(-(&s_inv * &c_ai)));
    out.view_mut((0, k), (k, r)).copy_from(&upper_right);
    out.view_mut((k, k), (r, r)).copy_from(&s_inv);
    Some(out)
}

/// `tr(m²) = Σᵢⱼ mᵢⱼ mⱼᵢ` without forming the product.
pub fn trace_of_square<T: Real>(m: &DMatrix<T>) -> T {
    let mut acc = T::zero();
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            acc += m[(i, j)] * m[(j, i)];
        }
    }
    acc
}

/// Kronecker product `a ⊗ b`.
pub fn kron<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    a.kronecker(b)
}

/// Row-major vectorisation `[m11, m12, …, m1p, m21, …, mpp]`.
pub fn vec_row_major<T: Real>(m: &DMatrix<T>) -> DVector<T> {
    DVector::from_iterator(m.len(), m.transpose().iter().copied())
}

/// Factor `F` with `F Fᵀ = m` for a symmetric PSD `m`, built from the
/// eigendecomposition with negative rounding eigenvalues clipped to zero.
pub fn psd_factor<T: Real>(m: &DMatrix<T>, tol: T) -> Option<DMatrix<T>> {
    let eig = symmetrize(m).symmetric_eigen();
    let scale = eig
        .eigenvalues
        .iter()
        .fold(T::one(), |a, &b| if b.abs() > a { b.abs() } else { a });
    let mut roots = eig.eigenvalues.clone();
    for v in roots.iter_mut() {
        if *v < -tol * scale {
            return None;
        }
        *v = if *v > T::zero() { v.sqrt() } else { T::zero() };
    }
    Some(&eig.eigenvectors * DMatrix::from_diagonal(&roots))
}

/// Symmetric PSD projection: symmetrize, then clip negative eigenvalues at 0.
pub fn clip_psd<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    let eig = symmetrize(m).symmetric_eigen();
    let clipped = eig
        .eigenvalues
        .map(|v| if v > T::zero() { v } else { T::zero() });
    let q = &eig.eigenvectors;
    symmetrize(&(q * DMatrix::from_diagonal(&clipped) * q.transpose()))
}
