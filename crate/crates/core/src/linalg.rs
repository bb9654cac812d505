//! Thin dense linear algebra helpers over `nalgebra`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

pub(crate) type Mat = DMatrix<f64>;
pub(crate) type Vector = DVector<f64>;

/// Smallest eigenvalue of a symmetric matrix (0 for an empty matrix).
pub(crate) fn min_eigenvalue(a: &Mat) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    let e = a.clone().symmetric_eigen();
    e.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Eigen-decomposition of a symmetric matrix: `(values, columns of vectors)`.
pub(crate) fn sym_eigen(a: &Mat) -> (Vec<f64>, Mat) {
    let e = a.clone().symmetric_eigen();
    (e.eigenvalues.iter().copied().collect(), e.eigenvectors)
}

pub(crate) fn symmetrize(a: &mut Mat) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

/// Lower Cholesky factor, or `None` if `a` is not numerically positive definite.
pub(crate) fn cholesky(a: &Mat) -> Option<Mat> {
    a.clone().cholesky().map(|c| c.l())
}

/// Largest `α ≤ cap` with `X + α·ΔX ⪰ 0`, given the Cholesky factor `l` of `X`.
pub(crate) fn max_step(l: &Mat, dx: &Mat, cap: f64) -> f64 {
    if l.nrows() == 0 {
        return cap;
    }
    // L⁻¹ ΔX L⁻ᵀ
    let linv = match l.clone().solve_lower_triangular(&Mat::identity(l.nrows(), l.ncols())) {
        Some(m) => m,
        None => return 0.0,
    };
    let mut m = &linv * dx * linv.transpose();
    symmetrize(&mut m);
    let lmin = min_eigenvalue(&m);
    if lmin >= 0.0 {
        cap
    } else {
        (-1.0 / lmin).min(cap)
    }
}

/// Solves a square system with full-pivot LU; `None` when singular.
pub(crate) fn solve_square(a: &Mat, b: &Vector) -> Option<Vector> {
    a.clone().full_piv_lu().solve(b)
}

/// Numerical rank via singular values relative to the largest one.
pub(crate) fn rank(a: &Mat, rel_tol: f64) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let sv = a.clone().svd(false, false).singular_values;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > rel_tol * smax).count()
}

/// Solves `Aᵀ P + P A = −Q` for symmetric `P` through the Kronecker form.
pub(crate) fn solve_lyapunov(a: &Mat, q: &Mat) -> Option<Mat> {
    let n = a.nrows();
    let id = Mat::identity(n, n);
    // vec(AᵀP) = (I ⊗ Aᵀ) vec(P), vec(PA) = (Aᵀ ⊗ I) vec(P)
    let at = a.transpose();
    let k = id.kronecker(&at) + at.kronecker(&id);
    let rhs = Vector::from_iterator(n * n, q.iter().map(|v| -v));
    let sol = solve_square(&k, &rhs)?;
    let mut p = Mat::from_column_slice(n, n, sol.as_slice());
    symmetrize(&mut p);
    Some(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lyapunov_scalar() {
        let a = Mat::from_element(1, 1, -2.0);
        let p = solve_lyapunov(&a, &Mat::identity(1, 1)).unwrap();
        assert!((p[(0, 0)] - 0.25).abs() < 1e-14);
    }

    #[test]
    fn lyapunov_residual() {
        let a = Mat::from_row_slice(2, 2, &[-1.0, 1.0, -0.5, -1.5]);
        let p = solve_lyapunov(&a, &Mat::identity(2, 2)).unwrap();
        let r = a.transpose() * &p + &p * &a + Mat::identity(2, 2);
        assert!(r.amax() < 1e-12);
        assert!(cholesky(&p).is_some());
    }

    #[test]
    fn step_to_boundary() {
        let x = Mat::identity(2, 2);
        let dx = Mat::from_row_slice(2, 2, &[-2.0, 0.0, 0.0, 1.0]);
        let l = cholesky(&x).unwrap();
        assert!((max_step(&l, &dx, 10.0) - 0.5).abs() < 1e-12);
    }
}
