//! Small complex linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn frobenius(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Relative Hermitian defect `‖A − Aᴴ‖_F / max(1, ‖A‖_F)`.
pub fn hermitian_defect(a: &CMat) -> f64 {
    if !a.is_square() {
        return f64::INFINITY;
    }
    frobenius(&(a - a.adjoint())) / frobenius(a).max(1.0)
}

pub fn trace_re(a: &CMat) -> f64 {
    a.diagonal().iter().map(|z| z.re).sum()
}

/// Cholesky factor of a Hermitian positive-definite matrix.
pub fn cholesky(a: &CMat) -> Result<Cholesky<Complex64, Dyn>> {
    let not_pd = || Error::Numerical(format!("{}x{} matrix is not positive definite", a.nrows(), a.ncols()));
    let ch = Cholesky::new(a.clone()).ok_or_else(not_pd)?;
    // complex sqrt never fails, so a negative pivot shows up as an imaginary diagonal
    let ok = ch.l_dirty().diagonal().iter().all(|d| d.re > 0.0 && d.re.is_finite() && d.im.abs() <= 1e-12 * d.re);
    if ok {
        Ok(ch)
    } else {
        Err(not_pd())
    }
}

/// `log2 det(A)` for Hermitian positive-definite `A`.
pub fn log2_det_hpd(a: &CMat) -> Result<f64> {
    let ch = cholesky(a)?;
    Ok(ch.l_dirty().diagonal().iter().map(|d| 2.0 * d.re.log2()).sum())
}

/// `log2 det(I + diag(w) A)` for Hermitian PSD `A` and nonnegative `w`, via the
/// symmetric form `I + D^{1/2} A D^{1/2}`.
pub fn log2_det_i_plus_scaled(a: &CMat, w: &[f64]) -> Result<f64> {
    let n = a.nrows();
    let s: Vec<f64> = w.iter().map(|x| x.max(0.0).sqrt()).collect();
    let m = CMat::from_fn(n, n, |i, j| {
        let v = a[(i, j)] * (s[i] * s[j]);
        if i == j {
            v + ONE
        } else {
            v
        }
    });
    log2_det_hpd(&m)
}

/// Solves `A X = B` for Hermitian positive-definite `A`.
pub fn solve_hpd(a: &CMat, b: &CMat) -> Result<CMat> {
    Ok(cholesky(a)?.solve(b))
}

/// Explicit inverse through LU; only used for cross-checks.
pub fn inverse(a: &CMat) -> Result<CMat> {
    a.clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular matrix".into()))
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn hermitian_eigenvalues(a: &CMat) -> Vec<f64> {
    let mut ev: Vec<f64> = a.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_hpd() -> CMat {
        let b = CMat::from_fn(3, 3, |i, j| Complex64::new((i + 2 * j) as f64 * 0.3 - 0.5, (i as f64 - j as f64) * 0.7));
        b.adjoint() * &b + identity(3)
    }

    #[test]
    fn log_det_matches_lu_determinant() {
        let a = sample_hpd();
        let lu_det = a.clone().determinant();
        assert!(lu_det.im.abs() < 1e-9 * lu_det.re.abs());
        assert!((log2_det_hpd(&a).unwrap() - lu_det.re.log2()).abs() < 1e-10);
    }

    #[test]
    fn scaled_log_det_matches_direct_product() {
        let a = sample_hpd();
        let w = [0.5, 2.0, 3.0];
        let d = CMat::from_diagonal(&DVector::from_iterator(3, w.iter().map(|&x| c(x))));
        let direct = (identity(3) + d * &a).determinant();
        assert!((log2_det_i_plus_scaled(&a, &w).unwrap() - direct.re.log2()).abs() < 1e-10);
    }

    #[test]
    fn non_pd_is_reported() {
        let a = CMat::from_diagonal(&DVector::from_vec(vec![c(1.0), c(-1.0)]));
        assert!(matches!(cholesky(&a), Err(Error::Numerical(_))));
    }
}
