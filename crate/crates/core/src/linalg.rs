//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};

/// Eigenvalue floor used when forming symmetric square roots.
pub const EIGEN_FLOOR: f64 = 1e-12;

pub fn is_symmetric(a: &DMatrix<f64>, tol: f64) -> bool {
    if !a.is_square() {
        return false;
    }
    let scale = a.amax().max(1.0);
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (a[(i, j)] - a[(j, i)]).abs() > tol * scale {
                return false;
            }
        }
    }
    true
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Validates symmetry (to 1e-12) and strict positive definiteness.
pub fn check_spd(a: &DMatrix<f64>, what: &str) -> Result<()> {
    if !a.is_square() || a.nrows() == 0 {
        return Err(invalid(format!("{what} must be a non-empty square matrix")));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(invalid(format!("{what} has non-finite entries")));
    }
    if !is_symmetric(a, 1e-12) {
        return Err(invalid(format!("{what} is not symmetric")));
    }
    let eig = symmetrize(a).symmetric_eigen();
    let min = eig.eigenvalues.min();
    if min <= 0.0 {
        return Err(invalid(format!(
            "{what} is not positive definite (min eigenvalue {min:e})"
        )));
    }
    Ok(())
}

/// Applies `g` to the eigenvalues of a symmetric matrix, flooring them at
/// [`EIGEN_FLOOR`] first.
fn spectral_map(a: &DMatrix<f64>, g: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = symmetrize(a).symmetric_eigen();
    let vals = eig.eigenvalues.map(|l| g(l.max(EIGEN_FLOOR)));
    let v = &eig.eigenvectors;
    symmetrize(&(v * DMatrix::from_diagonal(&vals) * v.transpose()))
}

/// Symmetric positive semidefinite square root.
pub fn sym_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    spectral_map(a, f64::sqrt)
}

/// Inverse of the symmetric square root.
pub fn sym_inv_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    spectral_map(a, |l| 1.0 / l.sqrt())
}

pub fn log_det_spd(a: &DMatrix<f64>) -> f64 {
    let eig = symmetrize(a).symmetric_eigen();
    eig.eigenvalues
        .iter()
        .map(|l| l.max(EIGEN_FLOOR).ln())
        .sum()
}

pub fn frobenius(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// signs of `diag(R)` folded into `Q`.
pub fn random_orthogonal<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Haar-distributed rotation (determinant +1).
pub fn random_rotation<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let mut q = random_orthogonal(d, rng);
    if q.determinant() < 0.0 {
        q.column_mut(0).neg_mut();
    }
    q
}

/// Random symmetric positive-definite matrix with eigenvalues drawn
/// log-uniformly from `[lo, hi]`.
pub fn random_spd<R: Rng + ?Sized>(d: usize, lo: f64, hi: f64, rng: &mut R) -> DMatrix<f64> {
    let q = random_orthogonal(d, rng);
    let vals = DVector::from_fn(d, |_, _| {
        let u: f64 = rng.random();
        (lo.ln() + u * (hi.ln() - lo.ln())).exp()
    });
    symmetrize(&(&q * DMatrix::from_diagonal(&vals) * q.transpose()))
}

pub fn to_rows(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect())
        .collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(invalid("ragged matrix rows"));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sqrt_squares_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in 1..5 {
            let a = random_spd(d, 0.1, 10.0, &mut rng);
            let r = sym_sqrt(&a);
            assert!(frobenius(&(&r * &r - &a)) < 1e-10);
            let ri = sym_inv_sqrt(&a);
            assert!(frobenius(&(&ri * &a * &ri - DMatrix::identity(d, d))) < 1e-10);
            assert!((log_det_spd(&a) - a.determinant().ln()).abs() < 1e-10);
        }
    }

    #[test]
    fn random_orthogonal_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for d in 1..6 {
            let q = random_orthogonal(d, &mut rng);
            assert!(frobenius(&(q.transpose() * &q - DMatrix::identity(d, d))) < 1e-12);
            let r = random_rotation(d, &mut rng);
            assert!((r.determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn spd_check_rejects_bad_matrices() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(check_spd(&a, "S").is_err());
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(check_spd(&b, "S").is_err());
        assert!(check_spd(&DMatrix::identity(3, 3), "S").is_ok());
    }
}
