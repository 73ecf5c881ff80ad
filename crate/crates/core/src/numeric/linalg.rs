//! Small dense solves: Cholesky factorization for symmetric positive
//! definite systems. Enough for the ridge projection; nothing more.

use super::tensor::Tensor;
use super::NumericError;

/// Cholesky factor L (lower triangular, row-major) of a symmetric positive
/// definite matrix. Errors if a pivot is not strictly positive.
pub fn cholesky(a: &Tensor) -> Result<Tensor, NumericError> {
    let n = a.rows();
    assert_eq!(a.cols(), n, "cholesky needs a square matrix");
    let mut l = vec![0.0; n * n];
    let ad = a.data();
    // Relative pivot floor: rounding can leave a singular system with a
    // tiny positive pivot, which would pass a plain <= 0 check.
    let diag_max = (0..n).map(|i| ad[i * n + i].abs()).fold(0.0, f64::max);
    let floor = diag_max * n as f64 * f64::EPSILON;
    for i in 0..n {
        for j in 0..=i {
            let mut sum = ad[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= floor {
                    return Err(NumericError::SingularSystem {
                        context: format!("cholesky pivot {i}"),
                    });
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Tensor::matrix(n, n, l)
}

/// Solves A x = b for SPD A via a precomputed Cholesky factor.
pub fn cholesky_solve(l: &Tensor, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    debug_assert_eq!(b.len(), n);
    let ld = l.data();
    // Forward substitution: L y = b.
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= ld[i * n + k] * y[k];
        }
        y[i] = sum / ld[i * n + i];
    }
    // Back substitution: L^T x = y.
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum -= ld[k * n + i] * x[k];
        }
        x[i] = sum / ld[i * n + i];
    }
    x
}
