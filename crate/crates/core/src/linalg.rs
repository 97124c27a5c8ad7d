//! Dense linear algebra used by the reservoir: spectral radius and the
//! SVD-based pseudo-inverse solve behind readout training.

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatRef, Par};

use crate::{Error, Result};

/// Default relative singular-value cutoff for the pseudo-inverse.
pub const DEFAULT_PINV_CUTOFF: f64 = 1e-12;

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(a: MatRef<'_, f64>) -> Result<f64> {
    if a.nrows() != a.ncols() {
        return Err(Error::Parameter(format!(
            "spectral radius needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.nrows() == 1 {
        return Ok(a[(0, 0)].abs());
    }
    let eig = a
        .eigenvalues()
        .map_err(|e| Error::Linalg(format!("eigenvalue computation failed: {e:?}")))?;
    Ok(eig.iter().map(|z| z.re.hypot(z.im)).fold(0.0, f64::max))
}

/// Minimum-norm least-squares solution of `a * x = b`.
#[derive(Debug, Clone)]
pub struct LstsqSolution {
    pub x: Vec<f64>,
    /// Number of singular values above the cutoff.
    pub rank: usize,
    pub singular_values: Vec<f64>,
}

/// Solves `min ‖a x − b‖` through the thin SVD, discarding singular values
/// below `rel_cutoff × σ_max`.
pub fn lstsq_pinv(a: MatRef<'_, f64>, b: &[f64], rel_cutoff: f64) -> Result<LstsqSolution> {
    if a.nrows() != b.len() {
        return Err(Error::Parameter(format!(
            "row count {} does not match target length {}",
            a.nrows(),
            b.len()
        )));
    }
    let k = a.nrows().min(a.ncols());
    if k == 0 {
        return Ok(LstsqSolution { x: vec![0.0; a.ncols()], rank: 0, singular_values: vec![] });
    }
    let svd = a.thin_svd().map_err(|e| Error::Linalg(format!("SVD failed: {e:?}")))?;
    let s: Vec<f64> = svd.S().column_vector().iter().copied().collect();
    let smax = s[0];
    let threshold = rel_cutoff * smax;
    let rhs = MatRef::from_column_major_slice(b, b.len(), 1);
    let mut ut_b = Mat::<f64>::zeros(k, 1);
    matmul(ut_b.as_mut(), Accum::Replace, svd.U().transpose(), rhs, 1.0, Par::Seq);
    let mut rank = 0;
    for (i, &sv) in s.iter().enumerate() {
        if sv > threshold && sv > 0.0 {
            ut_b[(i, 0)] /= sv;
            rank += 1;
        } else {
            ut_b[(i, 0)] = 0.0;
        }
    }
    let mut x = Mat::<f64>::zeros(a.ncols(), 1);
    matmul(x.as_mut(), Accum::Replace, svd.V(), ut_b.as_ref(), 1.0, Par::Seq);
    Ok(LstsqSolution { x: x.col(0).iter().copied().collect(), rank, singular_values: s })
}

/// `a * x` for a column slice `x`.
pub fn mat_vec(a: MatRef<'_, f64>, x: &[f64]) -> Vec<f64> {
    let rhs = MatRef::from_column_major_slice(x, x.len(), 1);
    let mut out = Mat::<f64>::zeros(a.nrows(), 1);
    matmul(out.as_mut(), Accum::Replace, a, rhs, 1.0, Par::Seq);
    out.col(0).iter().copied().collect()
}
