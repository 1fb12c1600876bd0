//! Small dense linear-algebra helpers shared by the solvers.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};

/// Largest absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Largest absolute entry of a vector.
pub fn max_abs_vec(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// `‖M − Mᵀ‖_max`.
pub fn symmetry_defect(m: &DMatrix<f64>) -> f64 {
    max_abs(&(m - m.transpose()))
}

/// Symmetry up to `rel_tol·(1 + ‖M‖_max)`.
pub fn is_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    m.is_square() && symmetry_defect(m) <= rel_tol * (1.0 + max_abs(m))
}

/// Eigenvalues of a real square matrix (complex in general).
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex<f64>> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    m.complex_eigenvalues().iter().copied().collect()
}

/// Largest real part over the spectrum; `-inf` for an empty matrix.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> f64 {
    eigenvalues(m)
        .iter()
        .fold(f64::NEG_INFINITY, |acc, l| acc.max(l.re))
}

/// All eigenvalues strictly in the open left half-plane.
pub fn is_hurwitz(m: &DMatrix<f64>) -> bool {
    spectral_abscissa(m) < 0.0
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetric_eigenvalues(m)
        .first()
        .copied()
        .unwrap_or(f64::INFINITY)
}

/// Symmetric square root of a positive semidefinite matrix.
///
/// Eigenvalues in `[-clip, 0)` are clipped to zero; anything below `-clip`
/// is rejected and returned as `Err(min_eigenvalue)`.
pub fn sqrt_psd(m: &DMatrix<f64>, clip: f64) -> Result<DMatrix<f64>, f64> {
    let n = m.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let min = eig.eigenvalues.min();
    if min < -clip {
        return Err(min);
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&roots) * v.transpose())
}

/// Numerical rank from singular values: values below `rel_tol·σ_max` count as zero.
pub fn complex_rank(m: &DMatrix<Complex<f64>>, rel_tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > rel_tol * smax).count()
}

/// 2-norm condition number; infinite for a singular matrix.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smin = sv.min();
    if smin == 0.0 {
        f64::INFINITY
    } else {
        sv.max() / smin
    }
}

pub fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex<f64>> {
    m.map(|x| Complex::new(x, 0.0))
}

/// `[top; bottom]`
pub fn vstack(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(top.ncols(), bottom.ncols());
    let mut out = DMatrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.rows_mut(0, top.nrows()).copy_from(top);
    out.rows_mut(top.nrows(), bottom.nrows()).copy_from(bottom);
    out
}

/// `[left, right]`
pub fn hstack(left: &DMatrix<f64>, right: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(left.nrows(), right.nrows());
    let mut out = DMatrix::zeros(left.nrows(), left.ncols() + right.ncols());
    out.columns_mut(0, left.ncols()).copy_from(left);
    out.columns_mut(left.ncols(), right.ncols())
        .copy_from(right);
    out
}

/// 2×2 block assembly of equally sized square blocks.
pub fn block2(
    m11: &DMatrix<f64>,
    m12: &DMatrix<f64>,
    m21: &DMatrix<f64>,
    m22: &DMatrix<f64>,
) -> DMatrix<f64> {
    vstack(&hstack(m11, m12), &hstack(m21, m22))
}

/// Matrix exponential (Padé approximant with scaling and squaring).
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.nrows() == 0 {
        return m.clone();
    }
    m.clone().exp()
}

/// Solve `M x = b`, `None` if `M` is singular.
pub fn solve(m: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    m.clone().lu().solve(b)
}

pub fn solve_mat(m: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    m.clone().lu().solve(b)
}
