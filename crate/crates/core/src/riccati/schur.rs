//! Real Schur form with eigenvalue reordering.
//!
//! `nalgebra` provides the unordered real Schur decomposition `M = Z T Zᵀ`.
//! Reordering swaps adjacent diagonal blocks (1×1 or 2×2) by solving the
//! small Sylvester equation `T11 X − X T22 = T12` and applying the
//! orthogonal factor of `[−X; I]`.

use nalgebra::{Complex, DMatrix, Schur};

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone)]
pub struct OrderedSchur {
    /// Orthogonal Schur vectors.
    pub z: DMatrix<f64>,
    /// Quasi-upper-triangular factor.
    pub t: DMatrix<f64>,
    /// Diagonal blocks as `(start, size)`.
    pub blocks: Vec<(usize, usize)>,
    /// Dimension of the leading selected invariant subspace.
    pub selected_dim: usize,
}

impl OrderedSchur {
    /// Eigenvalues in block order.
    pub fn eigenvalues(&self) -> Vec<Complex<f64>> {
        self.blocks
            .iter()
            .flat_map(|&(k, size)| block_eigenvalues(&self.t, k, size))
            .collect()
    }
}

fn block_eigenvalues(t: &DMatrix<f64>, k: usize, size: usize) -> Vec<Complex<f64>> {
    if size == 1 {
        return vec![Complex::new(t[(k, k)], 0.0)];
    }
    let (a, b, c, d) = (t[(k, k)], t[(k, k + 1)], t[(k + 1, k)], t[(k + 1, k + 1)]);
    let mean = 0.5 * (a + d);
    let disc = 0.25 * (a - d) * (a - d) + b * c;
    if disc >= 0.0 {
        let r = disc.sqrt();
        vec![Complex::new(mean + r, 0.0), Complex::new(mean - r, 0.0)]
    } else {
        let i = (-disc).sqrt();
        vec![Complex::new(mean, i), Complex::new(mean, -i)]
    }
}

fn block_real_part(t: &DMatrix<f64>, k: usize, size: usize) -> f64 {
    if size == 1 {
        t[(k, k)]
    } else {
        0.5 * (t[(k, k)] + t[(k + 1, k + 1)])
    }
}

/// Split the matrix into diagonal blocks from its subdiagonal.
fn find_blocks(t: &DMatrix<f64>, tol: f64) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let mut blocks = Vec::new();
    let mut k = 0;
    while k < n {
        if k + 1 < n && t[(k + 1, k)].abs() > tol {
            blocks.push((k, 2));
            k += 2;
        } else {
            blocks.push((k, 1));
            k += 1;
        }
    }
    blocks
}

/// Apply the orthogonal `w` (m×m) to rows and columns `k..k+m` of `t` and
/// columns of `z`.
fn apply_similarity(t: &mut DMatrix<f64>, z: &mut DMatrix<f64>, k: usize, w: &DMatrix<f64>) {
    let m = w.nrows();
    let rows = w.transpose() * t.rows(k, m);
    t.rows_mut(k, m).copy_from(&rows);
    let cols = t.columns(k, m) * w;
    t.columns_mut(k, m).copy_from(&cols);
    let zc = z.columns(k, m) * w;
    z.columns_mut(k, m).copy_from(&zc);
}

/// Triangularize a 2×2 block with real eigenvalues by a plane rotation.
fn split_real_pair(t: &mut DMatrix<f64>, z: &mut DMatrix<f64>, k: usize) {
    let (a, b, c, d) = (t[(k, k)], t[(k, k + 1)], t[(k + 1, k)], t[(k + 1, k + 1)]);
    let mean = 0.5 * (a + d);
    let disc = (0.25 * (a - d) * (a - d) + b * c).max(0.0);
    let lambda = mean + disc.sqrt();
    // Eigenvector of λ, picking the better conditioned of the two formulas.
    let v1 = (b, lambda - a);
    let v2 = (lambda - d, c);
    let (x, y) = if v1.0.hypot(v1.1) >= v2.0.hypot(v2.1) {
        v1
    } else {
        v2
    };
    let norm = x.hypot(y);
    if norm == 0.0 {
        return;
    }
    let (cs, sn) = (x / norm, y / norm);
    let w = DMatrix::from_row_slice(2, 2, &[cs, -sn, sn, cs]);
    apply_similarity(t, z, k, &w);
    t[(k + 1, k)] = 0.0;
}

/// Swap the adjacent blocks at `k` (size `p`) and `k + p` (size `q`).
fn swap_blocks(
    t: &mut DMatrix<f64>,
    z: &mut DMatrix<f64>,
    k: usize,
    p: usize,
    q: usize,
) -> Result<()> {
    let m = p + q;
    let a11 = t.view((k, k), (p, p)).into_owned();
    let a12 = t.view((k, k + p), (p, q)).into_owned();
    let a22 = t.view((k + p, k + p), (q, q)).into_owned();

    // (I_q ⊗ A11 − A22ᵀ ⊗ I_p) vec(X) = vec(A12), column-major vec.
    let dim = p * q;
    let mut kron = DMatrix::zeros(dim, dim);
    for j in 0..q {
        for i in 0..p {
            let row = j * p + i;
            for l in 0..p {
                kron[(row, j * p + l)] += a11[(i, l)];
            }
            for l in 0..q {
                kron[(row, l * p + i)] -= a22[(l, j)];
            }
        }
    }
    let rhs = nalgebra::DVector::from_iterator(dim, a12.iter().copied());
    let x = linalg::solve(&kron, &rhs)
        .ok_or_else(|| Error::Singular("Schur block swap: blocks share an eigenvalue".into()))?;
    let x = DMatrix::from_column_slice(p, q, x.as_slice());

    // W = [[−X, I_p], [I_q, 0]]; its first q orthonormalized columns span the
    // invariant subspace belonging to A22.
    let mut w = DMatrix::zeros(m, m);
    w.view_mut((0, 0), (p, q)).copy_from(&(-&x));
    for i in 0..q {
        w[(p + i, i)] = 1.0;
    }
    for i in 0..p {
        w[(i, q + i)] = 1.0;
    }
    let qr = w.qr();
    let qmat = qr.q();

    let scale = linalg::max_abs(&t.view((k, k), (m, m)).into_owned()).max(f64::MIN_POSITIVE);
    apply_similarity(t, z, k, &qmat);
    let leak = linalg::max_abs(&t.view((k + q, k), (p, q)).into_owned());
    if leak > 1e-8 * scale {
        return Err(Error::Instability(format!(
            "Schur block swap lost accuracy (residual {leak:e})"
        )));
    }
    t.view_mut((k + q, k), (p, q)).fill(0.0);
    Ok(())
}

/// Real Schur form of `m` with every eigenvalue satisfying `select`
/// (judged by its real part) moved to the leading blocks.
pub fn ordered_schur(m: &DMatrix<f64>, select: impl Fn(f64) -> bool) -> Result<OrderedSchur> {
    let n = m.nrows();
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Instability("real Schur iteration did not converge".into()))?;
    let (mut z, mut t) = schur.unpack();
    let tiny = f64::EPSILON * linalg::max_abs(m).max(f64::MIN_POSITIVE);

    // Clean below the first subdiagonal, then split 2×2 blocks with real
    // eigenvalues so that every remaining 2×2 block is a complex pair.
    for j in 0..n {
        for i in (j + 2)..n {
            t[(i, j)] = 0.0;
        }
    }
    let mut k = 0;
    while k + 1 < n {
        if t[(k + 1, k)].abs() > tiny {
            let (a, b, c, d) = (t[(k, k)], t[(k, k + 1)], t[(k + 1, k)], t[(k + 1, k + 1)]);
            if 0.25 * (a - d) * (a - d) + b * c >= 0.0 {
                split_real_pair(&mut t, &mut z, k);
                k += 1;
            } else {
                k += 2;
            }
        } else {
            t[(k + 1, k)] = 0.0;
            k += 1;
        }
    }

    let mut blocks = find_blocks(&t, tiny);
    // Bubble selected blocks to the front.
    let mut changed = true;
    while changed {
        changed = false;
        for b in 0..blocks.len().saturating_sub(1) {
            let (k1, p) = blocks[b];
            let (_, q) = blocks[b + 1];
            let first_sel = select(block_real_part(&t, k1, p));
            let second_sel = select(block_real_part(&t, k1 + p, q));
            if !first_sel && second_sel {
                swap_blocks(&mut t, &mut z, k1, p, q)?;
                blocks[b] = (k1, q);
                blocks[b + 1] = (k1 + q, p);
                changed = true;
            }
        }
    }
    let selected_dim = blocks
        .iter()
        .filter(|&&(k, size)| select(block_real_part(&t, k, size)))
        .map(|&(_, size)| size)
        .sum();
    Ok(OrderedSchur {
        z,
        t,
        blocks,
        selected_dim,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_factorization(m: &DMatrix<f64>, s: &OrderedSchur) {
        let n = m.nrows();
        let back = &s.z * &s.t * s.z.transpose();
        assert!(linalg::max_abs(&(back - m)) < 1e-10 * (1.0 + linalg::max_abs(m)));
        let orth = s.z.transpose() * &s.z - DMatrix::identity(n, n);
        assert!(linalg::max_abs(&orth) < 1e-12);
    }

    #[test]
    fn stable_eigenvalues_lead() {
        let m = DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, 2.0, 0.0, 1.0, //
                -3.0, 0.5, 1.0, 0.0, //
                0.0, 1.0, -2.0, 4.0, //
                1.0, 0.0, -1.0, -0.5,
            ],
        );
        let s = ordered_schur(&m, |re| re < 0.0).unwrap();
        check_factorization(&m, &s);
        let ev = s.eigenvalues();
        let k = s.selected_dim;
        assert!(ev[..k].iter().all(|l| l.re < 0.0));
        assert!(ev[k..].iter().all(|l| l.re >= 0.0));
        // Leading Schur vectors span an invariant subspace.
        let z1 = s.z.columns(0, k).into_owned();
        let h11 = s.t.view((0, 0), (k, k)).into_owned();
        assert!(linalg::max_abs(&(&m * &z1 - &z1 * h11)) < 1e-10);
    }

    #[test]
    fn complex_pairs_move_as_blocks() {
        // eigenvalues 2 and −1 ± 3i
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 1.0, 0.0, -1.0, 3.0, 0.0, -3.0, -1.0]);
        let s = ordered_schur(&m, |re| re < 0.0).unwrap();
        check_factorization(&m, &s);
        assert_eq!(s.selected_dim, 2);
        assert_eq!(s.blocks[0], (0, 2));
    }
}
