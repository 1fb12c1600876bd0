use nalgebra::{Complex, DMatrix};
use serde::Serialize;

use super::schur::ordered_schur;
use super::RiccatiForm;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{DerivedWeights, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum HamiltonianKind {
    /// `[[A − ρ/2 I, BR⁻¹Bᵀ], [Q, −Aᵀ + ρ/2 I]]`
    M1,
    /// `[[A+G − ρ/2 I, BR⁻¹Bᵀ], [Q̂, −(A+G)ᵀ + ρ/2 I]]`
    M2,
    /// `[[A − ρ/2 I, BR⁻¹Bᵀ], [Q(I−Γ), −Aᵀ + ρ/2 I]]`
    M3,
    /// `𝒜 = [[A+G, −BR⁻¹Bᵀ], [QΓ − Q, −(A − ρI)ᵀ]]`, used for the
    /// finite-horizon solvability test.
    ScriptA,
    /// Any other Riccati form assembled through [`RiccatiForm::hamiltonian`].
    Auxiliary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianMatrix {
    pub m: DMatrix<f64>,
    pub kind: HamiltonianKind,
    /// The underlying Riccati equation has symmetric data, so its
    /// stabilizing solution is symmetric.
    pub symmetric_data: bool,
}

impl HamiltonianMatrix {
    pub fn new(m: DMatrix<f64>, kind: HamiltonianKind, symmetric_data: bool) -> Self {
        assert!(
            m.is_square() && m.nrows().is_multiple_of(2),
            "Hamiltonian must be 2n×2n"
        );
        HamiltonianMatrix {
            m,
            kind,
            symmetric_data,
        }
    }

    pub fn n(&self) -> usize {
        self.m.nrows() / 2
    }

    fn block(&self, i: usize, j: usize) -> DMatrix<f64> {
        let n = self.n();
        self.m.view((i * n, j * n), (n, n)).into_owned()
    }

    pub fn eigenvalues(&self) -> Vec<Complex<f64>> {
        linalg::eigenvalues(&self.m)
    }
}

pub fn build_hamiltonian(
    p: &ModelParams,
    w: &DerivedWeights,
    kind: HamiltonianKind,
) -> Result<HamiltonianMatrix> {
    let h = match kind {
        HamiltonianKind::M1 => RiccatiForm::individual(p).hamiltonian(kind),
        HamiltonianKind::M2 => RiccatiForm::population(p, w).hamiltonian(kind),
        HamiltonianKind::M3 => RiccatiForm {
            a1: p.a.clone(),
            a2: p.a.clone(),
            s: p.s_matrix(),
            qc: w.q_i_minus_gamma.clone(),
            rho: p.rho,
        }
        .hamiltonian(kind),
        HamiltonianKind::ScriptA => {
            let n = p.n();
            let s = p.s_matrix();
            let a_shift = &p.a - DMatrix::identity(n, n) * p.rho;
            let m = linalg::block2(
                &(&p.a + &p.g),
                &(-s),
                &(&p.q * &p.gamma - &p.q),
                &(-a_shift.transpose()),
            );
            HamiltonianMatrix::new(m, kind, false)
        }
        HamiltonianKind::Auxiliary => {
            return Err(Error::Precondition(
                "auxiliary Hamiltonians are built from an explicit RiccatiForm".into(),
            ))
        }
    };
    Ok(h)
}

/// `min |Re λ|` over the spectrum.
pub fn min_abs_real_part(h: &HamiltonianMatrix) -> f64 {
    h.eigenvalues()
        .iter()
        .fold(f64::INFINITY, |acc, l| acc.min(l.re.abs()))
}

/// Default imaginary-axis tolerance: `1e-9·‖M‖_F`.
pub fn default_axis_tol(h: &HamiltonianMatrix) -> f64 {
    1e-9 * h.m.norm().max(f64::MIN_POSITIVE)
}

/// True iff every eigenvalue has `|Re λ| > tol`.
pub fn imaginary_axis_clear(h: &HamiltonianMatrix, tol: f64) -> bool {
    min_abs_real_part(h) > tol
}

#[derive(Debug, Clone, Copy)]
pub struct AreOptions {
    /// Imaginary-axis tolerance relative to `‖M‖_F`.
    pub axis_rel_tol: f64,
    /// Largest accepted condition number of `L1`.
    pub l1_cond_max: f64,
}

impl Default for AreOptions {
    fn default() -> Self {
        AreOptions {
            axis_rel_tol: 1e-9,
            l1_cond_max: 1e12,
        }
    }
}

/// Basis `[L1; L2]` of the stable invariant subspace with `M [L1; L2] = [L1; L2] H11`.
#[derive(Debug, Clone, PartialEq)]
pub struct SchurFactors {
    pub l1: DMatrix<f64>,
    pub l2: DMatrix<f64>,
    pub h11: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct AlgebraicRiccatiSolution {
    pub x: DMatrix<f64>,
    /// `A2 − S X − ρ/2 I` for the underlying form.
    pub closed_loop: DMatrix<f64>,
    pub rho_stabilizing: bool,
    pub spectrum: Vec<Complex<f64>>,
    /// `‖ρX − (A1ᵀX + XA2 − XSX + Qc)‖_max`.
    pub residual: f64,
    /// Symmetry defect removed by symmetrization, for symmetric data.
    pub symmetry_defect: Option<f64>,
    pub factors: SchurFactors,
}

impl AlgebraicRiccatiSolution {
    pub fn max_real_part(&self) -> f64 {
        self.spectrum
            .iter()
            .fold(f64::NEG_INFINITY, |a, l| a.max(l.re))
    }
}

/// Residual of the Riccati equation encoded by `h` at `x`:
/// `M21 + X M11 − M22 X − X M12 X`.
fn residual_from_blocks(h: &HamiltonianMatrix, x: &DMatrix<f64>) -> DMatrix<f64> {
    let (m11, m12, m21, m22) = (h.block(0, 0), h.block(0, 1), h.block(1, 0), h.block(1, 1));
    m21 + x * &m11 - &m22 * x - x * m12 * x
}

/// Stabilizing solution from the ordered real Schur form:
/// `X = −L2 L1⁻¹` where `[L1; L2]` spans the stable invariant subspace.
pub fn solve_are_stable_subspace(
    h: &HamiltonianMatrix,
    opts: AreOptions,
) -> Result<AlgebraicRiccatiSolution> {
    let n = h.n();
    let tol = opts.axis_rel_tol * h.m.norm().max(f64::MIN_POSITIVE);
    let min_re = min_abs_real_part(h);
    if min_re <= tol {
        return Err(Error::ImaginaryAxisEigenvalue { min_re, tol });
    }
    let schur = ordered_schur(&h.m, |re| re < 0.0)?;
    if schur.selected_dim != n {
        return Err(Error::StableSubspaceDimension {
            found: schur.selected_dim,
            expected: n,
        });
    }
    let basis = schur.z.columns(0, n);
    let l1 = basis.rows(0, n).into_owned();
    let l2 = basis.rows(n, n).into_owned();
    let h11 = schur.t.view((0, 0), (n, n)).into_owned();
    let cond = linalg::condition_number(&l1);
    if !(cond <= opts.l1_cond_max) {
        return Err(Error::SingularL1 { cond });
    }
    // X L1 = −L2  ⇔  L1ᵀ Xᵀ = −L2ᵀ
    let xt = linalg::solve_mat(&l1.transpose(), &(-l2.transpose())).ok_or(Error::SingularL1 {
        cond: f64::INFINITY,
    })?;
    let mut x = xt.transpose();
    let symmetry_defect = if h.symmetric_data {
        let d = linalg::symmetry_defect(&x);
        x = linalg::symmetrize(&x);
        Some(d)
    } else {
        None
    };
    let closed_loop = h.block(0, 0) - h.block(0, 1) * &x;
    let spectrum = linalg::eigenvalues(&closed_loop);
    let rho_stabilizing = spectrum.iter().all(|l| l.re < 0.0);
    let residual = linalg::max_abs(&residual_from_blocks(h, &x));
    Ok(AlgebraicRiccatiSolution {
        x,
        closed_loop,
        rho_stabilizing,
        spectrum,
        residual,
        symmetry_defect,
        factors: SchurFactors { l1, l2, h11 },
    })
}
