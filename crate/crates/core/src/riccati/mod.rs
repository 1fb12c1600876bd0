//! Riccati equations in the discounted form
//!
//! ```text
//! ρX = dX/dt + A1ᵀX + X A2 − X S X + Qc
//! ```
//!
//! which covers every gain equation of the social and game problems
//! (symmetric when `A1 = A2` and `Qc` is symmetric, nonsymmetric otherwise),
//! together with the linear offset equations `ρs = ds/dt + M(t)s + φ(t)`.

mod hamiltonian;
pub mod schur;

pub use hamiltonian::{
    build_hamiltonian, default_axis_tol, imaginary_axis_clear, min_abs_real_part,
    solve_are_stable_subspace, AlgebraicRiccatiSolution, AreOptions, HamiltonianKind,
    HamiltonianMatrix, SchurFactors,
};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{DerivedWeights, ModelParams};
use crate::path::{self, Path};

/// A differential Riccati solution on a time grid, ending at the terminal value.
pub type DifferentialRiccatiPath = Path;

/// Coefficients of `ρX = dX/dt + A1ᵀX + X A2 − X S X + Qc`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiForm {
    pub a1: DMatrix<f64>,
    pub a2: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub qc: DMatrix<f64>,
    pub rho: f64,
}

impl RiccatiForm {
    pub fn n(&self) -> usize {
        self.a1.nrows()
    }

    /// `A1 = A2`, `S` and `Qc` symmetric: solutions are symmetric.
    pub fn is_symmetric(&self) -> bool {
        self.a1 == self.a2
            && linalg::is_symmetric(&self.s, 1e-12)
            && linalg::is_symmetric(&self.qc, 1e-12)
    }

    /// `ρP = AᵀP + PA − PSP + Q`.
    pub fn individual(p: &ModelParams) -> Self {
        RiccatiForm {
            a1: p.a.clone(),
            a2: p.a.clone(),
            s: p.s_matrix(),
            qc: p.q.clone(),
            rho: p.rho,
        }
    }

    /// `ρΠ = (A+G)ᵀΠ + Π(A+G) − ΠSΠ + Q̂`.
    pub fn population(p: &ModelParams, w: &DerivedWeights) -> Self {
        let ag = &p.a + &p.g;
        RiccatiForm {
            a1: ag.clone(),
            a2: ag,
            s: p.s_matrix(),
            qc: w.q_hat.clone(),
            rho: p.rho,
        }
    }

    /// `ρP̄ = AᵀP̄ + P̄(A+G) − P̄SP̄ + Q(I−Γ)` (nonsymmetric in general).
    pub fn game_mean(p: &ModelParams, w: &DerivedWeights) -> Self {
        RiccatiForm {
            a1: p.a.clone(),
            a2: &p.a + &p.g,
            s: p.s_matrix(),
            qc: w.q_i_minus_gamma.clone(),
            rho: p.rho,
        }
    }

    /// `dX/dt` implied by the equation at `X`.
    pub fn derivative(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        x * self.rho - self.a1.transpose() * x - x * &self.a2 + x * &self.s * x - &self.qc
    }

    /// Algebraic residual `ρX − (A1ᵀX + XA2 − XSX + Qc)`.
    pub fn residual(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.derivative(x)
    }

    /// `2n×2n` matrix `[[A2 − ρ/2 I, S], [Qc, −A1ᵀ + ρ/2 I]]` whose stable
    /// invariant subspace `[L1; L2]` gives `X = −L2 L1⁻¹`.
    pub fn hamiltonian(&self, kind: HamiltonianKind) -> HamiltonianMatrix {
        let n = self.n();
        let half = DMatrix::identity(n, n) * (0.5 * self.rho);
        let m = linalg::block2(
            &(&self.a2 - &half),
            &self.s,
            &self.qc,
            &(-self.a1.transpose() + &half),
        );
        HamiltonianMatrix::new(m, kind, self.is_symmetric())
    }

    /// Closed-loop matrix `A2 − S X`.
    pub fn closed_loop(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        &self.a2 - &self.s * x
    }
}

/// Integrate the differential Riccati equation backward from `X(T) = terminal`
/// with fixed-step RK4 on `grid`.
pub fn solve_dre_backward(
    form: &RiccatiForm,
    terminal: DMatrix<f64>,
    grid: &[f64],
    blowup_cap: f64,
) -> Result<DifferentialRiccatiPath> {
    let n = form.n();
    if terminal.nrows() != n || terminal.ncols() != n {
        return Err(Error::Dimension(format!("terminal value must be {n}×{n}")));
    }
    path::integrate_backward(grid, terminal, |_, x| form.derivative(x), blowup_cap)
}

/// Solve `ρs = ds/dt + M(t)s + φ(t)` backward from `s(T) = terminal`.
///
/// `coefficient` carries `M(t)` on the same grid (for a closed-loop matrix
/// `A_cl` this is `A_clᵀ`). The forcing `φ` is evaluated at the RK4 stages.
pub fn solve_linear_backward(
    coefficient: &Path,
    rho: f64,
    forcing: impl Fn(f64) -> DVector<f64>,
    terminal: DVector<f64>,
    grid: &[f64],
) -> Result<Path> {
    if coefficient.grid() != grid {
        return Err(Error::GridMismatch(
            "coefficient path and integration grid differ".into(),
        ));
    }
    let n = terminal.len();
    if coefficient.initial().nrows() != n {
        return Err(Error::Dimension(
            "coefficient and terminal sizes differ".into(),
        ));
    }
    let term = DMatrix::from_column_slice(n, 1, terminal.as_slice());
    path::integrate_backward(
        grid,
        term,
        |t, s| {
            let m = coefficient.at(t);
            let phi = forcing(t);
            s * rho - m * s - DMatrix::from_column_slice(n, 1, phi.as_slice())
        },
        f64::INFINITY,
    )
}

/// Bounded steady state of `ρs = ds/dt + M s + φ` for constant data:
/// `s = (ρI − M)⁻¹ φ`.
pub fn steady_offset(
    coefficient: &DMatrix<f64>,
    rho: f64,
    forcing: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = coefficient.nrows();
    let lhs = DMatrix::identity(n, n) * rho - coefficient;
    linalg::solve(&lhs, forcing).ok_or_else(|| Error::Singular("ρI − M is singular".into()))
}

/// Outcome of the determinant sweep for finite-horizon solvability.
#[derive(Debug, Clone, Serialize)]
pub struct FiniteHorizonReport {
    pub solvable: bool,
    /// Smallest determinant seen on the grid.
    pub min_det: f64,
    /// Time where the smallest determinant occurs.
    pub argmin_t: f64,
    /// First grid time where the determinant is not positive.
    pub first_failure: Option<f64>,
    /// Smallest determinant below [`MARGINAL_DET`] while still positive.
    pub marginal: bool,
}

pub const MARGINAL_DET: f64 = 1e-10;

/// Determinant of the lower-right `n×n` block of `e^{𝒜t}` at each grid
/// point; solvable iff strictly positive everywhere.
pub fn finite_horizon_solvable(script_a: &HamiltonianMatrix, grid: &[f64]) -> FiniteHorizonReport {
    let n = script_a.n();
    let mut min_det = f64::INFINITY;
    let mut argmin_t = 0.0;
    let mut first_failure = None;
    for &t in grid {
        let e = linalg::expm(&(&script_a.m * t));
        let block = e.view((n, n), (n, n)).into_owned();
        let det = block.determinant();
        if det < min_det || det.is_nan() {
            min_det = det;
            argmin_t = t;
        }
        if !(det > 0.0) && first_failure.is_none() {
            first_failure = Some(t);
        }
    }
    FiniteHorizonReport {
        solvable: first_failure.is_none(),
        min_det,
        argmin_t,
        first_failure,
        marginal: first_failure.is_none() && min_det < MARGINAL_DET,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::uniform_grid;

    fn scalar_form(a: f64, s: f64, q: f64, rho: f64) -> RiccatiForm {
        let m = |v| DMatrix::from_element(1, 1, v);
        RiccatiForm {
            a1: m(a),
            a2: m(a),
            s: m(s),
            qc: m(q),
            rho,
        }
    }

    #[test]
    fn zero_weight_zero_terminal_stays_zero() {
        let form = scalar_form(1.0, 1.0, 0.0, 0.6);
        let p = solve_dre_backward(
            &form,
            DMatrix::zeros(1, 1),
            &uniform_grid(0.0, 5.0, 100),
            1e12,
        )
        .unwrap();
        assert!(p.values().iter().all(|x| x[(0, 0)] == 0.0));
    }

    #[test]
    fn long_horizon_approaches_are_root() {
        // p = (1.4 + √5.96)/2, quadratic formula on p² − 1.4p − 1 = 0
        let expected = (1.4 + 5.96f64.sqrt()) / 2.0;
        let form = scalar_form(1.0, 1.0, 1.0, 0.6);
        let p = solve_dre_backward(
            &form,
            DMatrix::zeros(1, 1),
            &uniform_grid(0.0, 30.0, 2000),
            1e12,
        )
        .unwrap();
        assert!((p.initial()[(0, 0)] - expected).abs() < 1e-4);
        assert_eq!(p.terminal()[(0, 0)], 0.0);
    }

    #[test]
    fn linear_zero_forcing_is_zero() {
        let grid = uniform_grid(0.0, 3.0, 60);
        let coef = Path::constant(grid.clone(), DMatrix::from_element(1, 1, -0.4));
        let s = solve_linear_backward(&coef, 0.6, |_| DVector::zeros(1), DVector::zeros(1), &grid)
            .unwrap();
        assert!(s.values().iter().all(|v| v[(0, 0)] == 0.0));
    }

    #[test]
    fn linear_closed_form() {
        // Acl = −1, ρ = 0: ds/dt = s − c, s(T) = 0 ⇒ s(t) = (1 − e^{−(T−t)}) c
        let t_end = 4.0;
        let c = 2.5;
        let grid = uniform_grid(0.0, t_end, 400);
        let coef = Path::constant(grid.clone(), DMatrix::from_element(1, 1, -1.0));
        let s = solve_linear_backward(
            &coef,
            0.0,
            |_| DVector::from_element(1, c),
            DVector::zeros(1),
            &grid,
        )
        .unwrap();
        for (t, v) in s.grid().iter().zip(s.values()) {
            let exact = (1.0 - (-(t_end - t)).exp()) * c;
            assert!((v[(0, 0)] - exact).abs() < 1e-10);
        }
    }

    #[test]
    fn linear_rejects_mismatched_grid() {
        let grid = uniform_grid(0.0, 3.0, 60);
        let coef = Path::constant(
            uniform_grid(0.0, 3.0, 30),
            DMatrix::from_element(1, 1, -1.0),
        );
        let err =
            solve_linear_backward(&coef, 0.6, |_| DVector::zeros(1), DVector::zeros(1), &grid)
                .unwrap_err();
        assert!(matches!(err, Error::GridMismatch(_)));
    }

    #[test]
    fn determinant_at_time_zero_is_one() {
        let m = HamiltonianMatrix::new(
            DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.2, -0.4]),
            HamiltonianKind::ScriptA,
            false,
        );
        let r = finite_horizon_solvable(&m, &[0.0]);
        assert!(r.solvable);
        assert!((r.min_det - 1.0).abs() < 1e-15);
    }
}
