//! Uniform-stabilization conditions for the social problem.
//!
//! Two routes are evaluated independently and compared:
//!
//! * condition (ii): the stable-subspace solutions `P`, `Π` of the
//!   individual and population Riccati equations exist with the sign
//!   property demanded by the governing theorem, and `A − SP + G − ρ/2 I`
//!   is Hurwitz;
//! * condition (iii): PBH stabilizability of `(A − ρ/2 I, B)` and
//!   `(A + G − ρ/2 I, B)`, plus the same Hurwitz test.
//!
//! The governing theorem is picked from the observability premise (Q ⪰ 0
//! with both pairs observable), the detectability premise, or, for merely
//! symmetric `Q`, the absence of imaginary-axis eigenvalues in `M1`, `M2`.

use nalgebra::{Complex, DMatrix};
use serde::Serialize;

use crate::linalg;
use crate::model::{derived_weights, matrix_to_rows, ModelParams};
use crate::riccati::{
    build_hamiltonian, default_axis_tol, imaginary_axis_clear, solve_are_stable_subspace,
    AreOptions, HamiltonianKind,
};

/// PBH rank tolerance relative to the largest singular value.
pub const PBH_RANK_TOL: f64 = 1e-9;

/// Eigenvalues with `Re λ ≥ −MARGIN·(1 + ‖A‖_max)` count as not stable.
const MARGIN: f64 = 1e-9;

/// Clip level for negative eigenvalues of `Q` when forming `√Q`.
pub const SQRT_CLIP: f64 = 1e-12;

fn unstable_modes(a: &DMatrix<f64>, include_stable: bool) -> Vec<Complex<f64>> {
    let margin = MARGIN * (1.0 + linalg::max_abs(a));
    linalg::eigenvalues(a)
        .into_iter()
        .filter(|l| include_stable || l.re >= -margin)
        .collect()
}

fn pbh_rank_full(
    a: &DMatrix<f64>,
    other: &DMatrix<f64>,
    lambda: Complex<f64>,
    stack_rows: bool,
    tol: f64,
) -> bool {
    let n = a.nrows();
    let shifted = DMatrix::from_fn(n, n, |i, j| {
        let v = Complex::new(-a[(i, j)], 0.0);
        if i == j {
            v + lambda
        } else {
            v
        }
    });
    let other = linalg::to_complex(other);
    let pencil = if stack_rows {
        let mut m = DMatrix::zeros(n + other.nrows(), n);
        m.rows_mut(0, n).copy_from(&shifted);
        m.rows_mut(n, other.nrows()).copy_from(&other);
        m
    } else {
        let mut m = DMatrix::zeros(n, n + other.ncols());
        m.columns_mut(0, n).copy_from(&shifted);
        m.columns_mut(n, other.ncols()).copy_from(&other);
        m
    };
    linalg::complex_rank(&pencil, tol) == n
}

/// `rank[λI − A, B] = n` for every eigenvalue `λ` of `A` with `Re λ ≥ 0`.
pub fn pbh_stabilizable(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
    unstable_modes(a, false)
        .into_iter()
        .all(|l| pbh_rank_full(a, b, l, false, tol))
}

/// `rank[λI − A; C] = n` for every eigenvalue `λ` of `A` with `Re λ ≥ 0`.
pub fn pbh_detectable(a: &DMatrix<f64>, c: &DMatrix<f64>, tol: f64) -> bool {
    unstable_modes(a, false)
        .into_iter()
        .all(|l| pbh_rank_full(a, c, l, true, tol))
}

/// `rank[λI − A; C] = n` for every eigenvalue `λ` of `A`.
pub fn pbh_observable(a: &DMatrix<f64>, c: &DMatrix<f64>, tol: f64) -> bool {
    unstable_modes(a, true)
        .into_iter()
        .all(|l| pbh_rank_full(a, c, l, true, tol))
}

/// Which equivalence theorem applies to the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GoverningTheorem {
    /// `Q ⪰ 0`, both output pairs observable; requires `P ≻ 0`, `Π ≻ 0`.
    Observable,
    /// `Q ⪰ 0`, both output pairs detectable; requires `P ⪰ 0`, `Π ⪰ 0`.
    Detectable,
    /// `M1`, `M2` free of imaginary-axis eigenvalues; requires
    /// ρ-stabilizing solutions.
    Hamiltonian,
    /// None of the premises hold.
    PremiseViolated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    ConsistentTrue,
    ConsistentFalse,
    Inconsistent,
    PremiseViolated,
}

/// Outcome of one stable-subspace Riccati solve.
#[derive(Debug, Clone, Serialize)]
pub struct AreSummary {
    pub solution: Option<Vec<Vec<f64>>>,
    pub error: Option<String>,
    pub min_eigenvalue: Option<f64>,
    pub rho_stabilizing: bool,
    pub residual: Option<f64>,
    /// Largest real part of `A_cl − ρ/2 I`.
    pub closed_loop_max_re: Option<f64>,
    #[serde(skip)]
    pub x: Option<DMatrix<f64>>,
}

impl AreSummary {
    fn from_result(r: crate::Result<crate::riccati::AlgebraicRiccatiSolution>) -> Self {
        match r {
            Ok(sol) => AreSummary {
                solution: Some(matrix_to_rows(&sol.x)),
                error: None,
                min_eigenvalue: Some(linalg::min_symmetric_eigenvalue(&sol.x)),
                rho_stabilizing: sol.rho_stabilizing,
                residual: Some(sol.residual),
                closed_loop_max_re: Some(sol.max_real_part()),
                x: Some(sol.x),
            },
            Err(e) => AreSummary {
                solution: None,
                error: Some(e.to_string()),
                min_eigenvalue: None,
                rho_stabilizing: false,
                residual: None,
                closed_loop_max_re: None,
                x: None,
            },
        }
    }

    fn positive_definite(&self) -> bool {
        self.rho_stabilizing && self.min_eigenvalue.is_some_and(|m| m > 0.0)
    }

    fn positive_semidefinite(&self) -> bool {
        let scale = self.x.as_ref().map_or(1.0, |x| 1.0 + linalg::max_abs(x));
        self.rho_stabilizing && self.min_eigenvalue.is_some_and(|m| m >= -1e-10 * scale)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilizationReport {
    /// `(A − ρ/2 I, B)` stabilizable.
    pub stabilizable_a_b: bool,
    /// `(A + G − ρ/2 I, B)` stabilizable.
    pub stabilizable_ag_b: bool,
    pub q_psd: bool,
    /// `(A − ρ/2 I, √Q)`; absent when `Q` is not PSD.
    pub observable_a_q: Option<bool>,
    pub detectable_a_q: Option<bool>,
    /// `(A + G − ρ/2 I, √Q (I − Γ))`.
    pub observable_ag_q: Option<bool>,
    pub detectable_ag_q: Option<bool>,
    pub m1_clear: bool,
    pub m2_clear: bool,
    pub are_p: AreSummary,
    pub are_pi: AreSummary,
    /// `A − BR⁻¹BᵀP + G − ρ/2 I` Hurwitz; `None` without a solution `P`.
    pub abar_g_hurwitz: Option<bool>,
    pub abar_g_max_re: Option<f64>,
    pub governing: GoverningTheorem,
    pub condition_ii: bool,
    pub condition_iii: bool,
    pub verdict: Verdict,
}

impl StabilizationReport {
    /// Fixed-width text rendering for terminals.
    pub fn render_table(&self) -> String {
        let yn = |b: bool| if b { "yes" } else { "no" };
        let opt = |b: Option<bool>| b.map_or("n/a", |v| if v { "yes" } else { "no" });
        let mut rows: Vec<(String, String)> = vec![
            (
                "(A − ρ/2 I, B) stabilizable".into(),
                yn(self.stabilizable_a_b).into(),
            ),
            (
                "(A + G − ρ/2 I, B) stabilizable".into(),
                yn(self.stabilizable_ag_b).into(),
            ),
            ("Q ⪰ 0".into(), yn(self.q_psd).into()),
            (
                "(A − ρ/2 I, √Q) observable".into(),
                opt(self.observable_a_q).into(),
            ),
            (
                "(A − ρ/2 I, √Q) detectable".into(),
                opt(self.detectable_a_q).into(),
            ),
            (
                "(A + G − ρ/2 I, √Q(I − Γ)) observable".into(),
                opt(self.observable_ag_q).into(),
            ),
            (
                "(A + G − ρ/2 I, √Q(I − Γ)) detectable".into(),
                opt(self.detectable_ag_q).into(),
            ),
            (
                "M1 free of imaginary-axis eigenvalues".into(),
                yn(self.m1_clear).into(),
            ),
            (
                "M2 free of imaginary-axis eigenvalues".into(),
                yn(self.m2_clear).into(),
            ),
        ];
        for (name, s) in [("P", &self.are_p), ("Π", &self.are_pi)] {
            let v = match (&s.solution, &s.error) {
                (Some(x), _) => format!("{x:?} (ρ-stabilizing: {})", yn(s.rho_stabilizing)),
                (None, Some(e)) => e.clone(),
                _ => "-".into(),
            };
            rows.push((format!("stable-subspace {name}"), v));
        }
        rows.push((
            "A − SP + G − ρ/2 I Hurwitz".into(),
            opt(self.abar_g_hurwitz).into(),
        ));
        rows.push(("governing premise".into(), format!("{:?}", self.governing)));
        rows.push(("condition (ii)".into(), yn(self.condition_ii).into()));
        rows.push(("condition (iii)".into(), yn(self.condition_iii).into()));
        rows.push(("verdict".into(), format!("{:?}", self.verdict)));
        let width = rows
            .iter()
            .map(|(k, _)| k.chars().count())
            .max()
            .unwrap_or(0);
        rows.iter()
            .map(|(k, v)| format!("{k:<width$}  {v}\n", width = width))
            .collect()
    }
}

pub fn analyze(p: &ModelParams) -> StabilizationReport {
    let n = p.n();
    let w = derived_weights(p);
    let half = DMatrix::identity(n, n) * (0.5 * p.rho);
    let a_sh = &p.a - &half;
    let ag_sh = &p.a + &p.g - &half;

    let stabilizable_a_b = pbh_stabilizable(&a_sh, &p.b, PBH_RANK_TOL);
    let stabilizable_ag_b = pbh_stabilizable(&ag_sh, &p.b, PBH_RANK_TOL);

    let q_psd = p.q_is_psd();
    let sqrt_q = if q_psd {
        linalg::sqrt_psd(&p.q, SQRT_CLIP).ok()
    } else {
        None
    };
    let i_minus_gamma = DMatrix::identity(n, n) - &p.gamma;
    let (observable_a_q, detectable_a_q, observable_ag_q, detectable_ag_q) = match &sqrt_q {
        Some(c) => {
            let c2 = c * &i_minus_gamma;
            (
                Some(pbh_observable(&a_sh, c, PBH_RANK_TOL)),
                Some(pbh_detectable(&a_sh, c, PBH_RANK_TOL)),
                Some(pbh_observable(&ag_sh, &c2, PBH_RANK_TOL)),
                Some(pbh_detectable(&ag_sh, &c2, PBH_RANK_TOL)),
            )
        }
        None => (None, None, None, None),
    };

    let m1 = build_hamiltonian(p, &w, HamiltonianKind::M1).expect("M1 is always buildable");
    let m2 = build_hamiltonian(p, &w, HamiltonianKind::M2).expect("M2 is always buildable");
    let m1_clear = imaginary_axis_clear(&m1, default_axis_tol(&m1));
    let m2_clear = imaginary_axis_clear(&m2, default_axis_tol(&m2));
    let are_p = AreSummary::from_result(solve_are_stable_subspace(&m1, AreOptions::default()));
    let are_pi = AreSummary::from_result(solve_are_stable_subspace(&m2, AreOptions::default()));

    let (abar_g_hurwitz, abar_g_max_re) = match &are_p.x {
        Some(x) => {
            let m = &p.a - p.s_matrix() * x + &p.g - &half;
            let re = linalg::spectral_abscissa(&m);
            (Some(re < 0.0), Some(re))
        }
        None => (None, None),
    };
    let a4 = abar_g_hurwitz.unwrap_or(false);

    let governing = if q_psd && observable_a_q == Some(true) && observable_ag_q == Some(true) {
        GoverningTheorem::Observable
    } else if q_psd && detectable_a_q == Some(true) && detectable_ag_q == Some(true) {
        GoverningTheorem::Detectable
    } else if m1_clear && m2_clear {
        GoverningTheorem::Hamiltonian
    } else {
        GoverningTheorem::PremiseViolated
    };

    let condition_ii = a4
        && match governing {
            GoverningTheorem::Observable => are_p.positive_definite() && are_pi.positive_definite(),
            GoverningTheorem::Detectable => {
                are_p.positive_semidefinite() && are_pi.positive_semidefinite()
            }
            GoverningTheorem::Hamiltonian | GoverningTheorem::PremiseViolated => {
                are_p.rho_stabilizing && are_pi.rho_stabilizing
            }
        };
    let condition_iii = stabilizable_a_b && stabilizable_ag_b && a4;

    let verdict = match governing {
        GoverningTheorem::PremiseViolated => Verdict::PremiseViolated,
        _ if condition_ii != condition_iii => Verdict::Inconsistent,
        _ if condition_ii => Verdict::ConsistentTrue,
        _ => Verdict::ConsistentFalse,
    };

    StabilizationReport {
        stabilizable_a_b,
        stabilizable_ag_b,
        q_psd,
        observable_a_q,
        detectable_a_q,
        observable_ag_q,
        detectable_ag_q,
        m1_clear,
        m2_clear,
        are_p,
        are_pi,
        abar_g_hurwitz,
        abar_g_max_re,
        governing,
        condition_ii,
        condition_iii,
        verdict,
    }
}

/// Closed-form quantities for scalar data.
#[derive(Debug, Clone, Serialize)]
pub struct ScalarReport {
    /// `(a − ρ/2)² + b²q/r > 0`: `M1` has no imaginary-axis eigenvalue.
    pub m1_clear: bool,
    /// `(a + g − ρ/2)² + b²(1 − γ)²q/r > 0`: same for `M2`.
    pub m2_clear: bool,
    /// `Δ = 4[(a − ρ/2)² + b²q/r]`.
    pub delta: f64,
    /// Stabilizing root of `(b²/r)p² − (2a − ρ)p − q = 0`, when it exists.
    pub p: Option<f64>,
    /// `a − b²p/r − ρ/2`, which equals `−√Δ/2`.
    pub closed_loop: Option<f64>,
    /// `(a − ρ/2, b)` stabilizable: `b ≠ 0` or `a − ρ/2 < 0`.
    pub stabilizable: bool,
    /// `a − b²p/r − ρ/2 + g`.
    pub abar_g: Option<f64>,
    /// Stabilizable, both conditions above, and `abar_g < 0`.
    pub uniformly_stable: bool,
}

pub fn scalar_example1(
    a: f64,
    b: f64,
    g: f64,
    q: f64,
    gamma: f64,
    r: f64,
    rho: f64,
) -> ScalarReport {
    let shift = a - rho / 2.0;
    let k = b * b / r;
    // absorbs rounding in sums such as 1 − 0.7 − 0.3
    let tol = 1e-24 * (1.0 + a * a + g * g + rho * rho + k * q.abs());
    let m1_clear = shift * shift + k * q > tol;
    let shift_g = a + g - rho / 2.0;
    let m2_clear = shift_g * shift_g + k * (1.0 - gamma) * (1.0 - gamma) * q > tol;
    let delta = 4.0 * (shift * shift + k * q);
    let p = if k != 0.0 && delta >= 0.0 {
        Some((2.0 * a - rho + delta.sqrt()) / (2.0 * k))
    } else if k == 0.0 && shift < 0.0 {
        // linear equation −(2a − ρ)p = q
        Some(-q / (2.0 * a - rho))
    } else {
        None
    };
    let closed_loop = p.map(|p| a - k * p - rho / 2.0);
    let stabilizable = b != 0.0 || shift < 0.0;
    let abar_g = closed_loop.map(|c| c + g);
    let uniformly_stable = stabilizable && m1_clear && m2_clear && abar_g.is_some_and(|v| v < 0.0);
    ScalarReport {
        m1_clear,
        m2_clear,
        delta,
        p,
        closed_loop,
        stabilizable,
        abar_g,
        uniformly_stable,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, v)
    }

    #[test]
    fn zero_input_with_unstable_mode_not_stabilizable() {
        assert!(!pbh_stabilizable(
            &m(1, 1, &[1.0]),
            &m(1, 1, &[0.0]),
            PBH_RANK_TOL
        ));
    }

    #[test]
    fn scalar_nonzero_input_always_stabilizable() {
        for a in [-3.0, 0.0, 0.3, 7.0] {
            assert!(pbh_stabilizable(
                &m(1, 1, &[a]),
                &m(1, 1, &[0.2]),
                PBH_RANK_TOL
            ));
        }
    }

    #[test]
    fn hurwitz_without_input_is_stabilizable() {
        let a = m(2, 2, &[-1.0, 3.0, 0.0, -2.0]);
        assert!(pbh_stabilizable(&a, &DMatrix::zeros(2, 1), PBH_RANK_TOL));
    }

    #[test]
    fn positive_weight_is_observable() {
        assert!(pbh_observable(
            &m(1, 1, &[0.7]),
            &m(1, 1, &[1.0]),
            PBH_RANK_TOL
        ));
    }

    #[test]
    fn zero_weight_stable_is_detectable_not_observable() {
        let a = m(1, 1, &[-0.4]);
        let c = m(1, 1, &[0.0]);
        assert!(pbh_detectable(&a, &c, PBH_RANK_TOL));
        assert!(!pbh_observable(&a, &c, PBH_RANK_TOL));
    }

    #[test]
    fn identity_output_observes_anything() {
        let a = m(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert!(pbh_observable(&a, &DMatrix::identity(2, 2), PBH_RANK_TOL));
    }

    #[test]
    fn uncontrollable_block_detected() {
        // second state is unstable and not reached by B
        let a = m(2, 2, &[-1.0, 0.0, 0.0, 0.5]);
        let b = m(2, 1, &[1.0, 0.0]);
        assert!(!pbh_stabilizable(&a, &b, PBH_RANK_TOL));
    }

    #[test]
    fn section_v_scalar_is_consistent_true() {
        let p = ModelParams::scalar(1.0, 1.0, -0.2, 1.0, -0.2, 1.0, 5.0, 0.6, 1.0, 0.1, 5.0, 0.5);
        let r = analyze(&p);
        assert_eq!(r.governing, GoverningTheorem::Observable);
        assert!(r.condition_ii && r.condition_iii);
        assert_eq!(r.verdict, Verdict::ConsistentTrue);
        // a − b²p/r − ρ/2 + g = 1 − 1.920656… − 0.3 − 0.2
        let expect = 1.0 - (1.4 + 5.96f64.sqrt()) / 2.0 - 0.3 - 0.2;
        assert!((r.abar_g_max_re.unwrap() - expect).abs() < 1e-10);
    }

    #[test]
    fn marginal_population_mode_violates_premise() {
        // a + g = ρ/2, γ = 1
        let p = ModelParams::scalar(1.0, 1.0, -0.7, 1.0, 1.0, 1.0, 5.0, 0.6, 1.0, 0.1, 5.0, 0.5);
        let r = analyze(&p);
        assert!(!r.m2_clear);
        assert_eq!(r.governing, GoverningTheorem::PremiseViolated);
        assert_eq!(r.verdict, Verdict::PremiseViolated);
    }

    #[test]
    fn stable_uncontrolled_unweighted_is_trivially_true() {
        let p = ModelParams::scalar(-1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.6, 0.0, 0.1, 0.0, 1.0);
        let r = analyze(&p);
        assert!(r.condition_iii);
        assert_eq!(r.verdict, Verdict::ConsistentTrue);
        assert!(r.are_p.x.as_ref().unwrap()[(0, 0)].abs() < 1e-12);
        assert!(r.are_pi.x.as_ref().unwrap()[(0, 0)].abs() < 1e-12);
    }

    #[test]
    fn unstable_uncontrolled_is_consistent_false() {
        let p = ModelParams::scalar(2.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.6, 0.0, 0.1, 0.0, 1.0);
        let r = analyze(&p);
        assert!(!r.condition_ii && !r.condition_iii);
        assert_eq!(r.verdict, Verdict::ConsistentFalse);
    }

    #[test]
    fn example1_closed_forms() {
        let r = scalar_example1(1.0, 1.0, -0.2, 1.0, -0.2, 1.0, 0.6);
        assert!((r.delta - 5.96).abs() < 1e-14);
        assert!((r.p.unwrap() - (1.4 + 5.96f64.sqrt()) / 2.0).abs() < 1e-14);
        assert!((r.closed_loop.unwrap() + 5.96f64.sqrt() / 2.0).abs() < 1e-14);
        assert!(r.uniformly_stable);
    }

    #[test]
    fn example1_zero_weight_gives_zero_gain() {
        let r = scalar_example1(0.1, 1.0, 0.0, 0.0, 0.0, 1.0, 0.6);
        assert_eq!(r.p, Some(0.0));
        assert!((r.closed_loop.unwrap() - (0.1 - 0.3)).abs() < 1e-15);
    }

    #[test]
    fn example1_full_coupling_breaks_m2_condition() {
        let r = scalar_example1(1.0, 1.0, -0.7, 1.0, 1.0, 1.0, 0.6);
        assert!(!r.m2_clear);
        assert!(r.m1_clear);
    }
}
