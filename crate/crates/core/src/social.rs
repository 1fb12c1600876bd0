//! Social-optimum control laws.
//!
//! The decentralized law is `u_i = −R⁻¹Bᵀ(P x_i + K x̄ + s)` with `K = Π − P`;
//! the centralized optimum replaces `x̄` by the population average.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gains::{
    column, constant_f, default_t_max, mean_field_path, Gain, Horizon, InfiniteOptions,
    VectorPathExport,
};
use crate::linalg;
use crate::model::{derived_weights, ModelParams};
use crate::path::{self, uniform_grid, Path};
use crate::riccati::{
    solve_are_stable_subspace, solve_dre_backward, solve_linear_backward, steady_offset,
    HamiltonianKind, RiccatiForm,
};
use crate::stability::{pbh_stabilizable, PBH_RANK_TOL};

#[derive(Debug, Clone)]
pub struct SocialGains {
    pub p: Gain,
    pub pi: Gain,
    /// `Π − P`.
    pub k: Gain,
    /// Offset, stored as an n×1 matrix.
    pub s: Gain,
    pub x_bar: Path,
    pub horizon: Horizon,
    /// `R⁻¹Bᵀ`.
    pub r_inv_bt: DMatrix<f64>,
}

impl SocialGains {
    /// `−R⁻¹Bᵀ(P x_i + K x̄(t) + s(t))`.
    pub fn decentralized_control(&self, t: f64, x_i: &DVector<f64>) -> DVector<f64> {
        let x_bar = self.x_bar.vector_at(t);
        self.centralized_control(t, x_i, &x_bar)
    }

    /// `−R⁻¹Bᵀ(P x_i + K x_avg + s(t))`.
    pub fn centralized_control(
        &self,
        t: f64,
        x_i: &DVector<f64>,
        x_avg: &DVector<f64>,
    ) -> DVector<f64> {
        let co = self.p.at(t) * x_i + self.k.at(t) * x_avg + self.s.vector_at(t);
        -(&self.r_inv_bt * co)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("gains serialize")
    }
}

impl Serialize for SocialGains {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Out<'a> {
            problem: &'static str,
            horizon: Horizon,
            #[serde(rename = "P")]
            p: &'a Gain,
            #[serde(rename = "Pi")]
            pi: &'a Gain,
            #[serde(rename = "K")]
            k: &'a Gain,
            s: &'a Gain,
            x_bar: VectorPathExport<'a>,
        }
        Out {
            problem: "social",
            horizon: self.horizon,
            p: &self.p,
            pi: &self.pi,
            k: &self.k,
            s: &self.s,
            x_bar: VectorPathExport(&self.x_bar),
        }
        .serialize(s)
    }
}

pub fn decentralized_social_control(
    gains: &SocialGains,
    t: f64,
    x_i: &DVector<f64>,
) -> DVector<f64> {
    gains.decentralized_control(t, x_i)
}

pub fn centralized_social_control(
    gains: &SocialGains,
    t: f64,
    x_i: &DVector<f64>,
    x_avg: &DVector<f64>,
) -> DVector<f64> {
    gains.centralized_control(t, x_i, x_avg)
}

/// `(Pσ + Kσ/N, Kσ/N)` at time `t`.
pub fn adjoint_coefficients(
    gains: &SocialGains,
    n_agents: usize,
    sigma: &DVector<f64>,
    t: f64,
) -> (DVector<f64>, DVector<f64>) {
    let cross = gains.k.at(t) * sigma / n_agents as f64;
    let own = gains.p.at(t) * sigma + &cross;
    (own, cross)
}

fn check_finite_grid(t_end: f64, grid: &[f64]) -> Result<()> {
    path::check_grid(grid)?;
    if grid[0] != 0.0 || grid[grid.len() - 1] != t_end {
        return Err(Error::GridMismatch(format!(
            "grid must run from 0 to T = {t_end}"
        )));
    }
    Ok(())
}

pub(crate) fn require_psd_q(params: &ModelParams) -> Result<()> {
    if params.q_is_psd() {
        Ok(())
    } else {
        Err(Error::Precondition(
            "Q must be positive semidefinite".into(),
        ))
    }
}

/// Finite-horizon gains on `grid`, which must span `[0, t_end]`.
pub fn synth_social_finite(params: &ModelParams, t_end: f64, grid: &[f64]) -> Result<SocialGains> {
    params.ensure_valid()?;
    require_psd_q(params)?;
    check_finite_grid(t_end, grid)?;
    let n = params.n();
    let w = derived_weights(params);
    let s_mat = params.s_matrix();
    let zero = DMatrix::zeros(n, n);

    let p = solve_dre_backward(
        &RiccatiForm::individual(params),
        zero.clone(),
        grid,
        path::DEFAULT_BLOWUP_CAP,
    )?;
    let pi = solve_dre_backward(
        &RiccatiForm::population(params, &w),
        zero,
        grid,
        path::DEFAULT_BLOWUP_CAP,
    )?;
    let k = pi.zip_with(&p, |a, b| a - b);

    // (A + G − SΠ)ᵀ
    let ag_t = (&params.a + &params.g).transpose();
    let coef = pi.map_affine(&ag_t, |x| -(x.transpose() * &s_mat));
    let f = &params.f;
    let eta_bar = &w.eta_bar;
    let s = solve_linear_backward(
        &coef,
        params.rho,
        |t| pi.at(t) * f.at(t) - eta_bar,
        DVector::zeros(n),
        grid,
    )?;

    let ag = &params.a + &params.g;
    let x_bar = path::integrate_forward(
        grid,
        column(&params.x_bar0),
        |t, x| &ag * x - &s_mat * (pi.at(t) * x + s.at(t)) + column(&f.at(t)),
        path::DEFAULT_BLOWUP_CAP,
    )?;

    Ok(SocialGains {
        p: Gain::Varying(p),
        pi: Gain::Varying(pi),
        k: Gain::Varying(k),
        s: Gain::Varying(s),
        x_bar,
        horizon: Horizon::Finite { t: t_end },
        r_inv_bt: params.r_inv_bt(),
    })
}

/// Stabilizing solution of an algebraic Riccati equation.
///
/// When the Hamiltonian has imaginary-axis eigenvalues, the limit of the
/// backward differential equation over `[0, 4·t_max]` is accepted instead
/// if it satisfies the algebraic equation.
pub(crate) fn stabilizing_solution(
    form: &RiccatiForm,
    kind: HamiltonianKind,
    opts: &InfiniteOptions,
    t_max: f64,
) -> Result<DMatrix<f64>> {
    let h = form.hamiltonian(kind);
    match solve_are_stable_subspace(&h, opts.are) {
        Ok(sol) if sol.rho_stabilizing => Ok(sol.x),
        Ok(_) => Err(Error::NotStabilizable(format!(
            "{kind:?} solution is not ρ-stabilizing"
        ))),
        Err(err @ Error::ImaginaryAxisEigenvalue { .. }) => {
            let n = form.n();
            let grid = uniform_grid(0.0, 4.0 * t_max, 4 * opts.steps);
            let Ok(limit) =
                solve_dre_backward(form, DMatrix::zeros(n, n), &grid, path::DEFAULT_BLOWUP_CAP)
            else {
                return Err(err);
            };
            let x = limit.initial().clone();
            let residual = linalg::max_abs(&form.residual(&x));
            if residual <= 1e-8 * (1.0 + linalg::max_abs(&x)) {
                Ok(x)
            } else {
                Err(err)
            }
        }
        Err(e) => Err(e),
    }
}

/// Infinite-horizon gains with paths stored on `[0, T_max]`.
pub fn synth_social_infinite(params: &ModelParams, opts: InfiniteOptions) -> Result<SocialGains> {
    params.ensure_valid()?;
    let n = params.n();
    let half = DMatrix::identity(n, n) * (0.5 * params.rho);
    if !pbh_stabilizable(&(&params.a - &half), &params.b, PBH_RANK_TOL) {
        return Err(Error::NotStabilizable("(A − ρ/2 I, B)".into()));
    }
    let ag = &params.a + &params.g;
    if !pbh_stabilizable(&(&ag - &half), &params.b, PBH_RANK_TOL) {
        return Err(Error::NotStabilizable("(A + G − ρ/2 I, B)".into()));
    }
    let w = derived_weights(params);
    let t_max = opts.t_max.unwrap_or_else(|| default_t_max(params.rho));
    let p = stabilizing_solution(
        &RiccatiForm::individual(params),
        HamiltonianKind::M1,
        &opts,
        t_max,
    )?;
    let pi = stabilizing_solution(
        &RiccatiForm::population(params, &w),
        HamiltonianKind::M2,
        &opts,
        t_max,
    )?;
    let k = &pi - &p;

    let s_mat = params.s_matrix();
    let f_cl = &ag - &s_mat * &pi;
    let coef = f_cl.transpose();
    let grid = uniform_grid(0.0, t_max, opts.steps);
    let f = &params.f;
    let s = match constant_f(f) {
        Some(fc) => Gain::Constant(column(&steady_offset(
            &coef,
            params.rho,
            &(&pi * fc - &w.eta_bar),
        )?)),
        None => {
            let terminal = steady_offset(&coef, params.rho, &(&pi * f.at(t_max) - &w.eta_bar))?;
            let coef_path = Path::constant(grid.clone(), coef.clone());
            Gain::Varying(solve_linear_backward(
                &coef_path,
                params.rho,
                |t| &pi * f.at(t) - &w.eta_bar,
                terminal,
                &grid,
            )?)
        }
    };

    let drive = |t: f64| f.at(t) - &s_mat * s.vector_at(t);
    let constant_drive = match (&s, constant_f(f)) {
        (Gain::Constant(sv), Some(fc)) => Some(fc - &s_mat * sv.column(0)),
        _ => None,
    };
    let x_bar = mean_field_path(
        &f_cl,
        drive,
        constant_drive,
        &params.x_bar0,
        params.rho,
        &grid,
    )?;

    Ok(SocialGains {
        p: Gain::Constant(p),
        pi: Gain::Constant(pi),
        k: Gain::Constant(k),
        s,
        x_bar,
        horizon: Horizon::Infinite { t_max },
        r_inv_bt: params.r_inv_bt(),
    })
}
