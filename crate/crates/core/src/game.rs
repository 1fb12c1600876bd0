//! Decentralized ε-Nash strategies
//! `u_i = −R⁻¹Bᵀ(P x_i + (P̄ − P) x̄ + ŝ)`.
//!
//! `P̄` solves the nonsymmetric equation
//! `ρP̄ = dP̄/dt + AᵀP̄ + P̄(A + G) − P̄SP̄ + Q(I − Γ)` and the offset solves
//! `ρŝ = dŝ/dt + (Aᵀ − P̄S)ŝ + P̄f − Qη`.

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
    build_hamiltonian, finite_horizon_solvable, solve_are_stable_subspace, solve_dre_backward,
    solve_linear_backward, steady_offset, FiniteHorizonReport, HamiltonianKind, RiccatiForm,
    SchurFactors,
};
use crate::social::{require_psd_q, stabilizing_solution};
use crate::stability::{pbh_detectable, pbh_stabilizable, PBH_RANK_TOL, SQRT_CLIP};

/// Constant term of the infinite-horizon offset equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OffsetForcing {
    /// `P̄f − Qη`, consistent with the finite-horizon equation.
    #[default]
    WeightedEta,
    /// `P̄f − η`.
    PlainEta,
}

#[derive(Debug, Clone)]
pub struct GameGains {
    pub p: Gain,
    pub p_bar: Gain,
    /// Offset `ŝ`, stored as an n×1 matrix.
    pub s_hat: Gain,
    pub x_bar: Path,
    pub horizon: Horizon,
    pub r_inv_bt: DMatrix<f64>,
    /// Stable-subspace factors of `M3` (infinite horizon).
    pub m3_factors: Option<SchurFactors>,
    /// Determinant sweep (finite horizon).
    pub solvability: Option<FiniteHorizonReport>,
    pub offset_forcing: OffsetForcing,
}

impl GameGains {
    /// `−R⁻¹Bᵀ(P x_i + (P̄ − P) x̄(t) + ŝ(t))`.
    pub fn strategy(&self, t: f64, x_i: &DVector<f64>) -> DVector<f64> {
        let p = self.p.at(t);
        let co =
            &p * x_i + (self.p_bar.at(t) - p) * self.x_bar.vector_at(t) + self.s_hat.vector_at(t);
        -(&self.r_inv_bt * co)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("gains serialize")
    }
}

impl Serialize for GameGains {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Out<'a> {
            problem: &'static str,
            horizon: Horizon,
            #[serde(rename = "P")]
            p: &'a Gain,
            #[serde(rename = "P_bar")]
            p_bar: &'a Gain,
            s_hat: &'a Gain,
            x_bar: VectorPathExport<'a>,
            offset_forcing: OffsetForcing,
            #[serde(skip_serializing_if = "Option::is_none")]
            solvability: Option<&'a FiniteHorizonReport>,
        }
        Out {
            problem: "game",
            horizon: self.horizon,
            p: &self.p,
            p_bar: &self.p_bar,
            s_hat: &self.s_hat,
            x_bar: VectorPathExport(&self.x_bar),
            offset_forcing: self.offset_forcing,
            solvability: self.solvability.as_ref(),
        }
        .serialize(s)
    }
}

pub fn decentralized_game_strategy(gains: &GameGains, t: f64, x_i: &DVector<f64>) -> DVector<f64> {
    gains.strategy(t, x_i)
}

/// Finite-horizon strategies on `grid`, which must span `[0, t_end]`.
pub fn synth_game_finite(params: &ModelParams, t_end: f64, grid: &[f64]) -> Result<GameGains> {
    params.ensure_valid()?;
    require_psd_q(params)?;
    path::check_grid(grid)?;
    if grid[0] != 0.0 || grid[grid.len() - 1] != t_end {
        return Err(Error::GridMismatch(format!(
            "grid must run from 0 to T = {t_end}"
        )));
    }
    let n = params.n();
    let w = derived_weights(params);
    let script_a = build_hamiltonian(params, &w, HamiltonianKind::ScriptA)?;
    let report = finite_horizon_solvable(&script_a, grid);
    if !report.solvable {
        return Err(Error::FiniteHorizonUnsolvable(format!(
            "det of the lower-right block of e^(𝒜t) is {:e} at t = {}",
            report.min_det,
            report.first_failure.unwrap_or(report.argmin_t)
        )));
    }

    let zero = DMatrix::zeros(n, n);
    let p_bar = solve_dre_backward(
        &RiccatiForm::game_mean(params, &w),
        zero.clone(),
        grid,
        path::DEFAULT_BLOWUP_CAP,
    )
    .map_err(|e| match e {
        Error::BlowUp { t, .. } => Error::FiniteHorizonUnsolvable(format!("P̄ escapes at t = {t}")),
        e => e,
    })?;
    let p = solve_dre_backward(
        &RiccatiForm::individual(params),
        zero,
        grid,
        path::DEFAULT_BLOWUP_CAP,
    )?;

    let s_mat = params.s_matrix();
    // Aᵀ − P̄S
    let coef = p_bar.map_affine(&params.a.transpose(), |x| -(x * &s_mat));
    let f = &params.f;
    let q_eta = &params.q * &params.eta;
    let s_hat = solve_linear_backward(
        &coef,
        params.rho,
        |t| p_bar.at(t) * f.at(t) - &q_eta,
        DVector::zeros(n),
        grid,
    )?;

    let ag = &params.a + &params.g;
    let x_bar = path::integrate_forward(
        grid,
        column(&params.x_bar0),
        |t, x| &ag * x - &s_mat * (p_bar.at(t) * x + s_hat.at(t)) + column(&f.at(t)),
        path::DEFAULT_BLOWUP_CAP,
    )?;

    Ok(GameGains {
        p: Gain::Varying(p),
        p_bar: Gain::Varying(p_bar),
        s_hat: Gain::Varying(s_hat),
        x_bar,
        horizon: Horizon::Finite { t: t_end },
        r_inv_bt: params.r_inv_bt(),
        m3_factors: None,
        solvability: Some(report),
        offset_forcing: OffsetForcing::WeightedEta,
    })
}

pub fn synth_game_infinite(params: &ModelParams, opts: InfiniteOptions) -> Result<GameGains> {
    synth_game_infinite_with(params, opts, OffsetForcing::WeightedEta)
}

/// Infinite-horizon strategies (requires `G = 0`).
pub fn synth_game_infinite_with(
    params: &ModelParams,
    opts: InfiniteOptions,
    forcing: OffsetForcing,
) -> Result<GameGains> {
    params.ensure_valid()?;
    if params.g.iter().any(|v| *v != 0.0) {
        return Err(Error::Unsupported(
            "infinite-horizon game requires G = 0".into(),
        ));
    }
    require_psd_q(params)?;
    let n = params.n();
    let a_sh = &params.a - DMatrix::identity(n, n) * (0.5 * params.rho);
    if !pbh_stabilizable(&a_sh, &params.b, PBH_RANK_TOL) {
        return Err(Error::NotStabilizable("(A − ρ/2 I, B)".into()));
    }
    let sqrt_q = linalg::sqrt_psd(&params.q, SQRT_CLIP)
        .map_err(|_| Error::Precondition("Q must be positive semidefinite".into()))?;
    if !pbh_detectable(&a_sh, &sqrt_q, PBH_RANK_TOL) {
        return Err(Error::Precondition(
            "(A − ρ/2 I, √Q) is not detectable".into(),
        ));
    }

    let w = derived_weights(params);
    let t_max = opts.t_max.unwrap_or_else(|| default_t_max(params.rho));
    let p = stabilizing_solution(
        &RiccatiForm::individual(params),
        HamiltonianKind::M1,
        &opts,
        t_max,
    )?;
    let m3 = build_hamiltonian(params, &w, HamiltonianKind::M3)?;
    let sol = solve_are_stable_subspace(&m3, opts.are)?;
    let p_bar = sol.x;

    let s_mat = params.s_matrix();
    let coef = params.a.transpose() - &p_bar * &s_mat;
    let eta_term = match forcing {
        OffsetForcing::WeightedEta => &params.q * &params.eta,
        OffsetForcing::PlainEta => params.eta.clone(),
    };
    let grid = uniform_grid(0.0, t_max, opts.steps);
    let f = &params.f;
    let s_hat = match constant_f(f) {
        Some(fc) => Gain::Constant(column(&steady_offset(
            &coef,
            params.rho,
            &(&p_bar * fc - &eta_term),
        )?)),
        None => {
            let terminal = steady_offset(&coef, params.rho, &(&p_bar * f.at(t_max) - &eta_term))?;
            let coef_path = Path::constant(grid.clone(), coef.clone());
            Gain::Varying(solve_linear_backward(
                &coef_path,
                params.rho,
                |t| &p_bar * f.at(t) - &eta_term,
                terminal,
                &grid,
            )?)
        }
    };

    let f_cl = &params.a - &s_mat * &p_bar;
    let drive = |t: f64| f.at(t) - &s_mat * s_hat.vector_at(t);
    let constant_drive = match (&s_hat, constant_f(f)) {
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

    Ok(GameGains {
        p: Gain::Constant(p),
        p_bar: Gain::Constant(p_bar),
        s_hat,
        x_bar,
        horizon: Horizon::Infinite { t_max },
        r_inv_bt: params.r_inv_bt(),
        m3_factors: Some(sol.factors),
        solvability: None,
        offset_forcing: forcing,
    })
}
