//! Equivalence of the synthesized laws with the classical feedback forms
//! (`f = 0`, `G = 0`).
//!
//! Social: `ŭ_i = −R⁻¹Bᵀ(P x_i + K̄ x† + φ)` with
//! `ρK̄ = K̄Ā + ĀᵀK̄ − K̄SK̄ − Q_Γ`, `Ā = A − SP`,
//! `ρφ = dφ/dt + (A − S(P + K̄))ᵀφ − η̄`, `dx†/dt = Āx† − S(K̄x† + φ)`.
//!
//! Game: `u*_i = −R⁻¹Bᵀ(P x_i + s*)` with the fixed point
//! `ρs* = ds*/dt + Āᵀs* − Q(Γx̄* + η)`, `dx̄*/dt = Āx̄* − S s*`, solved through
//! `s* = K*x̄* + ψ`, `ρK* = K*Ā + ĀᵀK* − K*SK* − QΓ`,
//! `ρψ = dψ/dt + (Āᵀ − K*S)ψ − Qη`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gains::column;
use crate::game::GameGains;
use crate::linalg;
use crate::model::{derived_weights, matrix_to_rows, ModelParams};
use crate::path::{self, Path};
use crate::riccati::{
    solve_are_stable_subspace, steady_offset, AreOptions, HamiltonianKind, RiccatiForm,
};
use crate::sim::{
    simulate, AffineFeedback, ControlLaw, DecentralizedSocial, NashStrategy, Profile, SimConfig,
};
use crate::social::SocialGains;

pub const REPRESENTATION_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct RepresentationReport {
    pub problem: &'static str,
    /// Gain of the classical form (`K̄` or `K*`).
    pub alternative_gain: Vec<Vec<f64>>,
    /// Matching synthesized gain (`Π − P` or `P̄ − P`).
    pub synthesized_gain: Vec<Vec<f64>>,
    pub gain_deviation: f64,
    /// `|φ − s|` or `|ψ − ŝ|`.
    pub offset_deviation: f64,
    /// Largest node-wise gap between the two mean field paths.
    pub path_deviation: f64,
    /// Residual of the fixed-point equation (game only).
    pub fixed_point_residual: Option<f64>,
    /// Largest state difference on common noise.
    pub trajectory_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

fn require_classical_setting(params: &ModelParams) -> Result<()> {
    if !params.f.is_identically_zero() || params.g.iter().any(|v| *v != 0.0) {
        return Err(Error::Precondition(
            "representation check requires f = 0 and G = 0".into(),
        ));
    }
    Ok(())
}

fn constant_of(g: &crate::gains::Gain, what: &str) -> Result<DMatrix<f64>> {
    g.as_constant().cloned().ok_or_else(|| {
        Error::Precondition(format!(
            "representation check needs infinite-horizon {what}"
        ))
    })
}

/// Stabilizing solution of `ρX = XĀ + ĀᵀX − XSX + qc`.
fn solve_alternative(
    a_bar: &DMatrix<f64>,
    s: &DMatrix<f64>,
    qc: DMatrix<f64>,
    rho: f64,
) -> Result<DMatrix<f64>> {
    let form = RiccatiForm {
        a1: a_bar.clone(),
        a2: a_bar.clone(),
        s: s.clone(),
        qc,
        rho,
    };
    let kind = if form.is_symmetric() {
        HamiltonianKind::M1
    } else {
        HamiltonianKind::M3
    };
    Ok(solve_are_stable_subspace(&form.hamiltonian(kind), AreOptions::default())?.x)
}

fn trajectory_gap(
    params: &ModelParams,
    a: &dyn ControlLaw,
    b: &dyn ControlLaw,
    cfg: &SimConfig,
) -> Result<f64> {
    let x = simulate(params, &Profile::uniform(a), cfg, None)?;
    let y = simulate(params, &Profile::uniform(b), cfg, None)?;
    Ok(x.states
        .iter()
        .zip(&y.states)
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max))
}

/// Default common-noise setup: 10 agents, 2 replications on `[0, 10]`.
pub fn default_check_config(seed: u64) -> SimConfig {
    SimConfig {
        n_agents: 10,
        dt: 0.01,
        t_end: 10.0,
        replications: 2,
        seed,
    }
}

pub fn representation_check_social(
    params: &ModelParams,
    gains: &SocialGains,
    cfg: &SimConfig,
) -> Result<RepresentationReport> {
    require_classical_setting(params)?;
    let p = constant_of(&gains.p, "gains")?;
    let k = constant_of(&gains.k, "gains")?;
    let s = constant_of(&gains.s, "gains")?;
    let w = derived_weights(params);
    let s_mat = params.s_matrix();
    let a_bar = &params.a - &s_mat * &p;

    let k_bar = solve_alternative(&a_bar, &s_mat, -&w.q_gamma, params.rho)?;
    let coef = (&params.a - &s_mat * (&p + &k_bar)).transpose();
    let phi = steady_offset(&coef, params.rho, &(-&w.eta_bar))?;

    let drift = &a_bar - &s_mat * &k_bar;
    let drive = column(&(-(&s_mat * &phi)));
    let x_dag = path::integrate_forward(
        gains.x_bar.grid(),
        column(&params.x_bar0),
        |_, x| &drift * x + &drive,
        path::DEFAULT_BLOWUP_CAP,
    )?;

    let m = gains.r_inv_bt.clone();
    let own = -(&m * &p);
    let alt = |t: f64| AffineFeedback {
        own: own.clone(),
        avg: DMatrix::zeros(m.nrows(), m.ncols()),
        offset: -(&m * (&k_bar * x_dag.vector_at(t) + &phi)),
    };
    let trajectory_deviation = trajectory_gap(params, &DecentralizedSocial(gains), &alt, cfg)?;

    let gain_deviation = linalg::max_abs(&(&k_bar - &k));
    let offset_deviation = linalg::max_abs_vec(&(&phi - s.column(0)));
    let path_deviation = x_dag.max_deviation(&gains.x_bar);
    let passed = [
        gain_deviation,
        offset_deviation,
        path_deviation,
        trajectory_deviation,
    ]
    .iter()
    .all(|d| *d < REPRESENTATION_TOL);
    Ok(RepresentationReport {
        problem: "social",
        alternative_gain: matrix_to_rows(&k_bar),
        synthesized_gain: matrix_to_rows(&k),
        gain_deviation,
        offset_deviation,
        path_deviation,
        fixed_point_residual: None,
        trajectory_deviation,
        tolerance: REPRESENTATION_TOL,
        passed,
    })
}

pub fn representation_check_game(
    params: &ModelParams,
    gains: &GameGains,
    cfg: &SimConfig,
) -> Result<RepresentationReport> {
    require_classical_setting(params)?;
    let p = constant_of(&gains.p, "strategies")?;
    let p_bar = constant_of(&gains.p_bar, "strategies")?;
    let s_hat = constant_of(&gains.s_hat, "strategies")?;
    let s_mat = params.s_matrix();
    let a_bar = &params.a - &s_mat * &p;
    let q_gamma = &params.q * &params.gamma;
    let q_eta = &params.q * &params.eta;

    let k_star = solve_alternative(&a_bar, &s_mat, -&q_gamma, params.rho)?;
    let coef = a_bar.transpose() - &k_star * &s_mat;
    let psi = steady_offset(&coef, params.rho, &(-&q_eta))?;

    let drift = &a_bar - &s_mat * &k_star;
    let drive = column(&(-(&s_mat * &psi)));
    let x_star: Path = path::integrate_forward(
        gains.x_bar.grid(),
        column(&params.x_bar0),
        |_, x| &drift * x + &drive,
        path::DEFAULT_BLOWUP_CAP,
    )?;

    // ρs* − ds*/dt − Āᵀs* + Q(Γx̄* + η), with ds*/dt = K* dx̄*/dt
    let mut fixed_point_residual: f64 = 0.0;
    for (x, dx) in x_star.values().iter().zip(x_star.slopes()) {
        let x = x.column(0).into_owned();
        let s_star = &k_star * &x + &psi;
        let ds = &k_star * dx.column(0);
        let r = &s_star * params.rho - ds - a_bar.transpose() * &s_star + &q_gamma * &x + &q_eta;
        fixed_point_residual = fixed_point_residual.max(linalg::max_abs_vec(&r));
    }

    let m = gains.r_inv_bt.clone();
    let own = -(&m * &p);
    let alt = |t: f64| AffineFeedback {
        own: own.clone(),
        avg: DMatrix::zeros(m.nrows(), m.ncols()),
        offset: -(&m * (&k_star * x_star.vector_at(t) + &psi)),
    };
    let trajectory_deviation = trajectory_gap(params, &NashStrategy(gains), &alt, cfg)?;

    let synthesized = &p_bar - &p;
    let gain_deviation = linalg::max_abs(&(&k_star - &synthesized));
    let offset_deviation = linalg::max_abs_vec(&(&psi - s_hat.column(0)));
    let path_deviation = x_star.max_deviation(&gains.x_bar);
    let scale = 1.0 + linalg::max_abs(&k_star);
    let passed = [
        gain_deviation,
        offset_deviation,
        path_deviation,
        trajectory_deviation,
    ]
    .iter()
    .all(|d| *d < REPRESENTATION_TOL)
        && fixed_point_residual < REPRESENTATION_TOL * scale;
    Ok(RepresentationReport {
        problem: "game",
        alternative_gain: matrix_to_rows(&k_star),
        synthesized_gain: matrix_to_rows(&synthesized),
        gain_deviation,
        offset_deviation,
        path_deviation,
        fixed_point_residual: Some(fixed_point_residual),
        trajectory_deviation,
        tolerance: REPRESENTATION_TOL,
        passed,
    })
}
