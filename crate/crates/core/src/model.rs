//! Problem data for the N-agent mean field LQ model.
//!
//! Agent `i` evolves as
//!
//! ```text
//! dx_i = [A x_i + B u_i + G x^(N) + f(t)] dt + σ(t) dW_i
//! ```
//!
//! and pays the discounted cost
//!
//! ```text
//! J_i = E ∫ e^{-ρt} { ‖x_i − Γ x^(N) − η‖²_Q + ‖u_i‖²_R } dt
//! ```
//!
//! where `x^(N)` is the population average and each `W_i` is a scalar
//! Brownian motion.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Relative symmetry tolerance: `‖M − Mᵀ‖_max ≤ 1e-10·(1 + ‖M‖_max)`.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// A time-dependent vector input (`f` or `σ`).
#[derive(Debug, Clone, PartialEq)]
pub enum TimeFunction {
    Constant(DVector<f64>),
    /// Samples on an ascending grid, linearly interpolated and held
    /// constant outside the grid.
    Sampled {
        grid: Vec<f64>,
        values: Vec<DVector<f64>>,
    },
}

impl TimeFunction {
    pub fn constant(v: &[f64]) -> Self {
        TimeFunction::Constant(DVector::from_column_slice(v))
    }

    pub fn zeros(n: usize) -> Self {
        TimeFunction::Constant(DVector::zeros(n))
    }

    pub fn dim(&self) -> usize {
        match self {
            TimeFunction::Constant(v) => v.len(),
            TimeFunction::Sampled { values, .. } => values.first().map_or(0, |v| v.len()),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, TimeFunction::Constant(_))
    }

    pub fn as_constant(&self) -> Option<&DVector<f64>> {
        match self {
            TimeFunction::Constant(v) => Some(v),
            TimeFunction::Sampled { .. } => None,
        }
    }

    pub fn at(&self, t: f64) -> DVector<f64> {
        match self {
            TimeFunction::Constant(v) => v.clone(),
            TimeFunction::Sampled { grid, values } => {
                let last = grid.len() - 1;
                if t <= grid[0] {
                    return values[0].clone();
                }
                if t >= grid[last] {
                    return values[last].clone();
                }
                let k = grid
                    .partition_point(|g| *g <= t)
                    .saturating_sub(1)
                    .min(last - 1);
                let w = (t - grid[k]) / (grid[k + 1] - grid[k]);
                &values[k] * (1.0 - w) + &values[k + 1] * w
            }
        }
    }

    pub fn is_identically_zero(&self) -> bool {
        match self {
            TimeFunction::Constant(v) => v.iter().all(|x| *x == 0.0),
            TimeFunction::Sampled { values, .. } => {
                values.iter().all(|v| v.iter().all(|x| *x == 0.0))
            }
        }
    }

    fn check(&self, name: &str, n: usize, out: &mut Vec<Violation>) {
        match self {
            TimeFunction::Constant(v) => {
                if v.len() != n {
                    out.push(Violation::Dimension(format!(
                        "{name} has length {}, expected {n}",
                        v.len()
                    )));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    out.push(Violation::NonFinite(name.to_string()));
                }
            }
            TimeFunction::Sampled { grid, values } => {
                if grid.is_empty() || grid.len() != values.len() {
                    out.push(Violation::Dimension(format!(
                        "{name} has {} grid points and {} samples",
                        grid.len(),
                        values.len()
                    )));
                    return;
                }
                if grid.windows(2).any(|w| w[1] <= w[0]) {
                    out.push(Violation::Dimension(format!(
                        "{name} grid is not strictly increasing"
                    )));
                }
                if values.iter().any(|v| v.len() != n) {
                    out.push(Violation::Dimension(format!(
                        "{name} samples must have length {n}"
                    )));
                }
                if values.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
                    out.push(Violation::NonFinite(name.to_string()));
                }
            }
        }
    }
}

/// The tuple `(A, B, G, Q, R, Γ, η, ρ, f, σ, initial law)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    pub eta: DVector<f64>,
    pub rho: f64,
    pub f: TimeFunction,
    pub sigma: TimeFunction,
    /// Mean of the initial states.
    pub x_bar0: DVector<f64>,
    /// Covariance of each agent's initial state.
    pub init_cov: DMatrix<f64>,
}

impl ModelParams {
    /// One-dimensional state and control with constant `f` and `σ`.
    #[allow(clippy::too_many_arguments)]
    pub fn scalar(
        a: f64,
        b: f64,
        g: f64,
        q: f64,
        gamma: f64,
        r: f64,
        eta: f64,
        rho: f64,
        f: f64,
        sigma: f64,
        x_bar0: f64,
        init_var: f64,
    ) -> Self {
        let s = |v: f64| DMatrix::from_element(1, 1, v);
        ModelParams {
            a: s(a),
            b: s(b),
            g: s(g),
            q: s(q),
            r: s(r),
            gamma: s(gamma),
            eta: DVector::from_element(1, eta),
            rho,
            f: TimeFunction::constant(&[f]),
            sigma: TimeFunction::constant(&[sigma]),
            x_bar0: DVector::from_element(1, x_bar0),
            init_cov: s(init_var),
        }
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn r_dim(&self) -> usize {
        self.b.ncols()
    }

    /// `B R⁻¹ Bᵀ`.
    pub fn s_matrix(&self) -> DMatrix<f64> {
        &self.b * self.r_inv_bt()
    }

    /// `R⁻¹ Bᵀ` (r×n).
    pub fn r_inv_bt(&self) -> DMatrix<f64> {
        linalg::solve_mat(&self.r, &self.b.transpose()).expect("R validated as positive definite")
    }

    pub fn validate(&self) -> ValidationReport {
        let mut v = Vec::new();
        let n = self.a.nrows();
        let r = self.b.ncols();
        if !self.a.is_square() {
            v.push(Violation::Dimension(format!(
                "A is {}×{}, must be square",
                self.a.nrows(),
                self.a.ncols()
            )));
        }
        let mut dim = |name: &str, m: &DMatrix<f64>, rows: usize, cols: usize| {
            if m.nrows() != rows || m.ncols() != cols {
                v.push(Violation::Dimension(format!(
                    "{name} is {}×{}, expected {rows}×{cols}",
                    m.nrows(),
                    m.ncols()
                )));
                false
            } else {
                true
            }
        };
        let b_ok = dim("B", &self.b, n, r);
        let g_ok = dim("G", &self.g, n, n);
        let q_ok = dim("Q", &self.q, n, n);
        let r_ok = dim("R", &self.r, r, r);
        let gamma_ok = dim("Gamma", &self.gamma, n, n);
        let cov_ok = dim("init_cov", &self.init_cov, n, n);
        let _ = (b_ok, g_ok, gamma_ok);
        if self.eta.len() != n {
            v.push(Violation::Dimension(format!(
                "eta has length {}, expected {n}",
                self.eta.len()
            )));
        }
        if self.x_bar0.len() != n {
            v.push(Violation::Dimension(format!(
                "x_bar0 has length {}, expected {n}",
                self.x_bar0.len()
            )));
        }
        self.f.check("f", n, &mut v);
        self.sigma.check("sigma", n, &mut v);

        for (name, m) in [
            ("A", &self.a),
            ("B", &self.b),
            ("G", &self.g),
            ("Q", &self.q),
            ("R", &self.r),
            ("Gamma", &self.gamma),
            ("init_cov", &self.init_cov),
        ] {
            if m.iter().any(|x| !x.is_finite()) {
                v.push(Violation::NonFinite(name.to_string()));
            }
        }
        if self
            .eta
            .iter()
            .chain(self.x_bar0.iter())
            .any(|x| !x.is_finite())
        {
            v.push(Violation::NonFinite("eta/x_bar0".to_string()));
        }

        if q_ok && !linalg::is_symmetric(&self.q, SYMMETRY_TOL) {
            v.push(Violation::NotSymmetric("Q".into()));
        }
        if r_ok {
            if !linalg::is_symmetric(&self.r, SYMMETRY_TOL) {
                v.push(Violation::NotSymmetric("R".into()));
            }
            if r == 0 || linalg::min_symmetric_eigenvalue(&self.r) <= 0.0 {
                v.push(Violation::NotPositiveDefinite("R".into()));
            }
        }
        if cov_ok {
            if !linalg::is_symmetric(&self.init_cov, SYMMETRY_TOL) {
                v.push(Violation::NotSymmetric("init_cov".into()));
            } else if linalg::min_symmetric_eigenvalue(&self.init_cov)
                < -1e-12 * (1.0 + linalg::max_abs(&self.init_cov))
            {
                v.push(Violation::NotPositiveSemidefinite("init_cov".into()));
            }
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            v.push(Violation::NonPositiveDiscount(self.rho));
        }
        ValidationReport { violations: v }
    }

    /// Validate and convert a failure into [`Error::InvalidModel`].
    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.passed() {
            Ok(())
        } else {
            Err(Error::InvalidModel(report))
        }
    }

    /// `Q ⪰ 0` (smallest eigenvalue ≥ −1e-12 scaled).
    pub fn q_is_psd(&self) -> bool {
        linalg::min_symmetric_eigenvalue(&self.q) >= -1e-12 * (1.0 + linalg::max_abs(&self.q))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: ModelParamsJson = serde_json::from_str(s)?;
        raw.try_into()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ModelParamsJson::from(self)).expect("model serializes")
    }
}

/// One structural problem found by [`ModelParams::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Dimension(String),
    NotSymmetric(String),
    NotPositiveDefinite(String),
    NotPositiveSemidefinite(String),
    NonPositiveDiscount(f64),
    NonFinite(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Dimension(s) => write!(f, "dimension: {s}"),
            Violation::NotSymmetric(m) => write!(f, "{m} not symmetric"),
            Violation::NotPositiveDefinite(m) => write!(f, "{m} not positive definite"),
            Violation::NotPositiveSemidefinite(m) => write!(f, "{m} not positive semidefinite"),
            Violation::NonPositiveDiscount(r) => write!(f, "rho must be positive (got {r})"),
            Violation::NonFinite(m) => write!(f, "{m} has non-finite entries"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn messages(&self) -> Vec<String> {
        self.violations.iter().map(|v| v.to_string()).collect()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.passed() {
            return write!(f, "ok");
        }
        write!(f, "{}", self.messages().join("; "))
    }
}

/// Weight matrices that appear once `x^(N)` is expanded in the cost.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedWeights {
    /// `ΓᵀQ + QΓ − ΓᵀQΓ`
    pub q_gamma: DMatrix<f64>,
    /// `Qη − ΓᵀQη`
    pub eta_bar: DVector<f64>,
    /// `(I − Γ)ᵀ Q (I − Γ)`
    pub q_hat: DMatrix<f64>,
    /// `Q (I − Γ)`
    pub q_i_minus_gamma: DMatrix<f64>,
}

pub fn derived_weights(p: &ModelParams) -> DerivedWeights {
    let q = &p.q;
    let gt = p.gamma.transpose();
    let q_gamma = &gt * q + q * &p.gamma - &gt * q * &p.gamma;
    let q_eta = q * &p.eta;
    let eta_bar = &q_eta - &gt * &q_eta;
    let i_minus = DMatrix::identity(p.n(), p.n()) - &p.gamma;
    let q_hat = i_minus.transpose() * q * &i_minus;
    let q_i_minus_gamma = q * &i_minus;
    DerivedWeights {
        q_gamma,
        eta_bar,
        q_hat,
        q_i_minus_gamma,
    }
}

// ---------------------------------------------------------------------------
// JSON form: explicit "n"/"r" and row-major nested arrays.

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum TimeFunctionJson {
    Constant(Vec<f64>),
    Sampled {
        grid: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelParamsJson {
    n: usize,
    r: usize,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
    #[serde(rename = "G")]
    g: Vec<Vec<f64>>,
    #[serde(rename = "Q")]
    q: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    r_weight: Vec<Vec<f64>>,
    #[serde(rename = "Gamma")]
    gamma: Vec<Vec<f64>>,
    eta: Vec<f64>,
    rho: f64,
    f: TimeFunctionJson,
    sigma: TimeFunctionJson,
    x_bar0: Vec<f64>,
    init_cov: Vec<Vec<f64>>,
    /// Free-form note carried through unchanged; ignored by the solvers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    comment: Option<String>,
}

pub(crate) fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

pub(crate) fn rows_to_matrix(
    name: &str,
    rows: &[Vec<f64>],
    nrows: usize,
    ncols: usize,
) -> Result<DMatrix<f64>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension(format!("{name} must be {nrows}×{ncols}")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn vec_of(name: &str, v: &[f64], n: usize) -> Result<DVector<f64>> {
    if v.len() != n {
        return Err(Error::Dimension(format!("{name} must have length {n}")));
    }
    Ok(DVector::from_column_slice(v))
}

impl From<&TimeFunction> for TimeFunctionJson {
    fn from(t: &TimeFunction) -> Self {
        match t {
            TimeFunction::Constant(v) => TimeFunctionJson::Constant(v.iter().copied().collect()),
            TimeFunction::Sampled { grid, values } => TimeFunctionJson::Sampled {
                grid: grid.clone(),
                values: values.iter().map(|v| v.iter().copied().collect()).collect(),
            },
        }
    }
}

impl TimeFunctionJson {
    fn into_function(self, name: &str, n: usize) -> Result<TimeFunction> {
        match self {
            TimeFunctionJson::Constant(v) => Ok(TimeFunction::Constant(vec_of(name, &v, n)?)),
            TimeFunctionJson::Sampled { grid, values } => {
                let values = values
                    .iter()
                    .map(|v| vec_of(name, v, n))
                    .collect::<Result<Vec<_>>>()?;
                Ok(TimeFunction::Sampled { grid, values })
            }
        }
    }
}

impl From<&ModelParams> for ModelParamsJson {
    fn from(p: &ModelParams) -> Self {
        ModelParamsJson {
            n: p.n(),
            r: p.r_dim(),
            a: matrix_to_rows(&p.a),
            b: matrix_to_rows(&p.b),
            g: matrix_to_rows(&p.g),
            q: matrix_to_rows(&p.q),
            r_weight: matrix_to_rows(&p.r),
            gamma: matrix_to_rows(&p.gamma),
            eta: p.eta.iter().copied().collect(),
            rho: p.rho,
            f: (&p.f).into(),
            sigma: (&p.sigma).into(),
            x_bar0: p.x_bar0.iter().copied().collect(),
            init_cov: matrix_to_rows(&p.init_cov),
            comment: None,
        }
    }
}

impl TryFrom<ModelParamsJson> for ModelParams {
    type Error = Error;

    fn try_from(j: ModelParamsJson) -> Result<Self> {
        let (n, r) = (j.n, j.r);
        Ok(ModelParams {
            a: rows_to_matrix("A", &j.a, n, n)?,
            b: rows_to_matrix("B", &j.b, n, r)?,
            g: rows_to_matrix("G", &j.g, n, n)?,
            q: rows_to_matrix("Q", &j.q, n, n)?,
            r: rows_to_matrix("R", &j.r_weight, r, r)?,
            gamma: rows_to_matrix("Gamma", &j.gamma, n, n)?,
            eta: vec_of("eta", &j.eta, n)?,
            rho: j.rho,
            f: j.f.into_function("f", n)?,
            sigma: j.sigma.into_function("sigma", n)?,
            x_bar0: vec_of("x_bar0", &j.x_bar0, n)?,
            init_cov: rows_to_matrix("init_cov", &j.init_cov, n, n)?,
        })
    }
}

impl Serialize for ModelParams {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ModelParamsJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for ModelParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = ModelParamsJson::deserialize(d)?;
        raw.try_into().map_err(serde::de::Error::custom)
    }
}
