//! Containers shared by the social and game synthesizers.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{matrix_to_rows, TimeFunction};
use crate::path::{self, Path};
use crate::riccati::schur::ordered_schur;

/// A gain that is either constant or follows a path on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub enum Gain {
    Constant(DMatrix<f64>),
    Varying(Path),
}

impl Gain {
    pub fn at(&self, t: f64) -> DMatrix<f64> {
        match self {
            Gain::Constant(m) => m.clone(),
            Gain::Varying(p) => p.at(t),
        }
    }

    pub fn vector_at(&self, t: f64) -> DVector<f64> {
        self.at(t).column(0).into_owned()
    }

    pub fn initial(&self) -> &DMatrix<f64> {
        match self {
            Gain::Constant(m) => m,
            Gain::Varying(p) => p.initial(),
        }
    }

    pub fn as_constant(&self) -> Option<&DMatrix<f64>> {
        match self {
            Gain::Constant(m) => Some(m),
            Gain::Varying(_) => None,
        }
    }

    pub fn as_path(&self) -> Option<&Path> {
        match self {
            Gain::Constant(_) => None,
            Gain::Varying(p) => Some(p),
        }
    }

    fn export(&self) -> GainExport {
        match self {
            Gain::Constant(m) => GainExport::Constant {
                constant: matrix_to_rows(m),
            },
            Gain::Varying(p) => GainExport::Varying {
                grid: p.grid().to_vec(),
                values: p.values().iter().map(matrix_to_rows).collect(),
            },
        }
    }
}

#[derive(Serialize)]
#[serde(untagged)]
enum GainExport {
    Constant {
        constant: Vec<Vec<f64>>,
    },
    Varying {
        grid: Vec<f64>,
        values: Vec<Vec<Vec<f64>>>,
    },
}

impl Serialize for Gain {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.export().serialize(s)
    }
}

/// Path wrapper that serializes as `{grid, values}` with vector values.
pub(crate) struct VectorPathExport<'a>(pub &'a Path);

impl Serialize for VectorPathExport<'_> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Out<'b> {
            grid: &'b [f64],
            values: Vec<Vec<f64>>,
        }
        Out {
            grid: self.0.grid(),
            values: self
                .0
                .values()
                .iter()
                .map(|v| v.column(0).iter().copied().collect())
                .collect(),
        }
        .serialize(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Horizon {
    /// Horizon `[0, t]`; all gains vanish at `t`.
    Finite { t: f64 },
    /// Paths stored on `[0, t_max]` and held constant afterwards.
    Infinite { t_max: f64 },
}

impl Horizon {
    /// Last stored time.
    pub fn end(&self) -> f64 {
        match *self {
            Horizon::Finite { t } => t,
            Horizon::Infinite { t_max } => t_max,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Horizon::Finite { .. })
    }
}

/// Options for the infinite-horizon synthesizers.
#[derive(Debug, Clone, Copy)]
pub struct InfiniteOptions {
    /// Truncation time of stored paths; defaults to [`default_t_max`].
    pub t_max: Option<f64>,
    pub steps: usize,
    pub are: crate::riccati::AreOptions,
}

impl Default for InfiniteOptions {
    fn default() -> Self {
        InfiniteOptions {
            t_max: None,
            steps: path::DEFAULT_STEPS,
            are: Default::default(),
        }
    }
}

/// Time after which the discount factor falls below `1e-8`.
pub fn default_t_max(rho: f64) -> f64 {
    (1e8f64).ln() / rho
}

pub(crate) fn column(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v.as_slice())
}

/// Forward path of `dx/dt = F x + c(t)` on `grid`, refusing initial values
/// for which the solution leaves the space of `e^{ρt/2}`-bounded functions.
///
/// When `F − ρ/2 I` is not Hurwitz and `c` is constant, the admissible
/// initial values form the affine set `x* + span(stable Schur vectors)`,
/// where `x*` is the equilibrium; the nearest admissible point is reported.
pub(crate) fn mean_field_path(
    f_cl: &DMatrix<f64>,
    forcing: impl Fn(f64) -> DVector<f64>,
    constant_forcing: Option<DVector<f64>>,
    x0: &DVector<f64>,
    rho: f64,
    grid: &[f64],
) -> Result<Path> {
    let n = f_cl.nrows();
    let half = 0.5 * rho;
    let shifted = f_cl - DMatrix::identity(n, n) * half;
    if !linalg::is_hurwitz(&shifted) {
        let c = constant_forcing.ok_or_else(|| {
            Error::Unsupported(
                "time-varying f with a mean field drift that is not ρ/2-stable".into(),
            )
        })?;
        let x_star = linalg::solve(f_cl, &(-c)).ok_or_else(|| {
            Error::Precondition("mean field drift is singular and not ρ/2-stable".into())
        })?;
        let margin = 1e-9 * (1.0 + linalg::max_abs(f_cl));
        let schur = ordered_schur(f_cl, |re| re < half - margin)?;
        let z1 = schur.z.columns(0, schur.selected_dim).into_owned();
        let d = x0 - &x_star;
        let proj = &z1 * (z1.transpose() * &d);
        let miss = linalg::max_abs_vec(&(&d - &proj));
        let scale = 1.0 + linalg::max_abs_vec(&x_star) + linalg::max_abs_vec(x0);
        if miss > 1e-9 * scale {
            let nearest = x_star + proj;
            return Err(Error::InfeasibleMeanField {
                required: nearest.iter().copied().collect(),
            });
        }
    }
    path::integrate_forward(
        grid,
        column(x0),
        |t, x| f_cl * x + column(&forcing(t)),
        path::DEFAULT_BLOWUP_CAP,
    )
}

/// `f` as a constant vector, when it is one.
pub(crate) fn constant_f(f: &TimeFunction) -> Option<DVector<f64>> {
    f.as_constant().cloned()
}
