//! Time-indexed matrix paths and fixed-step RK4 integration.
//!
//! A [`Path`] keeps the value and the time derivative at each grid node, so
//! evaluation between nodes uses cubic Hermite interpolation. This keeps
//! fourth-order accuracy when one integrated path feeds the right-hand side
//! of another (Riccati gain → offset → mean field path).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Default number of RK4 steps per horizon.
pub const DEFAULT_STEPS: usize = 2000;

/// Default `‖X‖_max` cap beyond which integration reports a blow-up.
pub const DEFAULT_BLOWUP_CAP: f64 = 1e12;

/// `steps + 1` equally spaced nodes on `[t0, t1]` with exact endpoints.
pub fn uniform_grid(t0: f64, t1: f64, steps: usize) -> Vec<f64> {
    assert!(
        steps > 0 && t1 > t0,
        "uniform_grid needs t1 > t0 and at least one step"
    );
    let h = (t1 - t0) / steps as f64;
    let mut g: Vec<f64> = (0..=steps).map(|k| t0 + k as f64 * h).collect();
    g[steps] = t1;
    g
}

pub fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::GridMismatch("grid needs at least two points".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::GridMismatch(
            "grid must be strictly increasing".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    grid: Vec<f64>,
    values: Vec<DMatrix<f64>>,
    slopes: Vec<DMatrix<f64>>,
}

impl Path {
    pub fn new(grid: Vec<f64>, values: Vec<DMatrix<f64>>, slopes: Vec<DMatrix<f64>>) -> Self {
        assert_eq!(grid.len(), values.len());
        assert_eq!(grid.len(), slopes.len());
        Path {
            grid,
            values,
            slopes,
        }
    }

    /// A path that holds `value` on the whole grid.
    pub fn constant(grid: Vec<f64>, value: DMatrix<f64>) -> Self {
        let zero = DMatrix::zeros(value.nrows(), value.ncols());
        let len = grid.len();
        Path {
            grid,
            values: vec![value; len],
            slopes: vec![zero; len],
        }
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[DMatrix<f64>] {
        &self.values
    }

    pub fn slopes(&self) -> &[DMatrix<f64>] {
        &self.slopes
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn initial(&self) -> &DMatrix<f64> {
        &self.values[0]
    }

    pub fn terminal(&self) -> &DMatrix<f64> {
        &self.values[self.values.len() - 1]
    }

    pub fn end_time(&self) -> f64 {
        self.grid[self.grid.len() - 1]
    }

    /// Value at `t`; held at the end values outside the grid.
    pub fn at(&self, t: f64) -> DMatrix<f64> {
        let last = self.grid.len() - 1;
        if t <= self.grid[0] {
            return self.values[0].clone();
        }
        if t >= self.grid[last] {
            return self.values[last].clone();
        }
        let k = self
            .grid
            .partition_point(|g| *g <= t)
            .saturating_sub(1)
            .min(last - 1);
        if t == self.grid[k] {
            return self.values[k].clone();
        }
        let h = self.grid[k + 1] - self.grid[k];
        let s = (t - self.grid[k]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        &self.values[k] * h00
            + &self.slopes[k] * (h10 * h)
            + &self.values[k + 1] * h01
            + &self.slopes[k + 1] * (h11 * h)
    }

    /// First column at `t`, for paths of n×1 vectors.
    pub fn vector_at(&self, t: f64) -> DVector<f64> {
        self.at(t).column(0).into_owned()
    }

    /// Largest node-wise `‖self − other‖_max`; both paths must share a grid.
    pub fn max_deviation(&self, other: &Path) -> f64 {
        assert_eq!(self.grid.len(), other.grid.len());
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| linalg::max_abs(&(a - b)))
            .fold(0.0, f64::max)
    }

    /// Node-wise image `X ↦ offset + lin(X)`, with slopes mapped through `lin`.
    pub fn map_affine(
        &self,
        offset: &DMatrix<f64>,
        lin: impl Fn(&DMatrix<f64>) -> DMatrix<f64>,
    ) -> Path {
        Path {
            grid: self.grid.clone(),
            values: self.values.iter().map(|x| offset + lin(x)).collect(),
            slopes: self.slopes.iter().map(&lin).collect(),
        }
    }

    /// Node-wise combination of two paths on the same grid.
    pub fn zip_with(
        &self,
        other: &Path,
        f: impl Fn(&DMatrix<f64>, &DMatrix<f64>) -> DMatrix<f64>,
    ) -> Path {
        assert_eq!(self.grid, other.grid, "paths must share a grid");
        Path {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| f(a, b))
                .collect(),
            slopes: self
                .slopes
                .iter()
                .zip(&other.slopes)
                .map(|(a, b)| f(a, b))
                .collect(),
        }
    }
}

fn rk4_step<F>(rhs: &F, t: f64, x: &DMatrix<f64>, h: f64) -> DMatrix<f64>
where
    F: Fn(f64, &DMatrix<f64>) -> DMatrix<f64>,
{
    let k1 = rhs(t, x);
    let k2 = rhs(t + 0.5 * h, &(x + &k1 * (0.5 * h)));
    let k3 = rhs(t + 0.5 * h, &(x + &k2 * (0.5 * h)));
    let k4 = rhs(t + h, &(x + &k3 * h));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Integrate `dX/dt = rhs(t, X)` backward from `X(grid[last]) = terminal`.
///
/// Fails with [`Error::BlowUp`] once `‖X‖_max` exceeds `cap` or turns
/// non-finite.
pub fn integrate_backward<F>(grid: &[f64], terminal: DMatrix<f64>, rhs: F, cap: f64) -> Result<Path>
where
    F: Fn(f64, &DMatrix<f64>) -> DMatrix<f64>,
{
    check_grid(grid)?;
    let len = grid.len();
    let mut values = vec![DMatrix::zeros(0, 0); len];
    values[len - 1] = terminal;
    for k in (0..len - 1).rev() {
        let h = grid[k] - grid[k + 1];
        let next = rk4_step(&rhs, grid[k + 1], &values[k + 1], h);
        let norm = linalg::max_abs(&next);
        if !norm.is_finite() || norm > cap {
            return Err(Error::BlowUp {
                t: grid[k],
                norm,
                cap,
            });
        }
        values[k] = next;
    }
    let slopes = grid.iter().zip(&values).map(|(t, x)| rhs(*t, x)).collect();
    Ok(Path::new(grid.to_vec(), values, slopes))
}

/// Integrate `dX/dt = rhs(t, X)` forward from `X(grid[0]) = initial`.
pub fn integrate_forward<F>(grid: &[f64], initial: DMatrix<f64>, rhs: F, cap: f64) -> Result<Path>
where
    F: Fn(f64, &DMatrix<f64>) -> DMatrix<f64>,
{
    check_grid(grid)?;
    let mut values = Vec::with_capacity(grid.len());
    values.push(initial);
    for k in 0..grid.len() - 1 {
        let h = grid[k + 1] - grid[k];
        let next = rk4_step(&rhs, grid[k], &values[k], h);
        let norm = linalg::max_abs(&next);
        if !norm.is_finite() || norm > cap {
            return Err(Error::BlowUp {
                t: grid[k + 1],
                norm,
                cap,
            });
        }
        values.push(next);
    }
    let slopes = grid.iter().zip(&values).map(|(t, x)| rhs(*t, x)).collect();
    Ok(Path::new(grid.to_vec(), values, slopes))
}
