//! Monte Carlo simulation of the coupled N-agent system
//! `dx_i = [A x_i + B u_i + G x^(N) + f]dt + σ dW_i`.
//!
//! Control laws are affine in the agent's own state and the population
//! average, `u_i = F_own(t) x_i + F_avg(t) x^(N) + c(t)`, which covers every
//! law synthesized by this crate. The coefficients are tabulated once per
//! time step and shared by all replications.

mod cost;
mod export;
mod laws;
mod study;

pub use cost::{discounted_state_energy, evaluate_costs, meanfield_gap, CostReport, GapReport};
pub use export::{format_float, write_study_csv, write_trajectory_csv};
pub use laws::{
    CentralizedSocial, DecentralizedSocial, DeviatedNash, NashStrategy, OpenLoop, ZeroLaw,
};
pub use study::{
    convergence_study, nash_deviation_search, nash_study, ConvergenceReport, DeviationGrid,
    LogLogFit, NashPoint, NashReport, NashStudyReport, StudyRow, METRIC_GAP_DISCOUNTED,
    METRIC_GAP_SUP, METRIC_SOCIAL_GAP, METRIC_SOCIAL_GAP_SCALED,
};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::ModelParams;
use crate::path::Path;

/// States beyond this magnitude are reported as an instability.
pub const STATE_CAP: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    #[serde(rename = "N")]
    pub n_agents: usize,
    pub dt: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub replications: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_agents == 0 || self.replications == 0 {
            return Err(Error::Config(
                "N and replications must be at least 1".into(),
            ));
        }
        if !(self.dt > 0.0) || !(self.t_end > 0.0) {
            return Err(Error::Config("dt and T must be positive".into()));
        }
        let steps = (self.t_end / self.dt).round();
        if steps < 1.0 || (steps * self.dt - self.t_end).abs() > 1e-9 * self.t_end {
            return Err(Error::Config(format!(
                "dt = {} does not divide T = {}",
                self.dt, self.t_end
            )));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    /// `steps + 1` nodes `k·dt`, the last one exactly `T`.
    pub fn grid(&self) -> Vec<f64> {
        let steps = self.steps();
        let mut g: Vec<f64> = (0..=steps).map(|k| k as f64 * self.dt).collect();
        g[steps] = self.t_end;
        g
    }
}

/// `u = own·x_i + avg·x^(N) + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineFeedback {
    /// r×n.
    pub own: DMatrix<f64>,
    /// r×n.
    pub avg: DMatrix<f64>,
    /// length r.
    pub offset: DVector<f64>,
}

impl AffineFeedback {
    pub fn apply(&self, x_i: &DVector<f64>, x_avg: &DVector<f64>) -> DVector<f64> {
        &self.own * x_i + &self.avg * x_avg + &self.offset
    }
}

pub trait ControlLaw: Sync {
    fn feedback(&self, t: f64) -> AffineFeedback;
}

impl<F> ControlLaw for F
where
    F: Fn(f64) -> AffineFeedback + Sync,
{
    fn feedback(&self, t: f64) -> AffineFeedback {
        self(t)
    }
}

/// One law for every agent, with optional per-agent replacements.
pub struct Profile<'a> {
    pub default: &'a dyn ControlLaw,
    pub overrides: Vec<(usize, &'a dyn ControlLaw)>,
}

impl<'a> Profile<'a> {
    pub fn uniform(law: &'a dyn ControlLaw) -> Self {
        Profile {
            default: law,
            overrides: Vec::new(),
        }
    }

    pub fn with_override(mut self, agent: usize, law: &'a dyn ControlLaw) -> Self {
        self.overrides.push((agent, law));
        self
    }
}

/// Feedback coefficients at every grid node, row-major.
struct Table {
    own: Vec<f64>,
    avg: Vec<f64>,
    offset: Vec<f64>,
}

fn build_table(law: &dyn ControlLaw, grid: &[f64], n: usize, r: usize) -> Result<Table> {
    let mut t = Table {
        own: Vec::with_capacity(grid.len() * r * n),
        avg: Vec::with_capacity(grid.len() * r * n),
        offset: Vec::with_capacity(grid.len() * r),
    };
    for &time in grid {
        let fb = law.feedback(time);
        if fb.own.shape() != (r, n) || fb.avg.shape() != (r, n) || fb.offset.len() != r {
            return Err(Error::Dimension(format!(
                "control law must produce r×n gains with r = {r}, n = {n}"
            )));
        }
        for i in 0..r {
            for j in 0..n {
                t.own.push(fb.own[(i, j)]);
                t.avg.push(fb.avg[(i, j)]);
            }
        }
        t.offset.extend(fb.offset.iter());
    }
    Ok(t)
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            v.push(m[(i, j)]);
        }
    }
    v
}

/// Receives the state of one replication at every grid node.
pub(crate) trait Observer {
    fn observe(&mut self, k: usize, t: f64, states: &[f64], controls: &[f64], avg: &[f64]);
}

/// Tabulated simulation inputs shared by all replications.
pub(crate) struct Engine {
    pub n: usize,
    pub r: usize,
    pub n_agents: usize,
    pub grid: Vec<f64>,
    dt: f64,
    seed: u64,
    a: Vec<f64>,
    b: Vec<f64>,
    g: Vec<f64>,
    f: Vec<f64>,
    sigma: Vec<f64>,
    x0_mean: Vec<f64>,
    x0_sqrt: Vec<f64>,
    tables: Vec<Table>,
    agent_table: Vec<usize>,
}

/// Independent stream for each `(replication, agent)` pair, so changing
/// `N` leaves the other agents' noise untouched.
pub fn agent_rng(seed: u64, replication: usize, agent: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((replication as u64) << 32) | (agent as u64 & 0xffff_ffff));
    rng
}

impl Engine {
    pub fn new(params: &ModelParams, profile: &Profile, cfg: &SimConfig) -> Result<Self> {
        params.ensure_valid()?;
        cfg.validate()?;
        let n = params.n();
        let r = params.r_dim();
        let grid = cfg.grid();
        let mut tables = vec![build_table(profile.default, &grid, n, r)?];
        let mut agent_table = vec![0; cfg.n_agents];
        for &(agent, law) in &profile.overrides {
            if agent >= cfg.n_agents {
                return Err(Error::Config(format!(
                    "override for agent {agent} but N = {}",
                    cfg.n_agents
                )));
            }
            tables.push(build_table(law, &grid, n, r)?);
            agent_table[agent] = tables.len() - 1;
        }
        let f = grid
            .iter()
            .flat_map(|&t| params.f.at(t).iter().copied().collect::<Vec<_>>())
            .collect();
        let sigma = grid
            .iter()
            .flat_map(|&t| params.sigma.at(t).iter().copied().collect::<Vec<_>>())
            .collect();
        let x0_sqrt = linalg::sqrt_psd(&params.init_cov, crate::stability::SQRT_CLIP)
            .map_err(|e| Error::Config(format!("initial covariance not PSD (eigenvalue {e:e})")))?;
        Ok(Engine {
            n,
            r,
            n_agents: cfg.n_agents,
            dt: cfg.dt,
            seed: cfg.seed,
            a: row_major(&params.a),
            b: row_major(&params.b),
            g: row_major(&params.g),
            f,
            sigma,
            x0_mean: params.x_bar0.iter().copied().collect(),
            x0_sqrt: row_major(&x0_sqrt),
            tables,
            agent_table,
            grid,
        })
    }

    pub fn steps(&self) -> usize {
        self.grid.len() - 1
    }

    pub fn run<O: Observer>(&self, replication: usize, obs: &mut O) -> Result<()> {
        let (n, r, na) = (self.n, self.r, self.n_agents);
        let mut rngs: Vec<ChaCha8Rng> = (0..na)
            .map(|i| agent_rng(self.seed, replication, i))
            .collect();
        let mut x = vec![0.0; na * n];
        let mut xi = vec![0.0; n];
        for (i, rng) in rngs.iter_mut().enumerate() {
            for z in xi.iter_mut() {
                *z = StandardNormal.sample(rng);
            }
            for p in 0..n {
                let mut v = self.x0_mean[p];
                for q in 0..n {
                    v += self.x0_sqrt[p * n + q] * xi[q];
                }
                x[i * n + p] = v;
            }
        }
        let mut u = vec![0.0; na * r];
        let mut avg = vec![0.0; n];
        let mut drift = vec![0.0; n];
        let sqrt_dt = self.dt.sqrt();
        let steps = self.steps();
        for k in 0..=steps {
            avg.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..na {
                for p in 0..n {
                    avg[p] += x[i * n + p];
                }
            }
            avg.iter_mut().for_each(|v| *v /= na as f64);
            for i in 0..na {
                let tab = &self.tables[self.agent_table[i]];
                let own = &tab.own[k * r * n..(k + 1) * r * n];
                let av = &tab.avg[k * r * n..(k + 1) * r * n];
                for c in 0..r {
                    let mut v = tab.offset[k * r + c];
                    for p in 0..n {
                        v += own[c * n + p] * x[i * n + p] + av[c * n + p] * avg[p];
                    }
                    u[i * r + c] = v;
                }
            }
            obs.observe(k, self.grid[k], &x, &u, &avg);
            if k == steps {
                break;
            }
            let h = self.grid[k + 1] - self.grid[k];
            let sq = if (h - self.dt).abs() < 1e-12 {
                sqrt_dt
            } else {
                h.sqrt()
            };
            let f = &self.f[k * n..(k + 1) * n];
            let sigma = &self.sigma[k * n..(k + 1) * n];
            for (i, rng) in rngs.iter_mut().enumerate() {
                let dw: f64 = StandardNormal.sample(rng);
                let xs = &x[i * n..(i + 1) * n];
                for p in 0..n {
                    let mut d = f[p];
                    for q in 0..n {
                        d += self.a[p * n + q] * xs[q] + self.g[p * n + q] * avg[q];
                    }
                    for c in 0..r {
                        d += self.b[p * r + c] * u[i * r + c];
                    }
                    drift[p] = d;
                }
                for p in 0..n {
                    let v = x[i * n + p] + drift[p] * h + sigma[p] * sq * dw;
                    if !v.is_finite() || v.abs() > STATE_CAP {
                        return Err(Error::Instability(format!(
                            "state of agent {i} exceeds {STATE_CAP:e} at t = {}",
                            self.grid[k + 1]
                        )));
                    }
                    x[i * n + p] = v;
                }
            }
        }
        Ok(())
    }
}

/// Simulated states and controls of all agents and replications.
///
/// Storage is flat: states at `[(rep·(K+1) + k)·N + i]·n`, controls likewise
/// with `r`, averages at `(rep·(K+1) + k)·n`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBundle {
    pub grid: Vec<f64>,
    pub n: usize,
    pub r: usize,
    pub n_agents: usize,
    pub replications: usize,
    pub states: Vec<f64>,
    pub controls: Vec<f64>,
    pub avg: Vec<f64>,
    /// `x̄(t_k)`, row-major `[k·n]`, when supplied.
    pub xbar_ref: Option<Vec<f64>>,
}

impl TrajectoryBundle {
    pub fn nodes(&self) -> usize {
        self.grid.len()
    }

    pub fn state(&self, rep: usize, k: usize, agent: usize) -> &[f64] {
        let o = ((rep * self.nodes() + k) * self.n_agents + agent) * self.n;
        &self.states[o..o + self.n]
    }

    pub fn control(&self, rep: usize, k: usize, agent: usize) -> &[f64] {
        let o = ((rep * self.nodes() + k) * self.n_agents + agent) * self.r;
        &self.controls[o..o + self.r]
    }

    pub fn average(&self, rep: usize, k: usize) -> &[f64] {
        let o = (rep * self.nodes() + k) * self.n;
        &self.avg[o..o + self.n]
    }

    pub fn xbar(&self, k: usize) -> Option<&[f64]> {
        self.xbar_ref
            .as_ref()
            .map(|v| &v[k * self.n..(k + 1) * self.n])
    }
}

struct Recorder {
    states: Vec<f64>,
    controls: Vec<f64>,
    avg: Vec<f64>,
}

impl Observer for Recorder {
    fn observe(&mut self, _k: usize, _t: f64, states: &[f64], controls: &[f64], avg: &[f64]) {
        self.states.extend_from_slice(states);
        self.controls.extend_from_slice(controls);
        self.avg.extend_from_slice(avg);
    }
}

/// Euler–Maruyama simulation of every replication (in parallel).
pub fn simulate(
    params: &ModelParams,
    profile: &Profile,
    cfg: &SimConfig,
    xbar: Option<&Path>,
) -> Result<TrajectoryBundle> {
    let engine = Engine::new(params, profile, cfg)?;
    let runs: Vec<Recorder> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| {
            let mut rec = Recorder {
                states: Vec::with_capacity(engine.grid.len() * engine.n_agents * engine.n),
                controls: Vec::with_capacity(engine.grid.len() * engine.n_agents * engine.r),
                avg: Vec::with_capacity(engine.grid.len() * engine.n),
            };
            engine.run(rep, &mut rec).map(|_| rec)
        })
        .collect::<Result<_>>()?;
    let mut bundle = TrajectoryBundle {
        grid: engine.grid.clone(),
        n: engine.n,
        r: engine.r,
        n_agents: engine.n_agents,
        replications: cfg.replications,
        states: Vec::new(),
        controls: Vec::new(),
        avg: Vec::new(),
        xbar_ref: xbar.map(|p| {
            engine
                .grid
                .iter()
                .flat_map(|&t| p.vector_at(t).iter().copied().collect::<Vec<_>>())
                .collect()
        }),
    };
    for rec in runs {
        bundle.states.extend(rec.states);
        bundle.controls.extend(rec.controls);
        bundle.avg.extend(rec.avg);
    }
    Ok(bundle)
}

/// Sample mean and standard error of the mean.
pub fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let m = v.len() as f64;
    let mean = v.iter().sum::<f64>() / m;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::TimeFunction;

    fn quiet_scalar() -> ModelParams {
        let mut p =
            ModelParams::scalar(1.0, 1.0, -0.2, 1.0, -0.2, 1.0, 5.0, 0.6, 0.0, 0.0, 0.0, 0.0);
        p.f = TimeFunction::zeros(1);
        p
    }

    fn cfg(n: usize, reps: usize) -> SimConfig {
        SimConfig {
            n_agents: n,
            dt: 0.01,
            t_end: 1.0,
            replications: reps,
            seed: 7,
        }
    }

    #[test]
    fn zero_everything_stays_zero() {
        let p = quiet_scalar();
        let law = ZeroLaw::new(1, 1);
        let b = simulate(&p, &Profile::uniform(&law), &cfg(4, 2), None).unwrap();
        assert!(b.states.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn average_is_exact_mean() {
        let mut p = quiet_scalar();
        p.sigma = TimeFunction::constant(&[0.3]);
        p.init_cov = DMatrix::from_element(1, 1, 1.0);
        let law = ZeroLaw::new(1, 1);
        let b = simulate(&p, &Profile::uniform(&law), &cfg(5, 3), None).unwrap();
        for rep in 0..3 {
            for k in 0..b.nodes() {
                let mut s = 0.0;
                for i in 0..5 {
                    s += b.state(rep, k, i)[0];
                }
                assert_eq!(b.average(rep, k)[0], s / 5.0);
            }
        }
    }

    #[test]
    fn same_seed_same_bundle() {
        let mut p = quiet_scalar();
        p.sigma = TimeFunction::constant(&[0.3]);
        p.init_cov = DMatrix::from_element(1, 1, 0.5);
        let law = ZeroLaw::new(1, 1);
        let a = simulate(&p, &Profile::uniform(&law), &cfg(6, 4), None).unwrap();
        let b = simulate(&p, &Profile::uniform(&law), &cfg(6, 4), None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn agent_noise_independent_of_population_size() {
        let mut p = quiet_scalar();
        p.a = DMatrix::zeros(1, 1);
        p.g = DMatrix::zeros(1, 1);
        p.sigma = TimeFunction::constant(&[0.3]);
        p.init_cov = DMatrix::from_element(1, 1, 0.5);
        let law = ZeroLaw::new(1, 1);
        let small = simulate(&p, &Profile::uniform(&law), &cfg(3, 1), None).unwrap();
        let large = simulate(&p, &Profile::uniform(&law), &cfg(9, 1), None).unwrap();
        for k in 0..small.nodes() {
            for i in 0..3 {
                assert_eq!(small.state(0, k, i), large.state(0, k, i));
            }
        }
    }

    #[test]
    fn dt_must_divide_horizon() {
        let c = SimConfig {
            dt: 0.3,
            ..cfg(1, 1)
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn unstable_growth_is_flagged() {
        let mut p = quiet_scalar();
        p.a = DMatrix::from_element(1, 1, 40.0);
        p.x_bar0 = DVector::from_element(1, 1.0);
        let law = ZeroLaw::new(1, 1);
        let c = SimConfig {
            t_end: 2.0,
            ..cfg(1, 1)
        };
        let err = simulate(&p, &Profile::uniform(&law), &c, None).unwrap_err();
        assert!(matches!(err, Error::Instability(_)));
    }

    #[test]
    fn mean_stderr_basic() {
        let (m, s) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }
}
