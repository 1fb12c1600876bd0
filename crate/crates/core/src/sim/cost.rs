use serde::Serialize;

use super::{mean_stderr, Observer, TrajectoryBundle};
use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Trapezoid weights `e^{−ρt_k}·(h_{k−1} + h_k)/2`.
pub(crate) fn discounted_weights(grid: &[f64], rho: f64) -> Vec<f64> {
    let k = grid.len();
    (0..k)
        .map(|i| {
            let left = if i > 0 { grid[i] - grid[i - 1] } else { 0.0 };
            let right = if i + 1 < k {
                grid[i + 1] - grid[i]
            } else {
                0.0
            };
            (-rho * grid[i]).exp() * 0.5 * (left + right)
        })
        .collect()
}

/// Running cost `‖x − Γx^(N) − η‖²_Q + ‖u‖²_R` on flat slices.
pub(crate) struct Integrand {
    n: usize,
    r: usize,
    q: Vec<f64>,
    rw: Vec<f64>,
    gamma: Vec<f64>,
    eta: Vec<f64>,
}

impl Integrand {
    pub fn new(p: &ModelParams) -> Self {
        let flat = |m: &nalgebra::DMatrix<f64>| {
            (0..m.nrows())
                .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
                .map(|ij| m[ij])
                .collect()
        };
        Integrand {
            n: p.n(),
            r: p.r_dim(),
            q: flat(&p.q),
            rw: flat(&p.r),
            gamma: flat(&p.gamma),
            eta: p.eta.iter().copied().collect(),
        }
    }

    pub fn eval(&self, x: &[f64], avg: &[f64], u: &[f64]) -> f64 {
        let n = self.n;
        let mut e = [0.0; 16];
        let mut heap;
        let e: &mut [f64] = if n <= 16 {
            &mut e[..n]
        } else {
            heap = vec![0.0; n];
            &mut heap
        };
        for p in 0..n {
            let mut v = x[p] - self.eta[p];
            for q in 0..n {
                v -= self.gamma[p * n + q] * avg[q];
            }
            e[p] = v;
        }
        let mut c = 0.0;
        for p in 0..n {
            for q in 0..n {
                c += e[p] * self.q[p * n + q] * e[q];
            }
        }
        let r = self.r;
        for a in 0..r {
            for b in 0..r {
                c += u[a] * self.rw[a * r + b] * u[b];
            }
        }
        c
    }
}

/// Accumulates discounted costs of agents `0..agents` in one replication.
pub(crate) struct CostObserver<'a> {
    pub integrand: &'a Integrand,
    pub weights: &'a [f64],
    pub agents: usize,
    pub totals: Vec<f64>,
    pub terminal: Vec<f64>,
}

impl<'a> CostObserver<'a> {
    pub fn new(integrand: &'a Integrand, weights: &'a [f64], agents: usize) -> Self {
        CostObserver {
            integrand,
            weights,
            agents,
            totals: vec![0.0; agents],
            terminal: vec![0.0; agents],
        }
    }
}

impl Observer for CostObserver<'_> {
    fn observe(&mut self, k: usize, _t: f64, states: &[f64], controls: &[f64], avg: &[f64]) {
        let (n, r) = (self.integrand.n, self.integrand.r);
        let w = self.weights[k];
        let last = k + 1 == self.weights.len();
        for i in 0..self.agents {
            let c = self.integrand.eval(
                &states[i * n..(i + 1) * n],
                avg,
                &controls[i * r..(i + 1) * r],
            );
            self.totals[i] += w * c;
            if last {
                self.terminal[i] = c;
            }
        }
    }
}

/// Accumulates `max_k ‖x^(N) − x̄‖²` and its discounted integral.
pub(crate) struct GapObserver<'a> {
    pub xbar: &'a [f64],
    pub weights: &'a [f64],
    pub n: usize,
    pub pointwise: Vec<f64>,
    pub integral: f64,
}

impl<'a> GapObserver<'a> {
    pub fn new(xbar: &'a [f64], weights: &'a [f64], n: usize) -> Self {
        GapObserver {
            xbar,
            weights,
            n,
            pointwise: vec![0.0; weights.len()],
            integral: 0.0,
        }
    }
}

impl Observer for GapObserver<'_> {
    fn observe(&mut self, k: usize, _t: f64, _states: &[f64], _controls: &[f64], avg: &[f64]) {
        let n = self.n;
        let d: f64 = (0..n)
            .map(|p| (avg[p] - self.xbar[k * n + p]).powi(2))
            .sum();
        self.pointwise[k] = d;
        self.integral += self.weights[k] * d;
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CostReport {
    /// Monte Carlo mean of each agent's discounted cost.
    pub per_agent: Vec<f64>,
    pub per_agent_stderr: Vec<f64>,
    /// Mean of `J_soc = Σ_i J_i`.
    pub social: f64,
    pub social_stderr: f64,
    /// `J_soc / N`.
    pub social_per_agent: f64,
    /// `J_soc` of each replication.
    pub per_replication_social: Vec<f64>,
    pub quadrature: &'static str,
    pub horizon: f64,
    /// `e^{−ρT}/ρ` times the mean terminal running cost per agent: the
    /// truncated tail if the running cost stayed at its final level.
    pub tail_estimate: f64,
}

/// Discounted trapezoid quadrature of each agent's running cost.
pub fn evaluate_costs(bundle: &TrajectoryBundle, params: &ModelParams) -> CostReport {
    let integrand = Integrand::new(params);
    let weights = discounted_weights(&bundle.grid, params.rho);
    let na = bundle.n_agents;
    let mut per_rep = vec![vec![0.0; na]; bundle.replications];
    let mut terminal = 0.0;
    let last = bundle.nodes() - 1;
    for (rep, totals) in per_rep.iter_mut().enumerate() {
        for (k, w) in weights.iter().enumerate() {
            let avg = bundle.average(rep, k);
            for (i, tot) in totals.iter_mut().enumerate() {
                let c = integrand.eval(bundle.state(rep, k, i), avg, bundle.control(rep, k, i));
                *tot += w * c;
                if k == last {
                    terminal += c;
                }
            }
        }
    }
    let mut per_agent = Vec::with_capacity(na);
    let mut per_agent_stderr = Vec::with_capacity(na);
    for i in 0..na {
        let v: Vec<f64> = per_rep.iter().map(|t| t[i]).collect();
        let (m, s) = mean_stderr(&v);
        per_agent.push(m);
        per_agent_stderr.push(s);
    }
    let per_replication_social: Vec<f64> = per_rep.iter().map(|t| t.iter().sum()).collect();
    let (social, social_stderr) = mean_stderr(&per_replication_social);
    let t_end = bundle.grid[last];
    let mean_terminal = terminal / (bundle.replications * na) as f64;
    CostReport {
        per_agent,
        per_agent_stderr,
        social,
        social_stderr,
        social_per_agent: social / na as f64,
        per_replication_social,
        quadrature: "discounted trapezoid",
        horizon: t_end,
        tail_estimate: (-params.rho * t_end).exp() / params.rho * mean_terminal,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GapReport {
    /// `max_k` of the Monte Carlo mean of `‖x^(N)(t_k) − x̄(t_k)‖²`.
    pub sup_gap: f64,
    pub sup_gap_stderr: f64,
    pub sup_time: f64,
    /// Mean of `∫ e^{−ρt} ‖x^(N) − x̄‖² dt`.
    pub discounted_gap: f64,
    pub discounted_gap_stderr: f64,
}

pub(crate) fn gap_report(grid: &[f64], pointwise: &[Vec<f64>], integrals: &[f64]) -> GapReport {
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for k in 0..grid.len() {
        let v: Vec<f64> = pointwise.iter().map(|p| p[k]).collect();
        let (m, s) = mean_stderr(&v);
        if m > best.0 {
            best = (m, s, grid[k]);
        }
    }
    let (discounted_gap, discounted_gap_stderr) = mean_stderr(integrals);
    GapReport {
        sup_gap: best.0,
        sup_gap_stderr: best.1,
        sup_time: best.2,
        discounted_gap,
        discounted_gap_stderr,
    }
}

/// Mean field gap of a bundle simulated with a reference `x̄`.
pub fn meanfield_gap(bundle: &TrajectoryBundle, rho: f64) -> Result<GapReport> {
    let xbar = bundle
        .xbar_ref
        .as_ref()
        .ok_or_else(|| Error::Precondition("bundle carries no reference x̄".into()))?;
    let weights = discounted_weights(&bundle.grid, rho);
    let mut pointwise = Vec::with_capacity(bundle.replications);
    let mut integrals = Vec::with_capacity(bundle.replications);
    for rep in 0..bundle.replications {
        let mut obs = GapObserver::new(xbar, &weights, bundle.n);
        for k in 0..bundle.nodes() {
            obs.observe(k, bundle.grid[k], &[], &[], bundle.average(rep, k));
        }
        pointwise.push(obs.pointwise);
        integrals.push(obs.integral);
    }
    Ok(gap_report(&bundle.grid, &pointwise, &integrals))
}

/// Mean and standard error of `Σ_i ∫ e^{−ρt} ‖x_i‖² dt`.
pub fn discounted_state_energy(bundle: &TrajectoryBundle, rho: f64) -> (f64, f64) {
    let weights = discounted_weights(&bundle.grid, rho);
    let per_rep: Vec<f64> = (0..bundle.replications)
        .map(|rep| {
            let mut e = 0.0;
            for (k, w) in weights.iter().enumerate() {
                for i in 0..bundle.n_agents {
                    e += w * bundle.state(rep, k, i).iter().map(|v| v * v).sum::<f64>();
                }
            }
            e
        })
        .collect();
    mean_stderr(&per_rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_integrate_discount_exactly_enough() {
        let grid: Vec<f64> = (0..=1000).map(|k| k as f64 * 0.01).collect();
        let s: f64 = discounted_weights(&grid, 0.6).iter().sum();
        let exact = (1.0 - (-6.0f64).exp()) / 0.6;
        assert!((s - exact).abs() < 1e-5);
    }
}
