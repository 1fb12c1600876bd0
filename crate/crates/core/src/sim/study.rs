use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use super::cost::{discounted_weights, gap_report, CostObserver, GapObserver, Integrand};
use super::laws::{CentralizedSocial, DecentralizedSocial, DeviatedNash, NashStrategy};
use super::{mean_stderr, ControlLaw, Engine, Profile, SimConfig};
use crate::error::{Error, Result};
use crate::game::GameGains;
use crate::model::ModelParams;
use crate::social::SocialGains;

/// One line of a study table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub metric: String,
    pub estimate: f64,
    pub stderr: f64,
}

impl StudyRow {
    fn new(n: usize, metric: &str, estimate: f64, stderr: f64) -> Self {
        StudyRow {
            n,
            metric: metric.to_string(),
            estimate,
            stderr,
        }
    }

    /// The 95% interval contains zero.
    pub fn ci_overlaps_zero(&self) -> bool {
        (self.estimate - 1.96 * self.stderr) <= 0.0 && 0.0 <= (self.estimate + 1.96 * self.stderr)
    }
}

/// Weighted least-squares fit of `ln(estimate)` against `ln N`, with
/// `Var ln(estimate) ≈ (stderr/estimate)²`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogLogFit {
    pub metric: String,
    pub slope: f64,
    pub slope_stderr: f64,
    pub intercept: f64,
}

impl LogLogFit {
    pub fn from_rows(metric: &str, rows: &[&StudyRow]) -> Option<Self> {
        if rows.len() < 2 || rows.iter().any(|r| !(r.estimate > 0.0)) {
            return None;
        }
        let pts: Vec<(f64, f64, f64)> = rows
            .iter()
            .map(|r| {
                let rel = r.stderr / r.estimate;
                let w = if rel > 0.0 { 1.0 / (rel * rel) } else { 1e12 };
                ((r.n as f64).ln(), r.estimate.ln(), w)
            })
            .collect();
        let sw: f64 = pts.iter().map(|p| p.2).sum();
        let xm = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
        let ym = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
        let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - xm).powi(2)).sum();
        if sxx <= 0.0 {
            return None;
        }
        let slope = pts
            .iter()
            .map(|p| p.2 * (p.0 - xm) * (p.1 - ym))
            .sum::<f64>()
            / sxx;
        Some(LogLogFit {
            metric: metric.to_string(),
            slope,
            slope_stderr: (1.0 / sxx).sqrt(),
            intercept: ym - slope * xm,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub rows: Vec<StudyRow>,
    pub fits: Vec<LogLogFit>,
    /// `max/min` of `ΔJ(N)·√N` over the N grid (finite horizon only).
    pub scaled_gap_ratio: Option<f64>,
    pub warnings: Vec<String>,
}

impl ConvergenceReport {
    pub fn fit(&self, metric: &str) -> Option<&LogLogFit> {
        self.fits.iter().find(|f| f.metric == metric)
    }

    pub fn rows_for(&self, metric: &str) -> Vec<&StudyRow> {
        self.rows.iter().filter(|r| r.metric == metric).collect()
    }
}

pub const METRIC_GAP_DISCOUNTED: &str = "meanfield_gap_discounted";
pub const METRIC_GAP_SUP: &str = "meanfield_gap_sup";
pub const METRIC_SOCIAL_GAP: &str = "social_gap_per_agent";
pub const METRIC_SOCIAL_GAP_SCALED: &str = "social_gap_scaled";

fn xbar_table(gains_xbar: &crate::path::Path, grid: &[f64]) -> Vec<f64> {
    grid.iter()
        .flat_map(|&t| gains_xbar.vector_at(t).iter().copied().collect::<Vec<_>>())
        .collect()
}

/// Mean field gap under the decentralized law and, for finite-horizon
/// gains, the per-agent social cost gap against the centralized optimum on
/// common random numbers, for each `N` in `n_list`.
pub fn convergence_study(
    params: &ModelParams,
    gains: &SocialGains,
    n_list: &[usize],
    cfg: &SimConfig,
) -> Result<ConvergenceReport> {
    if n_list.len() < 3 {
        return Err(Error::Config(
            "convergence study needs at least three values of N".into(),
        ));
    }
    let integrand = Integrand::new(params);
    let dec = DecentralizedSocial(gains);
    let cen = CentralizedSocial(gains);
    let with_social = gains.horizon.is_finite();
    let mut rows = Vec::new();
    for &n_agents in n_list {
        let c = SimConfig { n_agents, ..*cfg };
        let dec_engine = Engine::new(params, &Profile::uniform(&dec), &c)?;
        let cen_engine = if with_social {
            Some(Engine::new(params, &Profile::uniform(&cen), &c)?)
        } else {
            None
        };
        let grid = dec_engine.grid.clone();
        let weights = discounted_weights(&grid, params.rho);
        let xbar = xbar_table(&gains.x_bar, &grid);
        let n = params.n();

        let per_rep: Vec<(Vec<f64>, f64, Option<f64>)> = (0..c.replications)
            .into_par_iter()
            .map(|rep| {
                struct Both<'a>(GapObserver<'a>, CostObserver<'a>);
                impl super::Observer for Both<'_> {
                    fn observe(&mut self, k: usize, t: f64, s: &[f64], u: &[f64], a: &[f64]) {
                        self.0.observe(k, t, s, u, a);
                        self.1.observe(k, t, s, u, a);
                    }
                }
                let agents = if with_social { n_agents } else { 0 };
                let mut both = Both(
                    GapObserver::new(&xbar, &weights, n),
                    CostObserver::new(&integrand, &weights, agents),
                );
                dec_engine.run(rep, &mut both)?;
                let social_gap = match &cen_engine {
                    Some(e) => {
                        let mut co = CostObserver::new(&integrand, &weights, n_agents);
                        e.run(rep, &mut co)?;
                        let diff: f64 =
                            both.1.totals.iter().sum::<f64>() - co.totals.iter().sum::<f64>();
                        Some(diff / n_agents as f64)
                    }
                    None => None,
                };
                Ok((both.0.pointwise, both.0.integral, social_gap))
            })
            .collect::<Result<_>>()?;

        let pointwise: Vec<Vec<f64>> = per_rep.iter().map(|r| r.0.clone()).collect();
        let integrals: Vec<f64> = per_rep.iter().map(|r| r.1).collect();
        let gap = gap_report(&grid, &pointwise, &integrals);
        rows.push(StudyRow::new(
            n_agents,
            METRIC_GAP_DISCOUNTED,
            gap.discounted_gap,
            gap.discounted_gap_stderr,
        ));
        rows.push(StudyRow::new(
            n_agents,
            METRIC_GAP_SUP,
            gap.sup_gap,
            gap.sup_gap_stderr,
        ));
        if with_social {
            let d: Vec<f64> = per_rep.iter().map(|r| r.2.unwrap_or(f64::NAN)).collect();
            let (m, s) = mean_stderr(&d);
            let root = (n_agents as f64).sqrt();
            rows.push(StudyRow::new(n_agents, METRIC_SOCIAL_GAP, m, s));
            rows.push(StudyRow::new(
                n_agents,
                METRIC_SOCIAL_GAP_SCALED,
                m * root,
                s * root,
            ));
        }
    }

    let mut report = ConvergenceReport {
        fits: Vec::new(),
        scaled_gap_ratio: None,
        warnings: Vec::new(),
        rows,
    };
    for metric in [METRIC_GAP_DISCOUNTED, METRIC_GAP_SUP, METRIC_SOCIAL_GAP] {
        let rows = report.rows_for(metric);
        if let Some(fit) = LogLogFit::from_rows(metric, &rows) {
            report.fits.push(fit);
        }
    }
    let scaled: Vec<f64> = report
        .rows_for(METRIC_SOCIAL_GAP_SCALED)
        .iter()
        .map(|r| r.estimate)
        .collect();
    if !scaled.is_empty() {
        let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = scaled.iter().cloned().fold(f64::INFINITY, f64::min);
        report.scaled_gap_ratio = Some(if min > 0.0 { max / min } else { f64::INFINITY });
    }
    report.warnings = report
        .rows
        .iter()
        .filter(|r| r.ci_overlaps_zero())
        .map(|r| {
            format!(
                "N = {}: {} interval overlaps zero; more replications needed",
                r.n, r.metric
            )
        })
        .collect();
    Ok(report)
}

/// Deviations `ΔP = δ_p I`, `Δc = δ_c 1` for agent 1.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct DeviationGrid {
    pub delta_p: Vec<f64>,
    pub delta_c: Vec<f64>,
}

impl DeviationGrid {
    /// `points` equally spaced values in `[−half_width, half_width]` for both.
    pub fn symmetric(half_width: f64, points: usize) -> Self {
        let v: Vec<f64> = if points <= 1 {
            vec![0.0]
        } else {
            (0..points)
                .map(|k| -half_width + 2.0 * half_width * k as f64 / (points - 1) as f64)
                .collect()
        };
        DeviationGrid {
            delta_p: v.clone(),
            delta_c: v,
        }
    }

    /// `0` and `±m` for every magnitude `m`, sorted, for both.
    pub fn graded(magnitudes: &[f64]) -> Self {
        let mut v = vec![0.0];
        for &m in magnitudes {
            v.push(m);
            v.push(-m);
        }
        v.sort_by(f64::total_cmp);
        v.dedup();
        DeviationGrid {
            delta_p: v.clone(),
            delta_c: v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NashPoint {
    pub delta_p: f64,
    pub delta_c: f64,
    /// Mean of `J_1(û) − J_1(deviation)`.
    pub improvement: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NashReport {
    #[serde(rename = "N")]
    pub n: usize,
    pub points: Vec<NashPoint>,
    pub max_improvement: f64,
    pub max_stderr: f64,
    pub argmax: (f64, f64),
    pub baseline_cost: f64,
    pub deviation_family: &'static str,
}

/// Largest gain agent 1 obtains by switching to an affine deviation while
/// everyone else keeps the decentralized strategy.
pub fn nash_deviation_search(
    params: &ModelParams,
    gains: &GameGains,
    cfg: &SimConfig,
    grid: &DeviationGrid,
) -> Result<NashReport> {
    let n = params.n();
    let nash = NashStrategy(gains);
    let deviations: Vec<(f64, f64, DeviatedNash)> = grid
        .delta_p
        .iter()
        .flat_map(|&dp| grid.delta_c.iter().map(move |&dc| (dp, dc)))
        .map(|(dp, dc)| {
            (
                dp,
                dc,
                DeviatedNash {
                    gains,
                    delta_p: DMatrix::identity(n, n) * dp,
                    delta_c: DVector::from_element(n, dc),
                },
            )
        })
        .collect();
    let base = Engine::new(params, &Profile::uniform(&nash), cfg)?;
    let engines: Vec<Engine> = deviations
        .iter()
        .map(|(_, _, law)| {
            Engine::new(
                params,
                &Profile::uniform(&nash).with_override(0, law as &dyn ControlLaw),
                cfg,
            )
        })
        .collect::<Result<_>>()?;
    let integrand = Integrand::new(params);
    let weights = discounted_weights(&base.grid, params.rho);

    let per_rep: Vec<(f64, Vec<f64>)> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| {
            let mut b = CostObserver::new(&integrand, &weights, 1);
            base.run(rep, &mut b)?;
            let devs = engines
                .iter()
                .map(|e| {
                    let mut o = CostObserver::new(&integrand, &weights, 1);
                    e.run(rep, &mut o).map(|_| b.totals[0] - o.totals[0])
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok((b.totals[0], devs))
        })
        .collect::<Result<_>>()?;

    let baseline_cost = mean_stderr(&per_rep.iter().map(|r| r.0).collect::<Vec<_>>()).0;
    let points: Vec<NashPoint> = deviations
        .iter()
        .enumerate()
        .map(|(j, (dp, dc, _))| {
            let v: Vec<f64> = per_rep.iter().map(|r| r.1[j]).collect();
            let (m, s) = mean_stderr(&v);
            NashPoint {
                delta_p: *dp,
                delta_c: *dc,
                improvement: m,
                stderr: s,
            }
        })
        .collect();
    let best = points
        .iter()
        .max_by(|a, b| a.improvement.total_cmp(&b.improvement))
        .ok_or_else(|| Error::Config("empty deviation grid".into()))?;
    Ok(NashReport {
        n: cfg.n_agents,
        max_improvement: best.improvement,
        max_stderr: best.stderr,
        argmax: (best.delta_p, best.delta_c),
        baseline_cost,
        deviation_family: "affine: u = −R⁻¹Bᵀ((P + δp I)x + (P̄ − P)x̄ + ŝ + δc 1)",
        points,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct NashStudyReport {
    pub searches: Vec<NashReport>,
    pub rows: Vec<StudyRow>,
    /// Least-squares `C` in `max improvement ≈ C/√N`, clipped at 0.
    pub fitted_c: f64,
    /// Every `max improvement ≤ C/√N + 3·stderr`.
    pub bound_holds: bool,
    /// Slope of max improvement against `ln N`, with propagated stderr.
    pub trend_slope: f64,
    pub trend_slope_stderr: f64,
    /// `trend_slope ≤ 2·trend_slope_stderr`.
    pub trend_nonincreasing: bool,
}

pub fn nash_study(
    params: &ModelParams,
    gains: &GameGains,
    n_list: &[usize],
    cfg: &SimConfig,
    grid: &DeviationGrid,
) -> Result<NashStudyReport> {
    if n_list.len() < 2 {
        return Err(Error::Config(
            "Nash study needs at least two values of N".into(),
        ));
    }
    let searches: Vec<NashReport> = n_list
        .iter()
        .map(|&n_agents| {
            nash_deviation_search(params, gains, &SimConfig { n_agents, ..*cfg }, grid)
        })
        .collect::<Result<_>>()?;
    let rows: Vec<StudyRow> = searches
        .iter()
        .map(|s| StudyRow::new(s.n, "nash_max_improvement", s.max_improvement, s.max_stderr))
        .collect();

    let inv: Vec<f64> = searches.iter().map(|s| 1.0 / (s.n as f64).sqrt()).collect();
    let num: f64 = searches
        .iter()
        .zip(&inv)
        .map(|(s, w)| s.max_improvement * w)
        .sum();
    let den: f64 = inv.iter().map(|w| w * w).sum();
    let fitted_c = (num / den).max(0.0);
    let bound_holds = searches
        .iter()
        .zip(&inv)
        .all(|(s, w)| s.max_improvement <= fitted_c * w + 3.0 * s.max_stderr);

    let x: Vec<f64> = searches.iter().map(|s| (s.n as f64).ln()).collect();
    let xm = x.iter().sum::<f64>() / x.len() as f64;
    let sxx: f64 = x.iter().map(|v| (v - xm).powi(2)).sum();
    let coef: Vec<f64> = x.iter().map(|v| (v - xm) / sxx).collect();
    let trend_slope: f64 = coef
        .iter()
        .zip(&searches)
        .map(|(c, s)| c * s.max_improvement)
        .sum();
    let trend_slope_stderr = coef
        .iter()
        .zip(&searches)
        .map(|(c, s)| (c * s.max_stderr).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(NashStudyReport {
        rows,
        fitted_c,
        bound_holds,
        trend_slope,
        trend_slope_stderr,
        trend_nonincreasing: trend_slope <= 2.0 * trend_slope_stderr,
        searches,
    })
}
