//! Experiment configurations and the canned figure reproductions.

use std::io::Write;
use std::path::{Path as FsPath, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::gains::InfiniteOptions;
use crate::game::{synth_game_finite, synth_game_infinite, GameGains};
use crate::model::{ModelParams, TimeFunction};
use crate::path::{self, Path};
use crate::representation::{
    representation_check_game, representation_check_social, RepresentationReport,
};
use crate::sim::{
    convergence_study, format_float, nash_study, simulate, ConvergenceReport, DecentralizedSocial,
    DeviationGrid, NashStrategy, NashStudyReport, Profile, SimConfig, TrajectoryBundle,
};
use crate::social::{synth_social_finite, synth_social_infinite, SocialGains};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Problem {
    Social,
    Game,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HorizonSpec {
    Finite {
        #[serde(rename = "T")]
        t: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        steps: Option<usize>,
    },
    Infinite {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        t_max: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        steps: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StudySpec {
    Convergence {
        n_list: Vec<usize>,
    },
    Nash {
        n_list: Vec<usize>,
        grid: DeviationGrid,
    },
    Representation,
    Figures {
        which: Vec<u8>,
    },
}

/// A complete run description: model, problem, horizon, simulation and an
/// optional study.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelParams,
    pub problem: Problem,
    pub horizon: HorizonSpec,
    pub sim: SimConfig,
    pub study: Option<StudySpec>,
    pub comment: Option<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ModelSource {
    File(String),
    Inline(Value),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: ModelSource,
    problem: Problem,
    horizon: HorizonSpec,
    sim: SimConfig,
    #[serde(default)]
    study: Option<StudySpec>,
    #[serde(default)]
    comment: Option<String>,
}

impl ExperimentConfig {
    /// Parse a config; a string `model` is a path relative to `base_dir`.
    pub fn from_json(s: &str, base_dir: Option<&FsPath>) -> Result<Self> {
        let raw: RawConfig = serde_json::from_str(s)?;
        let model = match raw.model {
            ModelSource::Inline(v) => ModelParams::from_json(&v.to_string())?,
            ModelSource::File(f) => {
                let p: PathBuf = match base_dir {
                    Some(d) => d.join(&f),
                    None => PathBuf::from(&f),
                };
                let text = std::fs::read_to_string(&p)
                    .map_err(|e| Error::Config(format!("model file {}: {e}", p.display())))?;
                ModelParams::from_json(&text)?
            }
        };
        let cfg = ExperimentConfig {
            model,
            problem: raw.problem,
            horizon: raw.horizon,
            sim: raw.sim,
            study: raw.study,
            comment: raw.comment,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &FsPath) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("config file {}: {e}", path.display())))?;
        Self::from_json(&text, path.parent())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.ensure_valid()?;
        self.sim.validate()?;
        if let HorizonSpec::Finite { t, .. } = self.horizon {
            if !(t > 0.0) {
                return Err(Error::Config("finite horizon T must be positive".into()));
            }
            if self.sim.t_end > t * (1.0 + 1e-12) {
                return Err(Error::Config(format!(
                    "simulation horizon {} exceeds the control horizon {t}",
                    self.sim.t_end
                )));
            }
        }
        if self.problem == Problem::Game
            && matches!(self.horizon, HorizonSpec::Infinite { .. })
            && self.model.g.iter().any(|v| *v != 0.0)
        {
            return Err(Error::Config("infinite-horizon game requires G = 0".into()));
        }
        match (&self.study, self.problem) {
            (Some(StudySpec::Convergence { .. }), Problem::Game) => Err(Error::Config(
                "convergence study applies to the social problem".into(),
            )),
            (Some(StudySpec::Nash { .. }), Problem::Social) => Err(Error::Config(
                "Nash study applies to the game problem".into(),
            )),
            (Some(StudySpec::Figures { which }), _)
                if which.iter().any(|w| !(1..=7).contains(w)) =>
            {
                Err(Error::Config("figures are numbered 1 to 7".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn to_json(&self) -> String {
        let model: Value = serde_json::from_str(&self.model.to_json()).expect("model JSON");
        let mut v = serde_json::json!({
            "model": model,
            "problem": self.problem,
            "horizon": self.horizon,
            "sim": self.sim,
        });
        if let Some(study) = &self.study {
            v["study"] = serde_json::to_value(study).expect("study JSON");
        }
        if let Some(c) = &self.comment {
            v["comment"] = Value::String(c.clone());
        }
        serde_json::to_string_pretty(&v).expect("config serializes")
    }
}

/// Synthesized gains of either problem.
#[derive(Debug, Clone)]
pub enum Gains {
    Social(SocialGains),
    Game(GameGains),
}

impl Gains {
    pub fn to_json(&self) -> String {
        match self {
            Gains::Social(g) => g.to_json(),
            Gains::Game(g) => g.to_json(),
        }
    }

    pub fn x_bar(&self) -> &Path {
        match self {
            Gains::Social(g) => &g.x_bar,
            Gains::Game(g) => &g.x_bar,
        }
    }
}

pub fn synthesize(cfg: &ExperimentConfig) -> Result<Gains> {
    let p = &cfg.model;
    match cfg.horizon {
        HorizonSpec::Finite { t, steps } => {
            let grid = path::uniform_grid(0.0, t, steps.unwrap_or(path::DEFAULT_STEPS));
            Ok(match cfg.problem {
                Problem::Social => Gains::Social(synth_social_finite(p, t, &grid)?),
                Problem::Game => Gains::Game(synth_game_finite(p, t, &grid)?),
            })
        }
        HorizonSpec::Infinite { t_max, steps } => {
            let opts = InfiniteOptions {
                t_max,
                steps: steps.unwrap_or(path::DEFAULT_STEPS),
                ..Default::default()
            };
            Ok(match cfg.problem {
                Problem::Social => Gains::Social(synth_social_infinite(p, opts)?),
                Problem::Game => Gains::Game(synth_game_infinite(p, opts)?),
            })
        }
    }
}

/// Simulates every agent under the decentralized law of `gains`.
pub fn simulate_decentralized(
    params: &ModelParams,
    gains: &Gains,
    sim: &SimConfig,
) -> Result<TrajectoryBundle> {
    match gains {
        Gains::Social(g) => simulate(
            params,
            &Profile::uniform(&DecentralizedSocial(g)),
            sim,
            Some(&g.x_bar),
        ),
        Gains::Game(g) => simulate(
            params,
            &Profile::uniform(&NashStrategy(g)),
            sim,
            Some(&g.x_bar),
        ),
    }
}

/// Outcome of a configured study.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StudyOutcome {
    Convergence(ConvergenceReport),
    Nash(NashStudyReport),
    Representation(RepresentationReport),
}

pub fn run_study(cfg: &ExperimentConfig, gains: &Gains) -> Result<Option<StudyOutcome>> {
    let p = &cfg.model;
    Ok(match (&cfg.study, gains) {
        (None, _) | (Some(StudySpec::Figures { .. }), _) => None,
        (Some(StudySpec::Convergence { n_list }), Gains::Social(g)) => Some(
            StudyOutcome::Convergence(convergence_study(p, g, n_list, &cfg.sim)?),
        ),
        (Some(StudySpec::Nash { n_list, grid }), Gains::Game(g)) => Some(StudyOutcome::Nash(
            nash_study(p, g, n_list, &cfg.sim, grid)?,
        )),
        (Some(StudySpec::Representation), Gains::Social(g)) => Some(StudyOutcome::Representation(
            representation_check_social(p, g, &cfg.sim)?,
        )),
        (Some(StudySpec::Representation), Gains::Game(g)) => Some(StudyOutcome::Representation(
            representation_check_game(p, g, &cfg.sim)?,
        )),
        _ => return Err(Error::Config("study does not match the problem".into())),
    })
}

// ---------------------------------------------------------------------------
// Canned figures.

/// Seed used for the figures when none is given.
pub const FIGURE_SEED: u64 = 20;
pub const FIGURE_AGENTS: usize = 50;
/// Start of the window compared in the overlay figure.
pub const TRANSIENT_END: f64 = 2.0;

fn figure_sim(seed: u64) -> SimConfig {
    SimConfig {
        n_agents: FIGURE_AGENTS,
        dt: 0.01,
        t_end: 10.0,
        replications: 1,
        seed,
    }
}

/// Scalar example: `B=Q=R=1, f=1, σ=0.1, ρ=0.6, Γ=−0.2, η=5`, initial
/// law `N(5, 0.5)`.
pub fn scalar_example(a: f64, g: f64) -> ModelParams {
    ModelParams::scalar(a, 1.0, g, 1.0, -0.2, 1.0, 5.0, 0.6, 1.0, 0.1, 5.0, 0.5)
}

/// Two-dimensional social example with a single control entering both
/// states (`B = [1; 1]`, `R = 1`).
pub fn vector_example() -> ModelParams {
    let m = |r: usize, c: usize, v: &[f64]| DMatrix::from_row_slice(r, c, v);
    ModelParams {
        a: m(2, 2, &[0.1, 0.0, -1.0, 0.2]),
        b: m(2, 1, &[1.0, 1.0]),
        g: m(2, 2, &[-0.5, 0.0, 0.0, -0.3]),
        q: DMatrix::identity(2, 2),
        r: DMatrix::identity(1, 1),
        gamma: m(2, 2, &[1.0, 0.0, 1.0, 1.0]),
        eta: DVector::from_column_slice(&[0.0, 0.5]),
        rho: 0.6,
        f: TimeFunction::constant(&[1.0, 1.0]),
        sigma: TimeFunction::constant(&[0.5, 0.5]),
        x_bar0: DVector::from_column_slice(&[5.0, 5.0]),
        init_cov: DMatrix::identity(2, 2) * 0.5,
    }
}

fn canned(model: ModelParams, problem: Problem, seed: u64, comment: &str) -> ExperimentConfig {
    ExperimentConfig {
        model,
        problem,
        horizon: HorizonSpec::Infinite {
            t_max: None,
            steps: None,
        },
        sim: figure_sim(seed),
        study: None,
        comment: Some(comment.to_string()),
    }
}

/// The configurations behind figure `which` (two for the overlay figure).
pub fn figure_configs(which: u8, seed: u64) -> Result<Vec<ExperimentConfig>> {
    Ok(match which {
        1 => vec![canned(
            scalar_example(0.2, -0.2),
            Problem::Social,
            seed,
            "social, A = 0.2",
        )],
        2 => vec![canned(
            scalar_example(1.0, -0.2),
            Problem::Social,
            seed,
            "social, A = 1",
        )],
        3 => vec![canned(
            scalar_example(0.2, 0.0),
            Problem::Game,
            seed,
            "game, A = 0.2, G = 0",
        )],
        4 => vec![canned(
            scalar_example(1.0, 0.0),
            Problem::Game,
            seed,
            "game, A = 1, G = 0",
        )],
        5 => vec![
            canned(
                scalar_example(1.0, 0.0),
                Problem::Social,
                seed,
                "social, A = 1, G = 0",
            ),
            canned(
                scalar_example(1.0, 0.0),
                Problem::Game,
                seed,
                "game, A = 1, G = 0",
            ),
        ],
        6 | 7 => vec![canned(
            vector_example(),
            Problem::Social,
            seed,
            "two-dimensional social example; B is listed both as I and as [1; 1], \
             taken here as the column [1; 1] with R = 1",
        )],
        _ => {
            return Err(Error::Config(format!(
                "no figure {which}; figures are numbered 1 to 7"
            )))
        }
    })
}

/// Comparison of `x̄` with the empirical average in the overlay figure.
#[derive(Debug, Clone, Serialize)]
pub struct OverlaySummary {
    pub transient_end: f64,
    /// Mean of `xavg_PS − xavg_PG` over `t ≥ transient_end`.
    pub mean_ps_minus_pg: f64,
    /// `xavg_PS < xavg_PG` at every node with `t ≥ transient_end`.
    pub ps_below_pg: bool,
    /// Root mean square of `x^(N) − x̄` over the grid.
    pub rms_deviation_ps: f64,
    pub rms_deviation_pg: f64,
    /// Root mean square of the sample standard error of `x^(N)`.
    pub rms_stderr_ps: f64,
    pub rms_stderr_pg: f64,
    /// Both deviations below three standard errors.
    pub overlay_within_3_stderr: bool,
}

/// A figure as a table of columns.
#[derive(Debug, Clone)]
pub struct FigureData {
    pub number: u8,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub overlay: Option<OverlaySummary>,
}

impl FigureData {
    pub fn file_name(&self) -> String {
        format!("fig{}.csv", self.number)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Config(format!("CSV: {e}"));
        w.write_record(&self.header).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record(r.iter().map(|v| format_float(*v)))
                .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn run_canned(cfg: &ExperimentConfig) -> Result<(Gains, TrajectoryBundle)> {
    let gains = synthesize(cfg)?;
    let bundle = simulate_decentralized(&cfg.model, &gains, &cfg.sim)?;
    Ok((gains, bundle))
}

/// Sample standard error of the component `c` of the agent average.
fn average_stderr(b: &TrajectoryBundle, k: usize, c: usize) -> f64 {
    let v: Vec<f64> = (0..b.n_agents).map(|i| b.state(0, k, i)[c]).collect();
    let (_, se) = crate::sim::mean_stderr(&v);
    se
}

fn agent_figure(number: u8, b: &TrajectoryBundle, component: usize) -> FigureData {
    let mut header = vec!["t".to_string()];
    header.extend((1..=b.n_agents).map(|i| format!("agent_{i}")));
    header.push("xbar".into());
    header.push("xavg".into());
    let rows = (0..b.nodes())
        .map(|k| {
            let mut r = Vec::with_capacity(header.len());
            r.push(b.grid[k]);
            r.extend((0..b.n_agents).map(|i| b.state(0, k, i)[component]));
            r.push(b.xbar(k).map_or(f64::NAN, |x| x[component]));
            r.push(b.average(0, k)[component]);
            r
        })
        .collect();
    FigureData {
        number,
        header,
        rows,
        overlay: None,
    }
}

fn rms(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x * x, n + 1));
    (s / n.max(1) as f64).sqrt()
}

fn overlay_figure(ps: &TrajectoryBundle, pg: &TrajectoryBundle) -> FigureData {
    let header: Vec<String> = ["t", "xbar_PS", "xavg_PS", "xbar_PG", "xavg_PG"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows: Vec<Vec<f64>> = (0..ps.nodes())
        .map(|k| {
            vec![
                ps.grid[k],
                ps.xbar(k).map_or(f64::NAN, |x| x[0]),
                ps.average(0, k)[0],
                pg.xbar(k).map_or(f64::NAN, |x| x[0]),
                pg.average(0, k)[0],
            ]
        })
        .collect();
    let after: Vec<&Vec<f64>> = rows.iter().filter(|r| r[0] >= TRANSIENT_END).collect();
    let mean_ps_minus_pg =
        after.iter().map(|r| r[2] - r[4]).sum::<f64>() / after.len().max(1) as f64;
    let ps_below_pg = after.iter().all(|r| r[2] < r[4]);
    let rms_deviation_ps = rms(rows.iter().map(|r| r[2] - r[1]));
    let rms_deviation_pg = rms(rows.iter().map(|r| r[4] - r[3]));
    let rms_stderr_ps = rms((0..ps.nodes()).map(|k| average_stderr(ps, k, 0)));
    let rms_stderr_pg = rms((0..pg.nodes()).map(|k| average_stderr(pg, k, 0)));
    let overlay = OverlaySummary {
        transient_end: TRANSIENT_END,
        mean_ps_minus_pg,
        ps_below_pg,
        rms_deviation_ps,
        rms_deviation_pg,
        rms_stderr_ps,
        rms_stderr_pg,
        overlay_within_3_stderr: rms_deviation_ps <= 3.0 * rms_stderr_ps
            && rms_deviation_pg <= 3.0 * rms_stderr_pg,
    };
    FigureData {
        number: 5,
        header,
        rows,
        overlay: Some(overlay),
    }
}

/// Regenerates figure `which` (1 to 7) from its canned configuration.
pub fn reproduce_figure(which: u8, seed: u64) -> Result<FigureData> {
    let cfgs = figure_configs(which, seed)?;
    match which {
        5 => {
            let (_, ps) = run_canned(&cfgs[0])?;
            let (_, pg) = run_canned(&cfgs[1])?;
            Ok(overlay_figure(&ps, &pg))
        }
        6 | 7 => {
            let (_, b) = run_canned(&cfgs[0])?;
            Ok(agent_figure(which, &b, (which - 6) as usize))
        }
        _ => {
            let (_, b) = run_canned(&cfgs[0])?;
            Ok(agent_figure(which, &b, 0))
        }
    }
}
