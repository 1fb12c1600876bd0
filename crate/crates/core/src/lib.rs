//! Synthesis and simulation for mean field linear-quadratic social control
//! and Nash games.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod experiment;
pub mod gains;
pub mod game;
pub mod linalg;
pub mod model;
pub mod path;
pub mod representation;
pub mod riccati;
pub mod sim;
pub mod social;
pub mod stability;

pub use error::{Error, ErrorCategory, Result};
pub use experiment::{
    ExperimentConfig, FigureData, Gains, HorizonSpec, Problem, StudyOutcome, StudySpec,
};
pub use gains::{Gain, Horizon, InfiniteOptions};
pub use game::{synth_game_finite, synth_game_infinite, GameGains, OffsetForcing};
pub use model::{derived_weights, DerivedWeights, ModelParams, TimeFunction};
pub use path::Path;
pub use riccati::{AlgebraicRiccatiSolution, AreOptions, RiccatiForm};
pub use sim::{SimConfig, TrajectoryBundle};
pub use social::{synth_social_finite, synth_social_infinite, SocialGains};
pub use stability::{StabilizationReport, Verdict};
