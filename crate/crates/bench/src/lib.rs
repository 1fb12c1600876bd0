//! Fixtures shared by the benchmarks.

use mflq_core::experiment::{scalar_example, vector_example};
use mflq_core::sim::SimConfig;
use mflq_core::ModelParams;

/// Scalar model with `A = 1`, `G = −0.2`.
pub fn scalar_model() -> ModelParams {
    scalar_example(1.0, -0.2)
}

/// Scalar model with `A = 1`, `G = 0`.
pub fn uncoupled_scalar_model() -> ModelParams {
    scalar_example(1.0, 0.0)
}

/// Two-dimensional model.
pub fn vector_model() -> ModelParams {
    vector_example()
}

/// One replication of `n` agents on `[0, 10]` with `dt = 0.01`.
pub fn sim_config(n: usize) -> SimConfig {
    SimConfig {
        n_agents: n,
        dt: 0.01,
        t_end: 10.0,
        replications: 1,
        seed: 1,
    }
}
