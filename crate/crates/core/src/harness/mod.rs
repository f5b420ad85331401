//! Synthetic experiments: benchmark systems, reference integration, noise
//! and missing-data generation, and batch runs.

use serde::{Deserialize, Serialize};

pub mod benchmark;
pub mod data;
pub mod integrate;
pub mod systems;

pub use benchmark::{refinement_plan, run_benchmark, run_single, summarize, BenchmarkConfig, BenchmarkResults, Quartiles, RunOutcome, RunRecord, SummaryRow};
pub use data::{add_noise_and_drop, derive_seed, initial_state, interpolate_states, standardize_states, DropSpec, NoiseSpec};
pub use integrate::{integrate, Tolerances};
pub use systems::{BenchmarkSystem, SystemKind};

/// Samples of a trajectory, row-major `values[j * dim + c]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dim: usize,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, j: usize) -> &[f64] {
        &self.values[j * self.dim..(j + 1) * self.dim]
    }
}
