//! Synthetic ensembles, seeded Monte Carlo sweeps, brute-force oracles and
//! the theorem verifications built on them. Every run is a pure function of
//! its configuration and master seed.

mod config;
mod ensemble;
mod oracle;
mod sweep;
pub mod verify;

pub use config::{EnsembleSpec, FamilySpec};
pub use ensemble::{generate_ensemble, SourceSpec, SourceTask, TaskEnsemble, MAX_DIRECTION_DRAWS};
pub use oracle::{brute_force_simplex, BRUTE_FORCE_MAX_SOURCES};
pub use sweep::{
    linear_grid, sweep_quantity, sweep_weight, SeedScheme, SweepPoint, SweepResult, WeightRule,
    CSV_HEADER,
};
pub use verify::{verify_theorem, Check, TheoremConfig, TheoremId, Verification};
