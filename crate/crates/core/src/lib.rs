//! Ground states of the rotating Gross–Pitaevskii equation by preconditioned
//! Riemannian gradient and conjugate-gradient descent on a Fourier
//! pseudospectral grid, with imaginary-time baselines.

pub mod bench;
pub mod classic;
pub mod error;
pub mod model;
pub mod optim;
pub mod precond;
pub mod run;
pub mod spectral;
mod vecops;

pub use error::{Error, Result};
pub use model::{EnergyBreakdown, InitialKind, Model, ModelParams, PotentialKind, PotentialSpec};
pub use precond::{Preconditioner, PreconditionerKind, ShiftPolicy};
pub use run::{RunConfig, RunResult, RunStatus};
pub use spectral::{Grid, GridSpec, WaveField};
pub use optim::{ConvergenceRecord, Method, Solution, SolveError, SolverConfig, StopCriterion};
