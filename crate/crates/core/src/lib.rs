//! Simulation and convergence analysis for the opto-electronic coherent
//! Ising machine.
//!
//! The machine iterates `s <- cos^2(f(s) - pi/4) - 1/2` on the relaxed box
//! `[-1/2, 1/2]^n`, where the feedback `f` is a (noisy) gradient step on the
//! relaxed Ising energy `E(s) = 1/2 s^T J s + h^T s`. This crate provides
//!
//! - [`problem`]: instances, objectives, gradients and rounding;
//! - [`spectral`]: extreme eigenvalues of `Q = (J + J^T)/2` and `c^2`;
//! - [`dynamics`]: every iteration rule with step-size schedules and noise;
//! - [`oracle`]: reference optima, PL-constant estimates and curvature regimes;
//! - [`analysis`]: bounds, Monte Carlo ensembles and verdicts;
//! - [`generate`] and [`io`]: instance families and file formats.

pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod generate;
pub mod io;
pub mod oracle;
pub mod problem;
pub mod rng;
pub mod spectral;

pub use analysis::{
    bound_report, check_one_step_recursion, ensemble_run, iteration_bound_kappa,
    liminf_bound_modified, liminf_bound_original, rate_fit, verify_gap_bound, verify_kappa,
    BoundInputs, BoundKind, BoundReport, CheckResult, EnsembleStats, MuSource, RateFit,
    RecursionCheck, RecursionParams, Verdict, VerdictKind,
};
pub use dynamics::{
    feedback, run, step, transfer, IterationMode, NoiseModel, RunConfig, StepSchedule, Trajectory,
};
pub use error::{EcimError, Result};
pub use generate::{generate, GeneratorKind, GeneratorSpec};
pub use oracle::{
    classify_definiteness, discrete_optimum, pl_constant_estimate, relaxed_optimum,
    DefinitenessClass, OptimumMethod, OracleBudget, PlEstimate, RelaxedOptimum, StationaryRegime,
};
pub use problem::{round_to_spins, CouplingProblem, DiscreteSpins, SpinState};
pub use rng::{substream, EcimRng};
pub use spectral::{spectral_summary, Definiteness, SpectralSummary};
