//! Income-class kinetics under pairwise monetary exchange, perturbed by
//! multiplicative noise that respects population (and optionally income)
//! conservation, plus the ensemble statistics relating inequality,
//! mobility and total income.
//!
//! The realization and sweep loops fan out on rayon when the `parallel`
//! feature is on (the default) and run sequentially otherwise.

// Index loops mirror the component formulas; `!(x > 0.0)` also rejects NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod ensemble;
pub mod error;
pub mod indicators;
pub mod model;
pub mod noise;
pub mod par;
pub mod sde;
pub mod stats;

pub use ensemble::{
    closeness_diagnostics, run_ensemble, run_ensemble_at_income, sweep_mu, Closeness,
    EnsembleOptions, EnsembleReport, SweepResult, SweepRow,
};
pub use error::{Error, Result};
pub use indicators::{gini, lorenz_curve, lorenz_gini, mobility, total_income, IndicatorSample};
pub use model::{
    equilibrium_for_income, integrate_deterministic, CoefficientTensor, Distribution, IncomeLadder,
    Model, PaymentMatrix,
};
pub use noise::{
    correction_matrix, draw_noise, omega, project_income, project_population, CorrectionMatrix,
    NoiseDraw, NoiseSampling,
};
pub use par::Execution;
pub use sde::{run_trajectory, step_stochastic, ConservationMode, SimulationConfig, Trajectory};
pub use stats::{pearson, Spread, Summary};
