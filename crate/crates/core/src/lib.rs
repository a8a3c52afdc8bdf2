//! Staged model checking and prior-data conflict detection for the balanced
//! normal-normal hierarchical model.
//!
//! The protocol checks, in order:
//!
//! 1. the sampling model, using residuals given the group means;
//! 2. the second-level prior, using the group means given `V = (sum, sum of
//!    squares)` of the means, a law that does not involve the hyperprior;
//! 3. the hyperprior, using the prior predictive law of `V`. An improper
//!    hyperprior is taken never to conflict with the data and is skipped.
//!
//! A stage only runs when every earlier stage found no conflict.

pub mod calibration;
pub mod checks;
pub mod discrepancy;
pub mod error;
pub mod io;
pub mod model;
pub mod numeric;
pub mod rng;
pub mod sampler;
pub mod sufficiency;

pub use calibration::{calibrate_stage, ks_statistic, CalibrationResult, CalibrationSpec, Truth};
pub use checks::{
    check_model, check_pi1, check_pi2, check_pi2_star, check_simple, mc_pvalue, run_protocol,
    Pi1Outcome, ProtocolConfig, StageDiscrepancies,
};
pub use discrepancy::{Discrepancy, Space};
pub use error::{Error, ErrorClass, Result};
pub use model::{
    validate_dataset, CheckReport, Decision, GroupedDataset, HyperPrior, HyperStat, PValueResult,
    SamplingModel, Stage, StageRecord, StageStatus, SufficientStat,
};
pub use rng::RngStream;
pub use sampler::{helmert_basis, ComplementBasis};
