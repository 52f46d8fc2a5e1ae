//! Partially-latent class models for case-control etiology studies.
//!
//! Cases carry a latent cause among `J` candidate pathogens. Bronze-standard
//! measurements are imperfect in both directions, silver-standard ones have
//! perfect specificity and gold-standard ones identify the cause. Controls
//! anchor the bronze false positive rates. The crate provides the
//! likelihood, a Gibbs sampler, individual prediction, convergence and
//! model-checking diagnostics, an identifiability audit and a simulation
//! harness.

pub mod diagnostics;
pub mod error;
pub mod identifiability;
pub mod io;
pub mod likelihood;
pub mod model;
pub mod prediction;
pub mod priors;
pub mod rng;
pub mod sampler;
pub mod simulation;
pub mod special;

pub use error::{PlcmError, Result};
pub use likelihood::SsSemantics;
pub use model::{
    param_names, validate_dataset, Dataset, LatentAssignment, ModelParams, PathogenClass, PathogenPanel,
    SubjectRecord, ValidationReport,
};
pub use prediction::{predict_individual, EtiologyPrediction};
pub use priors::{default_hyperpriors, elicit_beta_from_quantiles, BetaPrior, HyperPriors};
pub use sampler::{run_chains, Chain, ChainSet, McmcOptions};
pub use simulation::{simulate_dataset, SimTruth};
