//! Multilevel entropic regularization for layered models.
//!
//! The crate is organized around four layers of functionality:
//!
//! - [`distributions`]: finite distributions and joints, relative entropy,
//!   Rényi divergence, tilted distributions and the multilevel relative entropy.
//! - [`mt`]: the Marginalize-Tilt solver for weighted sums of prefix-marginal
//!   relative entropies, together with a grid-search oracle.
//! - [`nnet`] and [`sampler`]: spectral-norm constrained feed-forward nets and
//!   the Metropolis engines (Gibbs posterior, two-level Metropolis) that train
//!   them without gradients.
//! - [`bounds`]: evaluators for the chained mutual-information generalization
//!   bound and the excess-risk bounds derived from it.
//!
//! [`data`] provides MNIST IDX ingestion and reproducible synthetic datasets.

pub mod bounds;
pub mod data;
pub mod distributions;
pub mod error;
pub mod mt;
pub mod nnet;
pub mod numeric;
pub mod sampler;

pub use distributions::{
    chain_factorize, conditional_relative_entropy, multilevel_relative_entropy,
    mutual_information, recompose, relative_entropy, renyi_divergence, tilt, Conditional,
    FiniteDistribution, FiniteJoint, TemperatureVector,
};
pub use error::{Error, Result};
pub use nnet::{
    beta, constants, empirical_risk, forward, forward_batch, in_ball, link_gap, loss, spectral_norm,
    Dataset, Example, LayerSpec, NetConstants, NetParams, NetSpec, OutputActivation,
};
pub use mt::{
    brute_force_minimize, build_twisted_problem, mt_objective, mt_solve, reference_problems, MtProblem, MtSolution,
};

