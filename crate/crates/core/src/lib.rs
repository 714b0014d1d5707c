//! Order-sensitive Shapley values for black-box sequence classifiers.
//!
//! A sequence of `n` tokens is a game with `2n` players: occurrence features
//! `x_0..x_{n-1}` (indices `0..n`) and order features `z_0..z_{n-1}`
//! (indices `n..2n`). Removing `x_i` resamples the token at slot `i`;
//! removing `z_i` lets slot `i` move. Attributions come from exact
//! enumeration for short sequences ([`osv_exact`]) or from permutation
//! sampling ([`osv_sampled`], [`global_explain`]).
//!
//! The `parallel` feature (on by default) spreads sampling blocks and value
//! tables over a rayon pool. Results are bitwise identical with and without
//! it, and for any worker count.

pub mod bridge;
pub mod engine;
pub mod error;
pub mod estimators;
pub mod exec;
pub mod interventions;
pub mod model;
pub mod pipeline;
pub mod reference_models;
pub mod report;
pub mod rng;
pub mod sequence;
pub mod synthetic;
pub mod transforms;
pub mod value_fn;
pub mod vocab;

pub use engine::{
    osv_exact, shapley_from_table, sv_exact, AttributionReport, CoalitionValueOracle, Diagnostics, Evaluator,
    ModelContext, MAX_EXACT_LEN,
};
pub use error::{ModelError, OsvError, Result};
pub use estimators::{global_explain, osv_sampled, EstimatorConfig, GlobalExplanationJob};
pub use exec::Execution;
pub use interventions::{InterventionSpec, OccurrenceIntervention, OrderMode};
pub use model::SequenceModel;
pub use sequence::{Coalition, Feature, Sequence};
pub use value_fn::{ValueFunction, ValueFunctionSpec};
pub use vocab::{Symbol, Vocabulary};
