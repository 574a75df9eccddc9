//! Confidence estimation for sampling-based answer selection.
//!
//! Four estimators score the answers found in a batch of sampled reasoning
//! paths: self-consistency (vote share), perplexity (path probability),
//! perplexity consistency (summed probability of unique paths per answer)
//! and reasoning-pruned perplexity consistency. A synthetic sampling oracle
//! with known path probabilities makes their errors computable exactly.

// NaN-rejecting guards read as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod commands;
pub mod config;
pub mod error;
pub mod estimators;
pub mod ingest;
pub mod metrics;
pub mod oracle;
pub mod paths;
pub mod pruning;

pub use error::{Error, Result};
pub use estimators::{estimate, pc_confidence, ppl_confidence, rpc_confidence, sc_confidence, EstimatorKind};
pub use oracle::{OracleSpec, Target};
pub use paths::{select_answer, AnswerLabel, ConfidenceMap, ProbMode, ReasoningPath, SampleBatch};
pub use pruning::{prune, FitConfig, PruningReport};
