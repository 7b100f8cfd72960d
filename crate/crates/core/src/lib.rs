//! Word-sense induction with context subspaces.
//!
//! A context is summarized by the span of its top principal directions; the
//! senses of a word are directions that lie close to many of those spans.
//! [`grassmeans::k_grassmeans`] finds them, [`disambig`] labels occurrences,
//! [`lexeme`] uses the resulting sense vectors and [`metrics`] scores the
//! outcome.

pub mod cli;
pub mod context;
pub mod disambig;
pub mod embeddings;
pub mod error;
pub mod grassmeans;
pub mod lexeme;
pub mod linalg;
pub mod metrics;
pub mod synth;

pub use context::{
    context_subspace, subspace_distance, variance_ratio, ContextInstance, Subspace, WindowOptions,
};
pub use disambig::{hard_decode, soft_decode, SenseLabel, SoftAssignment};
pub use embeddings::{cosine, EmbeddingTable, LoadOptions, StopwordSet};
pub use error::{Error, Result};
pub use grassmeans::{
    k_grassmeans, recover_intersection, Clustering, KGrassmeansParams, SenseModel,
};
pub use metrics::{
    best_permutation_accuracy, paired_f_score, spearman, v_measure, ContingencyTable,
};
