//! Imputation of missing multimodal item features for implicit-feedback
//! recommendation.
//!
//! The user-item interaction matrix is projected onto an item-item
//! co-interaction graph, sparsified to the top-n neighbors per item and
//! symmetrically normalized. Missing feature vectors are then filled by
//! feature propagation: repeated neighborhood diffusion with known items
//! clamped to their observed values. Zeros, mean and random baselines plus
//! a seeded evaluation sweep are included for comparison.

pub mod dense;
pub mod error;
pub mod eval;
pub mod features;
pub mod graph;
pub mod impute;
pub mod io;
pub mod rng;
pub mod sparse;
pub mod synthetic;

pub use dense::DenseMatrix;
pub use error::{Error, Result};
pub use eval::{
    knn_recommend, recall_at_k, reconstruction_cosine, run_sweep, split_interactions, Dataset,
    EvaluationConfig, InteractionSplit, MetricReport, SplitRatios, SweepConfig, SweepReport,
};
pub use features::{
    blank_bundle, blank_missing, known_mean, sample_missing, FeatureBundle, MissingMask,
    ModalityFeatureSet,
};
pub use graph::{
    build_normalized_graph, degree_vector, normalize_symmetric, project_item_item, propagate_step,
    sparsify_topn, GraphStage, InteractionMatrix, ItemItemGraph,
};
pub use impute::{
    dirichlet_energy, featprop_impute, featprop_with_graph, harmonic_residual, impute_mean,
    impute_random, impute_zeros, Fallback, ImputationResult, Method, PropagationConfig,
};
pub use sparse::CsrMatrix;
pub use synthetic::{generate_synthetic, SyntheticSpec};
