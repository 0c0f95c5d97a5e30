//! Group-aware normalization for graph convolutional networks.
//!
//! The crate provides:
//! - a CSR graph type and the symmetric-normalized aggregation operator,
//!   plus the two-group mean-shift projector applied to it;
//! - a group-wise normalization layer with hand-derived gradients;
//! - fairness regularizers (group-mean gap, deviation caps, a covariance
//!   baseline) and evaluation metrics (statistical parity, equal
//!   opportunity);
//! - spectral verification suites: singular-value interlacing of the
//!   shifted operator, projector algebra, a mean-gap bound checker, and
//!   paired gradient-descent convergence trials;
//! - a deterministic full-batch training engine for a two-layer graph
//!   network with Adam, and synthetic dataset generation and IO.

pub mod data;
pub mod dense;
pub mod error;
pub mod fairness;
pub mod graph;
pub mod linalg;
pub mod model;
pub mod nn;
pub mod norm;
pub mod operator;
pub mod spectral;
pub mod train;

pub use data::{
    compute_stats, generate_synthetic, load_dataset_dir, load_graph, make_splits, meta_for_spec,
    write_dataset, DatasetMeta, DatasetStats, SyntheticSpec,
};
pub use dense::{Mat, PNorm};
pub use error::{Error, ErrorCategory, Result};
pub use graph::{CsrAdjacency, Graph};
pub use model::{
    ForwardTape, GcnModel, LossBreakdown, LossWeights, ModelConfig, NormMode, ParamClass,
    LOGIT_CLAMP,
};
pub use nn::Activation;
pub use operator::{build_gcn_operator, shift_apply, shift_matrix_dense, spmm, AggregationOperator};
pub use train::{
    epochs_to_within, evaluate, train, AdamState, EpochRecord, EvalMetrics, FairnessMode,
    TrainConfig, TrainOutcome,
};
