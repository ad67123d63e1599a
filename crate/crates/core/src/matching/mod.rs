//! Affinity, Sinkhorn relaxation and Hungarian decoding.

mod affinity;
mod hungarian;
mod pipeline;
mod sinkhorn;

pub use affinity::{
    affinity, affinity_backward, instance_normalize, instance_normalize_backward, instance_normalize_with_scale,
    pad_dummy_columns, INSTANCE_NORM_EPS,
};
pub use hungarian::{assignment_total, brute_force_assignment, hungarian, Assignment};
pub use sinkhorn::{
    marginal_error, sinkhorn, sinkhorn_backward, sinkhorn_traced, sinkhorn_unrolled, SinkhornConfig, SinkhornTrace,
    SoftAssignment,
};
pub use pipeline::{ensure_augmented, soft_assignment_from_embeddings, MatchResult, Matcher};
