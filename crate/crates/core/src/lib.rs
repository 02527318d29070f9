//! Visual token reduction: attention-free importance pruning combined with
//! distance-bounded density peak clustering of the remaining tokens.
//!
//! The entry point is [`pact_reduce`], which takes one layer's hidden states,
//! pre-rotary keys and queries, and position ids, and returns the merged
//! hidden states, their position ids and the cluster sizes to use as
//! proportional-attention weights.

pub mod agreement;
pub mod attention;
pub mod cluster;
pub mod dbdpc;
pub mod distance;
pub mod error;
pub mod euti;
pub mod numeric;
pub mod pipeline;
pub mod reference;
pub mod rope;
pub mod synth;
pub mod tensor;

pub use cluster::{Cluster, ClusterSet};
pub use dbdpc::{dbdpc_cluster, CenterSelection, DbdpcParams};
pub use distance::{pairwise_distance, DistanceMatrix, Metric};
pub use error::{PactError, Result};
pub use euti::{euti_scores, split_tokens, ImportanceSplit};
pub use pipeline::{pact_reduce, PositionMode, ReductionConfig, ReductionResult};
pub use rope::{apply_rope, RopeConfig, RopeLayout};
pub use tensor::{read_tensor, write_tensor, PositionIds, TokenTensor};
