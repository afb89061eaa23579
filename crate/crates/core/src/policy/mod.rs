//! Action distributions, their conversion to orderings, the ranking
//! objectives that mix a policy with a heuristic, and policy providers.

mod external;
mod ordering;
mod provider;
mod rank;
mod source;

pub use external::{ExternalPolicy, DEFAULT_STEP_TIMEOUT};
pub use ordering::{
    sampled_ordering, strict_ordering, to_ordering, ActionDistribution, ActionOrdering,
    DistributionError, SampleMode, EXTERNAL_SUM_TOL, INTERNAL_SUM_TOL,
};
pub use provider::{PolicyError, PolicyProvider, SoftmaxHeuristicPolicy, UniformPolicy};
pub use rank::{rank_actions, RankError, RankMode};
pub use source::OrderingSource;
