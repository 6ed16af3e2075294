//! Delay-minimizing traffic distribution over a fixed-capacity network.
//!
//! [`network`] holds the delay model and the analytic optimum, [`ep`] and
//! [`pso`] search for the optimum with population methods driven by
//! [`search`], and [`mlp`] learns the load-to-flow mapping from datasets built
//! by [`dataset`].

// `!(x > y)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod ep;
pub mod error;
pub mod method;
pub mod mlp;
pub mod network;
pub mod pso;
pub mod search;

pub use error::{Error, Result};
pub use method::Method;
pub use network::{
    delay_msec, kkt_optimal_flow, mean_link_utilization, parse_topology, total_capacity,
    FlowVector, LinkSpec, NetworkTopology,
};
pub use search::{run_trials, SearchObjective, SearchResult, TerminationRule, TrialSummary};
