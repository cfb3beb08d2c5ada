//! Concurrent semi-streaming maximum weight matching.
//!
//! `k` workers each consume one edge stream and share a dual vector; a
//! stack-based unwind then yields a `2 + eps` approximate matching. Variants
//! add a deferrable contention strategy, grouped dual copies, and parallel
//! augmentation post-processing. Baselines, dual audits, and an experiment
//! runner sit alongside.

pub mod amplify;
pub mod audit;
pub mod baselines;
pub mod cli;
pub mod engine;
pub mod error;
pub mod graph;
pub mod metrics;
pub mod numa;
pub mod streams;
pub mod sync;

pub use amplify::run_ps_mwm_pr;
pub use audit::DualRule;
pub use engine::{run_ps_mwm, MatchingResult};
pub use error::{Error, Result};
pub use graph::{EngineConfig, GraphSnapshot, Matching, Strategy, VertexId, WeightedEdge};
pub use numa::run_ps_mwm_ld;
pub use streams::EdgeStream;
