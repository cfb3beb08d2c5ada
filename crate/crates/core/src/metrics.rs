//! Measurement layer: superstep accounting, phase timings, memory
//! accounting, and the run record emitted by the experiment runner.

use std::mem::size_of;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::cli::ExperimentConfig;
use crate::engine::StackEntry;
use crate::graph::WeightedEdge;
use crate::sync::{AtomicF64, TryLock};

/// Version tag written into every record.
pub const RECORD_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimings {
    pub preprocessing: Duration,
    pub streaming: Duration,
    pub postprocessing: Duration,
}

impl PhaseTimings {
    pub fn total(&self) -> Duration {
        self.preprocessing + self.streaming + self.postprocessing
    }

    pub fn to_secs(&self) -> TimingSecs {
        TimingSecs {
            preprocessing: self.preprocessing.as_secs_f64(),
            streaming: self.streaming.as_secs_f64(),
            postprocessing: self.postprocessing.as_secs_f64(),
            total: self.total().as_secs_f64(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingSecs {
    pub preprocessing: f64,
    pub streaming: f64,
    pub postprocessing: f64,
    pub total: f64,
}

/// Touches of the global dual table during streaming, counted per step
/// rather than per scalar: one read per endpoint-pair test or local-copy
/// refresh, one write per stacking update (both duals and both counters),
/// and one lock op per attempt at the endpoint lock pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessCounts {
    pub global_reads: u64,
    pub global_writes: u64,
    pub global_lock_ops: u64,
}

impl AccessCounts {
    pub fn total(&self) -> u64 {
        self.global_reads + self.global_writes + self.global_lock_ops
    }
}

/// Maximum superstep count over workers.
pub fn effective_iterations(supersteps: &[u64]) -> u64 {
    supersteps.iter().copied().max().unwrap_or(0)
}

/// Ratio of single-stream effective iterations to those of a `k`-stream run
/// over the same edge multiset.
pub fn speedup_by_effective_iterations(base_k1: u64, run_k: u64) -> f64 {
    if run_k == 0 {
        return if base_k1 == 0 { 1.0 } else { f64::INFINITY };
    }
    base_k1 as f64 / run_k as f64
}

/// Fixed bookkeeping charged to every run regardless of `n`.
pub const RUN_HEADER_BYTES: u64 = 64;
pub const DUAL_BYTES: u64 = size_of::<AtomicF64>() as u64;
pub const LOCK_BYTES: u64 = size_of::<TryLock>() as u64;
pub const MARK_BYTES: u64 = size_of::<bool>() as u64;
pub const Z_BYTES: u64 = size_of::<u64>() as u64;
pub const STACK_ENTRY_BYTES: u64 = size_of::<StackEntry>() as u64;
pub const EDGE_BYTES: u64 = size_of::<WeightedEdge>() as u64;

/// Inputs to [`memory_estimate`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MemoryInputs {
    pub n: u64,
    /// Copies of the dual vector (and its locks): 1 ungrouped, `r + 1` grouped.
    pub dual_copies: u64,
    pub stacked: u64,
    pub deferred: u64,
    pub matching: u64,
}

/// Peak auxiliary memory by accounting: dual copies with their locks, one
/// mark and one counter per vertex, stacked entries, deferred edges, and the
/// matching.
pub fn memory_estimate(m: &MemoryInputs) -> u64 {
    RUN_HEADER_BYTES
        + m.n * (m.dual_copies * (DUAL_BYTES + LOCK_BYTES) + MARK_BYTES + Z_BYTES)
        + m.stacked * STACK_ENTRY_BYTES
        + m.deferred * EDGE_BYTES
        + m.matching * EDGE_BYTES
}

/// Objective of one dual rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualBound {
    pub rule: String,
    pub y: f64,
}

/// One row of experiment output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub repeat: u32,
    pub seed: u64,
    pub status: String,
    pub n: u64,
    pub m: u64,
    pub matching_size: Option<u64>,
    pub matching_weight: Option<f64>,
    pub alpha_sum: Option<f64>,
    /// `(1 + eps)` times the engine's dual sum, when the algorithm has duals.
    pub engine_dual_bound: Option<f64>,
    pub dual_bounds: Vec<DualBound>,
    pub y_min: Option<f64>,
    pub min_opt_percent: Option<f64>,
    pub exact_optimum: Option<f64>,
    pub effective_iterations: Option<u64>,
    pub supersteps: Vec<u64>,
    pub l_max: Option<u64>,
    pub l_min: Option<u64>,
    pub global_reads: Option<u64>,
    pub global_writes: Option<u64>,
    pub global_lock_ops: Option<u64>,
    pub global_access_count: Option<u64>,
    pub stacked_edges: Option<u64>,
    pub deferred_edges: Option<u64>,
    pub filtered_edges: Option<u64>,
    pub memory_bytes: Option<u64>,
    pub timings: Option<TimingSecs>,
    /// Streaming time divided by the total edge count.
    pub amortized_ns_per_edge: Option<f64>,
    /// Streaming time divided by the longest stream.
    pub amortized_ns_per_stream_edge: Option<f64>,
    pub error: Option<String>,
}

impl RunRecord {
    pub fn new(config: ExperimentConfig, repeat: u32, seed: u64) -> Self {
        RunRecord {
            schema_version: RECORD_SCHEMA_VERSION,
            config,
            repeat,
            seed,
            status: "ok".into(),
            n: 0,
            m: 0,
            matching_size: None,
            matching_weight: None,
            alpha_sum: None,
            engine_dual_bound: None,
            dual_bounds: Vec::new(),
            y_min: None,
            min_opt_percent: None,
            exact_optimum: None,
            effective_iterations: None,
            supersteps: Vec::new(),
            l_max: None,
            l_min: None,
            global_reads: None,
            global_writes: None,
            global_lock_ops: None,
            global_access_count: None,
            stacked_edges: None,
            deferred_edges: None,
            filtered_edges: None,
            memory_bytes: None,
            timings: None,
            amortized_ns_per_edge: None,
            amortized_ns_per_stream_edge: None,
            error: None,
        }
    }

    /// Same record with every timing-derived field cleared.
    pub fn without_timings(&self) -> RunRecord {
        RunRecord {
            timings: None,
            amortized_ns_per_edge: None,
            amortized_ns_per_stream_edge: None,
            ..self.clone()
        }
    }

    pub fn to_json_line(&self) -> serde_json::Result<String> {
        serde_json::to_string(self)
    }

    pub fn from_json_line(line: &str) -> serde_json::Result<RunRecord> {
        serde_json::from_str(line)
    }
}
