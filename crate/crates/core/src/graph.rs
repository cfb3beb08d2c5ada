//! Core graph types shared by every matcher: vertices, weighted edges,
//! matchings, and the per-stream weight filter used for arbitrary weights.

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt;

use crate::error::{Error, Result};

/// Dense vertex index in `[0, n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VertexId(pub u32);

impl VertexId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<u32> for VertexId {
    fn from(v: u32) -> Self {
        VertexId(v)
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// An undirected edge with a positive weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedEdge {
    pub u: VertexId,
    pub v: VertexId,
    pub w: f64,
}

impl WeightedEdge {
    pub fn new(u: u32, v: u32, w: f64) -> Self {
        WeightedEdge {
            u: VertexId(u),
            v: VertexId(v),
            w,
        }
    }

    /// Endpoints ordered ascending; this is the lock acquisition order.
    #[inline]
    pub fn ordered(&self) -> (VertexId, VertexId) {
        if self.u <= self.v {
            (self.u, self.v)
        } else {
            (self.v, self.u)
        }
    }

    #[inline]
    pub fn is_self_loop(&self) -> bool {
        self.u == self.v
    }

    /// True when both edges share at least one endpoint.
    pub fn touches(&self, other: &WeightedEdge) -> bool {
        self.u == other.u || self.u == other.v || self.v == other.u || self.v == other.v
    }

    /// Bitwise identity, including the weight's bit pattern.
    pub fn same_bits(&self, other: &WeightedEdge) -> bool {
        self.u == other.u && self.v == other.v && self.w.to_bits() == other.w.to_bits()
    }
}

/// Drops self-loops and rejects non-positive or non-finite weights and
/// out-of-range endpoints. Parallel edges are kept.
pub fn ingest(edges: impl IntoIterator<Item = WeightedEdge>, n: usize) -> Result<Vec<WeightedEdge>> {
    let mut out = Vec::new();
    for e in edges {
        check_edge(&e, n)?;
        if !e.is_self_loop() {
            out.push(e);
        }
    }
    Ok(out)
}

pub(crate) fn check_edge(e: &WeightedEdge, n: usize) -> Result<()> {
    if e.u.index() >= n || e.v.index() >= n {
        return Err(Error::VertexOutOfRange {
            u: e.u.0,
            v: e.v.0,
            n,
        });
    }
    if !(e.w.is_finite() && e.w > 0.0) {
        return Err(Error::BadWeight(e.w));
    }
    Ok(())
}

/// A set of vertex-disjoint edges.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Matching {
    pub edges: Vec<WeightedEdge>,
}

impl Matching {
    pub fn new() -> Self {
        Matching::default()
    }

    pub fn from_edges(edges: Vec<WeightedEdge>) -> Self {
        Matching { edges }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn weight(&self) -> f64 {
        matching_weight(&self.edges)
    }

    pub fn is_valid(&self, n: usize) -> bool {
        validate_matching(&self.edges, n)
    }

    /// Edges sorted by `(min endpoint, max endpoint, weight bits)`, for
    /// order-insensitive comparison between runs.
    pub fn canonical(&self) -> Vec<(u32, u32, u64)> {
        let mut v: Vec<_> = self
            .edges
            .iter()
            .map(|e| {
                let (a, b) = e.ordered();
                (a.0, b.0, e.w.to_bits())
            })
            .collect();
        v.sort_unstable();
        v
    }
}

/// True iff the edges are pairwise vertex-disjoint. Endpoints at or beyond
/// `n` make the set invalid.
pub fn validate_matching(edges: &[WeightedEdge], n: usize) -> bool {
    let mut seen = HashSet::with_capacity(edges.len() * 2);
    for e in edges {
        if e.u.index() >= n || e.v.index() >= n || e.is_self_loop() {
            return false;
        }
        if !seen.insert(e.u) || !seen.insert(e.v) {
            return false;
        }
    }
    true
}

pub fn matching_weight(edges: &[WeightedEdge]) -> f64 {
    edges.iter().map(|e| e.w).sum()
}

/// Weight filter for unbounded weight ranges: an edge is dropped when its
/// weight falls below `eps * w_max / (2 (1 + eps) n^2)`, where `w_max` is the
/// largest weight seen so far on the caller's own stream (including `e`).
pub fn normalization_keep(e: &WeightedEdge, w_max_so_far: f64, n: usize, epsilon: f64) -> bool {
    let n = n as f64;
    let threshold = epsilon * w_max_so_far / (2.0 * (1.0 + epsilon) * n * n);
    e.w >= threshold
}

/// Running state of [`normalization_keep`] for one stream.
#[derive(Debug, Clone, Default)]
pub struct StreamFilter {
    w_max: f64,
}

impl StreamFilter {
    pub fn new() -> Self {
        StreamFilter { w_max: 0.0 }
    }

    /// Folds `e` into the running maximum, then applies the filter.
    pub fn keep(&mut self, e: &WeightedEdge, n: usize, epsilon: f64) -> bool {
        if e.w > self.w_max {
            self.w_max = e.w;
        }
        normalization_keep(e, self.w_max, n, epsilon)
    }

    pub fn w_max(&self) -> f64 {
        self.w_max
    }
}

/// Full in-memory edge list. Only used by oracles, audits, and tests.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GraphSnapshot {
    pub n: usize,
    pub edges: Vec<WeightedEdge>,
}

impl GraphSnapshot {
    pub fn new(n: usize, edges: Vec<WeightedEdge>) -> Self {
        GraphSnapshot { n, edges }
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }
}

/// Edge-processing strategy for the streaming phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Retry lock acquisition until the edge is resolved.
    #[default]
    NonDeferrable,
    /// One try-lock round; contended eligible edges are replayed after streaming.
    Deferrable,
}

/// Parameters shared by every concurrent matcher.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub epsilon: f64,
    pub k: usize,
    pub r: usize,
    pub strategy: Strategy,
    pub normalization_enabled: bool,
    pub seed: u64,
    /// Wall-clock budget for one run, in seconds.
    pub watchdog_seconds: f64,
    /// Keep a copy of every stack entry in the result (tests and audits).
    pub record_stacks: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            epsilon: 1e-6,
            k: 1,
            r: 1,
            strategy: Strategy::NonDeferrable,
            normalization_enabled: false,
            seed: 0,
            watchdog_seconds: 60.0,
            record_stacks: false,
        }
    }
}

impl EngineConfig {
    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn with_r(mut self, r: usize) -> Self {
        self.r = r;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_strategy(mut self, strategy: Strategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn recording(mut self) -> Self {
        self.record_stacks = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.r == 0 || self.r > self.k {
            return Err(Error::Config(format!("r must lie in [1, k], got r={} k={}", self.r, self.k)));
        }
        if !self.k.is_multiple_of(self.r) {
            return Err(Error::Config(format!("k mod r must be 0, got k={} r={}", self.k, self.r)));
        }
        if self.watchdog_seconds.is_nan() || self.watchdog_seconds <= 0.0 {
            return Err(Error::Config("watchdog must be positive".into()));
        }
        Ok(())
    }
}
