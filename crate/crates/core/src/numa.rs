//! Grouped duals: workers are split into `r` groups, each with a private
//! copy of the dual vector that only ever lags the global one. Most
//! ineligible edges are rejected against the local copy; only a group's
//! delegate, holding the group lock, touches the global table and then
//! refreshes the local copy for the two endpoints.

use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::time::Instant;

use crate::engine::{self, eligible, resolve_edge, DualTable, EdgeOutcome, MatchingResult, StreamingPolicy, WorkerState};
use crate::error::{Error, Result};
use crate::graph::{EngineConfig, Strategy, VertexId, WeightedEdge};
use crate::streams::EdgeStream;
use crate::sync::{try_lock_pair, zeroed_f64, Aborted, AtomicF64, Backoff, TryLock, Watchdog};

/// Group index of a 0-based worker: `worker / (k / r)`.
pub fn group_of(worker: usize, k: usize, r: usize) -> usize {
    worker / (k / r)
}

/// One group's local dual copy, its per-vertex locks, and the group lock.
#[derive(Debug)]
pub struct GroupTable {
    alpha: Vec<AtomicF64>,
    locks: Vec<TryLock>,
    glock: TryLock,
    holders: AtomicUsize,
    max_holders: AtomicUsize,
}

impl GroupTable {
    pub fn new(n: usize) -> Self {
        GroupTable {
            alpha: zeroed_f64(n),
            locks: (0..n).map(|_| TryLock::new()).collect(),
            glock: TryLock::new(),
            holders: AtomicUsize::new(0),
            max_holders: AtomicUsize::new(0),
        }
    }

    #[inline]
    pub fn alpha(&self, u: VertexId) -> f64 {
        self.alpha[u.index()].load()
    }

    pub fn alpha_snapshot(&self) -> Vec<f64> {
        self.alpha.iter().map(AtomicF64::load).collect()
    }

    /// Most delegates ever observed inside the group lock at once.
    pub fn max_concurrent_delegates(&self) -> usize {
        self.max_holders.load(Ordering::Relaxed)
    }
}

/// Local tables for all `r` groups.
#[derive(Debug)]
pub struct GroupDualTable {
    pub groups: Vec<GroupTable>,
    violations: AtomicU64,
}

impl GroupDualTable {
    pub fn new(n: usize, r: usize) -> Self {
        GroupDualTable {
            groups: (0..r).map(|_| GroupTable::new(n)).collect(),
            violations: AtomicU64::new(0),
        }
    }

    /// Checks `local <= global` for every group at `u`. Local values are read
    /// first; the global value can only have grown since.
    pub fn dominated_at(&self, global: &DualTable, u: VertexId) -> bool {
        let local_max = self.groups.iter().map(|g| g.alpha(u)).fold(0.0, f64::max);
        local_max <= global.alpha(u)
    }

    pub fn violations(&self) -> u64 {
        self.violations.load(Ordering::Relaxed)
    }
}

fn release(group: &GroupTable, a: VertexId, b: VertexId) {
    group.locks[b.index()].unlock();
    group.locks[a.index()].unlock();
}

/// Grouped edge processing. The eligibility test runs against the group's
/// local duals only. A locally eligible edge takes both local locks, then the
/// group lock, runs the ordinary global procedure, and copies the fresh
/// global duals of both endpoints into the local table. Global state is
/// touched (and counted) only on that delegate path.
pub fn process_edge_ld(
    duals: &DualTable,
    groups: &GroupDualTable,
    group: usize,
    e: &WeightedEdge,
    epsilon: f64,
    ws: &mut WorkerState,
    watchdog: &Watchdog,
) -> std::result::Result<EdgeOutcome, Aborted> {
    let local = &groups.groups[group];
    ws.stats.supersteps += 1;
    let local_sum = |g: &GroupTable| g.alpha(e.u) + g.alpha(e.v);
    if !eligible(e.w, local_sum(local), epsilon) {
        ws.stats.skipped += 1;
        return Ok(EdgeOutcome::Skipped);
    }
    let (a, b) = e.ordered();
    let mut backoff = Backoff::new();
    while !try_lock_pair(&local.locks[a.index()], &local.locks[b.index()]) {
        ws.stats.supersteps += 1;
        watchdog.check()?;
        backoff.wait();
        if !eligible(e.w, local_sum(local), epsilon) {
            ws.stats.skipped += 1;
            return Ok(EdgeOutcome::Skipped);
        }
    }
    if !eligible(e.w, local_sum(local), epsilon) {
        release(local, a, b);
        ws.stats.skipped += 1;
        return Ok(EdgeOutcome::Skipped);
    }
    let mut backoff = Backoff::new();
    while !local.glock.try_lock() {
        ws.stats.supersteps += 1;
        if let Err(err) = watchdog.check() {
            release(local, a, b);
            return Err(err);
        }
        backoff.wait();
    }
    let inside = local.holders.fetch_add(1, Ordering::AcqRel) + 1;
    local.max_holders.fetch_max(inside, Ordering::Relaxed);

    let outcome = resolve_edge(duals, e, epsilon, ws, watchdog);
    if outcome.is_ok() {
        local.alpha[e.u.index()].store(duals.alpha(e.u));
        local.alpha[e.v.index()].store(duals.alpha(e.v));
        ws.stats.global_reads += 1;
        if ws.log.is_some() && !(groups.dominated_at(duals, e.u) && groups.dominated_at(duals, e.v)) {
            groups.violations.fetch_add(1, Ordering::Relaxed);
        }
    }

    local.holders.fetch_sub(1, Ordering::AcqRel);
    local.glock.unlock();
    release(local, a, b);
    outcome
}

struct GroupedPolicy<'a> {
    duals: &'a DualTable,
    groups: &'a GroupDualTable,
    epsilon: f64,
    k: usize,
    r: usize,
}

impl StreamingPolicy for GroupedPolicy<'_> {
    fn process(
        &self,
        worker: usize,
        e: &WeightedEdge,
        ws: &mut WorkerState,
        watchdog: &Watchdog,
    ) -> std::result::Result<EdgeOutcome, Aborted> {
        let j = group_of(worker, self.k, self.r);
        process_edge_ld(self.duals, self.groups, j, e, self.epsilon, ws, watchdog)
    }

    fn dual_copies(&self) -> usize {
        self.r + 1
    }

    fn finish(&self, result: &mut MatchingResult) {
        result.max_concurrent_delegates = self
            .groups
            .groups
            .iter()
            .map(GroupTable::max_concurrent_delegates)
            .max()
            .unwrap_or(0);
        result.dominance_violations = self.groups.violations();
    }
}

/// Runs the grouped matcher. With `r = 1` the local tables are bypassed and
/// this is exactly [`engine::run_ps_mwm`].
pub fn run_ps_mwm_ld(streams: Vec<EdgeStream>, n: usize, config: &EngineConfig) -> Result<MatchingResult> {
    config.validate()?;
    if config.r == 1 {
        return engine::run_ps_mwm(streams, n, config);
    }
    if config.strategy != Strategy::NonDeferrable {
        return Err(Error::Config("grouped duals support only the non-deferrable strategy".into()));
    }
    if streams.len() != config.k {
        return Err(Error::Config(format!(
            "expected {} streams, got {}",
            config.k,
            streams.len()
        )));
    }
    let pre_start = Instant::now();
    let duals = DualTable::new(n);
    let groups = GroupDualTable::new(n, config.r);
    let policy = GroupedPolicy {
        duals: &duals,
        groups: &groups,
        epsilon: config.epsilon,
        k: config.k,
        r: config.r,
    };
    engine::execute(streams, &duals, &policy, config, pre_start)
}
