//! The concurrent multi-stream matcher.
//!
//! Each of `k` workers reads its own edge stream and pushes edges whose
//! weight beats `(1 + eps)` times the current endpoint duals onto a private
//! stack, raising both duals by the edge's gain. Duals are shared: reads are
//! lock-free (they only grow during streaming), updates happen under the two
//! endpoint locks taken in ascending vertex order. After a barrier every
//! worker unwinds its stack, matching an edge once it is *tight*, i.e. once
//! every later-stacked edge sharing an endpoint has been popped. Tightness
//! is tracked with integer counters (`z`) rather than float equality.

use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Barrier, Mutex};
use std::thread;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EngineConfig, Matching, StreamFilter, Strategy, VertexId, WeightedEdge};
use crate::metrics::{AccessCounts, PhaseTimings};
use crate::streams::EdgeStream;
use crate::sync::{try_lock_pair, zeroed_f64, Aborted, AtomicF64, Backoff, TryLock, Watchdog};

/// Shared per-vertex state: duals, locks, match marks, and tightness counters.
#[derive(Debug)]
pub struct DualTable {
    alpha: Vec<AtomicF64>,
    locks: Vec<TryLock>,
    mark: Vec<AtomicBool>,
    z: Vec<AtomicU64>,
}

impl DualTable {
    pub fn new(n: usize) -> Self {
        DualTable {
            alpha: zeroed_f64(n),
            locks: (0..n).map(|_| TryLock::new()).collect(),
            mark: (0..n).map(|_| AtomicBool::new(false)).collect(),
            z: (0..n).map(|_| AtomicU64::new(0)).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.alpha.len()
    }

    #[inline]
    pub fn alpha(&self, u: VertexId) -> f64 {
        self.alpha[u.index()].load()
    }

    #[inline]
    pub fn z(&self, u: VertexId) -> u64 {
        self.z[u.index()].load(Ordering::Acquire)
    }

    pub fn is_marked(&self, u: VertexId) -> bool {
        self.mark[u.index()].load(Ordering::Acquire)
    }

    pub(crate) fn lock(&self, u: VertexId) -> &TryLock {
        &self.locks[u.index()]
    }

    pub fn alpha_snapshot(&self) -> Vec<f64> {
        self.alpha.iter().map(AtomicF64::load).collect()
    }

    pub fn z_snapshot(&self) -> Vec<u64> {
        self.z.iter().map(|z| z.load(Ordering::Acquire)).collect()
    }

    #[inline]
    fn pair_sum(&self, e: &WeightedEdge) -> f64 {
        self.alpha(e.u) + self.alpha(e.v)
    }
}

/// One stacked edge: its gain and the counter stamp that identifies when it
/// becomes tight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StackEntry {
    pub edge: WeightedEdge,
    pub gain: f64,
    pub z_stamp: u64,
}

/// A stack entry plus the endpoint dual sum observed when it was pushed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StackRecord {
    pub entry: StackEntry,
    pub alpha_sum_before: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeOutcome {
    Stacked,
    Skipped,
    Deferred,
}

/// Per-worker tallies. Aggregated after the final barrier, so totals are
/// exact without shared counters on the hot path.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WorkerStats {
    pub supersteps: u64,
    pub replay_supersteps: u64,
    pub edges_read: u64,
    pub filtered: u64,
    pub stacked: u64,
    pub skipped: u64,
    pub deferred: u64,
    pub global_reads: u64,
    pub global_writes: u64,
    pub global_lock_ops: u64,
}

/// Everything a worker owns exclusively during a run.
#[derive(Debug, Default)]
pub struct WorkerState {
    pub stack: Vec<StackEntry>,
    pub deferred: Vec<WeightedEdge>,
    pub stats: WorkerStats,
    pub log: Option<Vec<StackRecord>>,
}

impl WorkerState {
    pub fn new(record: bool) -> Self {
        WorkerState {
            log: record.then(Vec::new),
            ..Default::default()
        }
    }
}

#[inline]
pub(crate) fn eligible(w: f64, alpha_sum: f64, epsilon: f64) -> bool {
    w > (1.0 + epsilon) * alpha_sum
}

/// Pushes `e` with the duals read under both locks. Caller holds the locks.
fn stack_locked(duals: &DualTable, e: &WeightedEdge, epsilon: f64, ws: &mut WorkerState) -> EdgeOutcome {
    let (au, av) = (duals.alpha(e.u), duals.alpha(e.v));
    ws.stats.global_reads += 1;
    let sum = au + av;
    if !eligible(e.w, sum, epsilon) {
        ws.stats.skipped += 1;
        return EdgeOutcome::Skipped;
    }
    let gain = e.w - sum;
    duals.alpha[e.u.index()].store(au + gain);
    duals.alpha[e.v.index()].store(av + gain);
    let zu = duals.z[e.u.index()].fetch_add(1, Ordering::AcqRel) + 1;
    let zv = duals.z[e.v.index()].fetch_add(1, Ordering::AcqRel) + 1;
    ws.stats.global_writes += 1;
    let entry = StackEntry {
        edge: *e,
        gain,
        z_stamp: zu + zv,
    };
    ws.stack.push(entry);
    if let Some(log) = ws.log.as_mut() {
        log.push(StackRecord {
            entry,
            alpha_sum_before: sum,
        });
    }
    ws.stats.stacked += 1;
    EdgeOutcome::Stacked
}

/// Non-deferrable edge processing: a lock-free eligibility test, then
/// repeated attempts at both endpoint locks for as long as the edge stays
/// eligible. Each extra attempt is one more superstep.
pub fn process_edge(
    duals: &DualTable,
    e: &WeightedEdge,
    epsilon: f64,
    ws: &mut WorkerState,
    watchdog: &Watchdog,
) -> std::result::Result<EdgeOutcome, Aborted> {
    ws.stats.supersteps += 1;
    resolve_edge(duals, e, epsilon, ws, watchdog)
}

/// Body of [`process_edge`] without the base superstep, for callers that
/// account for the first iteration themselves.
pub(crate) fn resolve_edge(
    duals: &DualTable,
    e: &WeightedEdge,
    epsilon: f64,
    ws: &mut WorkerState,
    watchdog: &Watchdog,
) -> std::result::Result<EdgeOutcome, Aborted> {
    ws.stats.global_reads += 1;
    if !eligible(e.w, duals.pair_sum(e), epsilon) {
        ws.stats.skipped += 1;
        return Ok(EdgeOutcome::Skipped);
    }
    let (a, b) = e.ordered();
    let (la, lb) = (duals.lock(a), duals.lock(b));
    let mut backoff = Backoff::new();
    loop {
        ws.stats.global_lock_ops += 1;
        if try_lock_pair(la, lb) {
            break;
        }
        ws.stats.supersteps += 1;
        watchdog.check()?;
        backoff.wait();
        ws.stats.global_reads += 1;
        if !eligible(e.w, duals.pair_sum(e), epsilon) {
            ws.stats.skipped += 1;
            return Ok(EdgeOutcome::Skipped);
        }
    }
    let out = stack_locked(duals, e, epsilon, ws);
    lb.unlock();
    la.unlock();
    Ok(out)
}

/// Deferrable edge processing: exactly one try-lock round. A contended edge
/// that is still eligible goes to the worker's deferred set.
pub fn process_edge_ds(duals: &DualTable, e: &WeightedEdge, epsilon: f64, ws: &mut WorkerState) -> EdgeOutcome {
    ws.stats.supersteps += 1;
    ws.stats.global_reads += 1;
    if !eligible(e.w, duals.pair_sum(e), epsilon) {
        ws.stats.skipped += 1;
        return EdgeOutcome::Skipped;
    }
    let (a, b) = e.ordered();
    let (la, lb) = (duals.lock(a), duals.lock(b));
    ws.stats.global_lock_ops += 1;
    if !try_lock_pair(la, lb) {
        ws.stats.global_reads += 1;
        if !eligible(e.w, duals.pair_sum(e), epsilon) {
            ws.stats.skipped += 1;
            return EdgeOutcome::Skipped;
        }
        ws.deferred.push(*e);
        ws.stats.deferred += 1;
        return EdgeOutcome::Deferred;
    }
    let out = stack_locked(duals, e, epsilon, ws);
    lb.unlock();
    la.unlock();
    out
}

const POLLS_PER_YIELD: u32 = 64;

/// Unwinds one worker's stack. Each popped entry waits until it is tight
/// (`z_stamp == z[u] + z[v]`); a tight edge whose endpoints are both unmarked
/// joins the matching. Its dual and counter contributions are then reversed.
/// Tight edges are vertex-disjoint, so marks and reversals need no locks.
pub fn process_stack(
    duals: &DualTable,
    stack: &mut Vec<StackEntry>,
    watchdog: &Watchdog,
) -> std::result::Result<Vec<WeightedEdge>, Aborted> {
    let mut matched = Vec::new();
    while let Some(entry) = stack.pop() {
        let (u, v) = (entry.edge.u.index(), entry.edge.v.index());
        let mut polls = 0u32;
        loop {
            let zu = duals.z[u].load(Ordering::Acquire);
            let zv = duals.z[v].load(Ordering::Acquire);
            if zu + zv == entry.z_stamp {
                break;
            }
            debug_assert!(zu + zv > entry.z_stamp);
            polls += 1;
            if polls.is_multiple_of(POLLS_PER_YIELD) {
                watchdog.check()?;
                thread::yield_now();
            } else {
                std::hint::spin_loop();
            }
        }
        if !duals.mark[u].load(Ordering::Acquire) && !duals.mark[v].load(Ordering::Acquire) {
            duals.mark[u].store(true, Ordering::Release);
            duals.mark[v].store(true, Ordering::Release);
            matched.push(entry.edge);
        }
        // reverse duals before releasing the counters; a neighbour that turns
        // tight on our decrement may touch the same dual next
        duals.alpha[u].add(-entry.gain);
        duals.alpha[v].add(-entry.gain);
        duals.z[u].fetch_sub(1, Ordering::AcqRel);
        duals.z[v].fetch_sub(1, Ordering::AcqRel);
    }
    Ok(matched)
}

/// How a worker handles one streamed edge. Implemented by the ungrouped
/// engine here and by the grouped variant in [`crate::numa`].
pub(crate) trait StreamingPolicy: Sync {
    fn process(
        &self,
        worker: usize,
        e: &WeightedEdge,
        ws: &mut WorkerState,
        watchdog: &Watchdog,
    ) -> std::result::Result<EdgeOutcome, Aborted>;

    /// Number of dual-vector copies this policy keeps (for memory accounting).
    fn dual_copies(&self) -> usize {
        1
    }

    fn finish(&self, _result: &mut MatchingResult) {}
}

struct GlobalPolicy<'a> {
    duals: &'a DualTable,
    epsilon: f64,
    strategy: Strategy,
}

impl StreamingPolicy for GlobalPolicy<'_> {
    fn process(
        &self,
        _worker: usize,
        e: &WeightedEdge,
        ws: &mut WorkerState,
        watchdog: &Watchdog,
    ) -> std::result::Result<EdgeOutcome, Aborted> {
        match self.strategy {
            Strategy::NonDeferrable => process_edge(self.duals, e, self.epsilon, ws, watchdog),
            Strategy::Deferrable => Ok(process_edge_ds(self.duals, e, self.epsilon, ws)),
        }
    }
}

/// Output of one concurrent run.
#[derive(Debug, Clone, Default)]
pub struct MatchingResult {
    pub n: usize,
    pub k: usize,
    pub r: usize,
    pub epsilon: f64,
    pub matching: Matching,
    /// Per-worker partial matchings, in worker order.
    pub partial_matchings: Vec<Vec<WeightedEdge>>,
    /// Duals after streaming (and deferred replay). `(1 + eps)` times this
    /// vector is dual feasible for every processed edge.
    pub final_alpha: Vec<f64>,
    /// Duals after post-processing reversed every stacked gain.
    pub residual_alpha: Vec<f64>,
    pub residual_z: Vec<u64>,
    /// Sum of gains over all popped stack entries.
    pub popped_gain_sum: f64,
    /// Supersteps in the streaming phase, per worker.
    pub supersteps: Vec<u64>,
    pub stream_lengths: Vec<u64>,
    pub timings: PhaseTimings,
    pub access: AccessCounts,
    pub stacked_edge_count: u64,
    pub deferred_edge_count: u64,
    pub filtered_edge_count: u64,
    pub stack_log: Option<Vec<Vec<StackRecord>>>,
    pub workers: Vec<WorkerStats>,
    /// Largest number of group delegates seen holding one group lock at once.
    pub max_concurrent_delegates: usize,
    /// Local-cache dominance violations observed during streaming.
    pub dominance_violations: u64,
    pub dual_copies: usize,
    /// Augmentation rounds run by the amplified matcher.
    pub amplify_rounds: usize,
    /// Edges installed by augmentation.
    pub augmentations: u64,
}

impl MatchingResult {
    pub fn weight(&self) -> f64 {
        self.matching.weight()
    }

    pub fn alpha_sum(&self) -> f64 {
        self.final_alpha.iter().sum()
    }

    pub fn effective_iterations(&self) -> u64 {
        self.supersteps.iter().copied().max().unwrap_or(0)
    }

    pub fn global_access_count(&self) -> u64 {
        self.access.total()
    }
}

/// Runs the ungrouped matcher (`r = 1`) over `streams`, one worker per stream.
pub fn run_ps_mwm(streams: Vec<EdgeStream>, n: usize, config: &EngineConfig) -> Result<MatchingResult> {
    config.validate()?;
    if config.r != 1 {
        return Err(Error::Config(format!(
            "grouped duals (r = {}) need the grouped runner",
            config.r
        )));
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
    let policy = GlobalPolicy {
        duals: &duals,
        epsilon: config.epsilon,
        strategy: config.strategy,
    };
    execute(streams, &duals, &policy, config, pre_start)
}

/// Drives `k` workers through streaming, deferred replay, the barrier, and
/// stack post-processing.
pub(crate) fn execute<P: StreamingPolicy>(
    streams: Vec<EdgeStream>,
    duals: &DualTable,
    policy: &P,
    config: &EngineConfig,
    pre_start: Instant,
) -> Result<MatchingResult> {
    let n = duals.n();
    let k = streams.len();
    let watchdog = Watchdog::new(config.watchdog_seconds);
    let barrier = Barrier::new(k);
    let barrier_time: Mutex<Option<Instant>> = Mutex::new(None);
    let stream_errors: Mutex<Vec<Error>> = Mutex::new(Vec::new());
    let aborted = AtomicUsize::new(0);
    let mut snapshot = vec![0.0f64; n];
    let chunk = n.div_ceil(k).max(1);
    let pre_end = Instant::now();

    struct Out {
        matched: Vec<WeightedEdge>,
        gain_sum: f64,
        state: WorkerState,
        stream_len: u64,
        end: Instant,
    }

    let mut chunks: Vec<&mut [f64]> = snapshot.chunks_mut(chunk).collect();
    chunks.resize_with(k, || &mut []);

    let outs: Vec<Out> = thread::scope(|s| {
        let handles: Vec<_> = streams
            .into_iter()
            .zip(chunks)
            .enumerate()
            .map(|(worker, (mut stream, snap))| {
                let watchdog = &watchdog;
                let barrier = &barrier;
                let barrier_time = &barrier_time;
                let stream_errors = &stream_errors;
                let aborted = &aborted;
                s.spawn(move || {
                    let mut ws = WorkerState::new(config.record_stacks);
                    let mut filter = StreamFilter::new();
                    let mut failed = false;
                    for e in stream.by_ref() {
                        ws.stats.edges_read += 1;
                        if ws.stats.edges_read.is_multiple_of(1024) && watchdog.expired() {
                            failed = true;
                            break;
                        }
                        if config.normalization_enabled && !filter.keep(&e, n, config.epsilon) {
                            ws.stats.filtered += 1;
                            continue;
                        }
                        if policy.process(worker, &e, &mut ws, watchdog).is_err() {
                            failed = true;
                            break;
                        }
                    }
                    if let Some(err) = stream.take_error() {
                        stream_errors.lock().unwrap().push(err);
                    }
                    let streaming_supersteps = ws.stats.supersteps;
                    if !failed && !ws.deferred.is_empty() {
                        let deferred = std::mem::take(&mut ws.deferred);
                        for e in &deferred {
                            if process_edge(duals, e, config.epsilon, &mut ws, watchdog).is_err() {
                                failed = true;
                                break;
                            }
                        }
                        ws.deferred = deferred;
                    }
                    ws.stats.replay_supersteps = ws.stats.supersteps - streaming_supersteps;
                    ws.stats.supersteps = streaming_supersteps;

                    if barrier.wait().is_leader() {
                        *barrier_time.lock().unwrap() = Some(Instant::now());
                    }
                    let base = worker * chunk;
                    for (i, slot) in snap.iter_mut().enumerate() {
                        *slot = duals.alpha[base + i].load();
                    }
                    barrier.wait();

                    let mut stack = std::mem::take(&mut ws.stack);
                    let gain_sum: f64 = stack.iter().map(|x| x.gain).sum();
                    let matched = if failed || watchdog.tripped() {
                        aborted.fetch_add(1, Ordering::Relaxed);
                        Vec::new()
                    } else {
                        match process_stack(duals, &mut stack, watchdog) {
                            Ok(m) => m,
                            Err(Aborted) => {
                                aborted.fetch_add(1, Ordering::Relaxed);
                                Vec::new()
                            }
                        }
                    };
                    Out {
                        matched,
                        gain_sum,
                        state: ws,
                        stream_len: stream.yielded() as u64,
                        end: Instant::now(),
                    }
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });

    if watchdog.tripped() || aborted.load(Ordering::Relaxed) > 0 {
        return Err(Error::Watchdog(watchdog.limit_secs()));
    }
    if let Some(err) = stream_errors.into_inner().unwrap().into_iter().next() {
        return Err(err);
    }

    let barrier_at = barrier_time.into_inner().unwrap().unwrap_or(pre_end);
    let end = outs.iter().map(|o| o.end).max().unwrap_or(barrier_at);
    let mut result = MatchingResult {
        n,
        k,
        r: config.r,
        epsilon: config.epsilon,
        final_alpha: snapshot,
        residual_alpha: duals.alpha_snapshot(),
        residual_z: duals.z_snapshot(),
        timings: PhaseTimings {
            preprocessing: pre_end.duration_since(pre_start),
            streaming: barrier_at.duration_since(pre_end),
            postprocessing: end.duration_since(barrier_at),
        },
        dual_copies: policy.dual_copies(),
        ..Default::default()
    };
    let mut logs = Vec::new();
    for out in outs {
        let st = out.state;
        result.supersteps.push(st.stats.supersteps);
        result.stream_lengths.push(out.stream_len);
        result.stacked_edge_count += st.stats.stacked;
        result.deferred_edge_count += st.stats.deferred;
        result.filtered_edge_count += st.stats.filtered;
        result.access.global_reads += st.stats.global_reads;
        result.access.global_writes += st.stats.global_writes;
        result.access.global_lock_ops += st.stats.global_lock_ops;
        result.popped_gain_sum += out.gain_sum;
        if let Some(log) = st.log {
            logs.push(log);
        }
        result.workers.push(st.stats);
        result.matching.edges.extend_from_slice(&out.matched);
        result.partial_matchings.push(out.matched);
    }
    if config.record_stacks {
        result.stack_log = Some(logs);
    }
    policy.finish(&mut result);
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::streams::streams_from_vecs;
    use std::time::Duration;

    fn e(u: u32, v: u32, w: f64) -> WeightedEdge {
        WeightedEdge::new(u, v, w)
    }

    fn fresh(n: usize) -> (DualTable, WorkerState, Watchdog) {
        (DualTable::new(n), WorkerState::new(true), Watchdog::new(10.0))
    }

    #[test]
    fn first_edge_always_stacked() {
        let (d, mut ws, wd) = fresh(3);
        let out = process_edge(&d, &e(0, 1, 10.0), 0.5, &mut ws, &wd).unwrap();
        assert_eq!(out, EdgeOutcome::Stacked);
        assert_eq!(ws.stack[0].gain, 10.0);
        assert_eq!((d.alpha(VertexId(0)), d.alpha(VertexId(1))), (10.0, 10.0));
        assert_eq!((d.z(VertexId(0)), d.z(VertexId(1))), (1, 1));
        assert_eq!(ws.stack[0].z_stamp, 2);

        // 5 <= 1.5 * (10 + 0)
        let out = process_edge(&d, &e(1, 2, 5.0), 0.5, &mut ws, &wd).unwrap();
        assert_eq!(out, EdgeOutcome::Skipped);
        assert_eq!(d.alpha(VertexId(2)), 0.0);
        assert_eq!(d.z(VertexId(2)), 0);
    }

    #[test]
    fn ties_are_skipped() {
        let (d, mut ws, wd) = fresh(3);
        process_edge(&d, &e(0, 1, 4.0), 1.0, &mut ws, &wd).unwrap();
        // 8 == (1 + 1) * (4 + 0)
        assert_eq!(process_edge(&d, &e(1, 2, 8.0), 1.0, &mut ws, &wd).unwrap(), EdgeOutcome::Skipped);
    }

    #[test]
    fn triangle_trace() {
        let (d, mut ws, wd) = fresh(3);
        let eps = 1e-6;
        let tri = [e(0, 1, 10.0), e(1, 2, 12.0), e(0, 2, 8.0)];
        let outs: Vec<_> = tri.iter().map(|x| process_edge(&d, x, eps, &mut ws, &wd).unwrap()).collect();
        assert_eq!(outs, vec![EdgeOutcome::Stacked, EdgeOutcome::Stacked, EdgeOutcome::Skipped]);
        assert_eq!(ws.stack.len(), 2);
        assert_eq!(ws.stack[1].gain, 2.0);
        assert_eq!(d.alpha_snapshot(), vec![10.0, 12.0, 2.0]);
        assert_eq!(ws.stack[1].z_stamp, 3);

        let m = process_stack(&d, &mut ws.stack, &wd).unwrap();
        assert_eq!(m, vec![e(1, 2, 12.0)]);
        assert_eq!(d.z_snapshot(), vec![0, 0, 0]);
        assert_eq!(d.alpha_snapshot(), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn ds_uncontended_matches_nd() {
        let (d1, mut w1, wd) = fresh(4);
        let (d2, mut w2, _) = fresh(4);
        for x in [e(0, 1, 3.0), e(1, 2, 9.0), e(2, 3, 4.0), e(0, 3, 20.0)] {
            let a = process_edge(&d1, &x, 0.1, &mut w1, &wd).unwrap();
            let b = process_edge_ds(&d2, &x, 0.1, &mut w2);
            assert_eq!(a, b);
        }
        assert_eq!(d1.alpha_snapshot(), d2.alpha_snapshot());
        assert_eq!(w1.stack, w2.stack);
    }

    #[test]
    fn ds_contended() {
        let (d, mut ws, _) = fresh(3);
        d.lock(VertexId(1)).try_lock();
        assert_eq!(process_edge_ds(&d, &e(0, 1, 5.0), 0.1, &mut ws), EdgeOutcome::Deferred);
        assert_eq!(ws.deferred, vec![e(0, 1, 5.0)]);
        assert_eq!(d.alpha(VertexId(0)), 0.0);
        assert!(!d.lock(VertexId(0)).is_locked());

        // make the edge ineligible while the lock is still held elsewhere
        d.alpha[1].store(100.0);
        assert_eq!(process_edge_ds(&d, &e(0, 1, 5.0), 0.1, &mut ws), EdgeOutcome::Skipped);
        assert_eq!(ws.deferred.len(), 1);
    }

    #[test]
    fn nd_waits_out_contention() {
        let (d, mut ws, wd) = fresh(2);
        d.lock(VertexId(0)).try_lock();
        thread::scope(|s| {
            s.spawn(|| {
                thread::sleep(Duration::from_millis(20));
                d.lock(VertexId(0)).unlock();
            });
            let out = process_edge(&d, &e(0, 1, 5.0), 0.1, &mut ws, &wd).unwrap();
            assert_eq!(out, EdgeOutcome::Stacked);
        });
        assert!(ws.stats.supersteps > 1);
    }

    #[test]
    fn nd_gives_up_when_edge_goes_stale() {
        let (d, mut ws, wd) = fresh(2);
        d.lock(VertexId(1)).try_lock();
        thread::scope(|s| {
            s.spawn(|| {
                thread::sleep(Duration::from_millis(5));
                d.alpha[1].store(50.0);
            });
            let out = process_edge(&d, &e(0, 1, 5.0), 0.1, &mut ws, &wd).unwrap();
            assert_eq!(out, EdgeOutcome::Skipped);
        });
    }

    #[test]
    fn watchdog_breaks_lock_spin() {
        let (d, mut ws, _) = fresh(2);
        let wd = Watchdog::new(0.01);
        d.lock(VertexId(0)).try_lock();
        assert_eq!(process_edge(&d, &e(0, 1, 5.0), 0.1, &mut ws, &wd), Err(Aborted));
    }

    #[test]
    fn single_and_disjoint_stacks() {
        let (d, mut ws, wd) = fresh(2);
        process_edge(&d, &e(0, 1, 1.0), 0.1, &mut ws, &wd).unwrap();
        assert_eq!(process_stack(&d, &mut ws.stack, &wd).unwrap().len(), 1);

        let cfg = EngineConfig::default().with_k(2);
        let r = run_ps_mwm(streams_from_vecs(vec![vec![e(0, 1, 3.0)], vec![e(2, 3, 4.0)]]), 4, &cfg).unwrap();
        assert_eq!(r.partial_matchings, vec![vec![e(0, 1, 3.0)], vec![e(2, 3, 4.0)]]);
    }

    #[test]
    fn empty_run() {
        let cfg = EngineConfig::default().with_k(3);
        let r = run_ps_mwm(streams_from_vecs(vec![vec![], vec![], vec![]]), 5, &cfg).unwrap();
        assert!(r.matching.is_empty());
        assert_eq!(r.final_alpha, vec![0.0; 5]);
        assert_eq!(r.effective_iterations(), 0);
    }

    #[test]
    fn config_errors() {
        let cfg = EngineConfig::default().with_k(2);
        assert!(matches!(
            run_ps_mwm(streams_from_vecs(vec![vec![]]), 2, &cfg),
            Err(Error::Config(_))
        ));
        let cfg = EngineConfig::default().with_k(2).with_r(2);
        assert!(matches!(
            run_ps_mwm(streams_from_vecs(vec![vec![], vec![]]), 2, &cfg),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn normalization_drops_tiny_edges() {
        let mut cfg = EngineConfig::default().with_epsilon(0.5);
        cfg.normalization_enabled = true;
        let r = run_ps_mwm(streams_from_vecs(vec![vec![e(0, 1, 1.0), e(2, 3, 1e-12)]]), 4, &cfg).unwrap();
        assert_eq!(r.filtered_edge_count, 1);
        assert_eq!(r.matching.len(), 1);
        assert_eq!(r.final_alpha[2], 0.0);
    }
}
