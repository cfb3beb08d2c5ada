//! Parallel post-processing by repeated augmentation. Streaming runs with
//! the deferrable strategy and keeps both stacked and deferred edges as
//! candidates. Each round then computes, for every candidate not already
//! matched, its gain over the matched edges at its endpoints, builds a
//! maximal matching of the positive-gain edges class by class (heaviest
//! geometric class first), and installs that matching by augmentation.

use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Barrier, Mutex};
use std::thread;
use std::time::Instant;

use crate::engine::{process_edge_ds, DualTable, MatchingResult, WorkerState};
use crate::error::{Error, Result};
use crate::graph::{EngineConfig, Matching, StreamFilter, VertexId, WeightedEdge};
use crate::metrics::PhaseTimings;
use crate::streams::EdgeStream;
use crate::sync::{try_lock_pair, Aborted, Backoff, TryLock, Watchdog};

const EMPTY: u64 = 0;

/// Default round count: `ceil(8 ln(2 / eps))`.
pub fn default_rounds(epsilon: f64) -> usize {
    (8.0 * (2.0 / epsilon).ln()).ceil().max(1.0) as usize
}

/// Mutual-partner representation of a matching over a fixed edge list.
/// `slot[x]` holds `1 + id` of the edge `x` is matched through, or 0.
#[derive(Debug)]
pub struct PartnerTable {
    edges: Vec<WeightedEdge>,
    slot: Vec<AtomicU64>,
    locks: Vec<TryLock>,
}

impl PartnerTable {
    pub fn new(n: usize, edges: Vec<WeightedEdge>) -> Self {
        PartnerTable {
            edges,
            slot: (0..n).map(|_| AtomicU64::new(EMPTY)).collect(),
            locks: (0..n).map(|_| TryLock::new()).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.slot.len()
    }

    pub fn edges(&self) -> &[WeightedEdge] {
        &self.edges
    }

    /// Edge id `x` is matched through.
    pub fn edge_of(&self, x: VertexId) -> Option<usize> {
        match self.slot[x.index()].load(Ordering::Acquire) {
            EMPTY => None,
            s => Some((s - 1) as usize),
        }
    }

    /// `M(x)`.
    pub fn partner(&self, x: VertexId) -> Option<VertexId> {
        self.edge_of(x).map(|id| {
            let e = self.edges[id];
            if e.u == x {
                e.v
            } else {
                e.u
            }
        })
    }

    /// Weight of the edge `x` is matched through; 0 when free or one-sided.
    pub fn matched_weight(&self, x: VertexId) -> f64 {
        match self.edge_of(x) {
            Some(id) if self.is_mutual(id) => self.edges[id].w,
            _ => 0.0,
        }
    }

    /// True iff both endpoints of edge `id` point at each other.
    pub fn is_mutual(&self, id: usize) -> bool {
        let e = self.edges[id];
        self.partner(e.u) == Some(e.v) && self.partner(e.v) == Some(e.u)
    }

    /// True iff every non-empty entry is returned by its partner.
    pub fn is_consistent(&self) -> bool {
        (0..self.n() as u32).all(|x| match self.partner(VertexId(x)) {
            None => true,
            Some(y) => self.partner(y) == Some(VertexId(x)),
        })
    }

    pub fn snapshot(&self) -> Vec<Option<usize>> {
        (0..self.n() as u32).map(|x| self.edge_of(VertexId(x))).collect()
    }

    /// Matching read off the mutual pairs.
    pub fn matching(&self) -> Matching {
        let mut out = Vec::new();
        for x in 0..self.n() as u32 {
            if let Some(id) = self.edge_of(VertexId(x)) {
                let e = self.edges[id];
                if e.ordered().0 == VertexId(x) && self.is_mutual(id) {
                    out.push(e);
                }
            }
        }
        Matching::from_edges(out)
    }

    fn set(&self, x: VertexId, id: Option<usize>) {
        let v = id.map_or(EMPTY, |i| i as u64 + 1);
        self.slot[x.index()].store(v, Ordering::Release);
    }
}

/// Installs edge `id` into the table. For each endpoint `x` with current
/// partner `y`, `y` is detached (if it still points at `x`) under the locks
/// of `x` and `y`, then `x` is pointed at the other endpoint.
pub fn augment_matching(table: &PartnerTable, id: usize, watchdog: &Watchdog) -> std::result::Result<(), Aborted> {
    let e = table.edges[id];
    for x in [e.u, e.v] {
        let Some(y) = table.partner(x) else {
            table.set(x, Some(id));
            continue;
        };
        let (a, b) = if x < y { (x, y) } else { (y, x) };
        let (la, lb) = (&table.locks[a.index()], &table.locks[b.index()]);
        let mut backoff = Backoff::new();
        while !try_lock_pair(la, lb) {
            watchdog.check()?;
            backoff.wait();
        }
        if table.partner(y) == Some(x) {
            table.set(y, None);
        }
        table.set(x, Some(id));
        lb.unlock();
        la.unlock();
    }
    Ok(())
}

/// Geometric class of a positive weight: `floor(log_{1+eps} w)`.
fn class_of(w: f64, log_base: f64) -> i64 {
    (w.ln() / log_base).floor() as i64
}

/// Maximal matching built class by class over the union of `sets`.
/// Classes are processed heaviest first with a barrier between classes;
/// within a class each worker claims its own edges under per-vertex locks.
/// Returns, per worker, the indices of its committed edges. All weights
/// must be positive.
pub fn reduce_to_maximal(
    sets: &[Vec<WeightedEdge>],
    n: usize,
    epsilon: f64,
    watchdog: &Watchdog,
) -> std::result::Result<Vec<Vec<usize>>, Aborted> {
    let k = sets.len();
    if k == 0 {
        return Ok(Vec::new());
    }
    let log_base = (1.0 + epsilon).ln();
    // per worker: (class, index) sorted heaviest class first
    let ordered: Vec<Vec<(i64, usize)>> = sets
        .iter()
        .map(|set| {
            let mut v: Vec<(i64, usize)> = set.iter().enumerate().map(|(i, e)| (class_of(e.w, log_base), i)).collect();
            v.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
            v
        })
        .collect();
    let mut classes: Vec<i64> = ordered.iter().flatten().map(|&(c, _)| c).collect();
    classes.sort_unstable_by(|a, b| b.cmp(a));
    classes.dedup();

    let marks: Vec<AtomicBool> = (0..n).map(|_| AtomicBool::new(false)).collect();
    let locks: Vec<TryLock> = (0..n).map(|_| TryLock::new()).collect();
    let barrier = Barrier::new(k);
    let failed = AtomicBool::new(false);

    let results: Vec<Vec<usize>> = thread::scope(|s| {
        let handles: Vec<_> = ordered
            .iter()
            .zip(sets)
            .map(|(order, set)| {
                let (marks, locks, barrier, classes, failed) = (&marks, &locks, &barrier, &classes, &failed);
                s.spawn(move || {
                    let mut chosen = Vec::new();
                    let mut next = 0;
                    for &c in classes {
                        while next < order.len() && order[next].0 == c && !failed.load(Ordering::Relaxed) {
                            let i = order[next].1;
                            next += 1;
                            let e = set[i];
                            let (a, b) = e.ordered();
                            let (ia, ib) = (a.index(), b.index());
                            if marks[ia].load(Ordering::Acquire) || marks[ib].load(Ordering::Acquire) {
                                continue;
                            }
                            let mut backoff = Backoff::new();
                            while !try_lock_pair(&locks[ia], &locks[ib]) {
                                if watchdog.check().is_err() {
                                    failed.store(true, Ordering::Relaxed);
                                    break;
                                }
                                backoff.wait();
                            }
                            if failed.load(Ordering::Relaxed) {
                                break;
                            }
                            if !marks[ia].load(Ordering::Acquire) && !marks[ib].load(Ordering::Acquire) {
                                marks[ia].store(true, Ordering::Release);
                                marks[ib].store(true, Ordering::Release);
                                chosen.push(i);
                            }
                            locks[ib].unlock();
                            locks[ia].unlock();
                        }
                        barrier.wait();
                    }
                    chosen
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("class worker panicked")).collect()
    });
    if failed.load(Ordering::Relaxed) {
        return Err(Aborted);
    }
    Ok(results)
}

/// One augmentation round over candidate edge ids (per worker). Returns the
/// number of edges installed.
pub fn amplify_round(
    table: &PartnerTable,
    candidates: &[Vec<usize>],
    epsilon: f64,
    watchdog: &Watchdog,
) -> std::result::Result<usize, Aborted> {
    let edges = table.edges();
    let mut ids: Vec<Vec<usize>> = Vec::with_capacity(candidates.len());
    let mut residual: Vec<Vec<WeightedEdge>> = Vec::with_capacity(candidates.len());
    for set in candidates {
        let mut worker_ids = Vec::new();
        let mut worker_edges = Vec::new();
        for &id in set {
            let e = edges[id];
            if table.partner(e.u) == Some(e.v) && table.partner(e.v) == Some(e.u) {
                continue;
            }
            let gain = e.w - table.matched_weight(e.u) - table.matched_weight(e.v);
            if gain > 0.0 {
                worker_ids.push(id);
                worker_edges.push(WeightedEdge { w: gain, ..e });
            }
        }
        ids.push(worker_ids);
        residual.push(worker_edges);
    }
    if residual.iter().all(Vec::is_empty) {
        return Ok(0);
    }
    let chosen = reduce_to_maximal(&residual, table.n(), epsilon, watchdog)?;
    let installed = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    thread::scope(|s| {
        for (worker_ids, picks) in ids.iter().zip(&chosen) {
            let (installed, failed) = (&installed, &failed);
            s.spawn(move || {
                for &i in picks {
                    if augment_matching(table, worker_ids[i], watchdog).is_err() {
                        failed.store(true, Ordering::Relaxed);
                        return;
                    }
                    installed.fetch_add(1, Ordering::Relaxed);
                }
            });
        }
    });
    if failed.load(Ordering::Relaxed) {
        return Err(Aborted);
    }
    Ok(installed.into_inner())
}

/// Runs up to `rounds` augmentation rounds, stopping early at the first
/// round that installs nothing (every later round would be identical).
/// Returns `(rounds run, edges installed)`.
pub fn amplify(
    table: &PartnerTable,
    candidates: &[Vec<usize>],
    epsilon: f64,
    rounds: usize,
    watchdog: &Watchdog,
) -> std::result::Result<(usize, u64), Aborted> {
    let mut installed = 0u64;
    for t in 0..rounds {
        let c = amplify_round(table, candidates, epsilon, watchdog)?;
        installed += c as u64;
        if c == 0 {
            return Ok((t + 1, installed));
        }
    }
    Ok((rounds, installed))
}

/// Everything a run produces, including the final partner table and the
/// candidate ids each worker contributed.
#[derive(Debug)]
pub struct PrOutcome {
    pub result: MatchingResult,
    pub table: PartnerTable,
    pub candidates: Vec<Vec<usize>>,
}

/// Streams with the deferrable strategy (whatever `config.strategy` says),
/// then amplifies. `rounds_override` caps the default round count.
pub fn run_ps_mwm_pr(
    streams: Vec<EdgeStream>,
    n: usize,
    config: &EngineConfig,
    rounds_override: Option<usize>,
) -> Result<MatchingResult> {
    run_ps_mwm_pr_detailed(streams, n, config, rounds_override).map(|o| o.result)
}

pub fn run_ps_mwm_pr_detailed(
    streams: Vec<EdgeStream>,
    n: usize,
    config: &EngineConfig,
    rounds_override: Option<usize>,
) -> Result<PrOutcome> {
    config.validate()?;
    if config.r != 1 {
        return Err(Error::Config("amplified matcher runs with ungrouped duals (r = 1)".into()));
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
    let watchdog = Watchdog::new(config.watchdog_seconds);
    let stream_errors: Mutex<Vec<Error>> = Mutex::new(Vec::new());
    let pre_end = Instant::now();

    let states: Vec<(WorkerState, u64)> = thread::scope(|s| {
        let handles: Vec<_> = streams
            .into_iter()
            .map(|mut stream| {
                let (duals, watchdog, stream_errors) = (&duals, &watchdog, &stream_errors);
                s.spawn(move || {
                    let mut ws = WorkerState::new(false);
                    let mut filter = StreamFilter::new();
                    for e in stream.by_ref() {
                        ws.stats.edges_read += 1;
                        if ws.stats.edges_read.is_multiple_of(1024) && watchdog.expired() {
                            break;
                        }
                        if config.normalization_enabled && !filter.keep(&e, n, config.epsilon) {
                            ws.stats.filtered += 1;
                            continue;
                        }
                        process_edge_ds(duals, &e, config.epsilon, &mut ws);
                    }
                    if let Some(err) = stream.take_error() {
                        stream_errors.lock().unwrap().push(err);
                    }
                    let len = stream.yielded() as u64;
                    (ws, len)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("stream worker panicked")).collect()
    });
    if watchdog.tripped() {
        return Err(Error::Watchdog(watchdog.limit_secs()));
    }
    if let Some(err) = stream_errors.into_inner().unwrap().into_iter().next() {
        return Err(err);
    }
    let barrier_at = Instant::now();

    let mut all_edges = Vec::new();
    let mut candidates = Vec::with_capacity(states.len());
    for (ws, _) in &states {
        let mut ids = Vec::with_capacity(ws.stack.len() + ws.deferred.len());
        for e in ws.stack.iter().map(|x| &x.edge).chain(&ws.deferred) {
            ids.push(all_edges.len());
            all_edges.push(*e);
        }
        candidates.push(ids);
    }
    let table = PartnerTable::new(n, all_edges);
    let rounds = rounds_override.map_or(default_rounds(config.epsilon), |cap| cap.min(default_rounds(config.epsilon)));
    let (rounds_run, installed) =
        amplify(&table, &candidates, config.epsilon, rounds, &watchdog).map_err(|_| Error::Watchdog(watchdog.limit_secs()))?;
    let end = Instant::now();

    let alpha = duals.alpha_snapshot();
    let mut result = MatchingResult {
        n,
        k: config.k,
        r: 1,
        epsilon: config.epsilon,
        matching: table.matching(),
        final_alpha: alpha.clone(),
        residual_alpha: alpha,
        residual_z: duals.z_snapshot(),
        timings: PhaseTimings {
            preprocessing: pre_end.duration_since(pre_start),
            streaming: barrier_at.duration_since(pre_end),
            postprocessing: end.duration_since(barrier_at),
        },
        dual_copies: 1,
        amplify_rounds: rounds_run,
        augmentations: installed,
        ..Default::default()
    };
    for (ws, len) in states {
        result.supersteps.push(ws.stats.supersteps);
        result.stream_lengths.push(len);
        result.stacked_edge_count += ws.stats.stacked;
        result.deferred_edge_count += ws.stats.deferred;
        result.filtered_edge_count += ws.stats.filtered;
        result.access.global_reads += ws.stats.global_reads;
        result.access.global_writes += ws.stats.global_writes;
        result.access.global_lock_ops += ws.stats.global_lock_ops;
        result.popped_gain_sum += ws.stack.iter().map(|x| x.gain).sum::<f64>();
        result.workers.push(ws.stats);
    }
    Ok(PrOutcome {
        result,
        table,
        candidates,
    })
}
