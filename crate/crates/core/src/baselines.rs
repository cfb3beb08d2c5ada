//! Reference algorithms: the single-stack sequential local-ratio matcher,
//! the replace-if-twice streaming matcher, offline greedy, and an exhaustive
//! exact solver for small instances.

use std::time::Instant;

use crate::engine::{MatchingResult, StackEntry, StackRecord};
use crate::error::{Error, Result};
use crate::graph::{GraphSnapshot, Matching, WeightedEdge};
use crate::metrics::PhaseTimings;

/// Size limits for [`exact_mwm`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleBudget {
    pub max_n: usize,
    pub max_edges: usize,
}

impl Default for OracleBudget {
    fn default() -> Self {
        OracleBudget { max_n: 12, max_edges: 40 }
    }
}

impl OracleBudget {
    pub fn admits(&self, g: &GraphSnapshot) -> bool {
        g.n <= self.max_n && g.m() <= self.max_edges
    }
}

/// The single-stream local-ratio algorithm with one stack and no locks.
/// Identical arithmetic to one engine worker, so a one-stream engine run must
/// reproduce its matching exactly.
pub fn sequential_local_ratio<'a>(
    stream: impl IntoIterator<Item = &'a WeightedEdge>,
    n: usize,
    epsilon: f64,
) -> MatchingResult {
    let start = Instant::now();
    let mut alpha = vec![0.0f64; n];
    let mut stack: Vec<StackEntry> = Vec::new();
    let mut log = Vec::new();
    let mut read = 0u64;
    let stream_start = Instant::now();
    for e in stream {
        read += 1;
        let (u, v) = (e.u.index(), e.v.index());
        let sum = alpha[u] + alpha[v];
        if e.w <= (1.0 + epsilon) * sum {
            continue;
        }
        let gain = e.w - sum;
        alpha[u] += gain;
        alpha[v] += gain;
        let entry = StackEntry {
            edge: *e,
            gain,
            z_stamp: 0,
        };
        stack.push(entry);
        log.push(StackRecord {
            entry,
            alpha_sum_before: sum,
        });
    }
    let post_start = Instant::now();
    let final_alpha = alpha.clone();
    let mut marked = vec![false; n];
    let mut matched = Vec::new();
    let mut popped = 0.0;
    while let Some(entry) = stack.pop() {
        let (u, v) = (entry.edge.u.index(), entry.edge.v.index());
        if !marked[u] && !marked[v] {
            marked[u] = true;
            marked[v] = true;
            matched.push(entry.edge);
        }
        alpha[u] -= entry.gain;
        alpha[v] -= entry.gain;
        popped += entry.gain;
    }
    MatchingResult {
        n,
        k: 1,
        r: 1,
        epsilon,
        matching: Matching::from_edges(matched.clone()),
        partial_matchings: vec![matched],
        final_alpha,
        residual_alpha: alpha,
        residual_z: vec![0; n],
        popped_gain_sum: popped,
        supersteps: vec![read],
        stream_lengths: vec![read],
        timings: PhaseTimings {
            preprocessing: stream_start.duration_since(start),
            streaming: post_start.duration_since(stream_start),
            postprocessing: post_start.elapsed(),
        },
        stacked_edge_count: log.len() as u64,
        stack_log: Some(vec![log]),
        dual_copies: 1,
        ..Default::default()
    }
}

/// Streaming matcher that replaces the incident matched edges with a new
/// edge only when it weighs strictly more than twice their total.
pub fn feigenbaum_stream<'a>(stream: impl IntoIterator<Item = &'a WeightedEdge>, n: usize) -> Matching {
    // slot index into `held` for each vertex
    let mut at: Vec<Option<usize>> = vec![None; n];
    let mut held: Vec<Option<WeightedEdge>> = Vec::new();
    for e in stream {
        let (u, v) = (e.u.index(), e.v.index());
        let su = at[u];
        let sv = at[v];
        let mut incident = 0.0;
        if let Some(i) = su {
            incident += held[i].map_or(0.0, |x| x.w);
        }
        if let Some(j) = sv {
            if su != Some(j) {
                incident += held[j].map_or(0.0, |x| x.w);
            }
        }
        if e.w <= 2.0 * incident {
            continue;
        }
        for slot in [su, sv].into_iter().flatten() {
            if let Some(old) = held[slot].take() {
                at[old.u.index()] = None;
                at[old.v.index()] = None;
            }
        }
        held.push(Some(*e));
        at[u] = Some(held.len() - 1);
        at[v] = Some(held.len() - 1);
    }
    Matching::from_edges(held.into_iter().flatten().collect())
}

/// Largest edge count [`offline_greedy`] will sort.
pub const GREEDY_MAX_EDGES: usize = 1 << 27;

/// Heaviest-first greedy. Ties go to the smaller `(min id, max id)` pair.
pub fn offline_greedy(snapshot: &GraphSnapshot) -> Result<Matching> {
    if snapshot.m() > GREEDY_MAX_EDGES {
        return Err(Error::Budget(format!(
            "greedy refuses {} edges (limit {GREEDY_MAX_EDGES})",
            snapshot.m()
        )));
    }
    let mut order: Vec<&WeightedEdge> = snapshot.edges.iter().collect();
    order.sort_by(|a, b| b.w.total_cmp(&a.w).then_with(|| a.ordered().cmp(&b.ordered())));
    let mut used = vec![false; snapshot.n];
    let mut out = Vec::new();
    for e in order {
        let (u, v) = (e.u.index(), e.v.index());
        if !used[u] && !used[v] {
            used[u] = true;
            used[v] = true;
            out.push(*e);
        }
    }
    Ok(Matching::from_edges(out))
}

/// Exhaustive maximum weight matching: include/exclude branching over the
/// edge list with vertex-availability and remaining-weight pruning.
pub fn exact_mwm(snapshot: &GraphSnapshot, budget: OracleBudget) -> Result<(Matching, f64)> {
    if !budget.admits(snapshot) {
        return Err(Error::Budget(format!(
            "exact oracle limited to n <= {} and m <= {}, got n = {} m = {}",
            budget.max_n,
            budget.max_edges,
            snapshot.n,
            snapshot.m()
        )));
    }
    let edges = &snapshot.edges;
    // suffix[i] = total weight of edges[i..]
    let mut suffix = vec![0.0; edges.len() + 1];
    for i in (0..edges.len()).rev() {
        suffix[i] = suffix[i + 1] + edges[i].w;
    }
    struct Search<'a> {
        edges: &'a [WeightedEdge],
        suffix: Vec<f64>,
        used: Vec<bool>,
        chosen: Vec<usize>,
        best: f64,
        best_set: Vec<usize>,
    }
    impl Search<'_> {
        fn go(&mut self, i: usize, weight: f64) {
            if weight > self.best {
                self.best = weight;
                self.best_set = self.chosen.clone();
            }
            if i == self.edges.len() || weight + self.suffix[i] <= self.best {
                return;
            }
            let e = self.edges[i];
            let (u, v) = (e.u.index(), e.v.index());
            if !self.used[u] && !self.used[v] {
                self.used[u] = true;
                self.used[v] = true;
                self.chosen.push(i);
                self.go(i + 1, weight + e.w);
                self.chosen.pop();
                self.used[u] = false;
                self.used[v] = false;
            }
            self.go(i + 1, weight);
        }
    }
    let mut s = Search {
        edges,
        suffix,
        used: vec![false; snapshot.n],
        chosen: Vec::new(),
        best: 0.0,
        best_set: Vec::new(),
    };
    s.go(0, 0.0);
    let m = Matching::from_edges(s.best_set.iter().map(|&i| edges[i]).collect());
    let w = m.weight();
    Ok((m, w))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(u: u32, v: u32, w: f64) -> WeightedEdge {
        WeightedEdge::new(u, v, w)
    }

    fn triangle() -> Vec<WeightedEdge> {
        vec![e(0, 1, 10.0), e(1, 2, 12.0), e(0, 2, 8.0)]
    }

    #[test]
    fn local_ratio_examples() {
        let r = sequential_local_ratio(&triangle(), 3, 1e-6);
        assert_eq!(r.matching.edges, vec![e(1, 2, 12.0)]);
        assert_eq!(r.final_alpha, vec![10.0, 12.0, 2.0]);
        assert_eq!(r.supersteps, vec![3]);
        let r = sequential_local_ratio(&[e(0, 1, 3.0)], 2, 0.1);
        assert_eq!(r.matching.len(), 1);
        let r = sequential_local_ratio(&[], 2, 0.1);
        assert!(r.matching.is_empty());
    }

    #[test]
    fn feigenbaum_examples() {
        assert_eq!(feigenbaum_stream(&[e(0, 1, 1.0)], 2).len(), 1);
        let m = feigenbaum_stream(&[e(0, 1, 10.0), e(1, 2, 21.0)], 3);
        assert_eq!(m.edges, vec![e(1, 2, 21.0)]);
        let m = feigenbaum_stream(&[e(0, 1, 10.0), e(1, 2, 20.0)], 3);
        assert_eq!(m.edges, vec![e(0, 1, 10.0)]);
        // both endpoints matched: 25 <= 2 * (10 + 3)
        let m = feigenbaum_stream(&[e(0, 1, 10.0), e(2, 3, 3.0), e(1, 2, 25.0)], 4);
        assert_eq!(m.len(), 2);
        let m = feigenbaum_stream(&[e(0, 1, 10.0), e(2, 3, 3.0), e(1, 2, 27.0)], 4);
        assert_eq!(m.edges, vec![e(1, 2, 27.0)]);
        // parallel edge counts the held copy once
        let m = feigenbaum_stream(&[e(0, 1, 10.0), e(1, 0, 21.0)], 2);
        assert_eq!(m.edges, vec![e(1, 0, 21.0)]);
    }

    #[test]
    fn greedy_examples() {
        let g = GraphSnapshot::new(3, triangle());
        assert_eq!(offline_greedy(&g).unwrap().edges, vec![e(1, 2, 12.0)]);
        let star = GraphSnapshot::new(4, vec![e(0, 1, 5.0), e(0, 2, 4.0), e(0, 3, 3.0)]);
        let m = offline_greedy(&star).unwrap();
        assert_eq!(m.weight(), 5.0);
        assert_eq!(m.len(), 1);
        assert!(offline_greedy(&GraphSnapshot::new(3, vec![])).unwrap().is_empty());
        // tie: (0,1) before (2,3)? both weight 2, disjoint, so both; (1,2) tie loses to (0,1)
        let g = GraphSnapshot::new(3, vec![e(2, 1, 2.0), e(1, 0, 2.0)]);
        assert_eq!(offline_greedy(&g).unwrap().edges, vec![e(1, 0, 2.0)]);
    }

    #[test]
    fn exact_examples() {
        let b = OracleBudget::default();
        assert_eq!(exact_mwm(&GraphSnapshot::new(3, triangle()), b).unwrap().1, 12.0);
        let path = GraphSnapshot::new(3, vec![e(0, 1, 3.0), e(1, 2, 3.0)]);
        assert_eq!(exact_mwm(&path, b).unwrap().1, 3.0);
        let two = GraphSnapshot::new(4, vec![e(0, 1, 5.0), e(2, 3, 7.0)]);
        let (m, w) = exact_mwm(&two, b).unwrap();
        assert_eq!(w, 12.0);
        assert_eq!(m.len(), 2);
        assert!(exact_mwm(&GraphSnapshot::new(13, vec![]), b).is_err());
        let many = GraphSnapshot::new(10, (0..41).map(|i| e(i % 9, 9, 1.0)).collect());
        assert!(matches!(exact_mwm(&many, b), Err(Error::Budget(_))));
    }
}
