//! Edge streams: synthetic generators, partitioning into per-worker streams,
//! and the binary stream file format.
//!
//! File layout (all little-endian):
//!
//! ```text
//! offset  size  field
//! 0       8     magic "PSTRM1\0\0"
//! 8       8     n (vertex count, u64)
//! 16      8     record count (u64)
//! 24      24*c  records: u (u64), v (u64), w (f64)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::thread;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::WeightedEdge;

pub const MAGIC: [u8; 8] = *b"PSTRM1\0\0";
pub const HEADER_LEN: u64 = 24;
pub const RECORD_LEN: u64 = 24;

/// splitmix64 finalizer; derives independent seeds for sub-streams.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_for(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, index))
}

// sub-stream indices
const TOPOLOGY: u64 = 0;
const WEIGHTS: u64 = 1;
const SEED_GRAPH: u64 = 2;
const SHUFFLE: u64 = 3;

/// Closed interval edge weights are drawn from uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightRange {
    pub lo: f64,
    pub hi: f64,
}

impl WeightRange {
    pub fn new(lo: f64, hi: f64) -> Self {
        WeightRange { lo, hi }
    }

    /// `[1, n^2]`.
    pub fn square(n: usize) -> Self {
        let n = n as f64;
        WeightRange { lo: 1.0, hi: (n * n).max(1.0) }
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.hi <= self.lo {
            return self.lo;
        }
        rng.gen_range(self.lo..=self.hi)
    }

    fn check(&self) -> Result<()> {
        if !(self.lo > 0.0 && self.lo.is_finite() && self.hi.is_finite() && self.hi >= self.lo) {
            return Err(Error::Config(format!("bad weight range [{}, {}]", self.lo, self.hi)));
        }
        Ok(())
    }
}

/// Erdős–Rényi `G(n, p)` with weights uniform in `[1, n^2]`.
pub fn gen_er(n: usize, p: f64, seed: u64) -> Result<Vec<WeightedEdge>> {
    gen_er_weighted(n, p, WeightRange::square(n), seed)
}

pub fn gen_er_weighted(n: usize, p: f64, weights: WeightRange, seed: u64) -> Result<Vec<WeightedEdge>> {
    if n < 2 {
        return Err(Error::Config(format!("G(n, p) needs n >= 2, got {n}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!("edge probability must lie in [0, 1], got {p}")));
    }
    weights.check()?;
    let mut topo = rng_for(seed, TOPOLOGY);
    let mut wrng = rng_for(seed, WEIGHTS);
    let mut edges = Vec::new();
    for u in 0..n as u32 {
        for v in (u + 1)..n as u32 {
            if p >= 1.0 || topo.gen::<f64>() < p {
                edges.push(WeightedEdge::new(u, v, weights.sample(&mut wrng)));
            }
        }
    }
    Ok(edges)
}

/// Initial graph for the growth generators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedGraphSpec {
    pub n: usize,
    pub p: f64,
}

impl Default for SeedGraphSpec {
    fn default() -> Self {
        SeedGraphSpec { n: 256, p: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Attachment {
    Preferential,
    Uniform,
}

/// Barabási–Albert growth: each new vertex draws `x` neighbors with
/// probability proportional to current degree, with replacement.
pub fn gen_ba(n: usize, x: usize, seed_graph: SeedGraphSpec, seed: u64) -> Result<Vec<WeightedEdge>> {
    grow(n, x, seed_graph, WeightRange::square(n), seed, Attachment::Preferential)
}

/// Uniform attachment: growth only, neighbors uniform over existing vertices.
pub fn gen_ua(n: usize, x: usize, seed_graph: SeedGraphSpec, seed: u64) -> Result<Vec<WeightedEdge>> {
    grow(n, x, seed_graph, WeightRange::square(n), seed, Attachment::Uniform)
}

pub fn gen_ba_weighted(
    n: usize,
    x: usize,
    seed_graph: SeedGraphSpec,
    weights: WeightRange,
    seed: u64,
) -> Result<Vec<WeightedEdge>> {
    grow(n, x, seed_graph, weights, seed, Attachment::Preferential)
}

pub fn gen_ua_weighted(
    n: usize,
    x: usize,
    seed_graph: SeedGraphSpec,
    weights: WeightRange,
    seed: u64,
) -> Result<Vec<WeightedEdge>> {
    grow(n, x, seed_graph, weights, seed, Attachment::Uniform)
}

fn grow(
    n: usize,
    x: usize,
    seed_graph: SeedGraphSpec,
    weights: WeightRange,
    seed: u64,
    mode: Attachment,
) -> Result<Vec<WeightedEdge>> {
    if x == 0 {
        return Err(Error::Config("edges per vertex must be at least 1".into()));
    }
    if seed_graph.n == 0 || n < seed_graph.n {
        return Err(Error::Config(format!(
            "seed graph must be nonempty and no larger than n (seed n = {}, n = {n})",
            seed_graph.n
        )));
    }
    weights.check()?;
    let mut edges = if seed_graph.n >= 2 {
        gen_er_weighted(seed_graph.n, seed_graph.p, weights, derive_seed(seed, SEED_GRAPH))?
    } else {
        Vec::new()
    };
    if mode == Attachment::Preferential && edges.is_empty() && n > seed_graph.n {
        return Err(Error::Config("preferential attachment needs a seed graph with edges".into()));
    }
    let mut topo = rng_for(seed, TOPOLOGY);
    let mut wrng = rng_for(seed, WEIGHTS);
    // each edge contributes both endpoints; uniform draws from this list are degree-proportional
    let mut endpoints: Vec<u32> = Vec::new();
    if mode == Attachment::Preferential {
        endpoints.reserve(2 * (edges.len() + (n - seed_graph.n) * x));
        for e in &edges {
            endpoints.push(e.u.0);
            endpoints.push(e.v.0);
        }
    }
    edges.reserve((n - seed_graph.n) * x);
    let mut picks = Vec::with_capacity(x);
    for new in seed_graph.n as u32..n as u32 {
        picks.clear();
        for _ in 0..x {
            let nb = match mode {
                Attachment::Preferential => endpoints[topo.gen_range(0..endpoints.len())],
                Attachment::Uniform => topo.gen_range(0..new),
            };
            picks.push(nb);
        }
        for &nb in &picks {
            edges.push(WeightedEdge::new(new, nb, weights.sample(&mut wrng)));
            if mode == Attachment::Preferential {
                endpoints.push(new);
                endpoints.push(nb);
            }
        }
    }
    Ok(edges)
}

/// Star with hub 0 and leaves `1..=leaves`, one edge per leaf in leaf order.
pub fn gen_star(leaves: usize, weights: WeightRange, seed: u64) -> Result<Vec<WeightedEdge>> {
    weights.check()?;
    if leaves == 0 || leaves >= u32::MAX as usize {
        return Err(Error::Config(format!("star needs 1..2^32-1 leaves, got {leaves}")));
    }
    let mut wrng = rng_for(seed, WEIGHTS);
    Ok((1..=leaves as u32)
        .map(|leaf| WeightedEdge::new(0, leaf, weights.sample(&mut wrng)))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PartitionMode {
    #[default]
    RoundRobin,
    Contiguous,
    Shuffled,
}

/// Splits an edge multiset into `k` ordered streams.
pub fn partition(edges: &[WeightedEdge], k: usize, mode: PartitionMode, seed: u64) -> Vec<Vec<WeightedEdge>> {
    assert!(k >= 1, "partition needs k >= 1");
    match mode {
        PartitionMode::RoundRobin => round_robin(edges.iter().copied(), edges.len(), k),
        PartitionMode::Shuffled => {
            let mut v = edges.to_vec();
            v.shuffle(&mut rng_for(seed, SHUFFLE));
            round_robin(v.into_iter(), edges.len(), k)
        }
        PartitionMode::Contiguous => {
            let base = edges.len() / k;
            let extra = edges.len() % k;
            let mut out = Vec::with_capacity(k);
            let mut start = 0;
            for i in 0..k {
                let len = base + usize::from(i < extra);
                out.push(edges[start..start + len].to_vec());
                start += len;
            }
            out
        }
    }
}

fn round_robin(edges: impl Iterator<Item = WeightedEdge>, m: usize, k: usize) -> Vec<Vec<WeightedEdge>> {
    let mut out: Vec<Vec<WeightedEdge>> = (0..k).map(|_| Vec::with_capacity(m / k + 1)).collect();
    for (i, e) in edges.enumerate() {
        out[i % k].push(e);
    }
    out
}

/// A single-pass source of edges bound to one worker.
pub struct EdgeStream {
    inner: Box<dyn Iterator<Item = WeightedEdge> + Send>,
    len: Option<usize>,
    yielded: usize,
    exhausted: bool,
    failure: Option<Arc<Mutex<Option<Error>>>>,
}

impl EdgeStream {
    pub fn from_vec(edges: Vec<WeightedEdge>) -> Self {
        let len = edges.len();
        EdgeStream {
            inner: Box::new(edges.into_iter()),
            len: Some(len),
            yielded: 0,
            exhausted: false,
            failure: None,
        }
    }

    pub fn from_source<I>(it: I) -> Self
    where
        I: Iterator<Item = WeightedEdge> + Send + 'static,
    {
        EdgeStream {
            inner: Box::new(it),
            len: None,
            yielded: 0,
            exhausted: false,
            failure: None,
        }
    }

    /// Feeds `edges` from a producer thread through a bounded channel, so
    /// items become available to the consumer as soon as it is ready.
    pub fn bounded(edges: Vec<WeightedEdge>, capacity: usize) -> Self {
        let len = edges.len();
        let (tx, rx) = crossbeam_channel::bounded(capacity.max(1));
        thread::spawn(move || {
            for e in edges {
                if tx.send(e).is_err() {
                    break;
                }
            }
        });
        EdgeStream {
            inner: Box::new(rx.into_iter()),
            len: Some(len),
            yielded: 0,
            exhausted: false,
            failure: None,
        }
    }

    /// Stream length, when known up front.
    pub fn len_hint(&self) -> Option<usize> {
        self.len
    }

    pub fn yielded(&self) -> usize {
        self.yielded
    }

    pub fn is_exhausted(&self) -> bool {
        self.exhausted
    }

    /// Error that terminated the stream early, if any.
    pub fn take_error(&mut self) -> Option<Error> {
        self.failure.as_ref().and_then(|f| f.lock().ok()?.take())
    }
}

impl Iterator for EdgeStream {
    type Item = WeightedEdge;

    fn next(&mut self) -> Option<WeightedEdge> {
        if self.exhausted {
            return None;
        }
        match self.inner.next() {
            Some(e) => {
                self.yielded += 1;
                Some(e)
            }
            None => {
                self.exhausted = true;
                None
            }
        }
    }
}

impl std::fmt::Debug for EdgeStream {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EdgeStream")
            .field("len", &self.len)
            .field("yielded", &self.yielded)
            .field("exhausted", &self.exhausted)
            .finish()
    }
}

pub fn streams_from_vecs(parts: Vec<Vec<WeightedEdge>>) -> Vec<EdgeStream> {
    parts.into_iter().map(EdgeStream::from_vec).collect()
}

pub fn write_stream(path: impl AsRef<Path>, n: usize, edges: &[WeightedEdge]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MAGIC)?;
    w.write_all(&(n as u64).to_le_bytes())?;
    w.write_all(&(edges.len() as u64).to_le_bytes())?;
    for e in edges {
        w.write_all(&u64::from(e.u.0).to_le_bytes())?;
        w.write_all(&u64::from(e.v.0).to_le_bytes())?;
        w.write_all(&e.w.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Header of a stream file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamHeader {
    pub n: usize,
    pub count: u64,
}

/// Opens a stream file lazily. Header and length are checked up front; a
/// record that fails validation while streaming ends the stream and is
/// reported through [`EdgeStream::take_error`].
pub fn read_stream(path: impl AsRef<Path>) -> Result<(StreamHeader, EdgeStream)> {
    let file = File::open(path)?;
    let size = file.metadata()?.len();
    let mut r = BufReader::with_capacity(1 << 16, file);
    let header = read_header(&mut r, size)?;
    let failure = Arc::new(Mutex::new(None));
    let slot = Arc::clone(&failure);
    let n = header.n;
    let mut left = header.count;
    let it = std::iter::from_fn(move || {
        if left == 0 {
            return None;
        }
        left -= 1;
        match read_record(&mut r, n) {
            Ok(e) => Some(e),
            Err(err) => {
                left = 0;
                if let Ok(mut s) = slot.lock() {
                    *s = Some(err);
                }
                None
            }
        }
    });
    let stream = EdgeStream {
        inner: Box::new(it),
        len: Some(header.count as usize),
        yielded: 0,
        exhausted: false,
        failure: Some(failure),
    };
    Ok((header, stream))
}

/// Reads and validates a whole stream file into memory.
pub fn read_stream_all(path: impl AsRef<Path>) -> Result<(StreamHeader, Vec<WeightedEdge>)> {
    let (header, mut stream) = read_stream(path)?;
    let edges: Vec<WeightedEdge> = stream.by_ref().collect();
    if let Some(err) = stream.take_error() {
        return Err(err);
    }
    Ok((header, edges))
}

fn read_header(r: &mut impl Read, size: u64) -> Result<StreamHeader> {
    let mut buf = [0u8; HEADER_LEN as usize];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Format(format!("file shorter than the {HEADER_LEN}-byte header")))?;
    if buf[..8] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let n = u64::from_le_bytes(buf[8..16].try_into().unwrap());
    let count = u64::from_le_bytes(buf[16..24].try_into().unwrap());
    if n > u64::from(u32::MAX) {
        return Err(Error::Format(format!("vertex count {n} exceeds u32 ids")));
    }
    let expected = count
        .checked_mul(RECORD_LEN)
        .and_then(|b| b.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::Format("record count overflows".into()))?;
    if size < expected {
        return Err(Error::Format(format!(
            "truncated: header declares {count} records ({expected} bytes), file has {size}"
        )));
    }
    if size > expected {
        return Err(Error::Format(format!("{} trailing bytes after last record", size - expected)));
    }
    Ok(StreamHeader { n: n as usize, count })
}

fn read_record(r: &mut impl Read, n: usize) -> Result<WeightedEdge> {
    let mut buf = [0u8; RECORD_LEN as usize];
    r.read_exact(&mut buf).map_err(|_| Error::Format("truncated record".into()))?;
    let u = u64::from_le_bytes(buf[0..8].try_into().unwrap());
    let v = u64::from_le_bytes(buf[8..16].try_into().unwrap());
    let w = f64::from_le_bytes(buf[16..24].try_into().unwrap());
    if u >= n as u64 || v >= n as u64 {
        return Err(Error::VertexOutOfRange {
            u: u.min(u64::from(u32::MAX)) as u32,
            v: v.min(u64::from(u32::MAX)) as u32,
            n,
        });
    }
    Ok(WeightedEdge::new(u as u32, v as u32, w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn multiset(edges: &[WeightedEdge]) -> HashMap<(u32, u32, u64), usize> {
        let mut m = HashMap::new();
        for e in edges {
            *m.entry((e.u.0, e.v.0, e.w.to_bits())).or_insert(0) += 1;
        }
        m
    }

    #[test]
    fn er_examples() {
        assert_eq!(gen_er(2, 1.0, 7).unwrap().len(), 1);
        assert_eq!(gen_er(5, 0.0, 7).unwrap().len(), 0);
        // Binomial(4950, 0.1): mean 495, sd 21.1; mean ± 5 sd ⊂ [300, 700]
        for seed in 0..20 {
            let m = gen_er(100, 0.1, seed).unwrap().len();
            assert!((300..=700).contains(&m), "seed {seed}: {m}");
        }
        assert!(gen_er(1, 0.5, 0).is_err());
        assert!(gen_er(4, 1.5, 0).is_err());
    }

    #[test]
    fn er_weights_in_range() {
        for e in gen_er(30, 0.5, 3).unwrap() {
            assert!(e.w >= 1.0 && e.w <= 900.0);
            assert!(e.u < e.v);
        }
    }

    #[test]
    fn growth_counts() {
        let sg = SeedGraphSpec { n: 20, p: 0.3 };
        let seed_edges = gen_er_weighted(20, 0.3, WeightRange::square(21), derive_seed(5, SEED_GRAPH)).unwrap().len();
        let ba = gen_ba(21, 3, sg, 5).unwrap();
        assert_eq!(ba.len(), seed_edges + 3);
        let ua = gen_ua(21, 3, sg, 5).unwrap();
        assert_eq!(ua.len(), seed_edges + 3);

        let ba = gen_ba(100, 4, sg, 9).unwrap();
        let base = gen_er_weighted(20, 0.3, WeightRange::square(100), derive_seed(9, SEED_GRAPH)).unwrap().len();
        assert_eq!(ba.len() - base, 80 * 4);
    }

    #[test]
    fn ua_neighbors_precede_new_vertex() {
        let sg = SeedGraphSpec { n: 10, p: 0.5 };
        let ua = gen_ua(500, 3, sg, 1).unwrap();
        for e in ua.iter().filter(|e| e.u.0 >= 10) {
            assert!(e.v < e.u);
        }
    }

    #[test]
    fn ba_rejects_edgeless_seed() {
        assert!(gen_ba(10, 2, SeedGraphSpec { n: 3, p: 0.0 }, 0).is_err());
        assert!(gen_ba(10, 0, SeedGraphSpec::default(), 0).is_err());
    }

    #[test]
    fn generators_deterministic() {
        assert_eq!(gen_er(50, 0.2, 11).unwrap(), gen_er(50, 0.2, 11).unwrap());
        assert_ne!(gen_er(50, 0.2, 11).unwrap(), gen_er(50, 0.2, 12).unwrap());
        let sg = SeedGraphSpec { n: 16, p: 0.3 };
        assert_eq!(gen_ba(300, 2, sg, 4).unwrap(), gen_ba(300, 2, sg, 4).unwrap());
    }

    #[test]
    fn partition_examples() {
        let edges: Vec<_> = (0..6).map(|i| WeightedEdge::new(i, i + 1, 1.0)).collect();
        let lens: Vec<_> = partition(&edges, 3, PartitionMode::RoundRobin, 0).iter().map(Vec::len).collect();
        assert_eq!(lens, vec![2, 2, 2]);
        let edges7: Vec<_> = (0..7).map(|i| WeightedEdge::new(i, i + 1, 1.0)).collect();
        let mut lens: Vec<_> = partition(&edges7, 3, PartitionMode::RoundRobin, 0).iter().map(Vec::len).collect();
        lens.sort();
        assert_eq!(lens, vec![2, 2, 3]);
        for mode in [PartitionMode::RoundRobin, PartitionMode::Contiguous] {
            let one = partition(&edges7, 1, mode, 0);
            assert_eq!(one, vec![edges7.clone()]);
        }
        let blocks = partition(&edges7, 3, PartitionMode::Contiguous, 0);
        assert_eq!(blocks.concat(), edges7);
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn partition_conserves_multiset(seed in any::<u64>(), k in 1usize..9, m in 0usize..60, mode in 0u8..3) {
            let edges: Vec<_> = (0..m).map(|i| WeightedEdge::new((i % 7) as u32, 7 + (i % 5) as u32, 1.0 + (i % 3) as f64)).collect();
            let mode = [PartitionMode::RoundRobin, PartitionMode::Contiguous, PartitionMode::Shuffled][mode as usize];
            let parts = partition(&edges, k, mode, seed);
            prop_assert_eq!(parts.len(), k);
            let lmax = parts.iter().map(Vec::len).max().unwrap();
            let lmin = parts.iter().map(Vec::len).min().unwrap();
            prop_assert!(lmax - lmin <= 1);
            prop_assert_eq!(multiset(&parts.concat()), multiset(&edges));
        }
    }

    #[test]
    fn stream_counts_and_exhaustion() {
        let edges = gen_er(20, 0.5, 0).unwrap();
        let mut s = EdgeStream::bounded(edges.clone(), 4);
        let got: Vec<_> = s.by_ref().collect();
        assert_eq!(got, edges);
        assert!(s.is_exhausted());
        assert_eq!(s.yielded(), edges.len());
        assert_eq!(s.next(), None);
    }

    #[test]
    fn file_roundtrip_small() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.bin");
        write_stream(&p, 0, &[]).unwrap();
        let (h, e) = read_stream_all(&p).unwrap();
        assert_eq!(h, StreamHeader { n: 0, count: 0 });
        assert!(e.is_empty());

        let one = vec![WeightedEdge::new(0, 1, 5.0)];
        write_stream(&p, 2, &one).unwrap();
        let (h, e) = read_stream_all(&p).unwrap();
        assert_eq!(h.n, 2);
        assert!(e[0].same_bits(&one[0]));
        assert_eq!(std::fs::metadata(&p).unwrap().len(), HEADER_LEN + RECORD_LEN);
    }

    #[test]
    fn file_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.bin");
        write_stream(&p, 4, &[WeightedEdge::new(0, 1, 5.0), WeightedEdge::new(2, 3, 1.0)]).unwrap();
        let bytes = std::fs::read(&p).unwrap();

        std::fs::write(&p, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(read_stream(&p), Err(Error::Format(_))));

        std::fs::write(&p, &bytes[..10]).unwrap();
        assert!(matches!(read_stream(&p), Err(Error::Format(_))));

        let mut bad = bytes.clone();
        bad[0] = b'X';
        std::fs::write(&p, &bad).unwrap();
        assert!(matches!(read_stream(&p), Err(Error::Format(_))));

        let mut oob = bytes.clone();
        oob[24] = 9; // u of first record
        std::fs::write(&p, &oob).unwrap();
        assert!(matches!(read_stream_all(&p), Err(Error::VertexOutOfRange { .. })));

        assert!(matches!(read_stream(dir.path().join("missing")), Err(Error::Io(_))));
    }
}
