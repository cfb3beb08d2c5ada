//! Experiment runner: resolve a config (file plus flag overrides), build or
//! load the instance, run the chosen algorithm, audit, and write records.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::amplify::run_ps_mwm_pr;
use crate::audit::{apply_rule, min_opt_percent, DualRule};
use crate::baselines::{exact_mwm, feigenbaum_stream, offline_greedy, sequential_local_ratio, OracleBudget};
use crate::engine::{run_ps_mwm, MatchingResult};
use crate::error::{Error, Result};
use crate::graph::{ingest, EngineConfig, GraphSnapshot, Matching, Strategy, WeightedEdge};
use crate::metrics::{memory_estimate, DualBound, MemoryInputs, RunRecord};
use crate::numa::run_ps_mwm_ld;
use crate::streams::{
    derive_seed, gen_ba_weighted, gen_er_weighted, gen_star, gen_ua_weighted, partition, read_stream_all,
    streams_from_vecs, PartitionMode, SeedGraphSpec, WeightRange,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_WATCHDOG: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Budget(_) => EXIT_CONFIG,
        Error::Watchdog(_) => EXIT_WATCHDOG,
        Error::Io(_) | Error::Format(_) | Error::Csv(_) | Error::Json(_) => EXIT_IO,
        Error::VertexOutOfRange { .. } | Error::BadWeight(_) => EXIT_IO,
        Error::Audit(_) => EXIT_FAILURE,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, ValueEnum)]
pub enum Algorithm {
    #[default]
    #[serde(rename = "psmwm")]
    #[value(name = "psmwm")]
    Psmwm,
    #[serde(rename = "psmwm-ds")]
    #[value(name = "psmwm-ds")]
    PsmwmDs,
    #[serde(rename = "psmwm-ld")]
    #[value(name = "psmwm-ld")]
    PsmwmLd,
    #[serde(rename = "psmwm-pr")]
    #[value(name = "psmwm-pr")]
    PsmwmPr,
    #[serde(rename = "seq")]
    #[value(name = "seq")]
    Seq,
    #[serde(rename = "feigenbaum")]
    #[value(name = "feigenbaum")]
    Feigenbaum,
    #[serde(rename = "greedy")]
    #[value(name = "greedy")]
    Greedy,
    #[serde(rename = "exact")]
    #[value(name = "exact")]
    Exact,
}

impl Algorithm {
    pub fn is_concurrent(self) -> bool {
        matches!(self, Algorithm::Psmwm | Algorithm::PsmwmDs | Algorithm::PsmwmLd | Algorithm::PsmwmPr)
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Psmwm => "psmwm",
            Algorithm::PsmwmDs => "psmwm-ds",
            Algorithm::PsmwmLd => "psmwm-ld",
            Algorithm::PsmwmPr => "psmwm-pr",
            Algorithm::Seq => "seq",
            Algorithm::Feigenbaum => "feigenbaum",
            Algorithm::Greedy => "greedy",
            Algorithm::Exact => "exact",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Jsonl,
    Csv,
}

/// Input graph: a generator or a list of stream files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InstanceSpec {
    Er {
        n: usize,
        p: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<WeightRange>,
    },
    Ba {
        n: usize,
        x: usize,
        #[serde(default)]
        seed_graph: SeedGraphSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<WeightRange>,
    },
    Ua {
        n: usize,
        x: usize,
        #[serde(default)]
        seed_graph: SeedGraphSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<WeightRange>,
    },
    Star {
        leaves: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<WeightRange>,
    },
    /// One file per stream when the count equals `k`; otherwise the files
    /// are concatenated and partitioned.
    File { paths: Vec<PathBuf> },
}

impl Default for InstanceSpec {
    fn default() -> Self {
        InstanceSpec::Er {
            n: 1000,
            p: 0.01,
            weights: None,
        }
    }
}

/// A built instance: `n` and either one pre-split stream list or a flat
/// edge list to partition.
#[derive(Debug, Clone)]
pub struct Instance {
    pub n: usize,
    pub edges: Vec<WeightedEdge>,
    pub presplit: Option<Vec<Vec<WeightedEdge>>>,
}

impl InstanceSpec {
    pub fn build(&self, k: usize, seed: u64) -> Result<Instance> {
        let (n, edges) = match self {
            InstanceSpec::Er { n, p, weights } => {
                (*n, gen_er_weighted(*n, *p, weights.unwrap_or(WeightRange::square(*n)), seed)?)
            }
            InstanceSpec::Ba { n, x, seed_graph, weights } => (
                *n,
                gen_ba_weighted(*n, *x, *seed_graph, weights.unwrap_or(WeightRange::square(*n)), seed)?,
            ),
            InstanceSpec::Ua { n, x, seed_graph, weights } => (
                *n,
                gen_ua_weighted(*n, *x, *seed_graph, weights.unwrap_or(WeightRange::square(*n)), seed)?,
            ),
            InstanceSpec::Star { leaves, weights } => {
                let n = leaves + 1;
                (n, gen_star(*leaves, weights.unwrap_or(WeightRange::square(n)), seed)?)
            }
            InstanceSpec::File { paths } => {
                let mut n = 0;
                let mut parts = Vec::with_capacity(paths.len());
                for p in paths {
                    let (header, edges) = read_stream_all(p)?;
                    n = n.max(header.n);
                    parts.push(edges);
                }
                let mut ingested = Vec::with_capacity(parts.len());
                for part in parts {
                    ingested.push(ingest(part, n)?);
                }
                let edges: Vec<WeightedEdge> = ingested.iter().flatten().copied().collect();
                let presplit = (ingested.len() == k && k > 1).then_some(ingested);
                return Ok(Instance { n, edges, presplit });
            }
        };
        Ok(Instance {
            n,
            edges,
            presplit: None,
        })
    }
}

/// Everything needed to reproduce a batch of runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance: InstanceSpec,
    pub algorithm: Algorithm,
    pub k: usize,
    pub r: usize,
    pub epsilon: f64,
    pub strategy: Strategy,
    pub partition_mode: PartitionMode,
    pub seed: u64,
    pub audits: Vec<DualRule>,
    pub repeats: u32,
    pub watchdog_seconds: f64,
    pub normalization: bool,
    /// Cap on augmentation rounds for `psmwm-pr`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pr_rounds: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub format: OutputFormat,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            instance: InstanceSpec::default(),
            algorithm: Algorithm::Psmwm,
            k: 1,
            r: 1,
            epsilon: 1e-6,
            strategy: Strategy::NonDeferrable,
            partition_mode: PartitionMode::RoundRobin,
            seed: 0,
            audits: Vec::new(),
            repeats: 1,
            watchdog_seconds: 60.0,
            normalization: false,
            pr_rounds: None,
            output: None,
            format: OutputFormat::Jsonl,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Engine parameters for the concurrent algorithms.
    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            epsilon: self.epsilon,
            k: self.k,
            r: self.r,
            strategy: match self.algorithm {
                Algorithm::PsmwmDs | Algorithm::PsmwmPr => Strategy::Deferrable,
                _ => self.strategy,
            },
            normalization_enabled: self.normalization,
            seed: self.seed,
            watchdog_seconds: self.watchdog_seconds,
            record_stacks: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.engine_config().validate()?;
        if self.r > 1 && self.algorithm != Algorithm::PsmwmLd {
            return Err(Error::Config(format!(
                "r = {} is only meaningful for psmwm-ld, not {}",
                self.r,
                self.algorithm.name()
            )));
        }
        if self.algorithm == Algorithm::PsmwmLd && self.r > 1 && self.strategy == Strategy::Deferrable {
            return Err(Error::Config("psmwm-ld with r > 1 supports only the nd strategy".into()));
        }
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        if let InstanceSpec::File { paths } = &self.instance {
            if paths.is_empty() {
                return Err(Error::Config("file instance needs at least one path".into()));
            }
        }
        Ok(())
    }

    /// Seed of repeat `i`.
    pub fn repeat_seed(&self, i: u32) -> u64 {
        derive_seed(self.seed, 0x5EED_0000 + u64::from(i))
    }
}

/// Runs every repeat. Watchdog expiries are recorded with status
/// `"watchdog"` rather than aborting the batch.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    config.validate()?;
    (0..config.repeats).map(|i| run_once(config, i)).collect()
}

fn run_once(config: &ExperimentConfig, repeat: u32) -> Result<RunRecord> {
    let seed = config.repeat_seed(repeat);
    let mut rec = RunRecord::new(config.clone(), repeat, seed);
    let inst = config.instance.build(config.k, seed)?;
    rec.n = inst.n as u64;
    rec.m = inst.edges.len() as u64;

    let snapshot = GraphSnapshot::new(inst.n, inst.edges.clone());
    let engine_cfg = config.engine_config();
    let parts = || {
        inst.presplit
            .clone()
            .unwrap_or_else(|| partition(&inst.edges, config.k, config.partition_mode, seed))
    };
    let outcome: Result<(Matching, Option<MatchingResult>)> = match config.algorithm {
        Algorithm::Psmwm | Algorithm::PsmwmDs => {
            run_ps_mwm(streams_from_vecs(parts()), inst.n, &engine_cfg).map(|r| (r.matching.clone(), Some(r)))
        }
        Algorithm::PsmwmLd => {
            run_ps_mwm_ld(streams_from_vecs(parts()), inst.n, &engine_cfg).map(|r| (r.matching.clone(), Some(r)))
        }
        Algorithm::PsmwmPr => run_ps_mwm_pr(streams_from_vecs(parts()), inst.n, &engine_cfg, config.pr_rounds)
            .map(|r| (r.matching.clone(), Some(r))),
        Algorithm::Seq => {
            let r = sequential_local_ratio(&inst.edges, inst.n, config.epsilon);
            Ok((r.matching.clone(), Some(r)))
        }
        Algorithm::Feigenbaum => Ok((feigenbaum_stream(&inst.edges, inst.n), None)),
        Algorithm::Greedy => offline_greedy(&snapshot).map(|m| (m, None)),
        Algorithm::Exact => exact_mwm(&snapshot, OracleBudget::default()).map(|(m, _)| (m, None)),
    };
    let (matching, result) = match outcome {
        Ok(x) => x,
        Err(Error::Watchdog(secs)) => {
            rec.status = "watchdog".into();
            rec.error = Some(Error::Watchdog(secs).to_string());
            return Ok(rec);
        }
        Err(e) => return Err(e),
    };
    if !matching.is_valid(inst.n) {
        return Err(Error::Audit(format!("{} produced an invalid matching", config.algorithm.name())));
    }
    let w = matching.weight();
    rec.matching_size = Some(matching.len() as u64);
    rec.matching_weight = Some(w);

    let mut bounds = Vec::new();
    if let Some(r) = &result {
        let alpha = r.alpha_sum();
        rec.alpha_sum = Some(alpha);
        // deferred edges never touch the duals in the amplified matcher
        if config.algorithm != Algorithm::PsmwmPr {
            let b = (1.0 + config.epsilon) * alpha;
            rec.engine_dual_bound = Some(b);
            bounds.push(b);
        }
        rec.effective_iterations = Some(r.effective_iterations());
        rec.supersteps = r.supersteps.clone();
        rec.l_max = r.stream_lengths.iter().copied().max();
        rec.l_min = r.stream_lengths.iter().copied().min();
        rec.global_reads = Some(r.access.global_reads);
        rec.global_writes = Some(r.access.global_writes);
        rec.global_lock_ops = Some(r.access.global_lock_ops);
        rec.global_access_count = Some(r.global_access_count());
        rec.stacked_edges = Some(r.stacked_edge_count);
        rec.deferred_edges = Some(r.deferred_edge_count);
        rec.filtered_edges = Some(r.filtered_edge_count);
        rec.memory_bytes = Some(memory_estimate(&MemoryInputs {
            n: inst.n as u64,
            dual_copies: r.dual_copies.max(1) as u64,
            stacked: r.stacked_edge_count,
            deferred: r.deferred_edge_count,
            matching: r.matching.len() as u64,
        }));
        let t = r.timings.to_secs();
        rec.timings = Some(t);
        let ns = r.timings.streaming.as_nanos() as f64;
        if rec.m > 0 {
            rec.amortized_ns_per_edge = Some(ns / rec.m as f64);
        }
        if let Some(l) = rec.l_max.filter(|&l| l > 0) {
            rec.amortized_ns_per_stream_edge = Some(ns / l as f64);
        }
    }
    for rule in &config.audits {
        let sol = apply_rule(*rule, inst.n, &inst.edges);
        bounds.push(sol.objective);
        rec.dual_bounds.push(DualBound {
            rule: rule.to_string(),
            y: sol.objective,
        });
    }
    if let Some(y) = bounds.iter().copied().min_by(f64::total_cmp) {
        rec.y_min = Some(y);
        rec.min_opt_percent = Some(min_opt_percent(w, y));
    }
    if OracleBudget::default().admits(&snapshot) {
        rec.exact_optimum = Some(exact_mwm(&snapshot, OracleBudget::default())?.1);
    }
    Ok(rec)
}

/// CSV column order; one row per record.
pub const CSV_HEADER: [&str; 37] = [
    "schema_version",
    "algorithm",
    "k",
    "r",
    "epsilon",
    "strategy",
    "repeat",
    "seed",
    "status",
    "n",
    "m",
    "matching_size",
    "matching_weight",
    "alpha_sum",
    "engine_dual_bound",
    "dual_bounds",
    "y_min",
    "min_opt_percent",
    "exact_optimum",
    "effective_iterations",
    "l_max",
    "l_min",
    "global_reads",
    "global_writes",
    "global_lock_ops",
    "global_access_count",
    "stacked_edges",
    "deferred_edges",
    "filtered_edges",
    "memory_bytes",
    "t_preprocessing",
    "t_streaming",
    "t_postprocessing",
    "t_total",
    "amortized_ns_per_edge",
    "amortized_ns_per_stream_edge",
    "error",
];

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_row(r: &RunRecord) -> Vec<String> {
    let c = &r.config;
    let strategy = match c.engine_config().strategy {
        Strategy::NonDeferrable => "nd",
        Strategy::Deferrable => "ds",
    };
    let bounds = r
        .dual_bounds
        .iter()
        .map(|b| format!("{}={}", b.rule, b.y))
        .collect::<Vec<_>>()
        .join(";");
    let t = r.timings;
    vec![
        r.schema_version.to_string(),
        c.algorithm.name().into(),
        c.k.to_string(),
        c.r.to_string(),
        c.epsilon.to_string(),
        strategy.into(),
        r.repeat.to_string(),
        r.seed.to_string(),
        r.status.clone(),
        r.n.to_string(),
        r.m.to_string(),
        opt(r.matching_size),
        opt(r.matching_weight),
        opt(r.alpha_sum),
        opt(r.engine_dual_bound),
        bounds,
        opt(r.y_min),
        opt(r.min_opt_percent),
        opt(r.exact_optimum),
        opt(r.effective_iterations),
        opt(r.l_max),
        opt(r.l_min),
        opt(r.global_reads),
        opt(r.global_writes),
        opt(r.global_lock_ops),
        opt(r.global_access_count),
        opt(r.stacked_edges),
        opt(r.deferred_edges),
        opt(r.filtered_edges),
        opt(r.memory_bytes),
        opt(t.map(|t| t.preprocessing)),
        opt(t.map(|t| t.streaming)),
        opt(t.map(|t| t.postprocessing)),
        opt(t.map(|t| t.total)),
        opt(r.amortized_ns_per_edge),
        opt(r.amortized_ns_per_stream_edge),
        r.error.clone().unwrap_or_default(),
    ]
}

/// Writes records as JSON lines or CSV (with header) to `out`.
pub fn write_report<W: Write>(records: &[RunRecord], format: OutputFormat, mut out: W) -> Result<()> {
    match format {
        OutputFormat::Jsonl => {
            for r in records {
                writeln!(out, "{}", r.to_json_line()?)?;
            }
            out.flush()?;
        }
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(CSV_HEADER)?;
            for r in records {
                w.write_record(csv_row(r))?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

/// Writes records to `path`, or stdout when `None`.
pub fn emit_report(records: &[RunRecord], format: OutputFormat, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => write_report(records, format, io::BufWriter::new(fs::File::create(p)?)),
        None => write_report(records, format, io::stdout().lock()),
    }
}

/// Parses JSON-lines output back into records.
pub fn read_jsonl(text: &str) -> Result<Vec<RunRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| RunRecord::from_json_line(l).map_err(Error::from))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyFlag {
    Nd,
    Ds,
}

/// Command-line flags; each one overrides the matching config entry.
#[derive(Debug, Parser)]
#[command(name = "psmatch", version, about = "Concurrent streaming maximum weight matching")]
pub struct Cli {
    /// TOML experiment config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub algo: Option<Algorithm>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub r: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyFlag>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub repeats: Option<u32>,
    /// Comma-separated dual rules, or `all`.
    #[arg(long)]
    pub audit: Option<String>,
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Watchdog limit in seconds.
    #[arg(long)]
    pub watchdog: Option<f64>,
    /// Stream file(s) to use as the instance.
    #[arg(long, num_args = 1..)]
    pub input: Vec<PathBuf>,
}

/// Parses `--audit` values.
pub fn parse_audits(s: &str, seed: u64) -> Result<Vec<DualRule>> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(DualRule::all(seed).to_vec());
    }
    s.split(',').filter(|x| !x.trim().is_empty()).map(str::parse).collect()
}

impl Cli {
    /// Config file (or defaults) with flag overrides applied.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(a) = self.algo {
            c.algorithm = a;
        }
        if let Some(k) = self.k {
            c.k = k;
        }
        if let Some(r) = self.r {
            c.r = r;
        }
        if let Some(e) = self.epsilon {
            c.epsilon = e;
        }
        if let Some(s) = self.strategy {
            c.strategy = match s {
                StrategyFlag::Nd => Strategy::NonDeferrable,
                StrategyFlag::Ds => Strategy::Deferrable,
            };
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(n) = self.repeats {
            c.repeats = n;
        }
        if let Some(a) = &self.audit {
            c.audits = parse_audits(a, c.seed)?;
        }
        if let Some(f) = self.format {
            c.format = f;
        }
        if let Some(o) = &self.out {
            c.output = Some(o.clone());
        }
        if let Some(w) = self.watchdog {
            c.watchdog_seconds = w;
        }
        if !self.input.is_empty() {
            c.instance = InstanceSpec::File {
                paths: self.input.clone(),
            };
        }
        c.validate()?;
        Ok(c)
    }
}

/// Runs the CLI and returns the process exit code.
pub fn run_cli(cli: &Cli) -> i32 {
    let result = cli.resolve().and_then(|c| {
        let records = run_experiment(&c)?;
        emit_report(&records, c.format, c.output.as_deref())?;
        Ok(records)
    });
    match result {
        Ok(records) if records.iter().any(|r| r.status == "watchdog") => {
            eprintln!("psmatch: watchdog expired in at least one run");
            EXIT_WATCHDOG
        }
        Ok(_) => EXIT_OK,
        Err(e) => {
            eprintln!("psmatch: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(algorithm: Algorithm) -> ExperimentConfig {
        ExperimentConfig {
            instance: InstanceSpec::Er {
                n: 10,
                p: 0.5,
                weights: Some(WeightRange::new(1.0, 100.0)),
            },
            algorithm,
            ..Default::default()
        }
    }

    #[test]
    fn er_batch_meets_bound() {
        let cfg = ExperimentConfig {
            k: 2,
            repeats: 5,
            audits: DualRule::all(1).to_vec(),
            ..small(Algorithm::Psmwm)
        };
        let recs = run_experiment(&cfg).unwrap();
        assert_eq!(recs.len(), 5);
        let floor = 100.0 / (2.0 * (1.0 + cfg.epsilon));
        for r in &recs {
            assert!(r.min_opt_percent.unwrap() >= floor - 1e-6);
            assert_eq!(r.config, cfg);
            assert!(r.exact_optimum.is_some() || r.m > 40);
        }
    }

    #[test]
    fn seq_on_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.pstrm");
        crate::streams::write_stream(&p, 4, &[]).unwrap();
        let cfg = ExperimentConfig {
            instance: InstanceSpec::File { paths: vec![p] },
            algorithm: Algorithm::Seq,
            ..Default::default()
        };
        let recs = run_experiment(&cfg).unwrap();
        assert_eq!(recs[0].matching_weight, Some(0.0));
    }

    #[test]
    fn config_rules() {
        let cfg = ExperimentConfig {
            k: 8,
            r: 3,
            ..small(Algorithm::PsmwmLd)
        };
        assert!(matches!(run_experiment(&cfg), Err(Error::Config(_))));
        let cfg = ExperimentConfig {
            k: 4,
            r: 2,
            ..small(Algorithm::Psmwm)
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let cfg = ExperimentConfig {
            repeats: 0,
            ..small(Algorithm::Seq)
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn k1_deterministic_modulo_timing() {
        let cfg = small(Algorithm::Psmwm);
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a[0].without_timings(), b[0].without_timings());
    }

    #[test]
    fn reports() {
        let cfg = ExperimentConfig {
            repeats: 5,
            ..small(Algorithm::Greedy)
        };
        let recs = run_experiment(&cfg).unwrap();
        let mut buf = Vec::new();
        write_report(&recs[..1], OutputFormat::Csv, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("schema_version,algorithm"));
        let mut buf = Vec::new();
        write_report(&recs, OutputFormat::Csv, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 6);
        let mut buf = Vec::new();
        write_report(&recs, OutputFormat::Jsonl, &mut buf).unwrap();
        let back = read_jsonl(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, recs);
    }

    #[test]
    fn toml_roundtrip_and_overrides() {
        let cfg = ExperimentConfig {
            audits: vec![DualRule::UniTight, DualRule::ArgRand { seed: 4 }],
            pr_rounds: Some(8),
            ..small(Algorithm::PsmwmPr)
        };
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
        assert!(ExperimentConfig::from_toml_str("bogus = 1").is_err());

        let cli = Cli::parse_from(["psmatch", "--algo", "psmwm-ds", "--k", "4", "--audit", "all", "--strategy", "ds"]);
        let c = cli.resolve().unwrap();
        assert_eq!(c.algorithm, Algorithm::PsmwmDs);
        assert_eq!(c.k, 4);
        assert_eq!(c.audits.len(), 5);
        let cli = Cli::parse_from(["psmatch", "--k", "8", "--r", "3", "--algo", "psmwm-ld"]);
        assert_eq!(cli.resolve().map_err(|e| exit_code(&e)).unwrap_err(), EXIT_CONFIG);
    }
}
