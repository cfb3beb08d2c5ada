use std::process::Command;

use psmatch::cli::{run_experiment, Algorithm, ExperimentConfig, InstanceSpec, EXIT_CONFIG, EXIT_IO, EXIT_WATCHDOG};
use psmatch::metrics::RunRecord;
use psmatch::streams::{write_stream, WeightRange};
use psmatch::{DualRule, WeightedEdge};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_psmatch"))
}

#[test]
fn record_roundtrip_is_byte_identical() {
    let cfg = ExperimentConfig {
        instance: InstanceSpec::Er {
            n: 12,
            p: 0.4,
            weights: Some(WeightRange::new(1.0, 50.0)),
        },
        algorithm: Algorithm::PsmwmLd,
        k: 4,
        r: 2,
        audits: DualRule::all(3).to_vec(),
        repeats: 3,
        ..Default::default()
    };
    for rec in run_experiment(&cfg).unwrap() {
        let line = rec.to_json_line().unwrap();
        let back = RunRecord::from_json_line(&line).unwrap();
        assert_eq!(back, rec);
        assert_eq!(back.to_json_line().unwrap(), line);
        assert!(rec.memory_bytes.is_some());
    }
}

#[test]
fn every_algorithm_runs() {
    for algorithm in [
        Algorithm::Psmwm,
        Algorithm::PsmwmDs,
        Algorithm::PsmwmLd,
        Algorithm::PsmwmPr,
        Algorithm::Seq,
        Algorithm::Feigenbaum,
        Algorithm::Greedy,
        Algorithm::Exact,
    ] {
        let k = if algorithm.is_concurrent() { 2 } else { 1 };
        let cfg = ExperimentConfig {
            instance: InstanceSpec::Er {
                n: 10,
                p: 0.5,
                weights: Some(WeightRange::new(1.0, 100.0)),
            },
            algorithm,
            k,
            audits: vec![DualRule::UniTight],
            ..Default::default()
        };
        let recs = run_experiment(&cfg).unwrap();
        let r = &recs[0];
        assert_eq!(r.status, "ok");
        let opt = r.exact_optimum.unwrap();
        assert!(r.matching_weight.unwrap() <= opt + 1e-9);
        assert!(r.dual_bounds[0].y >= opt - 1e-9);
    }
}

#[test]
fn cli_writes_jsonl_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("g.pstrm");
    let edges: Vec<_> = (0..30u32).map(|i| WeightedEdge::new(i % 10, (i * 7 + 3) % 10, 1.0 + f64::from(i))).filter(|e| !e.is_self_loop()).collect();
    write_stream(&input, 10, &edges).unwrap();

    let out = dir.path().join("r.jsonl");
    let status = bin()
        .args(["--algo", "psmwm", "--k", "2", "--repeats", "2", "--audit", "all", "--input"])
        .arg(&input)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let recs = psmatch::cli::read_jsonl(&text).unwrap();
    assert_eq!(recs.len(), 2);
    assert_eq!(recs[0].m, edges.len() as u64);
    assert_eq!(recs[0].dual_bounds.len(), 5);

    let out = dir.path().join("r.csv");
    let status = bin()
        .args(["--algo", "greedy", "--format", "csv", "--input"])
        .arg(&input)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 2);
}

#[test]
fn cli_config_file_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(
        &cfg,
        "algorithm = \"psmwm-ds\"\nk = 2\nrepeats = 1\naudits = [\"uni-tight\", \"arg-rand:7\"]\n\n[instance]\nkind = \"er\"\nn = 20\np = 0.3\n",
    )
    .unwrap();
    let out = bin().arg("--config").arg(&cfg).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let recs = psmatch::cli::read_jsonl(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    assert_eq!(recs[0].config.algorithm, Algorithm::PsmwmDs);
    assert_eq!(recs[0].dual_bounds[1].rule, "arg-rand:7");

    let code = |args: &[&str]| bin().args(args).output().unwrap().status.code();
    assert_eq!(code(&["--algo", "psmwm-ld", "--k", "8", "--r", "3"]), Some(EXIT_CONFIG));
    assert_eq!(code(&["--algo", "psmwm", "--r", "2", "--k", "2"]), Some(EXIT_CONFIG));
    assert_eq!(code(&["--epsilon", "-1"]), Some(EXIT_CONFIG));
    assert_eq!(code(&["--input", "/nonexistent/stream.pstrm"]), Some(EXIT_IO));

    let bad = dir.path().join("bad.pstrm");
    std::fs::write(&bad, b"not a stream").unwrap();
    assert_eq!(code(&["--input", bad.to_str().unwrap()]), Some(EXIT_IO));

    // a large instance with a tiny watchdog expires
    let slow = dir.path().join("slow.toml");
    std::fs::write(&slow, "k = 2\nwatchdog_seconds = 1e-9\n\n[instance]\nkind = \"er\"\nn = 3000\np = 0.2\n").unwrap();
    assert_eq!(code(&["--config", slow.to_str().unwrap()]), Some(EXIT_WATCHDOG));
}
