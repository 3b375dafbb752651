use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use dhb::*;
use dhb_harness::experiment::{run_condition_sweep, run_experiment, thin};
use dhb_harness::{EngineSpec, ExperimentConfig, StepSpec};

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn small(out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::parse(&format!(
        r#"
name = "small"

[graph]
n = 8
ring_degree = 2
extra_link_fraction = 0.1
directed = true
seed = 4

[objective]
kind = "quadratic"
p = 2
condition_number = 9.0
seed = 4

[run]
max_iter = 5000
stop_residual = 1e-12
out_dir = {out:?}

[[engine]]
kind = "gd"
"#
    ))
    .unwrap();
    cfg.run.out_dir = out.to_path_buf();
    cfg
}

fn engine(kind: &str, alpha: f64) -> EngineSpec {
    EngineSpec {
        kind: kind.into(),
        label: None,
        weights: None,
        alpha: Some(StepSpec::Scalar(alpha)),
        beta: None,
        tune: None,
    }
}

fn read_dir_sorted(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    for entry in walk(dir) {
        out.push((entry.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&entry).unwrap()));
    }
    out.sort();
    out
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut files = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            files.extend(walk(&p));
        } else {
            files.push(p);
        }
    }
    files
}

#[test]
fn centralized_gd_summary_matches_the_rate_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_experiment(&small(dir.path())).unwrap();
    let gd = report.get("gd").unwrap();
    let rate = gd.fit.unwrap().rate;
    assert!((rate - gd_rate_oracle(9.0).0).abs() < 0.016, "rate {rate}");
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert_eq!(
        lines.next().unwrap(),
        "engine,kind,alpha,beta,iterations_to_1e-8,rate,r_squared,termination,final_residual"
    );
    assert!(lines.next().unwrap().starts_with("gd,gd,"));
    assert!(dir.path().join("plot.py").exists());
    let trace = Trace64::read_csv(dir.path().join("traces/gd.csv")).unwrap();
    assert_eq!(trace.meta.config_digest.as_deref(), Some(small(dir.path()).digest().as_str()));
}

#[test]
fn identical_configs_give_identical_artifacts() {
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut cfg = small(d1.path());
    cfg.engines.push(engine("abm", 0.01));
    cfg.engines.push(engine("add-opt", 0.01));
    run_experiment(&cfg).unwrap();
    cfg.run.out_dir = d2.path().to_path_buf();
    run_experiment(&cfg).unwrap();
    let (a, b) = (read_dir_sorted(d1.path()), read_dir_sorted(d2.path()));
    assert_eq!(a.len(), b.len());
    for ((pa, ca), (pb, cb)) in a.iter().zip(&b) {
        assert_eq!(pa, pb);
        if pa.file_name().unwrap() != "config.toml" {
            assert!(ca == cb, "{} differs", pa.display());
        }
    }
}

#[test]
fn invalid_experiments_are_rejected_with_a_reason() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.engines.clear();
    assert!(run_experiment(&cfg).unwrap_err().to_string().contains("no engines"));

    let mut cfg = small(dir.path());
    cfg.engines.push(engine("extra", 0.01));
    let err = format!("{:#}", run_experiment(&cfg).unwrap_err());
    assert!(err.contains("undirected"), "{err}");

    let mut cfg = small(dir.path());
    cfg.engines.push(EngineSpec { alpha: None, ..engine("ab", 0.0) });
    assert!(run_experiment(&cfg).is_err());
}

#[test]
fn trace_thinning_keeps_the_last_record() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_experiment(&small(dir.path())).unwrap();
    let trace = &report.get("gd").unwrap().trace;
    let thinned = thin(trace, 7);
    assert_eq!(thinned.records.first().unwrap().k, 0);
    assert_eq!(thinned.records.last(), trace.records.last());
    assert!(thinned.records.iter().rev().skip(1).all(|r| r.k % 7 == 0));
}

#[test]
fn single_entry_sweep_tunes_with_containment() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.engines.clear();
    let text = r#"
[[engine]]
kind = "abm"
[engine.tune]
alpha_min = 1e-3
alpha_max = 1e-1
alpha_count = 7
beta = [0.0, 0.3, 0.6]

[[engine]]
kind = "ab"
[engine.tune]
alpha_min = 1e-3
alpha_max = 1e-1
alpha_count = 7
"#;
    let extra: toml::Table = toml::from_str(text).unwrap();
    let engines: Vec<EngineSpec> = extra["engine"].clone().try_into().unwrap();
    cfg.engines = engines;
    let report = run_condition_sweep(&cfg, &[30.0]).unwrap();
    assert_eq!(report.rows.len(), 2);
    let (abm, ab) = (report.iterations(30.0, "abm").unwrap(), report.iterations(30.0, "ab").unwrap());
    assert!(abm <= ab, "{abm} > {ab}");
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn sweeps_need_quadratics() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::load(configs_dir().join("logistic.toml")).unwrap();
    cfg.run.out_dir = dir.path().to_path_buf();
    assert!(run_condition_sweep(&cfg, &[10.0]).is_err());
    let cfg = small(dir.path());
    assert!(run_condition_sweep(&cfg, &[]).is_err());
}

#[test]
fn shipped_configs_are_valid_and_canonical() {
    let mut count = 0;
    for entry in fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = ExperimentConfig::load(&path).unwrap();
            cfg.validate().unwrap();
            let canon = cfg.to_toml();
            let back = ExperimentConfig::parse(&canon).unwrap();
            assert_eq!(back, cfg, "{}", path.display());
            assert_eq!(back.to_toml(), canon);
            count += 1;
        }
    }
    assert!(count >= 4);
}

#[test]
fn consensus_edge_cases() {
    let g = Digraph::from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)], true).unwrap();
    let a = WeightMatrix64::uniform_row_stochastic(&g).unwrap();
    let b = WeightMatrix64::uniform_column_stochastic(&g).unwrap();
    let v = Mat64::from_vec(4, 1, vec![1.0, 2.0, 3.0, 10.0]).unwrap();
    for form in [ConsensusForm::Abmc, ConsensusForm::Surplus] {
        let sys = ConsensusSystem64::build(form, &a, &b, 0.1, 0.2, 1).unwrap();
        let limit = sys.limit(&sys.initial_state(&v).unwrap());
        assert!(limit[..4].iter().all(|x| (x - 4.0).abs() < 1e-12), "{form:?}: {limit:?}");
        let (trace, _) = sys.run(&Mat64::filled(4, 1, 2.5), 5, 1e12).unwrap();
        assert_eq!(trace.iterations_to(1e-12), Some(0));
    }
}

fn dhb() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dhb"))
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("small.toml");
    fs::write(&cfg_path, small(&dir.path().join("out")).to_toml()).unwrap();
    let ok = dhb().args(["run", "--config"]).arg(&cfg_path).output().unwrap();
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(dir.path().join("out/summary.csv").exists());

    let bad_path = dir.path().join("bad.toml");
    fs::write(&bad_path, fs::read_to_string(&cfg_path).unwrap().replace("[graph]", "[graph]\nweird = 1")).unwrap();
    let bad = dhb().args(["run", "--config"]).arg(&bad_path).output().unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("weird"));

    let mut diverging = small(&dir.path().join("div"));
    diverging.engines = vec![engine("ab", 50.0)];
    let div_path = dir.path().join("div.toml");
    fs::write(&div_path, diverging.to_toml()).unwrap();
    let div = dhb().args(["run", "--config"]).arg(&div_path).output().unwrap();
    assert!(!div.status.success());
    assert!(String::from_utf8_lossy(&div.stderr).contains("diverged"));
}

#[test]
fn cli_graph_gen_honors_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g");
    let run =
        dhb().args(["graph-gen", "--n", "12", "--seed", "3", "--undirected", "--out"]).arg(&out).output().unwrap();
    assert!(run.status.success());
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("12 nodes"));
    let g = Digraph::read_edge_list(out.join("graph.txt")).unwrap();
    assert_eq!(g.n(), 12);
    assert!(!g.is_directed());
    assert!(out.join("weights_ds.csv").exists());
}
