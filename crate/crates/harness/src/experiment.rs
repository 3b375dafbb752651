use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use dhb::consensus::{radius_grid, RadiusPoint};
use dhb::engines::{optimal_gd_step, polyak_parameters, run, tune, TuneResult};
use dhb::graph::generate_nearest_neighbor;
use dhb::objectives::synthesize_logistic_data;
use dhb::{
    fit_linear_rate, Algorithm, ConsensusForm, ConsensusSystem64, Digraph, EngineConfig64, EngineKind, LinearFit,
    Mat64, ObjectiveSuite64, RunOptions, Termination, Trace64, WeightMatrix64,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::config::{EngineSpec, ExperimentConfig, ObjectiveSpec, StepSpec, WeightScheme};
use crate::plot;

/// Accuracy of the reference minimizer; well below the reporting threshold.
const MINIMIZER_TOL: f64 = 1e-12;

/// Graph, objective, reference minimizer and initial iterate of one run.
pub struct Problem {
    pub graph: Digraph,
    pub suite: ObjectiveSuite64,
    pub x_star: Vec<f64>,
    pub x0: Mat64,
}

/// `rows x cols` i.i.d. standard normal entries.
pub fn standard_normal(rows: usize, cols: usize, seed: u64) -> Mat64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Mat64::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
}

pub fn build_graph(cfg: &ExperimentConfig) -> Result<Digraph> {
    generate_nearest_neighbor(&cfg.graph.params()).context("generating the graph")
}

pub fn build_suite(spec: &ObjectiveSpec, n: usize) -> Result<ObjectiveSuite64> {
    let suite = match *spec {
        ObjectiveSpec::Quadratic { p, condition_number, seed } => {
            ObjectiveSuite64::quadratic_with_condition(n, p, condition_number, seed)?
        }
        ObjectiveSpec::Logistic { samples_per_agent, p, reg, seed } => {
            let (features, labels) = synthesize_logistic_data(n, samples_per_agent, p, seed);
            ObjectiveSuite64::logistic(features, labels, reg)?
        }
    };
    Ok(suite)
}

pub fn build_problem(cfg: &ExperimentConfig) -> Result<Problem> {
    cfg.validate()?;
    let spec = cfg.objective.as_ref().ok_or_else(|| anyhow!("config has no [objective] section"))?;
    let graph = build_graph(cfg)?;
    let suite = build_suite(spec, graph.n())?;
    let x_star = suite.global_minimizer(MINIMIZER_TOL).context("computing the reference minimizer")?;
    let x0 = standard_normal(graph.n(), suite.p(), cfg.run.x0_seed);
    Ok(Problem { graph, suite, x_star, x0 })
}

/// Weight matrices shared by every engine of an experiment.
pub struct Weights {
    pub rs: Arc<WeightMatrix64>,
    pub cs: Arc<WeightMatrix64>,
    pub ds: Option<Arc<WeightMatrix64>>,
}

impl Weights {
    pub fn for_graph(g: &Digraph) -> Result<Self> {
        let ds = if g.is_directed() { None } else { Some(Arc::new(WeightMatrix64::laplacian_doubly_stochastic(g)?)) };
        Ok(Self {
            rs: Arc::new(WeightMatrix64::uniform_row_stochastic(g)?),
            cs: Arc::new(WeightMatrix64::uniform_column_stochastic(g)?),
            ds,
        })
    }

    fn pick(&self, scheme: WeightScheme) -> Result<(Arc<WeightMatrix64>, Arc<WeightMatrix64>)> {
        match scheme {
            WeightScheme::Uniform => Ok((self.rs.clone(), self.cs.clone())),
            WeightScheme::Laplacian => {
                let w = self.ds.clone().ok_or_else(|| anyhow!("laplacian weights need an undirected graph"))?;
                Ok((w.clone(), w))
            }
        }
    }
}

pub fn build_algorithm(kind: EngineKind, scheme: WeightScheme, weights: &Weights) -> Result<Algorithm<f64>> {
    if kind.is_centralized() {
        return Ok(match kind {
            EngineKind::CentralizedGd => Algorithm::CentralizedGd,
            _ => Algorithm::CentralizedHeavyBall,
        });
    }
    let (a, b) = weights.pick(scheme)?;
    let algo = match kind {
        EngineKind::Abm => Algorithm::abm(a, b),
        EngineKind::Ab => Algorithm::ab(a, b),
        EngineKind::DsTracking => Algorithm::ds_tracking(a),
        EngineKind::Extra => Algorithm::extra(a, None),
        EngineKind::AbExtraForm => Algorithm::ab_extra_form(a, b),
        EngineKind::AddOpt => Algorithm::add_opt(b.clone(), b),
        EngineKind::Frost => Algorithm::frost(a.clone(), a),
        EngineKind::AbTransformedExact => Algorithm::ab_transformed_exact(&a, b),
        EngineKind::CentralizedGd | EngineKind::CentralizedHeavyBall => unreachable!(),
    }?;
    Ok(algo)
}

fn config_for(algo: &Algorithm<f64>, alphas: Vec<f64>, betas: Vec<f64>) -> Result<EngineConfig64> {
    let betas = if algo.kind().uses_momentum() { betas } else { Vec::new() };
    Ok(EngineConfig64::new(algo.clone(), alphas, betas)?)
}

pub fn run_options(cfg: &ExperimentConfig) -> RunOptions<f64> {
    RunOptions { max_iter: cfg.run.max_iter, stop_residual: cfg.run.stop_residual, ..RunOptions::default() }
}

/// Result of one engine: the parameters it ran with and its trace.
#[derive(Clone, Debug)]
pub struct EngineOutcome {
    pub label: String,
    pub kind: EngineKind,
    pub alpha: String,
    pub beta: String,
    pub trace: Trace64,
    pub iterations: Option<usize>,
    pub fit: Option<LinearFit>,
    pub tuning: Option<TuneResult<f64>>,
}

/// Runs one engine: tunes it first if it has a grid, otherwise uses the
/// fixed parameters (Polyak / `2/(μ+l)` defaults for centralized engines).
pub fn run_engine(
    spec: &EngineSpec,
    cfg: &ExperimentConfig,
    problem: &Problem,
    weights: &Weights,
    digest: &str,
) -> Result<EngineOutcome> {
    let kind = spec.engine_kind()?;
    let algo = build_algorithm(kind, spec.weight_scheme()?, weights)?;
    let n = if kind.is_centralized() { 1 } else { problem.graph.n() };
    let opts = run_options(cfg);
    let threshold = cfg.run.threshold;
    let Problem { suite, x_star, x0, .. } = problem;

    let (mut alphas, mut betas, mut tuning) = (Vec::new(), Vec::new(), None);
    if let Some(t) = &spec.tune {
        let beta_grid = if kind.uses_momentum() { t.beta.clone() } else { vec![0.0] };
        let build = |a: f64, b: f64| config_for(&algo, vec![a; n], vec![b; n]).map_err(to_core);
        let result = tune(build, &t.alphas(), &beta_grid, suite, x0, x_star, threshold, &opts, !t.no_prune)
            .with_context(|| format!("tuning {}", spec.label()))?;
        // Nothing reached the threshold: report the most conservative point.
        let chosen = result.best.map_or((t.alpha_min, beta_grid[0]), |p| (p.alpha, p.beta));
        alphas = vec![chosen.0; n];
        betas = vec![chosen.1; n];
        tuning = Some(result);
    } else if let Some(a) = &spec.alpha {
        alphas = a.expand(n);
        betas = spec.beta.as_ref().map_or(vec![0.0; n], |b| b.expand(n));
    } else {
        let (mu, l) = suite.curvature_bounds();
        let (a, b) = match kind {
            EngineKind::CentralizedGd => (optimal_gd_step(mu, l), 0.0),
            _ => polyak_parameters(mu, l),
        };
        alphas.push(a);
        betas.push(spec.beta.as_ref().map_or(b, |s| s.expand(1)[0]));
    }

    let engine =
        config_for(&algo, alphas.clone(), betas.clone()).with_context(|| format!("configuring {}", spec.label()))?;
    let mut trace = run(&engine, suite, x0, x_star, &opts).with_context(|| format!("running {}", spec.label()))?;
    trace.meta.engine = spec.label().to_string();
    trace.meta.config_digest = Some(digest.to_string());
    trace.meta.seed = Some(cfg.run.x0_seed);
    let iterations = trace.iterations_to(threshold);
    let fit = match trace.meta.termination {
        Termination::Diverged => None,
        _ => fit_linear_rate(&trace.records, 0.5).ok(),
    };
    Ok(EngineOutcome {
        label: spec.label().to_string(),
        kind,
        alpha: step_label(&alphas),
        beta: if kind.uses_momentum() { step_label(&betas) } else { String::new() },
        trace,
        iterations,
        fit,
        tuning,
    })
}

fn to_core(e: anyhow::Error) -> dhb::Error {
    match e.downcast::<dhb::Error>() {
        Ok(e) => e,
        Err(e) => dhb::Error::InvalidParameter(e.to_string()),
    }
}

fn step_label(values: &[f64]) -> String {
    if values.windows(2).all(|w| w[0] == w[1]) {
        StepSpec::Scalar(values[0]).label()
    } else {
        StepSpec::PerAgent(values.to_vec()).label()
    }
}

/// Every `stride`-th record plus the last one.
pub fn thin(trace: &Trace64, stride: usize) -> Trace64 {
    let last = trace.records.last().map(|r| r.k);
    let records = trace.records.iter().filter(|r| r.k % stride == 0 || Some(r.k) == last).copied().collect();
    Trace64 { meta: trace.meta.clone(), records }
}

fn threshold_column(threshold: f64) -> String {
    format!("iterations_to_{threshold:e}")
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn prepare(out: &Path) -> Result<PathBuf> {
    let traces = out.join("traces");
    fs::create_dir_all(&traces).with_context(|| format!("creating {}", traces.display()))?;
    Ok(traces)
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub outcomes: Vec<EngineOutcome>,
    pub out_dir: PathBuf,
}

impl ExperimentReport {
    pub fn all_diverged(&self) -> bool {
        self.outcomes.iter().all(|o| o.trace.meta.termination == Termination::Diverged)
    }

    pub fn get(&self, label: &str) -> Option<&EngineOutcome> {
        self.outcomes.iter().find(|o| o.label == label)
    }
}

/// Runs every engine of `cfg` and writes `traces/<label>.csv`,
/// `summary.csv`, `config.toml` and `plot.py` under `run.out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    if cfg.engines.is_empty() {
        bail!("config lists no engines; add at least one [[engine]] table");
    }
    let problem = build_problem(cfg)?;
    let weights = Weights::for_graph(&problem.graph)?;
    let digest = cfg.digest();
    let outcomes = cfg
        .engines
        .par_iter()
        .map(|spec| run_engine(spec, cfg, &problem, &weights, &digest))
        .collect::<Result<Vec<_>>>()?;

    let out = cfg.run.out_dir.clone();
    let traces_dir = prepare(&out)?;
    let mut summary = format!(
        "engine,kind,alpha,beta,{},rate,r_squared,termination,final_residual\n",
        threshold_column(cfg.run.threshold)
    );
    let mut plotted = Vec::new();
    for o in &outcomes {
        thin(&o.trace, cfg.run.trace_stride).write_csv(traces_dir.join(format!("{}.csv", o.label)))?;
        plotted.push((o.label.clone(), format!("traces/{}.csv", o.label)));
        let _ = writeln!(
            summary,
            "{},{},{},{},{},{},{},{},{}",
            o.label,
            o.kind,
            o.alpha,
            o.beta,
            opt(o.iterations),
            opt(o.fit.map(|f| format!("{:e}", f.rate))),
            opt(o.fit.map(|f| format!("{:e}", f.r_squared))),
            o.trace.meta.termination.name(),
            opt(o.trace.final_residual().map(|r| format!("{r:e}"))),
        );
    }
    write(&out.join("summary.csv"), &summary)?;
    write(&out.join("config.toml"), &cfg.to_toml())?;
    write(&out.join("plot.py"), &plot::trace_script(&cfg.name, &plotted))?;
    Ok(ExperimentReport { outcomes, out_dir: out })
}

/// Grid search only: writes `tune_<label>.csv` per tuned engine.
pub fn run_tuning(cfg: &ExperimentConfig) -> Result<Vec<(String, TuneResult<f64>)>> {
    let tuned: Vec<&EngineSpec> = cfg.engines.iter().filter(|e| e.tune.is_some()).collect();
    if tuned.is_empty() {
        bail!("no engine has a [engine.tune] grid");
    }
    let problem = build_problem(cfg)?;
    let weights = Weights::for_graph(&problem.graph)?;
    let opts = run_options(cfg);
    fs::create_dir_all(&cfg.run.out_dir)?;
    let mut results = Vec::new();
    for spec in tuned {
        let kind = spec.engine_kind()?;
        let t = spec.tune.as_ref().expect("filtered");
        let algo = build_algorithm(kind, spec.weight_scheme()?, &weights)?;
        let n = if kind.is_centralized() { 1 } else { problem.graph.n() };
        let beta_grid = if kind.uses_momentum() { t.beta.clone() } else { vec![0.0] };
        let build = |a: f64, b: f64| config_for(&algo, vec![a; n], vec![b; n]).map_err(to_core);
        let result = tune(
            build,
            &t.alphas(),
            &beta_grid,
            &problem.suite,
            &problem.x0,
            &problem.x_star,
            cfg.run.threshold,
            &opts,
            !t.no_prune,
        )?;
        let mut csv = format!("alpha,beta,{},termination\n", threshold_column(cfg.run.threshold));
        for p in &result.grid {
            let _ = writeln!(csv, "{:e},{:e},{},{}", p.alpha, p.beta, opt(p.iterations), p.termination.name());
        }
        write(&cfg.run.out_dir.join(format!("tune_{}.csv", spec.label())), &csv)?;
        results.push((spec.label().to_string(), result));
    }
    Ok(results)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub condition_number: f64,
    pub label: String,
    pub kind: EngineKind,
    pub alpha: String,
    pub beta: String,
    pub iterations: Option<usize>,
    pub termination: Termination,
}

#[derive(Clone, Debug)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// `(Q, label)` of eigenvector-estimating engines that beat AB, which
    /// contradicts the expected ordering.
    pub flags: Vec<(f64, String)>,
}

impl SweepReport {
    pub fn iterations(&self, q: f64, label: &str) -> Option<usize> {
        self.rows.iter().find(|r| r.condition_number == q && r.label == label).and_then(|r| r.iterations)
    }
}

/// For each `Q`, rebuilds the quadratic suite and runs (tuning where asked)
/// every engine. Writes `sweep.csv` and `plot_sweep.py`.
pub fn run_condition_sweep(cfg: &ExperimentConfig, condition_numbers: &[f64]) -> Result<SweepReport> {
    if condition_numbers.is_empty() {
        bail!("condition sweep needs at least one condition number");
    }
    if cfg.engines.is_empty() {
        bail!("config lists no engines; add at least one [[engine]] table");
    }
    let Some(ObjectiveSpec::Quadratic { p, seed, .. }) = cfg.objective else {
        bail!("condition sweeps need a quadratic [objective]");
    };
    let mut rows = Vec::new();
    let mut flags = Vec::new();
    for &q in condition_numbers {
        let mut sub = cfg.clone();
        sub.objective = Some(ObjectiveSpec::Quadratic { p, condition_number: q, seed });
        let problem = build_problem(&sub)?;
        let weights = Weights::for_graph(&problem.graph)?;
        let digest = sub.digest();
        let outcomes = sub
            .engines
            .par_iter()
            .map(|spec| run_engine(spec, &sub, &problem, &weights, &digest))
            .collect::<Result<Vec<_>>>()?;
        let ab = outcomes.iter().find(|o| o.kind == EngineKind::Ab).map(|o| o.iterations);
        for o in &outcomes {
            if let (Some(ab), EngineKind::AddOpt | EngineKind::Frost) = (ab, o.kind) {
                let faster = match (o.iterations, ab) {
                    (Some(it), Some(ab)) => it < ab,
                    (Some(_), None) => true,
                    _ => false,
                };
                if faster {
                    flags.push((q, o.label.clone()));
                }
            }
            rows.push(SweepRow {
                condition_number: q,
                label: o.label.clone(),
                kind: o.kind,
                alpha: o.alpha.clone(),
                beta: o.beta.clone(),
                iterations: o.iterations,
                termination: o.trace.meta.termination,
            });
        }
    }
    let out = &cfg.run.out_dir;
    fs::create_dir_all(out)?;
    let column = threshold_column(cfg.run.threshold);
    let mut csv = format!("condition_number,engine,kind,alpha,beta,{column},termination,faster_than_ab\n");
    for r in &rows {
        let flagged = flags.iter().any(|(q, l)| *q == r.condition_number && *l == r.label);
        let _ = writeln!(
            csv,
            "{:e},{},{},{},{},{},{},{}",
            r.condition_number,
            r.label,
            r.kind,
            r.alpha,
            r.beta,
            opt(r.iterations),
            r.termination.name(),
            if flagged { "yes" } else { "" },
        );
    }
    write(&out.join("sweep.csv"), &csv)?;
    write(&out.join("plot_sweep.py"), &plot::sweep_script(&cfg.name, "sweep.csv", &column))?;
    Ok(SweepReport { rows, flags })
}

#[derive(Clone, Debug)]
pub struct ConsensusOutcome {
    pub form: ConsensusForm,
    pub best: RadiusPoint,
    pub grid: Vec<RadiusPoint>,
    pub trace: Trace64,
    /// Final `x` block, `n x p`.
    pub final_x: Mat64,
}

#[derive(Clone, Debug)]
pub struct ConsensusReport {
    pub inputs: Mat64,
    pub outcomes: Vec<ConsensusOutcome>,
}

impl ConsensusReport {
    pub fn mean(&self) -> Vec<f64> {
        let n = self.inputs.rows() as f64;
        self.inputs.sum_rows().into_iter().map(|s| s / n).collect()
    }
}

/// Grid-searches both consensus forms on the configured graph, runs each at
/// its best `(α, β)` from the same inputs and writes the radius grids,
/// traces, `consensus.csv` and `plot.py`.
pub fn run_consensus_experiment(cfg: &ExperimentConfig) -> Result<ConsensusReport> {
    cfg.validate()?;
    let spec = cfg.consensus.as_ref().ok_or_else(|| anyhow!("config has no [consensus] section"))?;
    let graph = build_graph(cfg)?;
    let a = WeightMatrix64::uniform_row_stochastic(&graph)?;
    let b = WeightMatrix64::uniform_column_stochastic(&graph)?;
    let inputs = standard_normal(graph.n(), spec.p, spec.seed);
    let digest = cfg.digest();
    let out = cfg.run.out_dir.clone();
    let traces_dir = prepare(&out)?;

    let mut outcomes = Vec::new();
    for form in [ConsensusForm::Abmc, ConsensusForm::Surplus] {
        let betas = if form == ConsensusForm::Abmc { spec.betas.clone() } else { vec![0.0] };
        let (grid, best) = radius_grid(form, &a, &b, &spec.alphas, &betas)?;
        let sys = ConsensusSystem64::build(form, &a, &b, best.alpha, best.beta, spec.p)?;
        let (mut trace, z) = sys.run(&inputs, spec.iterations, RunOptions::<f64>::default().divergence_threshold)?;
        trace.meta.config_digest = Some(digest.clone());
        trace.meta.seed = Some(spec.seed);
        let final_x = sys.x_block(&z);
        outcomes.push(ConsensusOutcome { form, best, grid, trace, final_x });
    }

    let mut summary = format!("form,alpha,beta,radius,{},final_residual\n", threshold_column(cfg.run.threshold));
    let mut plotted = Vec::new();
    for o in &outcomes {
        let name = o.form.name();
        let mut csv = String::from("alpha,beta,radius\n");
        for p in &o.grid {
            let _ = writeln!(csv, "{:e},{:e},{:e}", p.alpha, p.beta, p.radius);
        }
        write(&out.join(format!("radius_{name}.csv")), &csv)?;
        thin(&o.trace, cfg.run.trace_stride).write_csv(traces_dir.join(format!("{name}.csv")))?;
        plotted.push((name.to_string(), format!("traces/{name}.csv")));
        let _ = writeln!(
            summary,
            "{name},{:e},{:e},{:e},{},{}",
            o.best.alpha,
            o.best.beta,
            o.best.radius,
            opt(o.trace.iterations_to(cfg.run.threshold)),
            opt(o.trace.final_residual().map(|r| format!("{r:e}"))),
        );
    }
    write(&out.join("consensus.csv"), &summary)?;
    write(&out.join("config.toml"), &cfg.to_toml())?;
    write(&out.join("plot.py"), &plot::trace_script(&cfg.name, &plotted))?;
    Ok(ConsensusReport { inputs, outcomes })
}

/// Writes the graph as an edge list plus its uniform weight matrices (and
/// the Laplacian weights when undirected).
pub fn generate_graph_artifacts(cfg: &ExperimentConfig, out: &Path) -> Result<Digraph> {
    cfg.validate()?;
    let graph = build_graph(cfg)?;
    fs::create_dir_all(out)?;
    graph.write_edge_list(out.join("graph.txt"))?;
    let weights = Weights::for_graph(&graph)?;
    write(&out.join("weights_rs.csv"), &weights.rs.to_csv())?;
    write(&out.join("weights_cs.csv"), &weights.cs.to_csv())?;
    if let Some(w) = &weights.ds {
        write(&out.join("weights_ds.csv"), &w.to_csv())?;
    }
    Ok(graph)
}
