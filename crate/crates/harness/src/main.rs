use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use dhb::Termination;
use dhb_harness::experiment::{
    generate_graph_artifacts, run_condition_sweep, run_consensus_experiment, run_experiment, run_tuning,
};
use dhb_harness::{ExperimentConfig, GraphSpec, RunSpec};

#[derive(Parser)]
#[command(name = "dhb", version, about = "Distributed heavy-ball experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every engine of a config and write traces, summary and plot script.
    Run(Common),
    /// Repeat an experiment over condition numbers.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated condition numbers; overrides `[sweep]`.
        #[arg(long, value_delimiter = ',')]
        q: Vec<f64>,
    },
    /// Compare the two average-consensus forms.
    Consensus(Common),
    /// Grid search only.
    Tune(Common),
    /// Write a graph and its weight matrices.
    GraphGen {
        #[command(flatten)]
        common: Common,
        /// Generate an undirected graph (ignored with --config).
        #[arg(long)]
        undirected: bool,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `run.out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replaces every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of agents; overrides `graph.n`.
    #[arg(long)]
    n: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let Some(path) = &self.config else { bail!("--config is required") };
        let cfg = ExperimentConfig::load(path)?;
        Ok(self.apply(cfg))
    }

    fn apply(&self, mut cfg: ExperimentConfig) -> ExperimentConfig {
        if let Some(seed) = self.seed {
            cfg.override_seed(seed);
        }
        if let Some(n) = self.n {
            cfg.graph.n = n;
        }
        if let Some(out) = &self.out {
            cfg.run.out_dir = out.clone();
        }
        cfg
    }
}

fn graph_only(undirected: bool) -> ExperimentConfig {
    ExperimentConfig {
        name: "graph".into(),
        graph: GraphSpec { n: 50, ring_degree: 4, extra_link_fraction: 0.1, directed: !undirected, seed: 0 },
        objective: None,
        run: RunSpec {
            max_iter: 1,
            stop_residual: 0.0,
            threshold: 1e-8,
            x0_seed: 0,
            trace_stride: 1,
            out_dir: PathBuf::from("out/graph"),
        },
        engines: Vec::new(),
        sweep: None,
        consensus: None,
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(common) => {
            let cfg = common.load()?;
            let report = run_experiment(&cfg)?;
            for o in &report.outcomes {
                let it = o.iterations.map_or("-".to_string(), |k| k.to_string());
                println!(
                    "{:<24} alpha={} beta={} iterations={it} ({})",
                    o.label,
                    o.alpha,
                    o.beta,
                    o.trace.meta.termination.name()
                );
            }
            println!("wrote {}", report.out_dir.display());
            if report.all_diverged() {
                bail!("every engine diverged; reduce the step-sizes");
            }
        }
        Command::Sweep { common, q } => {
            let cfg = common.load()?;
            let qs = if q.is_empty() {
                cfg.sweep.as_ref().map(|s| s.condition_numbers.clone()).unwrap_or_default()
            } else {
                q
            };
            let report = run_condition_sweep(&cfg, &qs)?;
            for r in &report.rows {
                let it = r.iterations.map_or("-".to_string(), |k| k.to_string());
                println!("Q={:<8e} {:<24} iterations={it}", r.condition_number, r.label);
            }
            for (q, label) in &report.flags {
                eprintln!("note: {label} needed fewer iterations than ab at Q={q:e}");
            }
            if report.rows.iter().all(|r| r.termination == Termination::Diverged) {
                bail!("every run diverged");
            }
        }
        Command::Consensus(common) => {
            let cfg = common.load()?;
            let report = run_consensus_experiment(&cfg)?;
            for o in &report.outcomes {
                println!(
                    "{:<8} alpha={:e} beta={:e} radius={:.6} final residual={:e}",
                    o.form.name(),
                    o.best.alpha,
                    o.best.beta,
                    o.best.radius,
                    o.trace.final_residual().unwrap_or(f64::NAN)
                );
            }
            if report.outcomes.iter().all(|o| o.trace.meta.termination == Termination::Diverged) {
                bail!("both consensus runs diverged");
            }
        }
        Command::Tune(common) => {
            let cfg = common.load()?;
            let results = run_tuning(&cfg)?;
            let mut any = false;
            for (label, r) in &results {
                match r.best {
                    Some(p) => {
                        any = true;
                        println!(
                            "{label:<24} alpha={:e} beta={:e} iterations={}",
                            p.alpha,
                            p.beta,
                            p.iterations.unwrap_or(0)
                        );
                    }
                    None => println!("{label:<24} no grid point reached the threshold"),
                }
            }
            if !any {
                bail!("no engine reached the threshold on its grid");
            }
        }
        Command::GraphGen { common, undirected } => {
            let cfg = match &common.config {
                Some(_) => common.load()?,
                None => common.apply(graph_only(undirected)),
            };
            let out = common.out.clone().unwrap_or_else(|| cfg.run.out_dir.clone());
            let g = generate_graph_artifacts(&cfg, &out)?;
            println!("{} nodes, {} edges -> {}", g.n(), g.edge_count(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
