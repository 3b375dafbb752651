//! Experiment configuration files.
//!
//! A config is a TOML document. Unknown keys are rejected; see
//! `configs/README.md` for the full schema.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dhb::EngineKind;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub graph: GraphSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<ObjectiveSpec>,
    pub run: RunSpec,
    #[serde(default, rename = "engine", skip_serializing_if = "Vec::is_empty")]
    pub engines: Vec<EngineSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consensus: Option<ConsensusSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub n: usize,
    pub ring_degree: usize,
    pub extra_link_fraction: f64,
    pub directed: bool,
    pub seed: u64,
}

impl GraphSpec {
    pub fn params(&self) -> dhb::NearestNeighbor {
        dhb::NearestNeighbor {
            n: self.n,
            ring_degree: self.ring_degree,
            extra_link_fraction: self.extra_link_fraction,
            seed: self.seed,
            directed: self.directed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ObjectiveSpec {
    /// Diagonal quadratics with spectra log-spaced in `[1, Q]`.
    Quadratic { p: usize, condition_number: f64, seed: u64 },
    /// Regularized logistic regression on synthetic data.
    Logistic { samples_per_agent: usize, p: usize, reg: f64, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub max_iter: usize,
    /// Early stop below this residual; `0` runs to `max_iter`.
    #[serde(default)]
    pub stop_residual: f64,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Seed of the standard normal initial iterate `x0`.
    #[serde(default)]
    pub x0_seed: u64,
    /// Keep every `trace_stride`-th record (and the last) in trace files.
    #[serde(default = "one")]
    pub trace_stride: usize,
    pub out_dir: PathBuf,
}

fn default_threshold() -> f64 {
    1e-8
}

fn one() -> usize {
    1
}

fn is_false(v: &bool) -> bool {
    !*v
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightScheme {
    /// Uniform row-/column-stochastic weights from in-/out-degrees.
    Uniform,
    /// Laplacian doubly-stochastic weights; undirected graphs only.
    Laplacian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepSpec {
    Scalar(f64),
    PerAgent(Vec<f64>),
}

impl StepSpec {
    pub fn expand(&self, n: usize) -> Vec<f64> {
        match self {
            Self::Scalar(v) => vec![*v; n],
            Self::PerAgent(v) => v.clone(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Scalar(v) => format!("{v:e}"),
            Self::PerAgent(v) => v.iter().map(|a| format!("{a:e}")).collect::<Vec<_>>().join(";"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineSpec {
    pub kind: String,
    /// Name used for output files; defaults to `kind`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightScheme>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<StepSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<StepSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tune: Option<TuneSpec>,
}

impl EngineSpec {
    pub fn engine_kind(&self) -> Result<EngineKind> {
        self.kind.parse().map_err(|_| {
            let names: Vec<_> = EngineKind::ALL.iter().map(|k| k.name()).collect();
            anyhow::anyhow!("unknown engine kind {:?}; expected one of {}", self.kind, names.join(", "))
        })
    }

    pub fn label(&self) -> &str {
        self.label.as_deref().unwrap_or(&self.kind)
    }

    pub fn weight_scheme(&self) -> Result<WeightScheme> {
        let kind = self.engine_kind()?;
        Ok(self.weights.unwrap_or(match kind {
            EngineKind::DsTracking | EngineKind::Extra => WeightScheme::Laplacian,
            _ => WeightScheme::Uniform,
        }))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Spacing {
    #[default]
    Log,
    Linear,
}

fn is_log(s: &Spacing) -> bool {
    *s == Spacing::Log
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneSpec {
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub alpha_count: usize,
    #[serde(default, skip_serializing_if = "is_log")]
    pub alpha_spacing: Spacing,
    /// Momentum grid; ignored by engines without momentum.
    #[serde(default = "zero_grid")]
    pub beta: Vec<f64>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub no_prune: bool,
}

fn zero_grid() -> Vec<f64> {
    vec![0.0]
}

impl TuneSpec {
    pub fn alphas(&self) -> Vec<f64> {
        match self.alpha_spacing {
            Spacing::Log => dhb::engines::log_space(self.alpha_min, self.alpha_max, self.alpha_count),
            Spacing::Linear => dhb::engines::lin_space(self.alpha_min, self.alpha_max, self.alpha_count),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub condition_numbers: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsensusSpec {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub iterations: usize,
    #[serde(default = "one")]
    pub p: usize,
    /// Seed of the standard normal initial values.
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).context("malformed config")?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    /// Canonical TOML: fixed key order, defaults written out.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    /// SHA-256 of the canonical form with `run.out_dir` cleared, hex, so
    /// artifacts do not depend on where they are written.
    pub fn digest(&self) -> String {
        let mut anon = self.clone();
        anon.run.out_dir = PathBuf::new();
        Sha256::digest(anon.to_toml().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Replaces every seed with `seed`.
    pub fn override_seed(&mut self, seed: u64) {
        self.graph.seed = seed;
        self.run.x0_seed = seed;
        match &mut self.objective {
            Some(ObjectiveSpec::Quadratic { seed: s, .. }) | Some(ObjectiveSpec::Logistic { seed: s, .. }) => *s = seed,
            None => {}
        }
        if let Some(c) = &mut self.consensus {
            c.seed = seed;
        }
    }

    /// Checks everything that does not need the graph or objective built.
    pub fn validate(&self) -> Result<()> {
        let g = &self.graph;
        if g.n < 2 {
            bail!("graph.n must be at least 2, got {}", g.n);
        }
        if g.ring_degree == 0 || g.ring_degree >= g.n {
            bail!("graph.ring_degree must be in 1..{}, got {}", g.n, g.ring_degree);
        }
        if !(0.0..=1.0).contains(&g.extra_link_fraction) {
            bail!("graph.extra_link_fraction must be in [0, 1], got {}", g.extra_link_fraction);
        }
        if self.run.max_iter == 0 {
            bail!("run.max_iter must be positive");
        }
        if self.run.trace_stride == 0 {
            bail!("run.trace_stride must be positive");
        }
        if !(self.run.threshold > 0.0) || !(self.run.stop_residual >= 0.0) {
            bail!("run.threshold must be positive and run.stop_residual nonnegative");
        }
        if let Some(obj) = &self.objective {
            match *obj {
                ObjectiveSpec::Quadratic { p, condition_number, .. } => {
                    if p == 0 || !(condition_number >= 1.0) {
                        bail!("quadratic objective needs p >= 1 and condition_number >= 1");
                    }
                }
                ObjectiveSpec::Logistic { samples_per_agent, p, reg, .. } => {
                    if p == 0 || samples_per_agent == 0 || !(reg > 0.0) {
                        bail!("logistic objective needs p >= 1, samples_per_agent >= 1 and reg > 0");
                    }
                }
            }
        }
        let mut labels = BTreeSet::new();
        for e in &self.engines {
            self.validate_engine(e)?;
            if !labels.insert(e.label()) {
                bail!("duplicate engine label {:?}; set `label` to tell them apart", e.label());
            }
        }
        if let Some(s) = &self.sweep {
            if s.condition_numbers.is_empty() || s.condition_numbers.iter().any(|&q| !(q >= 1.0)) {
                bail!("sweep.condition_numbers must be a nonempty list of values >= 1");
            }
        }
        if let Some(c) = &self.consensus {
            if c.alphas.is_empty() || c.betas.is_empty() {
                bail!("consensus.alphas and consensus.betas must be nonempty");
            }
            if c.p == 0 || c.iterations == 0 {
                bail!("consensus.p and consensus.iterations must be positive");
            }
        }
        Ok(())
    }

    fn validate_engine(&self, e: &EngineSpec) -> Result<()> {
        let kind = e.engine_kind()?;
        let label = e.label();
        if label.is_empty() || label.contains(|c: char| c == '/' || c == '\\' || c.is_whitespace()) {
            bail!("engine label {label:?} must be a nonempty file-name-safe token");
        }
        let scheme = e.weight_scheme()?;
        if kind.is_centralized() {
            if e.weights.is_some() {
                bail!("engine {label}: centralized engines take no weights");
            }
        } else {
            if scheme == WeightScheme::Laplacian && self.graph.directed {
                bail!(
                    "engine {label} needs doubly-stochastic (laplacian) weights, which require an undirected graph; \
                     set graph.directed = false or drop the engine"
                );
            }
            if matches!(kind, EngineKind::DsTracking | EngineKind::Extra) && scheme != WeightScheme::Laplacian {
                bail!("engine {label}: {kind} needs doubly-stochastic weights; use weights = \"laplacian\"");
            }
            if e.alpha.is_none() && e.tune.is_none() {
                bail!("engine {label}: give either `alpha` or a `tune` grid");
            }
        }
        if e.alpha.is_some() && e.tune.is_some() {
            bail!("engine {label}: `alpha` and `tune` are mutually exclusive");
        }
        let n = if kind.is_centralized() { 1 } else { self.graph.n };
        for (name, spec) in [("alpha", &e.alpha), ("beta", &e.beta)] {
            if let Some(StepSpec::PerAgent(v)) = spec {
                if v.len() != n {
                    bail!("engine {label}: {name} has {} entries, expected {n}", v.len());
                }
            }
        }
        if e.beta.is_some() && !kind.uses_momentum() {
            bail!("engine {label}: {kind} has no momentum parameter");
        }
        if let Some(t) = &e.tune {
            if t.alpha_count == 0 || !(t.alpha_min > 0.0) || !(t.alpha_max >= t.alpha_min) {
                bail!("engine {label}: tune needs 0 < alpha_min <= alpha_max and alpha_count >= 1");
            }
            if t.beta.is_empty() || t.beta.iter().any(|&b| !(0.0..1.0).contains(&b)) {
                bail!("engine {label}: tune.beta must be a nonempty list in [0, 1)");
            }
            if e.beta.is_some() {
                bail!("engine {label}: `beta` and `tune` are mutually exclusive");
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
name = "sample"

[graph]
n = 6
ring_degree = 2
extra_link_fraction = 0.1
directed = true
seed = 1

[objective]
kind = "quadratic"
p = 2
condition_number = 10.0
seed = 2

[run]
max_iter = 100
out_dir = "out"

[[engine]]
kind = "abm"
alpha = 0.01
beta = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6]

[[engine]]
kind = "gd"
"#;

    #[test]
    fn parses_and_fills_defaults() {
        let cfg = ExperimentConfig::parse(SAMPLE).unwrap();
        assert_eq!(cfg.run.threshold, 1e-8);
        assert_eq!(cfg.run.trace_stride, 1);
        assert_eq!(cfg.engines.len(), 2);
        assert_eq!(cfg.engines[0].beta, Some(StepSpec::PerAgent(vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6])));
        cfg.validate().unwrap();
    }

    #[test]
    fn canonical_form_is_a_fixed_point() {
        let cfg = ExperimentConfig::parse(SAMPLE).unwrap();
        let canon = cfg.to_toml();
        let again = ExperimentConfig::parse(&canon).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.to_toml(), canon);
        assert_eq!(again.digest(), cfg.digest());
        let mut moved = cfg.clone();
        moved.run.out_dir = PathBuf::from("elsewhere");
        assert_eq!(moved.digest(), cfg.digest());
    }

    #[test]
    fn unknown_keys_are_errors() {
        let bad = SAMPLE.replace("seed = 1", "seed = 1\ncolour = \"blue\"");
        assert!(ExperimentConfig::parse(&bad).is_err());
        let bad = SAMPLE.replace("condition_number = 10.0", "condition_number = 10.0\nreg = 0.1");
        assert!(ExperimentConfig::parse(&bad).is_err());
    }

    #[test]
    fn ds_engine_on_directed_graph_is_rejected() {
        let mut cfg = ExperimentConfig::parse(SAMPLE).unwrap();
        cfg.engines.push(EngineSpec {
            kind: "ds-tracking".into(),
            label: None,
            weights: None,
            alpha: Some(StepSpec::Scalar(0.01)),
            beta: None,
            tune: None,
        });
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("undirected"), "{err}");
        cfg.graph.directed = false;
        cfg.validate().unwrap();
    }

    #[test]
    fn engine_shape_errors() {
        let mut cfg = ExperimentConfig::parse(SAMPLE).unwrap();
        cfg.engines[0].alpha = Some(StepSpec::PerAgent(vec![0.1; 3]));
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::parse(SAMPLE).unwrap();
        cfg.engines[0].kind = "sgd".into();
        assert!(cfg.validate().unwrap_err().to_string().contains("unknown engine"));
        let mut cfg = ExperimentConfig::parse(SAMPLE).unwrap();
        cfg.engines[1].label = Some("abm".into());
        assert!(cfg.validate().unwrap_err().to_string().contains("duplicate"));
    }

    #[test]
    fn seed_override_reaches_every_seed() {
        let mut cfg = ExperimentConfig::parse(SAMPLE).unwrap();
        let before = cfg.digest();
        cfg.override_seed(99);
        assert_eq!((cfg.graph.seed, cfg.run.x0_seed), (99, 99));
        assert!(matches!(cfg.objective, Some(ObjectiveSpec::Quadratic { seed: 99, .. })));
        assert_ne!(cfg.digest(), before);
    }
}
