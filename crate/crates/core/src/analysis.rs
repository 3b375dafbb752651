//! Convergence traces, linear-rate fitting and reference rates.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Residuals at or below this are treated as numerically exact and ignored
/// when fitting rates.
pub const SATURATION_FLOOR: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Termination {
    Converged,
    MaxIter,
    Diverged,
}

impl Termination {
    pub fn name(self) -> &'static str {
        match self {
            Self::Converged => "converged",
            Self::MaxIter => "max_iter",
            Self::Diverged => "diverged",
        }
    }
}

impl FromStr for Termination {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "converged" => Ok(Self::Converged),
            "max_iter" => Ok(Self::MaxIter),
            "diverged" => Ok(Self::Diverged),
            _ => Err(Error::Parse(format!("unknown termination {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRecord<T> {
    pub k: usize,
    pub residual: T,
    /// `‖Σ y − Σ ∇f‖` for engines that track the gradient sum.
    pub tracking_error: Option<T>,
    pub elapsed_s: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceMeta {
    pub engine: String,
    pub config_digest: Option<String>,
    pub seed: Option<u64>,
    pub termination: Termination,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace<T> {
    pub meta: TraceMeta,
    pub records: Vec<TraceRecord<T>>,
}

pub const TRACE_HEADER: &str = "k,residual,tracking_error,elapsed_s";

impl<T: Real> Trace<T> {
    pub fn new(engine: impl Into<String>) -> Self {
        Self {
            meta: TraceMeta {
                engine: engine.into(),
                config_digest: None,
                seed: None,
                termination: Termination::MaxIter,
            },
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn residuals(&self) -> Vec<T> {
        self.records.iter().map(|r| r.residual).collect()
    }

    pub fn final_residual(&self) -> Option<T> {
        self.records.last().map(|r| r.residual)
    }

    pub fn max_tracking_error(&self) -> Option<T> {
        self.records.iter().filter_map(|r| r.tracking_error).reduce(T::max)
    }

    /// First `k` with `residual < threshold`.
    pub fn iterations_to(&self, threshold: T) -> Option<usize> {
        iterations_to_threshold(&self.records, threshold)
    }

    /// Metadata comment line followed by the CSV body.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        let m = &self.meta;
        let _ = write!(out, "# engine={} termination={}", m.engine, m.termination.name());
        if let Some(seed) = m.seed {
            let _ = write!(out, " seed={seed}");
        }
        if let Some(d) = &m.config_digest {
            let _ = write!(out, " config={d}");
        }
        out.push('\n');
        out.push_str(TRACE_HEADER);
        out.push('\n');
        for r in &self.records {
            let te = r.tracking_error.map(|t| format!("{:e}", t.as_f64())).unwrap_or_default();
            let _ = writeln!(out, "{},{:e},{},{:e}", r.k, r.residual.as_f64(), te, r.elapsed_s);
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = BufReader::new(fs::File::open(path)?);
        let mut first = String::new();
        reader.read_line(&mut first)?;
        let meta = parse_meta(first.trim_end())?;
        let mut rdr = csv::Reader::from_reader(reader);
        if rdr.headers()?.iter().collect::<Vec<_>>().join(",") != TRACE_HEADER {
            return Err(Error::Parse(format!("trace header must be {TRACE_HEADER}")));
        }
        let mut records = Vec::new();
        for row in rdr.records() {
            let row = row?;
            let field = |i: usize| row.get(i).unwrap_or("");
            let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}")));
            let k = field(0).parse::<usize>().map_err(|e| Error::Parse(format!("k: {e}")))?;
            let tracking_error = match field(2) {
                "" => None,
                s => Some(T::lit(num(s)?)),
            };
            records.push(TraceRecord {
                k,
                residual: T::lit(num(field(1))?),
                tracking_error,
                elapsed_s: num(field(3))?,
            });
        }
        Ok(Self { meta, records })
    }
}

fn parse_meta(line: &str) -> Result<TraceMeta> {
    let body = line.strip_prefix('#').ok_or_else(|| Error::Parse("trace must start with a metadata line".into()))?;
    let mut meta =
        TraceMeta { engine: String::new(), config_digest: None, seed: None, termination: Termination::MaxIter };
    for kv in body.split_whitespace() {
        let (key, value) = kv.split_once('=').ok_or_else(|| Error::Parse(format!("bad metadata {kv:?}")))?;
        match key {
            "engine" => meta.engine = value.to_string(),
            "termination" => meta.termination = value.parse()?,
            "seed" => meta.seed = Some(value.parse().map_err(|e| Error::Parse(format!("seed: {e}")))?),
            "config" => meta.config_digest = Some(value.to_string()),
            _ => return Err(Error::Parse(format!("unknown metadata key {key:?}"))),
        }
    }
    Ok(meta)
}

/// First `k` with `residual < threshold`.
pub fn iterations_to_threshold<T: Real>(records: &[TraceRecord<T>], threshold: T) -> Option<usize> {
    records.iter().find(|r| r.residual < threshold).map(|r| r.k)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    /// `exp(slope)`: the per-iteration contraction factor.
    pub rate: f64,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Least-squares fit of `ln r_k = slope · k + intercept` over the last
/// `tail_fraction` of the records, skipping residuals below
/// [`SATURATION_FLOOR`] and non-finite ones.
pub fn fit_linear_rate<T: Real>(records: &[TraceRecord<T>], tail_fraction: f64) -> Result<LinearFit> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!("tail fraction {tail_fraction} outside (0, 1]")));
    }
    let take = ((records.len() as f64) * tail_fraction).ceil() as usize;
    let pts: Vec<(f64, f64)> = records[records.len() - take.min(records.len())..]
        .iter()
        .map(|r| (r.k as f64, r.residual.as_f64()))
        .filter(|&(_, r)| r.is_finite() && r > SATURATION_FLOOR)
        .map(|(k, r)| (k, r.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::InvalidParameter(format!("{} usable points, need at least 2", pts.len())));
    }
    let m = pts.len() as f64;
    let (mk, ml) = pts.iter().fold((0.0, 0.0), |(a, b), &(k, l)| (a + k, b + l));
    let (mk, ml) = (mk / m, ml / m);
    let (mut skk, mut skl, mut sll) = (0.0, 0.0, 0.0);
    for &(k, l) in &pts {
        skk += (k - mk) * (k - mk);
        skl += (k - mk) * (l - ml);
        sll += (l - ml) * (l - ml);
    }
    let slope = skl / skk;
    let intercept = ml - slope * mk;
    let ss_res: f64 = pts.iter().map(|&(k, l)| (l - intercept - slope * k).powi(2)).sum();
    let r_squared = if sll == 0.0 { 1.0 } else { 1.0 - ss_res / sll };
    Ok(LinearFit { rate: slope.exp(), slope, intercept, r_squared, points: pts.len() })
}

/// Worst-case linear rates on quadratics with condition number `q`:
/// `(Q−1)/(Q+1)` for optimally tuned gradient descent and `(√Q−1)/(√Q+1)`
/// for optimally tuned heavy-ball.
pub fn gd_rate_oracle(q: f64) -> (f64, f64) {
    let s = q.sqrt();
    ((q - 1.0) / (q + 1.0), (s - 1.0) / (s + 1.0))
}
