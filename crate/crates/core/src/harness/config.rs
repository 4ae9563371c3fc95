//! Experiment configuration: a flat `key = value` text format with dotted
//! keys, optional `[section]` headers that prefix the keys below them, and
//! `#` comments.
//!
//! ```text
//! [problem]
//! kind = quadratic
//! d = 2
//! n = 50
//!
//! [schedule]
//! family = linear
//! params = 2.302585092994046, 0, -0.6931471805599453, 0.1, 0, 10
//! delta_T = auto
//!
//! mesh.steps = 100
//! optimizer.kind = mirror_sgd
//! seeds = 0..20
//! output = out/run
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};

use crate::bregman::MirrorMap;
use crate::error::{Error, Result};
use crate::gradient_models::{MartingaleGradientModel, StateSpaceGradientModel};
use crate::harness::problem::{generate_problem, ProblemInstance, ProblemKind};
use crate::optimizers::{GradientModel, LatentInit, OptimizerKind, OptimizerSpec, StreamMode};
use crate::rng::{component_rng, Stream};
use crate::schedules::{Family, Schedule, Terminal};

/// Environment variable that replaces the configured seed list.
pub const SEED_ENV: &str = "VAROPT_SEED";

const KNOWN_KEYS: &[&str] = &[
    "problem.kind",
    "problem.d",
    "problem.n",
    "problem.ridge",
    "problem.seed",
    "stream.mode",
    "model.kind",
    "model.sigma",
    "model.n",
    "model.m",
    "model.A",
    "model.L",
    "model.b",
    "model.dtilde",
    "model.y0_law",
    "schedule.family",
    "schedule.params",
    "schedule.delta_T",
    "schedule.T",
    "schedule.require_scaling",
    "mesh.steps",
    "optimizer.kind",
    "optimizer.steps",
    "optimizer.x0",
    "optimizer.inner_steps",
    "map.kind",
    "map.diag",
    "map.lo",
    "map.hi",
    "diagnostics.burn_fraction",
    "diagnostics.rate_bound",
    "seeds",
    "output",
];

/// Parsed but uninterpreted key/value pairs, kept sorted by key.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Config(format!("line {}: unterminated section header", no + 1)))?;
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", no + 1)))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", no + 1)));
            }
            let key = if section.is_empty() { k.to_string() } else { format!("{section}.{k}") };
            let value = v.trim().trim_matches('"').to_string();
            if entries.insert(key.clone(), value).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key '{key}'", no + 1)));
            }
        }
        let cfg = Self { entries };
        cfg.check_keys()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn check_keys(&self) -> Result<()> {
        for k in self.entries.keys() {
            if !KNOWN_KEYS.contains(&k.as_str()) {
                return Err(Error::Config(format!("unknown config key '{k}'")));
            }
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(Error::Config(format!("unknown config key '{key}'")));
        }
        self.entries.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn remove(&mut self, key: &str) {
        self.entries.remove(key);
    }

    /// Canonical text form, one `key = value` per line in key order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    fn parsed<V: std::str::FromStr>(&self, key: &str) -> Result<Option<V>> {
        self.get(key)
            .map(|v| v.parse::<V>().map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'"))))
            .transpose()
    }

    fn or<V: std::str::FromStr>(&self, key: &str, default: V) -> Result<V> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }
}

pub fn parse_vector(key: &str, s: &str) -> Result<Array1<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("{key}: cannot parse number '{}'", t.trim())))
        })
        .collect::<Result<Vec<_>>>()
        .map(Array1::from)
}

/// Rows separated by `;`, entries by `,`.
pub fn parse_matrix(key: &str, s: &str) -> Result<Array2<f64>> {
    let rows: Vec<Array1<f64>> = s.split(';').map(|r| parse_vector(key, r)).collect::<Result<_>>()?;
    let n = rows.len();
    let m = rows[0].len();
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::Config(format!("{key}: ragged matrix")));
    }
    Ok(Array2::from_shape_fn((n, m), |(i, j)| rows[i][j]))
}

/// `a..b` (half-open range) or a comma-separated list.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("seeds: cannot parse '{s}'"));
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        if b <= a {
            return Err(Error::Config("seeds: empty range".into()));
        }
        return Ok((a..b).collect());
    }
    let v: Vec<u64> = s.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?;
    if v.is_empty() {
        return Err(bad());
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConfig {
    pub kind: ProblemKind,
    pub d: usize,
    pub n: usize,
    pub ridge: f64,
    pub seed: u64,
}

impl ProblemConfig {
    pub fn generate(&self) -> Result<ProblemInstance<f64>> {
        let mut rng = component_rng(self.seed, Stream::Problem);
        generate_problem(self.kind, self.d, self.n, self.ridge, &mut rng)
    }
}

/// A fully interpreted configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub raw: RawConfig,
    pub problem: ProblemConfig,
    pub optimizer: OptimizerSpec<f64>,
    pub steps: usize,
    pub seeds: Vec<u64>,
    pub output: PathBuf,
    pub burn_fraction: f64,
    pub rate_bound: f64,
}

fn schedule_family(raw: &RawConfig) -> Result<Family<f64>> {
    let family = raw.get("schedule.family").unwrap_or("constant");
    let params = raw.get("schedule.params").map(|p| parse_vector("schedule.params", p)).transpose()?;
    let want = |n: usize| -> Result<Vec<f64>> {
        match &params {
            Some(p) if p.len() == n => Ok(p.to_vec()),
            Some(p) => Err(Error::Config(format!(
                "schedule.params: {family} needs {n} values, got {}",
                p.len()
            ))),
            None => Err(Error::Config(format!("schedule.params is required for the {family} family"))),
        }
    };
    match family {
        "constant" => {
            let p = want(3)?;
            Ok(Family::Constant {
                alpha: p[0],
                beta: p[1],
                gamma: p[2],
            })
        }
        "linear" => {
            let p = want(6)?;
            Ok(Family::Linear {
                alpha: (p[0], p[1]),
                beta: (p[2], p[3]),
                gamma: (p[4], p[5]),
            })
        }
        "polynomial" => {
            let p = want(3)?;
            Ok(Family::Polynomial {
                p: p[0],
                c: p[1],
                t_min: p[2],
            })
        }
        other => Err(Error::Config(format!("unknown schedule family '{other}'"))),
    }
}

fn build_schedule(raw: &RawConfig, steps: usize) -> Result<Schedule<f64>> {
    let family = schedule_family(raw)?;
    let terminal = match raw.get("schedule.delta_T").unwrap_or("auto") {
        "auto" => Terminal::ZeroInitialWeight,
        v => Terminal::Exponent(
            v.parse::<f64>()
                .map_err(|_| Error::Config(format!("schedule.delta_T: cannot parse '{v}'")))?,
        ),
    };
    let scaling: bool = raw.or("schedule.require_scaling", false)?;
    let horizon = match raw.parsed::<f64>("schedule.T")? {
        Some(t) => t,
        None => {
            // The mesh depends on α alone; build it on a provisional horizon.
            let probe = Schedule::new(family.clone(), terminal, 1.0)?;
            if steps == 0 {
                1.0
            } else {
                probe.build_mesh(steps)?.end()
            }
        }
    };
    let s = Schedule::new(family, terminal, horizon)?;
    if scaling {
        s.require_scaling()
    } else {
        Ok(s)
    }
}

fn build_map(raw: &RawConfig) -> Result<MirrorMap<f64>> {
    match raw.get("map.kind").unwrap_or("quadratic") {
        "quadratic" => match raw.get("map.diag") {
            Some(d) => MirrorMap::quadratic_diagonal(parse_vector("map.diag", d)?),
            None => Ok(MirrorMap::euclidean()),
        },
        "entropy" => MirrorMap::entropy(raw.or("map.lo", 0.1)?, raw.or("map.hi", 10.0)?),
        "custom" => Err(Error::Config("map.kind = custom is only available through the library".into())),
        other => Err(Error::Config(format!("unknown map kind '{other}'"))),
    }
}

fn build_model(raw: &RawConfig, problem: &ProblemConfig, empirical: bool) -> Result<GradientModel<f64>> {
    let sigma: f64 = raw.or("model.sigma", 0.0)?;
    match raw.get("model.kind").unwrap_or("martingale") {
        "martingale" => {
            let n: usize = raw.or("model.n", if empirical { problem.n } else { 1 })?;
            let m: usize = raw.or("model.m", n)?;
            Ok(GradientModel::Martingale(MartingaleGradientModel::new(sigma, n, m)?))
        }
        "state_space" => {
            let dtilde: Option<usize> = raw.parsed("model.dtilde")?;
            let a = match raw.get("model.A") {
                Some(s) => parse_matrix("model.A", s)?,
                None => Array2::eye(dtilde.unwrap_or(1)),
            };
            let n = a.nrows();
            if let Some(dt) = dtilde {
                if dt != n {
                    return Err(Error::Config(format!("model.dtilde = {dt} but model.A is {n}x{n}")));
                }
            }
            let l = match raw.get("model.L") {
                Some(s) => parse_matrix("model.L", s)?,
                None => Array2::eye(n),
            };
            let b = match raw.get("model.b") {
                Some(s) => parse_vector("model.b", s)?,
                None => Array1::ones(n),
            };
            Ok(GradientModel::StateSpace(StateSpaceGradientModel::new(a, l, b, sigma, problem.d)?))
        }
        other => Err(Error::Config(format!("unknown model kind '{other}'"))),
    }
}

impl ExperimentConfig {
    /// Interprets a raw configuration. `VAROPT_SEED`, when set, replaces the
    /// seed list.
    pub fn from_raw(raw: RawConfig) -> Result<Self> {
        let env_seed = std::env::var(SEED_ENV).ok();
        Self::from_raw_with_seed(raw, env_seed.as_deref())
    }

    pub fn from_raw_with_seed(raw: RawConfig, seed_override: Option<&str>) -> Result<Self> {
        raw.check_keys()?;
        let problem = ProblemConfig {
            kind: raw.or("problem.kind", ProblemKind::Quadratic)?,
            d: raw.or("problem.d", 2)?,
            n: raw.or("problem.n", 100)?,
            ridge: raw.or("problem.ridge", 1e-2)?,
            seed: raw.or("problem.seed", 0)?,
        };
        let steps = match (raw.parsed::<usize>("mesh.steps")?, raw.parsed::<usize>("optimizer.steps")?) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::Config(format!("mesh.steps = {a} disagrees with optimizer.steps = {b}")));
            }
            (Some(a), _) | (None, Some(a)) => a,
            (None, None) => 100,
        };
        let stream = match raw.get("stream.mode").unwrap_or("empirical") {
            // In empirical mode the model's σ is additive observation noise.
            "empirical" => StreamMode::Empirical {
                observation_sigma: raw.or("model.sigma", 0.0)?,
            },
            "synthetic" => StreamMode::Synthetic,
            other => return Err(Error::Config(format!("unknown stream mode '{other}'"))),
        };
        let empirical = matches!(stream, StreamMode::Empirical { .. });
        let model = build_model(&raw, &problem, empirical)?;
        let kind: OptimizerKind = raw.get("optimizer.kind").unwrap_or("mirror_sgd").parse()?;
        let schedule = build_schedule(&raw, steps)?;
        let mut optimizer = OptimizerSpec::new(kind, build_map(&raw)?, schedule, model, stream);
        optimizer.x0 = raw.get("optimizer.x0").map(|s| parse_vector("optimizer.x0", s)).transpose()?;
        optimizer.inner_steps = raw.or("optimizer.inner_steps", 10)?;
        optimizer.latent_init = match raw.get("model.y0_law").unwrap_or("stationary") {
            "stationary" => LatentInit::Stationary,
            "zero" => LatentInit::Zero,
            "identity" => LatentInit::Covariance(Array2::eye(optimizer_latent_dim(&optimizer.model))),
            other => return Err(Error::Config(format!("unknown model.y0_law '{other}'"))),
        };
        let seeds = match seed_override {
            Some(s) => parse_seeds(s)?,
            None => parse_seeds(raw.get("seeds").unwrap_or("0"))?,
        };
        let burn_fraction: f64 = raw.or("diagnostics.burn_fraction", 0.1)?;
        if !(0.0..1.0).contains(&burn_fraction) {
            return Err(Error::Config("diagnostics.burn_fraction must lie in [0, 1)".into()));
        }
        Ok(Self {
            problem,
            optimizer,
            steps,
            seeds,
            output: PathBuf::from(raw.get("output").unwrap_or("varopt_out")),
            burn_fraction,
            rate_bound: raw.or("diagnostics.rate_bound", 1e3)?,
            raw,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_raw(RawConfig::load(path)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_raw(RawConfig::parse(text)?)
    }

    pub fn stream_is_empirical(&self) -> bool {
        matches!(self.optimizer.stream, StreamMode::Empirical { .. })
    }
}

fn optimizer_latent_dim(model: &GradientModel<f64>) -> usize {
    match model {
        GradientModel::Martingale(_) => 1,
        GradientModel::StateSpace(m) => m.latent_dim(),
    }
}
