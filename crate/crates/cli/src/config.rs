//! Flat `key = value` experiment configs.
//!
//! Blank lines and `#` comments are ignored. Command-line flags are applied on
//! top of the file through [`ExperimentConfig::set`], so both share one parser.

use std::fmt;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use bcpep::algos::ThetaIndex;
use bcpep::pep::{InitialCondition, PerformanceCriterion};
use bcpep::solve::SolveOptions;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    Ccd,
    Am,
    Cacd,
    Custom,
    Ensemble,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Ccd => "ccd",
            Algorithm::Am => "am",
            Algorithm::Cacd => "cacd",
            Algorithm::Custom => "custom",
            Algorithm::Ensemble => "ensemble",
        }
    }
}

/// Per-step rule for `custom` and `ensemble` runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rule {
    Ccd,
    Am,
    Cacd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Setting {
    Init,
    All,
}

impl Setting {
    pub fn name(self) -> &'static str {
        match self {
            Setting::Init => "init",
            Setting::All => "all",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Criterion {
    ObjGap,
    GradSq,
    EnsembleAvg,
}

impl Criterion {
    pub fn name(self) -> &'static str {
        match self {
            Criterion::ObjGap => "obj-gap",
            Criterion::GradSq => "grad-sq",
            Criterion::EnsembleAvg => "ensemble-avg",
        }
    }

    pub fn to_core(self) -> PerformanceCriterion {
        match self {
            Criterion::ObjGap => PerformanceCriterion::ObjectiveGap,
            Criterion::GradSq => PerformanceCriterion::GradSqNorm,
            Criterion::EnsembleAvg => PerformanceCriterion::EnsembleAverageGap,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Smoothness {
    Scalar(f64),
    /// One constant per block; solved as the `min`/`sum` sandwich.
    Vector(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub p: usize,
    pub cycles: Option<usize>,
    pub steps: Option<usize>,
    pub sequence: Option<Vec<usize>>,
    pub h: f64,
    pub smoothness: Smoothness,
    pub setting: Setting,
    pub radius: f64,
    pub criterion: Option<Criterion>,
    pub tolerance: f64,
    pub theta_index: ThetaIndex,
    pub all_includes_x0: bool,
    pub rule: Rule,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            algorithm: Algorithm::Ccd,
            p: 2,
            cycles: None,
            steps: None,
            sequence: None,
            h: 0.5,
            smoothness: Smoothness::Scalar(1.0),
            setting: Setting::Init,
            radius: 1.0,
            criterion: None,
            tolerance: SolveOptions::default().tolerance,
            theta_index: ThetaIndex::Prev,
            all_includes_x0: true,
            rule: Rule::Cacd,
            output: None,
        }
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} p={}", self.algorithm.name(), self.p)?;
        if let Some(k) = self.cycles {
            write!(f, " K={k}")?;
        }
        if let Some(n) = self.steps {
            write!(f, " N={n}")?;
        }
        write!(f, " {} R={}", self.setting.name(), self.radius)
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| anyhow!("{key}: cannot parse {value:?}: {e}"))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    value
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => bail!("{key}: expected a boolean, got {value:?}"),
    }
}

impl ExperimentConfig {
    /// Parses a config file body.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key = value", lineno + 1))?;
            cfg.set(key.trim(), value.trim()).with_context(|| format!("line {}", lineno + 1))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "algorithm" => {
                self.algorithm = match value {
                    "ccd" => Algorithm::Ccd,
                    "am" => Algorithm::Am,
                    "cacd" => Algorithm::Cacd,
                    "custom" => Algorithm::Custom,
                    "ensemble" => Algorithm::Ensemble,
                    _ => bail!("algorithm: unknown {value:?}"),
                }
            }
            "p" => self.p = parse_num(key, value)?,
            "K" => self.cycles = Some(parse_num(key, value)?),
            "N" => self.steps = Some(parse_num(key, value)?),
            "sequence" => self.sequence = Some(parse_list(key, value)?),
            "h" => self.h = parse_num(key, value)?,
            "L" | "Lvec" => {
                let v: Vec<f64> = parse_list(key, value)?;
                self.smoothness = match (key, v.as_slice()) {
                    ("L", [l]) => Smoothness::Scalar(*l),
                    (_, []) => bail!("{key}: empty"),
                    _ => Smoothness::Vector(v),
                };
            }
            "setting" => {
                self.setting = match value {
                    "init" => Setting::Init,
                    "all" => Setting::All,
                    _ => bail!("setting: expected init or all, got {value:?}"),
                }
            }
            "R" => self.radius = parse_num(key, value)?,
            "criterion" => {
                self.criterion = Some(match value {
                    "obj-gap" => Criterion::ObjGap,
                    "grad-sq" => Criterion::GradSq,
                    "ensemble-avg" => Criterion::EnsembleAvg,
                    _ => bail!("criterion: unknown {value:?}"),
                })
            }
            "tolerance" => self.tolerance = parse_num(key, value)?,
            "theta-index" => {
                self.theta_index = match value {
                    "prev" => ThetaIndex::Prev,
                    "next" => ThetaIndex::Next,
                    _ => bail!("theta-index: expected prev or next, got {value:?}"),
                }
            }
            "all-includes-x0" => self.all_includes_x0 = parse_bool(key, value)?,
            "rule" => {
                self.rule = match value {
                    "ccd" => Rule::Ccd,
                    "am" => Rule::Am,
                    "cacd" => Rule::Cacd,
                    _ => bail!("rule: unknown {value:?}"),
                }
            }
            "output" => self.output = Some(PathBuf::from(value)),
            _ => bail!("unknown key {key:?}"),
        }
        Ok(())
    }

    pub fn criterion(&self) -> Criterion {
        self.criterion.unwrap_or(match self.algorithm {
            Algorithm::Ensemble => Criterion::EnsembleAvg,
            _ => Criterion::ObjGap,
        })
    }

    /// Number of steps `N`.
    pub fn num_steps(&self) -> Result<usize> {
        match self.algorithm {
            Algorithm::Custom => match &self.sequence {
                Some(s) => Ok(s.len()),
                None => bail!("custom runs need a sequence"),
            },
            _ => match (self.cycles, self.steps) {
                (Some(k), _) => Ok(k * self.p),
                (None, Some(n)) => Ok(n),
                (None, None) => bail!("one of K or N is required"),
            },
        }
    }

    /// Cycle count `K`, when `N` is a whole number of cycles.
    pub fn num_cycles(&self) -> Option<usize> {
        let n = self.num_steps().ok()?;
        (self.p > 0 && n % self.p == 0).then_some(n / self.p)
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions { tolerance: self.tolerance, ..SolveOptions::default() }
    }

    pub fn initial_condition(&self) -> InitialCondition<f64> {
        match self.setting {
            Setting::Init => InitialCondition::Init { radius: self.radius },
            Setting::All => InitialCondition::All { radius: self.radius, includes_x0: self.all_includes_x0 },
        }
    }

    /// Checks the cross-key invariants.
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            bail!("p must be at least 1");
        }
        match self.algorithm {
            Algorithm::Custom => {
                if self.sequence.is_none() {
                    bail!("custom runs need a sequence");
                }
                if self.cycles.is_some() && self.steps.is_some() {
                    bail!("give exactly one of K and N");
                }
                let n = self.sequence.as_ref().map_or(0, Vec::len);
                if let Some(k) = self.cycles {
                    if k * self.p != n {
                        bail!("K = {k} does not match a sequence of length {n}");
                    }
                }
                if let Some(m) = self.steps {
                    if m != n {
                        bail!("N = {m} does not match a sequence of length {n}");
                    }
                }
            }
            _ => {
                if self.sequence.is_some() {
                    bail!("sequence is only used by custom runs");
                }
                if self.cycles.is_none() && self.steps.is_none() {
                    bail!("one of K or N is required");
                }
                if let (Some(k), Some(n)) = (self.cycles, self.steps) {
                    if k * self.p != n {
                        bail!("K = {k} and N = {n} disagree for p = {}", self.p);
                    }
                }
                if self.algorithm != Algorithm::Ensemble {
                    if let (None, Some(n)) = (self.cycles, self.steps) {
                        if n % self.p != 0 {
                            bail!("N = {n} is not a multiple of p = {}", self.p);
                        }
                    }
                }
            }
        }
        if let Smoothness::Vector(v) = &self.smoothness {
            if v.len() != self.p {
                bail!("Lvec has {} entries for p = {}", v.len(), self.p);
            }
        }
        let ls = match &self.smoothness {
            Smoothness::Scalar(l) => std::slice::from_ref(l),
            Smoothness::Vector(v) => v.as_slice(),
        };
        if ls.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
            bail!("smoothness constants must be positive and finite");
        }
        if !(self.radius >= 0.0) || !self.radius.is_finite() {
            bail!("R must be finite and nonnegative");
        }
        if !(self.h > 0.0) || !self.h.is_finite() {
            bail!("h must be positive");
        }
        if !(self.tolerance > 0.0) {
            bail!("tolerance must be positive");
        }
        if self.criterion() == Criterion::EnsembleAvg && self.algorithm != Algorithm::Ensemble {
            bail!("ensemble-avg needs algorithm = ensemble");
        }
        Ok(())
    }
}
