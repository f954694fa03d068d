//! Experiment specifications and the named parameters they may override.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use cotransport::builtin;
use cotransport::config::load_environment;
use cotransport::control::{TrackerConfig, TrackerReference};
use cotransport::coordination::CoordinationConfig;
use cotransport::geometry::Environment;
use cotransport::preference::ParamBox;
use cotransport::ConfigError;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    Distribution,
    Coordination,
    Pose,
}

impl Study {
    pub fn name(self) -> &'static str {
        match self {
            Study::Distribution => "distribution",
            Study::Coordination => "coordination",
            Study::Pose => "pose",
        }
    }

    pub fn default_trials(self) -> usize {
        match self {
            Study::Distribution => 1,
            Study::Coordination => 20,
            Study::Pose => 100,
        }
    }
}

impl fmt::Display for Study {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A built-in environment name or a TOML path.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvSource {
    Builtin(String),
    Path(PathBuf),
}

impl EnvSource {
    /// Built-in names win over same-named relative paths.
    pub fn parse(s: &str) -> Self {
        if builtin::environment_source(s).is_some() {
            EnvSource::Builtin(s.to_string())
        } else {
            EnvSource::Path(PathBuf::from(s))
        }
    }

    pub fn load(&self) -> Result<Environment, ConfigError> {
        match self {
            EnvSource::Builtin(name) => Ok(builtin::environment(name).expect("checked on parse")),
            EnvSource::Path(p) => load_environment(p),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SpecError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("unknown parameter {0:?} (known: {known})", known = KNOWN_KEYS.join(", "))]
    UnknownParameter(String),
    #[error("parameter {key}: {message}")]
    InvalidValue { key: String, message: String },
    #[error("override {0:?} is not of the form key=value")]
    MalformedOverride(String),
    #[error("trials must be at least 1")]
    NoTrials,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub study: Study,
    /// Empty means the four built-in environments.
    pub envs: Vec<EnvSource>,
    pub trials: usize,
    pub seed: u64,
    pub overrides: BTreeMap<String, String>,
}

impl ExperimentSpec {
    pub fn new(study: Study) -> Self {
        Self {
            study,
            envs: Vec::new(),
            trials: study.default_trials(),
            seed: 0,
            overrides: BTreeMap::new(),
        }
    }

    /// Adds a `key=value` override.
    pub fn set(&mut self, assignment: &str) -> Result<(), SpecError> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| SpecError::MalformedOverride(assignment.to_string()))?;
        self.overrides.insert(k.trim().to_string(), v.trim().to_string());
        Ok(())
    }

    pub fn environments(&self) -> Result<Vec<Environment>, SpecError> {
        if self.envs.is_empty() {
            return Ok(builtin::all_environments());
        }
        Ok(self.envs.iter().map(EnvSource::load).collect::<Result<_, _>>()?)
    }

    pub fn validate(&self) -> Result<Params, SpecError> {
        if self.trials == 0 {
            return Err(SpecError::NoTrials);
        }
        let mut p = Params::default();
        for (k, v) in &self.overrides {
            p.apply(k, v)?;
        }
        p.check()?;
        Ok(p)
    }
}

/// Every tunable the studies read.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub coordination: CoordinationConfig,
    /// Stubbornness scales of the with-model arms.
    pub etas: Vec<f64>,
    pub tracker: TrackerConfig,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            coordination: CoordinationConfig::default(),
            etas: vec![5.0, 10.5, 15.0],
            tracker: TrackerConfig::default(),
        }
    }
}

pub const KNOWN_KEYS: &[&str] = &[
    "c_r", "eta", "phi0", "alpha_lo", "alpha_hi", "gamma_lo", "gamma_hi", "grid_n", "step_length", "max_steps", "H",
    "kappa", "candidates", "delta", "dt", "q_scale", "r_scale", "substeps", "reoptimize_tv", "hold_grasp", "reference",
];

fn canonical(key: &str) -> &str {
    match key {
        "η" => "eta",
        "φ0" | "phi_0" => "phi0",
        "κ" => "kappa",
        "horizon" => "H",
        "risk_weight" => "c_r",
        other => other,
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T, SpecError>
where
    T::Err: fmt::Display,
{
    v.parse().map_err(|e: T::Err| SpecError::InvalidValue {
        key: key.to_string(),
        message: format!("{v:?}: {e}"),
    })
}

impl Params {
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), SpecError> {
        let key = canonical(key);
        let c = &mut self.coordination;
        let t = &mut self.tracker;
        match key {
            "c_r" => c.risk_weight = parse(key, value)?,
            "eta" => {
                self.etas = value
                    .split(',')
                    .map(|x| parse(key, x.trim()))
                    .collect::<Result<_, _>>()?
            }
            "phi0" => c.phi0 = parse(key, value)?,
            "alpha_lo" => c.param_box.alpha_lo = parse(key, value)?,
            "alpha_hi" => c.param_box.alpha_hi = parse(key, value)?,
            "gamma_lo" => c.param_box.gamma_lo = parse(key, value)?,
            "gamma_hi" => c.param_box.gamma_hi = parse(key, value)?,
            "grid_n" => c.grid_n = parse(key, value)?,
            "step_length" => c.step_length = parse(key, value)?,
            "max_steps" => c.max_steps = parse(key, value)?,
            "H" => t.horizon = parse(key, value)?,
            "kappa" => t.kappa = parse(key, value)?,
            "candidates" => t.candidates = parse(key, value)?,
            "delta" => t.delta = parse(key, value)?,
            "dt" => t.dt = parse(key, value)?,
            "q_scale" => t.q_scale = parse(key, value)?,
            "r_scale" => t.r_scale = parse(key, value)?,
            "substeps" => t.substeps = parse(key, value)?,
            "reoptimize_tv" => t.reoptimize_tv = parse(key, value)?,
            "hold_grasp" => t.hold_grasp = parse(key, value)?,
            "reference" => {
                t.reference = match value {
                    "observed" => TrackerReference::Observed,
                    "most_likely" => TrackerReference::MostLikely,
                    _ => {
                        return Err(SpecError::InvalidValue {
                            key: key.into(),
                            message: format!("{value:?}: expected observed or most_likely"),
                        })
                    }
                }
            }
            _ => return Err(SpecError::UnknownParameter(key.to_string())),
        }
        Ok(())
    }

    fn check(&self) -> Result<(), SpecError> {
        let bad = |key: &str, message: &str| {
            Err(SpecError::InvalidValue {
                key: key.into(),
                message: message.into(),
            })
        };
        let c = &self.coordination;
        let b = &c.param_box;
        if ParamBox::new(b.alpha_lo, b.alpha_hi, b.gamma_lo, b.gamma_hi).is_none() {
            return bad("alpha_lo..gamma_hi", "parameter box must be non-empty and positive");
        }
        if !(c.phi0 > 0.0 && c.phi0 <= 1.0) {
            return bad("phi0", "must lie in (0, 1]");
        }
        if self.etas.is_empty() || self.etas.iter().any(|e| !(*e > 0.0)) {
            return bad("eta", "needs one or more positive values");
        }
        if c.risk_weight < 0.0 || !c.risk_weight.is_finite() {
            return bad("c_r", "must be finite and non-negative");
        }
        if c.grid_n == 0 {
            return bad("grid_n", "must be at least 1");
        }
        if !(c.step_length > 0.0) {
            return bad("step_length", "must be positive");
        }
        let t = &self.tracker;
        if t.horizon == 0 || t.substeps == 0 || t.candidates == 0 {
            return bad("H/substeps/candidates", "must be at least 1");
        }
        if !(t.dt > 0.0) || t.kappa < 0.0 || t.delta < 0.0 {
            return bad("dt/kappa/delta", "dt must be positive, kappa and delta non-negative");
        }
        Ok(())
    }
}
