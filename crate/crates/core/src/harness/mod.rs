//! Experiment orchestration: presets, multi-run training, evaluation,
//! sweeps and plots.

mod curves;
mod eval;
mod experiment;
mod plot;
mod sweep;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::deep::{DeepHyperparams, DeepMethod};
use crate::env::EnvId;
use crate::tabular::{TabularHyperparams, TabularMethod};
use crate::{Error, Result};

pub use curves::{
    curve_from_csv, curve_to_csv, moving_average, moving_stats, read_curve, write_curve, Aggregate,
    MOVING_WINDOW,
};
pub use eval::{evaluate_policy, DealSet, EpisodeStats, EvalReport, Policy};
pub use experiment::{
    load_checkpoint, run_experiment, CheckpointMeta, ExperimentOutput, RunOutcome,
};
pub use plot::{emit_plot, series_label, AxisTransform, PLOT_HEIGHT, PLOT_WIDTH};
pub use sweep::{load_sweep, run_sweep, SweepConfig, SweepRow};

/// Training method, tabular or deep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    Tabular(TabularMethod),
    Deep(DeepMethod),
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Tabular(m) => m.as_str(),
            Method::Deep(m) => m.as_str(),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.parse::<TabularMethod>()
            .map(Method::Tabular)
            .or_else(|_| s.parse::<DeepMethod>().map(Method::Deep))
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.as_str().to_string()
    }
}

/// Hyperparameters of either family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Hyperparams {
    Tabular(TabularHyperparams),
    Deep(DeepHyperparams),
}

/// Names accepted by [`preset`].
pub const PRESETS: [&str; 8] = [
    "ql", "ql-ccr", "ql-nstep", "dqn", "dqn-nstep", "dqn-ccr", "drqn", "drqn-ccr",
];

fn tabular(alpha: f64, gamma: f64, n: usize) -> Hyperparams {
    Hyperparams::Tabular(TabularHyperparams {
        alpha,
        gamma,
        epsilon: 0.01,
        n,
    })
}

fn deep(gamma: f64, n: usize, recurrent: bool) -> Hyperparams {
    Hyperparams::Deep(DeepHyperparams {
        alpha: 1e-4,
        gamma,
        epsilon: 0.01,
        memory: if recurrent { 5000 } else { 10_000 },
        batch_size: if recurrent { 32 } else { 64 },
        target_update: 100,
        n,
        unroll: 2,
        max_episode_len: 50,
        hidden: vec![128, 128],
        recurrent_units: 128,
    })
}

/// Published hyperparameters for each method. `ql-nstep` has no published
/// row; it reuses the `ql` values with `n = 2`.
pub fn preset(name: &str) -> Result<Hyperparams> {
    Ok(match name {
        "ql" => tabular(0.1, 0.9, 1),
        "ql-ccr" => tabular(0.01, 0.5, 1),
        "ql-nstep" => tabular(0.1, 0.9, 2),
        "dqn" => deep(0.7, 1, false),
        "dqn-nstep" => deep(0.3, 2, false),
        "dqn-ccr" => deep(0.5, 1, false),
        "drqn" => deep(0.5, 1, true),
        "drqn-ccr" => deep(0.1, 1, true),
        other => return Err(Error::UnknownPreset(other.to_string())),
    })
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

impl Hyperparams {
    /// Keys accepted by [`Hyperparams::set`] for this family.
    pub fn keys(&self) -> &'static [&'static str] {
        match self {
            Hyperparams::Tabular(_) => &["alpha", "gamma", "epsilon", "n"],
            Hyperparams::Deep(_) => &[
                "alpha",
                "gamma",
                "epsilon",
                "memory",
                "batch_size",
                "target_update",
                "n",
                "unroll",
                "max_episode_len",
                "hidden",
                "recurrent_units",
            ],
        }
    }

    /// Overrides one value by key. `hidden` takes a comma-separated list.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self {
            Hyperparams::Tabular(hp) => match key {
                "alpha" => hp.alpha = parse_value(key, value)?,
                "gamma" => hp.gamma = parse_value(key, value)?,
                "epsilon" => hp.epsilon = parse_value(key, value)?,
                "n" => hp.n = parse_value(key, value)?,
                _ => return Err(Error::Config(format!("unknown tabular hyperparameter `{key}`"))),
            },
            Hyperparams::Deep(hp) => match key {
                "alpha" => hp.alpha = parse_value(key, value)?,
                "gamma" => hp.gamma = parse_value(key, value)?,
                "epsilon" => hp.epsilon = parse_value(key, value)?,
                "memory" | "replay_capacity" => hp.memory = parse_value(key, value)?,
                "batch_size" => hp.batch_size = parse_value(key, value)?,
                "target_update" => hp.target_update = parse_value(key, value)?,
                "n" => hp.n = parse_value(key, value)?,
                "unroll" => hp.unroll = parse_value(key, value)?,
                "max_episode_len" => hp.max_episode_len = parse_value(key, value)?,
                "recurrent_units" => hp.recurrent_units = parse_value(key, value)?,
                "hidden" => {
                    hp.hidden = value
                        .split(',')
                        .filter(|s| !s.trim().is_empty())
                        .map(|s| parse_value(key, s))
                        .collect::<Result<Vec<usize>>>()?;
                }
                _ => return Err(Error::Config(format!("unknown deep hyperparameter `{key}`"))),
            },
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Hyperparams::Tabular(hp) => hp.validate(),
            Hyperparams::Deep(hp) => hp.validate(),
        }
    }

    fn matches(&self, method: Method) -> bool {
        matches!(
            (self, method),
            (Hyperparams::Tabular(_), Method::Tabular(_)) | (Hyperparams::Deep(_), Method::Deep(_))
        )
    }
}

/// One experiment: `runs` independent trainings of `method` on `env`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub env: EnvId,
    pub method: Method,
    /// Preset name; defaults to the method name.
    pub preset: Option<String>,
    /// `key = value` overrides applied on top of the preset, in key order.
    pub overrides: BTreeMap<String, String>,
    pub episodes: usize,
    pub runs: usize,
    pub seed: u64,
    pub out: PathBuf,
    /// Keep a checkpoint of every run's final policy.
    pub checkpoints: bool,
}

impl RunConfig {
    pub fn new(env: EnvId, method: Method, episodes: usize, runs: usize, out: impl Into<PathBuf>) -> Self {
        Self {
            env,
            method,
            preset: None,
            overrides: BTreeMap::new(),
            episodes,
            runs,
            seed: 0,
            out: out.into(),
            checkpoints: true,
        }
    }

    pub fn preset_name(&self) -> &str {
        self.preset.as_deref().unwrap_or(self.method.as_str())
    }

    /// Preset with overrides applied, checked against the method.
    pub fn hyperparams(&self) -> Result<Hyperparams> {
        let mut hp = preset(self.preset_name())?;
        if !hp.matches(self.method) {
            return Err(Error::Config(format!(
                "preset `{}` does not fit method `{}`",
                self.preset_name(),
                self.method
            )));
        }
        for (key, value) in &self.overrides {
            hp.set(key, value)?;
        }
        hp.validate()?;
        Ok(hp)
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        self.hyperparams().map(|_| ())
    }

    /// Seed of run `index`.
    pub fn run_seed(&self, index: usize) -> u64 {
        self.seed.wrapping_add(index as u64)
    }
}

/// Parses `key=value`.
pub fn parse_override(text: &str) -> Result<(String, String)> {
    let (key, value) = text
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("expected key=value, got `{text}`")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(Error::Config(format!("empty key in `{text}`")));
    }
    Ok((key.to_string(), value.trim().to_string()))
}
