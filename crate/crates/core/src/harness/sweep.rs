//! Grid sweeps over hyperparameters.
//!
//! A sweep file is TOML:
//!
//! ```toml
//! env = "hintmatch"
//! method = "ql-ccr"
//! episodes = 50000   # optional, default 50000
//! runs = 10          # optional, default 10
//! seed = 0           # optional
//!
//! [grid]
//! gamma = [0.5, 0.9]
//! alpha = [0.01, 0.1]
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::curves::{read_text, write_text};
use super::{run_experiment, Method, RunConfig};
use crate::env::EnvId;
use crate::{Error, Result};

fn default_episodes() -> usize {
    50_000
}

fn default_runs() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub env: EnvId,
    pub method: Method,
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    pub grid: BTreeMap<String, Vec<toml::Value>>,
}

/// One ranked grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub combo: usize,
    pub values: BTreeMap<String, String>,
    pub final_mean: f64,
    pub final_std: f64,
    pub out: PathBuf,
}

pub fn load_sweep(path: impl AsRef<Path>) -> Result<SweepConfig> {
    let text = read_text(path.as_ref())?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("sweep file: {e}")))
}

fn value_text(key: &str, value: &toml::Value) -> Result<String> {
    Ok(match value {
        toml::Value::Float(f) => f.to_string(),
        toml::Value::Integer(i) => i.to_string(),
        toml::Value::String(s) => s.clone(),
        toml::Value::Array(items) => items
            .iter()
            .map(|v| value_text(key, v))
            .collect::<Result<Vec<_>>>()?
            .join(","),
        other => return Err(Error::Config(format!("unsupported value {other} for `{key}`"))),
    })
}

impl SweepConfig {
    /// Every grid point as `key -> value` overrides, in lexicographic key
    /// order with the last key varying fastest.
    pub fn combinations(&self) -> Result<Vec<BTreeMap<String, String>>> {
        if self.grid.is_empty() {
            return Err(Error::Config("sweep grid is empty".into()));
        }
        let mut combos = vec![BTreeMap::new()];
        for (key, values) in &self.grid {
            if values.is_empty() {
                return Err(Error::Config(format!("grid entry `{key}` has no values")));
            }
            let texts = values.iter().map(|v| value_text(key, v)).collect::<Result<Vec<_>>>()?;
            combos = combos
                .into_iter()
                .flat_map(|base| {
                    texts.iter().map(move |t| {
                        let mut c = base.clone();
                        c.insert(key.clone(), t.clone());
                        c
                    })
                })
                .collect();
        }
        Ok(combos)
    }

    fn run_config(&self, combo: usize, values: &BTreeMap<String, String>, out: &Path) -> RunConfig {
        let mut cfg = RunConfig::new(self.env, self.method, self.episodes, self.runs, out.join(format!("combo_{combo:03}")));
        cfg.preset = self.preset.clone();
        cfg.overrides = values.clone();
        cfg.seed = self.seed;
        cfg.checkpoints = false;
        cfg
    }
}

/// Validates every grid point, then runs them in order and writes a ranked
/// `sweep.csv` into `out`. Ranking is by final moving average, best first;
/// ties keep grid order.
pub fn run_sweep(config: &SweepConfig, out: impl AsRef<Path>) -> Result<Vec<SweepRow>> {
    let out = out.as_ref();
    let combos = config.combinations()?;
    let configs: Vec<RunConfig> = combos
        .iter()
        .enumerate()
        .map(|(k, values)| config.run_config(k, values, out))
        .collect();
    for cfg in &configs {
        cfg.validate()?;
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let mut rows = Vec::with_capacity(configs.len());
    for (k, (cfg, values)) in configs.iter().zip(&combos).enumerate() {
        log::info!("sweep point {}/{}: {values:?}", k + 1, configs.len());
        let result = run_experiment(cfg)?;
        let (final_mean, final_std) = result.aggregate.last().unwrap_or((f64::NAN, f64::NAN));
        rows.push(SweepRow {
            combo: k,
            values: values.clone(),
            final_mean,
            final_std,
            out: cfg.out.clone(),
        });
    }
    rows.sort_by(|a, b| b.final_mean.total_cmp(&a.final_mean).then(a.combo.cmp(&b.combo)));

    let keys: Vec<&String> = config.grid.keys().collect();
    let mut csv = String::from("rank,combo");
    for key in &keys {
        let _ = write!(csv, ",{key}");
    }
    csv.push_str(",final_mean,final_std\n");
    for (rank, row) in rows.iter().enumerate() {
        let _ = write!(csv, "{},{}", rank + 1, row.combo);
        for key in &keys {
            // list values contain commas
            let _ = write!(csv, ",\"{}\"", row.values[*key]);
        }
        let _ = writeln!(csv, ",{},{}", row.final_mean, row.final_std);
    }
    write_text(&out.join("sweep.csv"), &csv)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> SweepConfig {
        toml::from_str(text).unwrap()
    }

    #[test]
    fn grid_expands_to_the_cartesian_product() {
        let cfg = parse(
            r#"
            env = "hintmatch"
            method = "ql-ccr"
            [grid]
            gamma = [0.5, 0.9]
            alpha = [0.01, 0.1, 1]
            "#,
        );
        assert_eq!((cfg.episodes, cfg.runs), (50_000, 10));
        let combos = cfg.combinations().unwrap();
        assert_eq!(combos.len(), 6);
        assert_eq!(combos[0]["alpha"], "0.01");
        assert_eq!(combos[1]["gamma"], "0.9");
        assert_eq!(combos[5]["alpha"], "1");
    }

    #[test]
    fn empty_grid_and_bad_keys_fail_before_running() {
        let cfg = parse("env = \"hintmatch\"\nmethod = \"ql\"\n[grid]\n");
        assert!(cfg.combinations().is_err());
        let dir = tempfile::tempdir().unwrap();
        let cfg = parse("env = \"hintmatch\"\nmethod = \"ql\"\nepisodes = 5\n[grid]\ngamma = [0.5]\nlearning_rate = [0.1]\n");
        assert!(run_sweep(&cfg, dir.path()).is_err());
        // nothing was trained
        assert!(!dir.path().join("combo_000").exists());
        assert!(toml::from_str::<SweepConfig>("env = \"hintmatch\"\nmethod = \"ql\"\nbogus = 1\n[grid]\n").is_err());
    }
}
