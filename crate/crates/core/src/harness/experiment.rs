use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::curves::{moving_stats, read_text, write_curve, write_text, Aggregate, MOVING_WINDOW};
use super::eval::Policy;
use super::{Hyperparams, Method, RunConfig};
use crate::deep::train_deep_with;
use crate::env::{EnvId, Game};
use crate::hanabi::Hanabi;
use crate::hintmatch::HintMatch;
use crate::nn::Network;
use crate::tabular::{train_tabular, QTable};
use crate::{par, Error, Result};

/// Sidecar written next to every checkpoint as `<checkpoint>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub method: Method,
    pub env: EnvId,
    pub hyperparams: Hyperparams,
    pub episodes: usize,
    pub seed: u64,
}

fn sidecar_path(checkpoint: &Path) -> PathBuf {
    let mut name = checkpoint.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

/// Reads a checkpoint and its sidecar.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(CheckpointMeta, Policy)> {
    let path = path.as_ref();
    let meta: CheckpointMeta = serde_json::from_str(&read_text(&sidecar_path(path))?)?;
    let policy = match meta.method {
        Method::Tabular(_) => Policy::Table(QTable::from_text(&read_text(path)?)?),
        Method::Deep(_) => Policy::Network(Network::load(path)?),
    };
    Ok((meta, policy))
}

enum Trained {
    Table(QTable),
    Net(Network),
}

impl Trained {
    fn save(&self, path: &Path) -> Result<()> {
        match self {
            Trained::Table(table) => write_text(path, &table.to_text()),
            Trained::Net(net) => net.save(path),
        }
    }
}

fn train_on<G: Game>(
    game: &G,
    method: Method,
    hp: &Hyperparams,
    episodes: usize,
    seed: u64,
) -> Result<(Vec<f64>, Trained)> {
    match (method, hp) {
        (Method::Tabular(m), Hyperparams::Tabular(hp)) => {
            let run = train_tabular(game, m, hp, episodes, seed)?;
            Ok((run.curve, Trained::Table(run.table)))
        }
        (Method::Deep(m), Hyperparams::Deep(hp)) => {
            let report_every = (episodes / 20).max(1000);
            let log_progress = |episode: usize, _score: f64| {
                if (episode + 1).is_multiple_of(report_every) {
                    log::info!("{} seed {seed}: episode {}/{episodes}", m.as_str(), episode + 1);
                }
            };
            let run = train_deep_with(game, m, hp, episodes, seed, log_progress)?;
            Ok((run.curve, Trained::Net(run.policy)))
        }
        _ => Err(Error::Config(format!("hyperparameters do not fit method `{method}`"))),
    }
}

fn train_one(env: EnvId, method: Method, hp: &Hyperparams, episodes: usize, seed: u64) -> Result<(Vec<f64>, Trained)> {
    match env {
        EnvId::HintMatch => train_on(&HintMatch, method, hp, episodes, seed),
        EnvId::HanabiColourless => train_on(&Hanabi::new(), method, hp, episodes, seed),
    }
}

/// One finished run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub seed: u64,
    pub curve: Vec<f64>,
    pub curve_file: PathBuf,
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub runs: Vec<RunOutcome>,
    pub aggregate: Aggregate,
    pub aggregate_file: PathBuf,
}

impl ExperimentOutput {
    pub fn curves(&self) -> Vec<Vec<f64>> {
        self.runs.iter().map(|r| r.curve.clone()).collect()
    }
}

fn checkpoint_extension(method: Method) -> &'static str {
    match method {
        Method::Tabular(_) => "qtable",
        Method::Deep(_) => "net",
    }
}

/// Trains `config.runs` independent runs (in parallel when enabled) and
/// writes `run_NNN.csv`, `aggregate.csv`, `config.json` and, if requested,
/// one checkpoint plus sidecar per run into `config.out`.
pub fn run_experiment(config: &RunConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let hp = config.hyperparams()?;
    fs::create_dir_all(&config.out).map_err(|e| Error::io(&config.out, e))?;
    let settings = serde_json::json!({ "config": config, "hyperparams": hp });
    write_text(&config.out.join("config.json"), &serde_json::to_string_pretty(&settings)?)?;

    let trained = par::map_indexed(config.runs, |i| {
        let seed = config.run_seed(i);
        let result = train_one(config.env, config.method, &hp, config.episodes, seed);
        log::info!("{} on {}: run {} finished", config.method, config.env, i);
        result
    });

    let mut runs = Vec::with_capacity(config.runs);
    for (i, result) in trained.into_iter().enumerate() {
        let (curve, policy) = result?;
        let seed = config.run_seed(i);
        let curve_file = config.out.join(format!("run_{i:03}.csv"));
        write_curve(&curve_file, &curve)?;
        let checkpoint = if config.checkpoints {
            let path = config
                .out
                .join(format!("run_{i:03}.{}", checkpoint_extension(config.method)));
            policy.save(&path)?;
            let meta = CheckpointMeta {
                method: config.method,
                env: config.env,
                hyperparams: hp.clone(),
                episodes: config.episodes,
                seed,
            };
            write_text(&sidecar_path(&path), &serde_json::to_string_pretty(&meta)?)?;
            Some(path)
        } else {
            None
        };
        runs.push(RunOutcome {
            seed,
            curve,
            curve_file,
            checkpoint,
        });
    }

    let curves: Vec<Vec<f64>> = runs.iter().map(|r| r.curve.clone()).collect();
    let aggregate = moving_stats(&curves, MOVING_WINDOW)?;
    let aggregate_file = config.out.join("aggregate.csv");
    aggregate.write(&aggregate_file)?;
    Ok(ExperimentOutput {
        runs,
        aggregate,
        aggregate_file,
    })
}
