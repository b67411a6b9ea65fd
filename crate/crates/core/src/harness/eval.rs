use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{ActionKind, ActionMask, EnvId, Game, GameState, Observation};
use crate::hanabi::{oracle_policy, Hanabi, HanabiState};
use crate::hintmatch::{HintMatch, HintMatchState};
use crate::nn::{LstmState, Network};
use crate::tabular::{greedy_action, QTable};
use crate::{par, Error, Result};

/// A policy to evaluate greedily.
#[derive(Debug, Clone)]
pub enum Policy {
    Table(QTable),
    Network(Network),
    /// Hint-then-play rule for colourless Hanabi.
    Oracle,
    /// Uniform over legal actions.
    Random,
}

/// Which deals the evaluation games start from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DealSet {
    Uniform,
    /// Hanabi deals where player 1 holds one card of every rank.
    BestCase,
    /// Hint-match deals where player 1 holds exactly one matching card.
    UniqueMatch,
}

/// Counters of one evaluation game.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EpisodeStats {
    pub score: f64,
    pub steps: u64,
    pub hints: u64,
    pub plays: u64,
    pub misplays: u64,
    pub discards: u64,
    pub perfect: bool,
}

/// Aggregate evaluation metrics. Percentages are over total actions,
/// except `perfect_pct` which is over games.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub episodes: usize,
    pub mean_score: f64,
    pub total_actions: u64,
    pub hints: u64,
    /// All plays, successful or not.
    pub plays: u64,
    pub misplays: u64,
    pub discards: u64,
    pub misplay_pct: f64,
    pub discard_pct: f64,
    /// Mean game length over perfect games only.
    pub avg_steps_to_perfect: Option<f64>,
    pub perfect_pct: f64,
    pub median_steps: f64,
    /// Game length to number of games.
    pub step_histogram: BTreeMap<u64, usize>,
    pub per_episode: Vec<EpisodeStats>,
}

impl EvalReport {
    pub fn from_episodes(per_episode: Vec<EpisodeStats>) -> Self {
        let n = per_episode.len();
        let sum = |f: fn(&EpisodeStats) -> u64| per_episode.iter().map(f).sum::<u64>();
        let (hints, plays, misplays, discards) = (
            sum(|e| e.hints),
            sum(|e| e.plays),
            sum(|e| e.misplays),
            sum(|e| e.discards),
        );
        let total_actions = sum(|e| e.steps);
        let pct = |x: u64| {
            if total_actions == 0 {
                0.0
            } else {
                100.0 * x as f64 / total_actions as f64
            }
        };
        let perfect: Vec<u64> = per_episode.iter().filter(|e| e.perfect).map(|e| e.steps).collect();
        let mut step_histogram = BTreeMap::new();
        for e in &per_episode {
            *step_histogram.entry(e.steps).or_insert(0) += 1;
        }
        let mut lengths: Vec<u64> = per_episode.iter().map(|e| e.steps).collect();
        lengths.sort_unstable();
        let median_steps = match n {
            0 => 0.0,
            _ if n % 2 == 1 => lengths[n / 2] as f64,
            _ => (lengths[n / 2 - 1] + lengths[n / 2]) as f64 / 2.0,
        };
        Self {
            episodes: n,
            mean_score: if n == 0 {
                0.0
            } else {
                per_episode.iter().map(|e| e.score).sum::<f64>() / n as f64
            },
            total_actions,
            hints,
            plays,
            misplays,
            discards,
            misplay_pct: pct(misplays),
            discard_pct: pct(discards),
            avg_steps_to_perfect: (!perfect.is_empty())
                .then(|| perfect.iter().sum::<u64>() as f64 / perfect.len() as f64),
            perfect_pct: if n == 0 {
                0.0
            } else {
                100.0 * perfect.len() as f64 / n as f64
            },
            median_steps,
            step_histogram,
            per_episode,
        }
    }

    /// Fraction of games lasting exactly `steps` actions.
    pub fn fraction_with_steps(&self, steps: u64) -> f64 {
        if self.episodes == 0 {
            return 0.0;
        }
        *self.step_histogram.get(&steps).unwrap_or(&0) as f64 / self.episodes as f64
    }

    /// `key: value` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "episodes: {}", self.episodes);
        let _ = writeln!(out, "mean_score: {:.3}", self.mean_score);
        let _ = writeln!(out, "total_actions: {}", self.total_actions);
        let _ = writeln!(out, "hints: {}", self.hints);
        let _ = writeln!(out, "plays: {}", self.plays);
        let _ = writeln!(out, "misplays: {}", self.misplays);
        let _ = writeln!(out, "discards: {}", self.discards);
        let _ = writeln!(out, "misplay_pct: {:.2}", self.misplay_pct);
        let _ = writeln!(out, "discard_pct: {:.2}", self.discard_pct);
        match self.avg_steps_to_perfect {
            Some(s) => {
                let _ = writeln!(out, "avg_steps_to_perfect: {s:.2}");
            }
            None => out.push_str("avg_steps_to_perfect: none\n"),
        }
        let _ = writeln!(out, "perfect_pct: {:.2}", self.perfect_pct);
        let _ = writeln!(out, "median_steps: {}", self.median_steps);
        let histogram: Vec<String> = self
            .step_histogram
            .iter()
            .map(|(steps, count)| format!("{steps}:{count}"))
            .collect();
        let _ = writeln!(out, "step_histogram: {}", histogram.join(" "));
        out
    }
}

type Oracle<S> = fn(&S) -> usize;

fn check_compatible(policy: &Policy, obs_len: usize, actions: usize) -> Result<()> {
    match policy {
        Policy::Table(table) => {
            if table.actions() != actions {
                return Err(Error::IncompatiblePolicy(format!(
                    "table with {} actions for an environment with {actions}",
                    table.actions()
                )));
            }
            if let Some(len) = table.observation_len().filter(|&l| l != obs_len) {
                return Err(Error::IncompatiblePolicy(format!(
                    "table keyed by {len}-bit states for {obs_len}-bit observations"
                )));
            }
        }
        Policy::Network(net) => {
            let shape = net.shape();
            if shape.input != obs_len || shape.output != actions {
                return Err(Error::IncompatiblePolicy(format!(
                    "network {}->{} for observations of {obs_len} bits and {actions} actions",
                    shape.input, shape.output
                )));
            }
        }
        Policy::Oracle | Policy::Random => {}
    }
    Ok(())
}

fn choose<S: GameState>(
    policy: &Policy,
    oracle: Option<Oracle<S>>,
    carried: &mut [LstmState],
    state: &S,
    obs: &Observation,
    legal: ActionMask,
    rng: &mut ChaCha8Rng,
) -> Result<usize> {
    let agent = state.current_player();
    Ok(match policy {
        Policy::Table(table) => greedy_action(&table.values(obs), legal, rng),
        Policy::Network(net) => {
            let input = obs.to_f64();
            let values = if net.shape().is_recurrent() {
                let (values, next) = net.forward_recurrent(&input, &carried[agent])?;
                carried[agent] = next;
                values
            } else {
                net.forward(&input)?
            };
            greedy_action(&values, legal, rng)
        }
        Policy::Oracle => {
            let oracle = oracle.ok_or_else(|| {
                Error::IncompatiblePolicy("the oracle is only defined for colourless Hanabi".into())
            })?;
            oracle(state)
        }
        Policy::Random => {
            let legal = legal.to_vec();
            legal[rng.random_range(0..legal.len())]
        }
    })
}

/// Deal attempts per episode before giving up on a filter.
const MAX_DEAL_ATTEMPTS: usize = 10_000;

/// Starting state of game `i` plus the generator its tie-breaks continue on.
fn deal<G: Game>(game: &G, accept: fn(&G::State) -> bool, seed: u64, i: usize) -> Result<(G::State, ChaCha8Rng)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    let state = (0..MAX_DEAL_ATTEMPTS)
        .map(|_| game.reset(rng.next_u64()))
        .find(accept)
        .ok_or_else(|| Error::InvalidInput("no deal satisfied the deal filter".into()))?;
    Ok((state, rng))
}

fn rollouts<G: Game>(
    game: &G,
    policy: &Policy,
    oracle: Option<Oracle<G::State>>,
    accept: fn(&G::State) -> bool,
    episodes: usize,
    seed: u64,
) -> Result<Vec<EpisodeStats>> {
    check_compatible(policy, game.observation_len(), game.num_actions())?;
    let units = match policy {
        Policy::Network(net) => net.shape().recurrent.unwrap_or(0),
        _ => 0,
    };
    let max_score = game.max_score();
    let results = par::map_indexed(episodes, |i| -> Result<EpisodeStats> {
        let (mut state, mut rng) = deal(game, accept, seed, i)?;
        let mut carried = vec![LstmState::zeros(units); game.num_players()];
        let mut stats = EpisodeStats::default();
        while !state.is_terminal() {
            let obs = state.observe(state.current_player());
            let legal = state.legal_mask();
            let action = choose(policy, oracle, &mut carried, &state, &obs, legal, &mut rng)?;
            let outcome = state.step(action)?;
            stats.steps += 1;
            match outcome.kind {
                ActionKind::Hint => stats.hints += 1,
                ActionKind::Discard => stats.discards += 1,
                ActionKind::Play { success } => {
                    stats.plays += 1;
                    if !success {
                        stats.misplays += 1;
                    }
                }
            }
        }
        stats.score = state.score();
        stats.perfect = stats.score == max_score;
        Ok(stats)
    });
    results.into_iter().collect()
}

fn any_deal<S>(_: &S) -> bool {
    true
}

fn unique_match(state: &HintMatchState) -> bool {
    state.unique_match(1).is_some()
}

fn hanabi_oracle(state: &HanabiState) -> usize {
    oracle_policy(state, state.current_player())
}

/// Greedy rollouts of `policy` over `episodes` games. Game `i` draws its
/// deal and tie-breaks from stream `i` of a generator seeded by `seed`, so
/// results do not depend on scheduling.
pub fn evaluate_policy(
    policy: &Policy,
    env: EnvId,
    episodes: usize,
    deals: DealSet,
    seed: u64,
) -> Result<EvalReport> {
    let stats = match (env, deals) {
        (EnvId::HintMatch, DealSet::Uniform) => rollouts(&HintMatch, policy, None, any_deal, episodes, seed)?,
        (EnvId::HintMatch, DealSet::UniqueMatch) => {
            rollouts(&HintMatch, policy, None, unique_match, episodes, seed)?
        }
        (EnvId::HanabiColourless, DealSet::Uniform) => rollouts(
            &Hanabi::new(),
            policy,
            Some(hanabi_oracle),
            any_deal,
            episodes,
            seed,
        )?,
        (EnvId::HanabiColourless, DealSet::BestCase) => rollouts(
            &Hanabi::best_case(),
            policy,
            Some(hanabi_oracle),
            any_deal,
            episodes,
            seed,
        )?,
        (env, deals) => {
            return Err(Error::Config(format!("deal set {deals:?} is not defined for {env}")));
        }
    };
    Ok(EvalReport::from_episodes(stats))
}
