//! Deep Q-learning with a shared policy network.
//!
//! Five methods share one training loop: feed-forward DQN on standard,
//! n-step or credit-cognisant tuples drawn from a replay ring, and a
//! recurrent DQN on standard or credit-cognisant tuples drawn as short
//! per-agent windows from an episode memory. Every agent acts from the same
//! network using its own observation, and every agent's experience trains
//! it.
//!
//! Illegal actions are excluded both when acting and when maximising over
//! bootstrap states.

mod memory;

use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ccr::{CcrWindow, PendingAction};
use crate::env::{
    AgentId, CcrTransition, Experience, Game, GameState, NStepBuffer, NStepTransition, Observation,
    StepOutcome, Transition,
};
use crate::nn::{Adam, LstmState, NetShape, Network};
use crate::tabular::epsilon_greedy;
use crate::{par, Error, Result};

pub use memory::{EpisodeMemory, ReplayMemory};

/// Samples per gradient chunk. Fixed so the summation order, and hence the
/// result, does not depend on the thread count.
pub const GRADIENT_CHUNK: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DeepMethod {
    #[serde(rename = "dqn")]
    Dqn,
    #[serde(rename = "dqn-nstep")]
    DqnNStep,
    #[serde(rename = "dqn-ccr")]
    DqnCcr,
    #[serde(rename = "drqn")]
    Drqn,
    #[serde(rename = "drqn-ccr")]
    DrqnCcr,
}

impl DeepMethod {
    pub const ALL: [DeepMethod; 5] = [
        DeepMethod::Dqn,
        DeepMethod::DqnNStep,
        DeepMethod::DqnCcr,
        DeepMethod::Drqn,
        DeepMethod::DrqnCcr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DeepMethod::Dqn => "dqn",
            DeepMethod::DqnNStep => "dqn-nstep",
            DeepMethod::DqnCcr => "dqn-ccr",
            DeepMethod::Drqn => "drqn",
            DeepMethod::DrqnCcr => "drqn-ccr",
        }
    }

    pub fn is_recurrent(self) -> bool {
        matches!(self, DeepMethod::Drqn | DeepMethod::DrqnCcr)
    }
}

impl std::fmt::Display for DeepMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DeepMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DeepMethod::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepHyperparams {
    /// Adam learning rate.
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
    /// Replay ring capacity, or episode memory capacity in transitions for
    /// the recurrent methods.
    pub memory: usize,
    pub batch_size: usize,
    /// Train steps between target-network copies.
    pub target_update: u64,
    /// Per-agent steps folded into an n-step return.
    pub n: usize,
    /// Unrolled length of recurrent updates.
    pub unroll: usize,
    /// Global steps of an episode kept in episode memory.
    pub max_episode_len: usize,
    pub hidden: Vec<usize>,
    pub recurrent_units: usize,
}

impl DeepHyperparams {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return fail(format!("alpha {} must be positive", self.alpha));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return fail(format!("gamma {} outside (0, 1]", self.gamma));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return fail(format!("epsilon {} outside (0, 1)", self.epsilon));
        }
        for (name, value) in [
            ("memory", self.memory),
            ("batch_size", self.batch_size),
            ("n", self.n),
            ("unroll", self.unroll),
            ("max_episode_len", self.max_episode_len),
            ("recurrent_units", self.recurrent_units),
        ] {
            if value == 0 {
                return fail(format!("{name} must be positive"));
            }
        }
        if self.target_update == 0 {
            return fail("target_update must be positive".into());
        }
        if self.hidden.contains(&0) {
            return fail("hidden layer sizes must be positive".into());
        }
        Ok(())
    }

    /// Network shape for `method` on an environment with the given sizes.
    pub fn shape(&self, method: DeepMethod, input: usize, actions: usize) -> NetShape {
        if method.is_recurrent() {
            NetShape::recurrent(input, &self.hidden, self.recurrent_units, actions)
        } else {
            NetShape::mlp(input, &self.hidden, actions)
        }
    }
}

/// `max_a Q(s, a)` over `legal`; zero when nothing is legal.
fn masked_max(values: &[f64], legal: crate::env::ActionMask) -> f64 {
    legal
        .iter()
        .map(|a| values[a])
        .fold(None, |best: Option<f64>, v| Some(best.map_or(v, |b| b.max(v))))
        .unwrap_or(0.0)
}

/// TD target of one experience given the target net's values at its
/// bootstrap state.
fn td_target<E: Experience>(exp: &E, next_values: Option<&[f64]>, gamma: f64) -> f64 {
    match next_values {
        Some(values) if !exp.terminal() => {
            exp.reward() + gamma.powi(exp.discount_exponent()) * masked_max(values, exp.next_legal())
        }
        _ => exp.reward(),
    }
}

/// `y = r + gamma^k max_a Q(s', a; target)` per entry, with the bootstrap
/// dropped for terminal entries.
pub fn td_targets<E: Experience + Sync>(batch: &[E], target: &Network, gamma: f64) -> Result<Vec<f64>> {
    let chunks = par::map_chunks(batch, GRADIENT_CHUNK, |chunk| {
        chunk
            .iter()
            .map(|exp| {
                if exp.terminal() {
                    return Ok(exp.reward());
                }
                let next = target.forward(&exp.next_state().to_f64())?;
                Ok(td_target(exp, Some(&next), gamma))
            })
            .collect::<Result<Vec<f64>>>()
    });
    let mut out = Vec::with_capacity(batch.len());
    for chunk in chunks {
        out.extend(chunk?);
    }
    Ok(out)
}

/// Targets for standard transitions.
pub fn dqn_targets(batch: &[&Transition], target: &Network, gamma: f64) -> Result<Vec<f64>> {
    td_targets(batch, target, gamma)
}

/// Targets for credit-cognisant transitions.
pub fn ccr_targets(batch: &[&CcrTransition], target: &Network, gamma: f64) -> Result<Vec<f64>> {
    td_targets(batch, target, gamma)
}

fn sum_chunks(chunks: Vec<Result<(f64, Vec<f64>)>>, len: usize) -> Result<(f64, Vec<f64>)> {
    let mut loss = 0.0;
    let mut grads = vec![0.0; len];
    for chunk in chunks {
        let (l, g) = chunk?;
        loss += l;
        for (a, b) in grads.iter_mut().zip(&g) {
            *a += b;
        }
    }
    Ok((loss, grads))
}

/// Mean squared TD error over `batch` against fixed `targets`, and its
/// gradient. Only the taken action's output carries gradient.
pub fn batch_loss_gradient<E: Experience + Sync>(
    policy: &Network,
    batch: &[E],
    targets: &[f64],
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() || batch.len() != targets.len() {
        return Err(Error::InvalidInput(format!(
            "{} samples with {} targets",
            batch.len(),
            targets.len()
        )));
    }
    let scale = 1.0 / batch.len() as f64;
    let pairs: Vec<(&E, f64)> = batch.iter().zip(targets.iter().copied()).collect();
    let chunks = par::map_chunks(&pairs, GRADIENT_CHUNK, |chunk| {
        let mut grads = policy.zero_grads();
        let mut loss = 0.0;
        for (exp, y) in chunk {
            let (values, cache) = policy.forward_cached(&exp.state().to_f64())?;
            let diff = values[exp.action()] - y;
            loss += scale * diff * diff;
            let mut dout = vec![0.0; values.len()];
            dout[exp.action()] = 2.0 * scale * diff;
            policy.backward(&cache, &[dout], &mut grads)?;
        }
        Ok((loss, grads))
    });
    sum_chunks(chunks, policy.param_count())
}

/// One optimizer step of the policy towards targets computed by the
/// target net. Returns the loss before the step.
pub fn train_step<E: Experience + Sync>(
    policy: &mut Network,
    target: &Network,
    batch: &[E],
    gamma: f64,
    optimizer: &mut Adam,
) -> Result<f64> {
    let targets = td_targets(batch, target, gamma)?;
    let (loss, grads) = batch_loss_gradient(policy, batch, &targets)?;
    optimizer.step(policy.params_mut(), &grads)?;
    Ok(loss)
}

/// Copies the policy into the target every `frequency` train steps.
/// Returns whether a copy happened.
pub fn sync_target(policy: &Network, target: &mut Network, step: u64, frequency: u64) -> Result<bool> {
    if frequency == 0 {
        return Err(Error::Config("target update frequency must be positive".into()));
    }
    if step.is_multiple_of(frequency) {
        target.copy_from(policy)?;
        return Ok(true);
    }
    Ok(false)
}

/// Targets for every position of every window: the target net is run from
/// the zero state over the window's states up to position `k`, then
/// stepped once on the bootstrap state of position `k`.
pub fn recurrent_targets<E: Experience + Sync>(
    windows: &[&[E]],
    target: &Network,
    gamma: f64,
) -> Result<Vec<Vec<f64>>> {
    let chunks = par::map_chunks(windows, GRADIENT_CHUNK, |chunk| {
        chunk
            .iter()
            .map(|window| {
                let mut carried = target.initial_state();
                let mut ys = Vec::with_capacity(window.len());
                for exp in window.iter() {
                    carried = target.forward_recurrent(&exp.state().to_f64(), &carried)?.1;
                    if exp.terminal() {
                        ys.push(exp.reward());
                        continue;
                    }
                    let (next, _) = target.forward_recurrent(&exp.next_state().to_f64(), &carried)?;
                    ys.push(td_target(exp, Some(&next), gamma));
                }
                Ok(ys)
            })
            .collect::<Result<Vec<Vec<f64>>>>()
    });
    let mut out = Vec::with_capacity(windows.len());
    for chunk in chunks {
        out.extend(chunk?);
    }
    Ok(out)
}

/// TD loss summed over each window's positions and averaged over windows,
/// with its back-through-time gradient. Windows start from the zero state.
pub fn recurrent_loss_gradient<E: Experience + Sync>(
    policy: &Network,
    windows: &[&[E]],
    targets: &[Vec<f64>],
) -> Result<(f64, Vec<f64>)> {
    if windows.is_empty() || windows.len() != targets.len() {
        return Err(Error::InvalidInput(format!(
            "{} windows with {} target rows",
            windows.len(),
            targets.len()
        )));
    }
    let scale = 1.0 / windows.len() as f64;
    let pairs: Vec<(&[E], &[f64])> = windows
        .iter()
        .copied()
        .zip(targets.iter().map(Vec::as_slice))
        .collect();
    let chunks = par::map_chunks(&pairs, GRADIENT_CHUNK, |chunk| {
        let mut grads = policy.zero_grads();
        let mut loss = 0.0;
        for (window, ys) in chunk {
            if window.len() != ys.len() {
                return Err(Error::InvalidInput("window and target lengths differ".into()));
            }
            let inputs: Vec<Vec<f64>> = window.iter().map(|e| e.state().to_f64()).collect();
            let refs: Vec<&[f64]> = inputs.iter().map(Vec::as_slice).collect();
            let (outputs, _, cache) = policy.forward_sequence(&refs, &policy.initial_state())?;
            let mut douts = Vec::with_capacity(window.len());
            for ((exp, values), y) in window.iter().zip(&outputs).zip(ys.iter()) {
                let diff = values[exp.action()] - y;
                loss += scale * diff * diff;
                let mut dout = vec![0.0; values.len()];
                dout[exp.action()] = 2.0 * scale * diff;
                douts.push(dout);
            }
            policy.backward(&cache, &douts, &mut grads)?;
        }
        Ok((loss, grads))
    });
    sum_chunks(chunks, policy.param_count())
}

/// One recurrent optimizer step over windows of `unroll` consecutive
/// transitions of one agent each.
pub fn drqn_train_step<E: Experience + Sync>(
    policy: &mut Network,
    target: &Network,
    windows: &[&[E]],
    gamma: f64,
    unroll: usize,
    optimizer: &mut Adam,
) -> Result<f64> {
    if let Some(w) = windows.iter().find(|w| w.len() != unroll) {
        return Err(Error::InvalidInput(format!(
            "window of {} transitions for unroll {unroll}",
            w.len()
        )));
    }
    let targets = recurrent_targets(windows, target, gamma)?;
    let (loss, grads) = recurrent_loss_gradient(policy, windows, &targets)?;
    optimizer.step(policy.params_mut(), &grads)?;
    Ok(loss)
}

/// Policy, target and optimizer of one run.
struct Learner {
    policy: Network,
    target: Network,
    optimizer: Adam,
    train_steps: u64,
}

impl Learner {
    fn after_step(&mut self, frequency: u64) -> Result<()> {
        self.train_steps += 1;
        sync_target(&self.policy, &mut self.target, self.train_steps, frequency)?;
        Ok(())
    }
}

/// Builds the experience tuple of the step just taken.
fn standard(agent: AgentId, state: Observation, action: usize, outcome: &StepOutcome) -> Transition {
    Transition {
        agent,
        state,
        action,
        reward: outcome.reward,
        next_state: outcome.observations[agent].clone(),
        next_legal: outcome.masks[agent],
        terminal: outcome.terminal,
    }
}

/// Per-method experience routing.
enum Store {
    Replay(ReplayMemory<Transition>),
    NStep(ReplayMemory<NStepTransition>, NStepBuffer),
    Ccr(ReplayMemory<CcrTransition>, CcrWindow),
    Recurrent {
        memory: EpisodeMemory<Transition>,
        episode: Vec<Vec<Transition>>,
    },
    RecurrentCcr {
        memory: EpisodeMemory<CcrTransition>,
        window: CcrWindow,
        episode: Vec<Vec<CcrTransition>>,
        emitted: usize,
    },
}

impl Store {
    fn new(method: DeepMethod, hp: &DeepHyperparams, players: usize) -> Self {
        match method {
            DeepMethod::Dqn => Store::Replay(ReplayMemory::new(hp.memory)),
            DeepMethod::DqnNStep => {
                Store::NStep(ReplayMemory::new(hp.memory), NStepBuffer::new(players, hp.n, hp.gamma))
            }
            DeepMethod::DqnCcr => Store::Ccr(ReplayMemory::new(hp.memory), CcrWindow::new(players)),
            DeepMethod::Drqn => Store::Recurrent {
                memory: EpisodeMemory::new(hp.memory),
                episode: vec![Vec::new(); players],
            },
            DeepMethod::DrqnCcr => Store::RecurrentCcr {
                memory: EpisodeMemory::new(hp.memory),
                window: CcrWindow::new(players),
                episode: vec![Vec::new(); players],
                emitted: 0,
            },
        }
    }

    /// Records the step just taken at global step `t`; returns the number
    /// of tuples produced.
    fn record(
        &mut self,
        t: usize,
        pending: PendingAction,
        outcome: &StepOutcome,
        max_episode_len: usize,
    ) -> usize {
        match self {
            Store::Replay(memory) => {
                memory.push(standard(pending.agent, pending.state, pending.action, outcome));
                1
            }
            Store::NStep(memory, buffer) => {
                let tr = standard(pending.agent, pending.state, pending.action, outcome);
                buffer.push(tr).map(|tuple| memory.push(tuple)).is_some() as usize
            }
            Store::Ccr(memory, window) => window.push(pending).map(|tr| memory.push(tr)).is_some() as usize,
            Store::Recurrent { episode, .. } => {
                if t < max_episode_len {
                    let agent = pending.agent;
                    episode[agent].push(standard(agent, pending.state, pending.action, outcome));
                }
                1
            }
            Store::RecurrentCcr {
                window,
                episode,
                emitted,
                ..
            } => match window.push(pending) {
                Some(tr) => {
                    if *emitted < max_episode_len {
                        episode[tr.agent].push(tr);
                    }
                    *emitted += 1;
                    1
                }
                None => 0,
            },
        }
    }

    /// Closes the episode; returns the number of tuples produced.
    fn end_episode(&mut self, terminal_observations: &[Observation], max_episode_len: usize) -> Result<usize> {
        Ok(match self {
            Store::Replay(_) => 0,
            Store::NStep(memory, buffer) => {
                let tuples = buffer.flush();
                let count = tuples.len();
                tuples.into_iter().for_each(|t| memory.push(t));
                count
            }
            Store::Ccr(memory, window) => {
                let tuples = window.flush(terminal_observations)?;
                let count = tuples.len();
                tuples.into_iter().for_each(|t| memory.push(t));
                count
            }
            Store::Recurrent { memory, episode } => {
                let players = episode.len();
                memory.push_episode(std::mem::replace(episode, vec![Vec::new(); players]));
                0
            }
            Store::RecurrentCcr {
                memory,
                window,
                episode,
                emitted,
            } => {
                let tuples = window.flush(terminal_observations)?;
                let count = tuples.len();
                for tr in tuples {
                    if *emitted < max_episode_len {
                        episode[tr.agent].push(tr);
                    }
                    *emitted += 1;
                }
                *emitted = 0;
                let players = episode.len();
                memory.push_episode(std::mem::replace(episode, vec![Vec::new(); players]));
                count
            }
        })
    }

    /// Runs one train step if the memory can fill a batch.
    fn train<R: Rng>(&self, learner: &mut Learner, hp: &DeepHyperparams, rng: &mut R) -> Result<bool> {
        let b = hp.batch_size;
        let Learner {
            policy,
            target,
            optimizer,
            ..
        } = learner;
        match self {
            Store::Replay(memory) if memory.len() >= b => {
                train_step(policy, target, &memory.sample(b, rng), hp.gamma, optimizer)?;
            }
            Store::NStep(memory, _) if memory.len() >= b => {
                train_step(policy, target, &memory.sample(b, rng), hp.gamma, optimizer)?;
            }
            Store::Ccr(memory, _) if memory.len() >= b => {
                train_step(policy, target, &memory.sample(b, rng), hp.gamma, optimizer)?;
            }
            Store::Recurrent { memory, .. } if memory.windows(hp.unroll) >= b => {
                let windows = memory.sample(b, hp.unroll, rng);
                drqn_train_step(policy, target, &windows, hp.gamma, hp.unroll, optimizer)?;
            }
            Store::RecurrentCcr { memory, .. } if memory.windows(hp.unroll) >= b => {
                let windows = memory.sample(b, hp.unroll, rng);
                drqn_train_step(policy, target, &windows, hp.gamma, hp.unroll, optimizer)?;
            }
            _ => return Ok(false),
        }
        learner.after_step(hp.target_update)?;
        Ok(true)
    }
}

/// Output of one deep training run.
#[derive(Debug, Clone)]
pub struct DeepRun {
    pub policy: Network,
    /// Final score of every training episode.
    pub curve: Vec<f64>,
    pub actions_taken: u64,
    /// Experience tuples produced, one per action for every method.
    pub tuples_produced: u64,
    pub train_steps: u64,
}

/// Trains one shared network for `episodes` episodes. The run is a pure
/// function of its arguments.
pub fn train_deep<G: Game>(
    game: &G,
    method: DeepMethod,
    hp: &DeepHyperparams,
    episodes: usize,
    seed: u64,
) -> Result<DeepRun> {
    train_deep_with(game, method, hp, episodes, seed, |_, _| {})
}

/// [`train_deep`] with a callback receiving each finished episode's index
/// and score.
pub fn train_deep_with<G: Game, F: FnMut(usize, f64)>(
    game: &G,
    method: DeepMethod,
    hp: &DeepHyperparams,
    episodes: usize,
    seed: u64,
    mut on_episode: F,
) -> Result<DeepRun> {
    hp.validate()?;
    let players = game.num_players();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = hp.shape(method, game.observation_len(), game.num_actions());
    let policy = Network::new(shape, &mut rng);
    let mut learner = Learner {
        target: policy.clone(),
        optimizer: Adam::new(policy.param_count(), hp.alpha),
        policy,
        train_steps: 0,
    };
    let mut store = Store::new(method, hp, players);
    let mut curve = Vec::with_capacity(episodes);
    let mut actions_taken = 0u64;
    let mut tuples_produced = 0u64;

    for episode in 0..episodes {
        let mut state = game.reset(rng.next_u64());
        let mut carried: Vec<LstmState> = vec![learner.policy.initial_state(); players];
        let mut t = 0;
        while !state.is_terminal() {
            let agent = state.current_player();
            let obs = state.observe(agent);
            let legal = state.legal_mask();
            let input = obs.to_f64();
            let values = if method.is_recurrent() {
                let (values, next) = learner.policy.forward_recurrent(&input, &carried[agent])?;
                carried[agent] = next;
                values
            } else {
                learner.policy.forward(&input)?
            };
            let action = epsilon_greedy(&values, legal, hp.epsilon, &mut rng);
            let outcome = state.step(action)?;
            actions_taken += 1;
            let pending = PendingAction {
                agent,
                state: obs,
                legal,
                action,
                reward: outcome.reward,
            };
            tuples_produced += store.record(t, pending, &outcome, hp.max_episode_len) as u64;
            t += 1;
            store.train(&mut learner, hp, &mut rng)?;
        }
        tuples_produced += store.end_episode(&state.observe_all(), hp.max_episode_len)? as u64;
        curve.push(state.score());
        on_episode(episode, state.score());
    }
    Ok(DeepRun {
        policy: learner.policy,
        curve,
        actions_taken,
        tuples_produced,
        train_steps: learner.train_steps,
    })
}
