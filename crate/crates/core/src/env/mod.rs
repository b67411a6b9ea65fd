//! Turn-based multi-agent environment abstraction.
//!
//! Every environment in the crate is strictly turn-based: exactly one agent
//! acts per global step `t`, and the acting agent is recovered from the
//! global clock by [`perspective_index`]. Observations are fixed-length bit
//! vectors shared by the tabular learners (as hash keys) and the networks
//! (as input vectors).

mod experience;
mod observation;
mod trace;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use experience::{CcrTransition, Experience, NStepBuffer, NStepTransition, Transition};
pub use observation::{Observation, ObservationBuilder};
pub use trace::{replay_trace, record_episode, EpisodeTrace, TraceStep};

pub type AgentId = usize;

/// Agent id acting at global step `t` in round `round`: `t - round * players`.
pub fn perspective_index(t: u64, round: u64, players: usize) -> Result<AgentId> {
    let clock_error = Error::InconsistentClock { t, round, players };
    if players == 0 {
        return Err(clock_error);
    }
    let offset = round
        .checked_mul(players as u64)
        .and_then(|start| t.checked_sub(start))
        .ok_or(clock_error)?;
    if offset >= players as u64 {
        return Err(Error::InconsistentClock { t, round, players });
    }
    Ok(offset as AgentId)
}

/// Global step, round and player count of a turn-based episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeIndex {
    pub t: u64,
    pub round: u64,
    pub players: usize,
}

impl TimeIndex {
    pub fn new(players: usize) -> Self {
        assert!(players >= 1, "a game needs at least one player");
        Self {
            t: 0,
            round: 0,
            players,
        }
    }

    pub fn agent(&self) -> AgentId {
        (self.t - self.round * self.players as u64) as AgentId
    }

    /// Moves the clock forward by one action, rolling the round over after
    /// every `players` actions.
    pub fn advance(&mut self) {
        self.t += 1;
        if self.t - self.round * self.players as u64 == self.players as u64 {
            self.round += 1;
        }
    }
}

/// Set of action indices, stored as a bitset. Action spaces in this crate
/// are small (at most 64 actions).
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionMask(u64);

impl ActionMask {
    pub const EMPTY: ActionMask = ActionMask(0);

    pub fn all(actions: usize) -> Self {
        assert!(actions <= 64);
        if actions == 64 {
            ActionMask(u64::MAX)
        } else {
            ActionMask((1u64 << actions) - 1)
        }
    }

    pub fn from_bits(bits: u64) -> Self {
        ActionMask(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn contains(self, action: usize) -> bool {
        action < 64 && self.0 & (1 << action) != 0
    }

    pub fn insert(&mut self, action: usize) {
        self.0 |= 1 << action;
    }

    pub fn remove(&mut self, action: usize) {
        self.0 &= !(1 << action);
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut rest = self.0;
        std::iter::from_fn(move || {
            if rest == 0 {
                return None;
            }
            let action = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            Some(action)
        })
    }

    pub fn to_vec(self) -> Vec<usize> {
        self.iter().collect()
    }
}

impl FromIterator<usize> for ActionMask {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut mask = ActionMask::EMPTY;
        for action in iter {
            mask.insert(action);
        }
        mask
    }
}

impl fmt::Debug for ActionMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// Category of an executed action, used for evaluation accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActionKind {
    Hint,
    Play { success: bool },
    Discard,
}

/// Result of one environment step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    /// Reward `R_{t+1}` attributed to the acting player.
    pub reward: f64,
    pub kind: ActionKind,
    pub terminal: bool,
    /// Observation of every perspective after the step, indexed by agent.
    pub observations: Vec<Observation>,
    /// Rule-legal actions from every perspective after the step. Empty for
    /// all agents once the state is terminal.
    pub masks: Vec<ActionMask>,
}

/// A turn-based game definition: a factory for seeded initial states.
pub trait Game: Send + Sync {
    type State: GameState;

    fn id(&self) -> EnvId;
    fn num_players(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn observation_len(&self) -> usize;
    fn max_score(&self) -> f64;

    /// Deterministic initial state for `seed`; player 0 moves first.
    fn reset(&self, seed: u64) -> Self::State;

    fn reset_with_observation(&self, seed: u64) -> (Self::State, Observation) {
        let state = self.reset(seed);
        let obs = state.observe(0);
        (state, obs)
    }
}

/// Full hidden state of a game in progress.
pub trait GameState: Clone + Send + Sync {
    fn clock(&self) -> TimeIndex;
    fn is_terminal(&self) -> bool;
    fn score(&self) -> f64;

    /// Actions the rules allow from `agent`'s seat, ignoring whose turn it
    /// is. Used for bootstrap masking on next-state observations.
    fn rule_mask(&self, agent: AgentId) -> ActionMask;

    /// Observation of the state from `agent`'s perspective.
    fn observe(&self, agent: AgentId) -> Observation;

    /// Applies `action` for the player to move.
    fn step(&mut self, action: usize) -> Result<StepOutcome>;

    fn current_player(&self) -> AgentId {
        self.clock().agent()
    }

    /// Legal actions for the player to move.
    fn legal_mask(&self) -> ActionMask {
        if self.is_terminal() {
            ActionMask::EMPTY
        } else {
            self.rule_mask(self.current_player())
        }
    }

    fn legal_actions(&self, agent: AgentId) -> Result<Vec<usize>> {
        let current = self.current_player();
        if agent != current {
            return Err(Error::WrongAgent {
                queried: agent,
                current,
            });
        }
        if self.is_terminal() {
            return Err(Error::TerminalState);
        }
        Ok(self.legal_mask().to_vec())
    }

    fn observe_all(&self) -> Vec<Observation> {
        (0..self.clock().players).map(|i| self.observe(i)).collect()
    }
}

/// Identifier of a registered environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EnvId {
    #[serde(rename = "hintmatch")]
    HintMatch,
    #[serde(rename = "hanabi-colourless")]
    HanabiColourless,
}

impl EnvId {
    pub fn as_str(self) -> &'static str {
        match self {
            EnvId::HintMatch => "hintmatch",
            EnvId::HanabiColourless => "hanabi-colourless",
        }
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hintmatch" => Ok(EnvId::HintMatch),
            "hanabi-colourless" | "hanabi" => Ok(EnvId::HanabiColourless),
            other => Err(Error::UnknownEnv(other.to_string())),
        }
    }
}
