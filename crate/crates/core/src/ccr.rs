//! Credit-cognisant rewards.
//!
//! The CCR of the action taken at step `t` is the sum of the `P` rewards
//! `R_{t+1} .. R_{t+P}` observed while every agent takes one turn, and its
//! bootstrap state is the same agent's observation one full round later.
//! Actions in the final round receive the truncated sum of whatever rewards
//! remain and bootstrap from the terminal observation of their own
//! perspective.
//!
//! [`CcrWindow`] is the only place these tuples are built: online learners
//! push steps into it as they happen, and [`build_ccr_transitions`] feeds a
//! recorded trace through the same window.

use std::collections::VecDeque;

use crate::env::{ActionMask, AgentId, CcrTransition, EpisodeTrace, Observation};
use crate::{Error, Result};

/// Sum of one round of rewards.
pub fn credit_cognisant_reward(rewards: &[f64]) -> Result<f64> {
    if rewards.is_empty() {
        return Err(Error::EmptyRewards);
    }
    Ok(rewards.iter().sum())
}

/// An action whose credit window is still open.
#[derive(Debug, Clone, PartialEq)]
pub struct PendingAction {
    pub agent: AgentId,
    pub state: Observation,
    pub legal: ActionMask,
    pub action: usize,
    pub reward: f64,
}

/// FIFO of the last `P` actions awaiting their full reward window.
#[derive(Debug, Clone)]
pub struct CcrWindow {
    players: usize,
    pending: VecDeque<PendingAction>,
}

impl CcrWindow {
    pub fn new(players: usize) -> Self {
        assert!(players >= 1);
        Self {
            players,
            pending: VecDeque::with_capacity(players + 1),
        }
    }

    pub fn players(&self) -> usize {
        self.players
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    /// Records the action just taken at step `t` together with `R_{t+1}`.
    ///
    /// Once a full round has passed this closes the window of the action at
    /// `t - P`, whose bootstrap state is the state pushed now.
    pub fn push(&mut self, step: PendingAction) -> Option<CcrTransition> {
        self.pending.push_back(step);
        if self.pending.len() <= self.players {
            return None;
        }
        let opened = self.pending.pop_front().expect("window is non-empty");
        let rest: f64 = self
            .pending
            .iter()
            .take(self.players - 1)
            .map(|p| p.reward)
            .sum();
        let reopened = self.pending.back().expect("window is non-empty");
        debug_assert_eq!(reopened.agent, opened.agent, "window spans one round");
        Some(CcrTransition {
            agent: opened.agent,
            ccr: opened.reward + rest,
            next_state: reopened.state.clone(),
            next_legal: reopened.legal,
            state: opened.state,
            action: opened.action,
            terminal: false,
        })
    }

    /// Closes every open window at episode end. `terminal_observations` is
    /// indexed by agent.
    pub fn flush(&mut self, terminal_observations: &[Observation]) -> Result<Vec<CcrTransition>> {
        if terminal_observations.len() != self.players {
            return Err(Error::MalformedTrace(format!(
                "{} terminal perspectives for {} players",
                terminal_observations.len(),
                self.players
            )));
        }
        let mut out = Vec::with_capacity(self.pending.len());
        while let Some(opened) = self.pending.pop_front() {
            let rest: f64 = self.pending.iter().map(|p| p.reward).sum();
            out.push(CcrTransition {
                agent: opened.agent,
                ccr: opened.reward + rest,
                next_state: terminal_observations[opened.agent].clone(),
                next_legal: ActionMask::EMPTY,
                state: opened.state,
                action: opened.action,
                terminal: true,
            });
        }
        Ok(out)
    }

    pub fn clear(&mut self) {
        self.pending.clear();
    }
}

/// One [`CcrTransition`] per action of `trace`, in action order.
pub fn build_ccr_transitions(trace: &EpisodeTrace) -> Result<Vec<CcrTransition>> {
    trace.validate()?;
    let mut window = CcrWindow::new(trace.players);
    let mut out = Vec::with_capacity(trace.len());
    for step in &trace.steps {
        out.extend(window.push(PendingAction {
            agent: step.agent,
            state: step.state.clone(),
            legal: step.legal,
            action: step.action,
            reward: step.reward,
        }));
    }
    out.extend(window.flush(&trace.terminal_observations)?);
    Ok(out)
}
