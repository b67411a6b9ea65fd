use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{ActionMask, AgentId, Observation};
use crate::{Error, Result};

/// Anything a TD update can be computed from: a state-action pair, a return,
/// and an optional bootstrap state discounted by `gamma^discount_exponent`.
pub trait Experience {
    fn agent(&self) -> AgentId;
    fn state(&self) -> &Observation;
    fn action(&self) -> usize;
    /// Reward, credit-cognisant reward, or n-step return.
    fn reward(&self) -> f64;
    fn next_state(&self) -> &Observation;
    /// Actions considered when maximising over the bootstrap state.
    fn next_legal(&self) -> ActionMask;
    /// When true the bootstrap term is dropped.
    fn terminal(&self) -> bool;
    fn discount_exponent(&self) -> i32 {
        1
    }
}

/// Per-agent experience `<S_t^i, A_t, R_{t+1}, S_{t+1}^i>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub agent: AgentId,
    pub state: Observation,
    pub action: usize,
    pub reward: f64,
    pub next_state: Observation,
    pub next_legal: ActionMask,
    pub terminal: bool,
}

/// Credit-cognisant experience `<S_t^i, A_t, C_{t+1}, S_{t+P}^i>`.
///
/// In the final round `next_state` is the terminal observation from the
/// agent's own perspective and `ccr` is the truncated reward sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcrTransition {
    pub agent: AgentId,
    pub state: Observation,
    pub action: usize,
    pub ccr: f64,
    pub next_state: Observation,
    pub next_legal: ActionMask,
    pub terminal: bool,
}

/// n-step experience over one agent's consecutive turns. `steps` is the
/// number of rewards folded into `ret`; the bootstrap is discounted by
/// `gamma^steps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NStepTransition {
    pub agent: AgentId,
    pub state: Observation,
    pub action: usize,
    pub ret: f64,
    pub next_state: Observation,
    pub next_legal: ActionMask,
    pub steps: u32,
    pub terminal: bool,
}

macro_rules! impl_experience {
    ($ty:ty, $reward:ident) => {
        impl Experience for $ty {
            fn agent(&self) -> AgentId {
                self.agent
            }
            fn state(&self) -> &Observation {
                &self.state
            }
            fn action(&self) -> usize {
                self.action
            }
            fn reward(&self) -> f64 {
                self.$reward
            }
            fn next_state(&self) -> &Observation {
                &self.next_state
            }
            fn next_legal(&self) -> ActionMask {
                self.next_legal
            }
            fn terminal(&self) -> bool {
                self.terminal
            }
        }
    };
}

impl_experience!(Transition, reward);
impl_experience!(CcrTransition, ccr);

impl Experience for NStepTransition {
    fn agent(&self) -> AgentId {
        self.agent
    }
    fn state(&self) -> &Observation {
        &self.state
    }
    fn action(&self) -> usize {
        self.action
    }
    fn reward(&self) -> f64 {
        self.ret
    }
    fn next_state(&self) -> &Observation {
        &self.next_state
    }
    fn next_legal(&self) -> ActionMask {
        self.next_legal
    }
    fn terminal(&self) -> bool {
        self.terminal
    }
    fn discount_exponent(&self) -> i32 {
        self.steps as i32
    }
}

impl<E: Experience + ?Sized> Experience for &E {
    fn agent(&self) -> AgentId {
        (**self).agent()
    }
    fn state(&self) -> &Observation {
        (**self).state()
    }
    fn action(&self) -> usize {
        (**self).action()
    }
    fn reward(&self) -> f64 {
        (**self).reward()
    }
    fn next_state(&self) -> &Observation {
        (**self).next_state()
    }
    fn next_legal(&self) -> ActionMask {
        (**self).next_legal()
    }
    fn terminal(&self) -> bool {
        (**self).terminal()
    }
    fn discount_exponent(&self) -> i32 {
        (**self).discount_exponent()
    }
}

impl NStepTransition {
    /// Folds one agent's consecutive transitions into an n-step tuple.
    ///
    /// The return is `sum_k gamma^k R_k`. The bootstrap from the last
    /// transition's next state is kept only for a full segment of `n` turns
    /// that did not end the episode.
    pub fn from_segment(segment: &[Transition], gamma: f64, n: usize) -> Result<Self> {
        let (first, rest) = segment
            .split_first()
            .ok_or_else(|| Error::InvalidSegment("empty segment".into()))?;
        if n == 0 || segment.len() > n {
            return Err(Error::InvalidSegment(format!(
                "{} transitions for n = {n}",
                segment.len()
            )));
        }
        if let Some(other) = rest.iter().find(|t| t.agent != first.agent) {
            return Err(Error::InvalidSegment(format!(
                "agents {} and {} in one segment",
                first.agent, other.agent
            )));
        }
        let mut ret = first.reward;
        let mut discount = gamma;
        for tr in rest {
            ret += discount * tr.reward;
            discount *= gamma;
        }
        let last = segment.last().expect("segment is non-empty");
        let bootstrap = segment.len() == n && !last.terminal;
        Ok(NStepTransition {
            agent: first.agent,
            state: first.state.clone(),
            action: first.action,
            ret,
            next_state: last.next_state.clone(),
            next_legal: last.next_legal,
            steps: segment.len() as u32,
            terminal: !bootstrap,
        })
    }
}

/// Per-agent queues turning a stream of transitions into n-step tuples.
#[derive(Debug, Clone)]
pub struct NStepBuffer {
    n: usize,
    gamma: f64,
    queues: Vec<VecDeque<Transition>>,
}

impl NStepBuffer {
    pub fn new(players: usize, n: usize, gamma: f64) -> Self {
        assert!(n >= 1);
        Self {
            n,
            gamma,
            queues: vec![VecDeque::with_capacity(n); players],
        }
    }

    /// Adds the agent's newest transition; emits the tuple starting `n`
    /// turns back once that agent has `n` queued turns.
    pub fn push(&mut self, transition: Transition) -> Option<NStepTransition> {
        let queue = &mut self.queues[transition.agent];
        queue.push_back(transition);
        if queue.len() < self.n {
            return None;
        }
        let segment: Vec<Transition> = queue.iter().cloned().collect();
        queue.pop_front();
        Some(NStepTransition::from_segment(&segment, self.gamma, self.n).expect("valid segment"))
    }

    /// Emits truncated tuples for every queued transition and empties the
    /// buffer.
    pub fn flush(&mut self) -> Vec<NStepTransition> {
        let mut out = Vec::new();
        for queue in &mut self.queues {
            while !queue.is_empty() {
                let segment: Vec<Transition> = queue.iter().cloned().collect();
                queue.pop_front();
                let mut tuple = NStepTransition::from_segment(&segment, self.gamma, self.n)
                    .expect("valid segment");
                // the episode ended before the agent completed n more turns
                tuple.terminal = true;
                out.push(tuple);
            }
        }
        out
    }
}
