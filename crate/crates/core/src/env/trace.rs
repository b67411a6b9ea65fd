use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{perspective_index, ActionMask, AgentId, Game, GameState, Observation, Transition};
use crate::{Error, Result};

/// One action of an episode, indexed as `(t, r, i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub t: u64,
    pub round: u64,
    pub agent: AgentId,
    /// `S_t^i`
    pub state: Observation,
    pub legal: ActionMask,
    pub action: usize,
    /// `R_{t+1}`
    pub reward: f64,
    /// `S_{t+1}^i`, the actor's own view right after acting.
    pub next_state: Observation,
    pub next_legal: ActionMask,
}

/// A complete episode with the terminal observation of every perspective.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub env: String,
    pub seed: u64,
    pub players: usize,
    pub observation_len: usize,
    pub steps: Vec<TraceStep>,
    /// `S_terminal^{0:P-1}`, indexed by agent.
    pub terminal_observations: Vec<Observation>,
    pub final_score: f64,
}

impl EpisodeTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn episode_return(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    /// Checks the indexing pattern, reward finiteness and terminal
    /// perspectives.
    pub fn validate(&self) -> Result<()> {
        if self.players == 0 {
            return Err(Error::MalformedTrace("zero players".into()));
        }
        if self.steps.is_empty() {
            return Err(Error::MalformedTrace("trace has no steps".into()));
        }
        if self.terminal_observations.len() != self.players {
            return Err(Error::MalformedTrace(format!(
                "{} terminal perspectives for {} players",
                self.terminal_observations.len(),
                self.players
            )));
        }
        for (k, step) in self.steps.iter().enumerate() {
            if step.t != k as u64 || step.round != step.t / self.players as u64 {
                return Err(Error::MalformedTrace(format!(
                    "step {k} has clock (t={}, r={})",
                    step.t, step.round
                )));
            }
            if perspective_index(step.t, step.round, self.players)? != step.agent {
                return Err(Error::MalformedTrace(format!(
                    "step {k} attributed to agent {}",
                    step.agent
                )));
            }
            if !step.reward.is_finite() {
                return Err(Error::MalformedTrace(format!("step {k} reward not finite")));
            }
            if !step.legal.contains(step.action) {
                return Err(Error::MalformedTrace(format!(
                    "step {k} action {} was not legal",
                    step.action
                )));
            }
        }
        Ok(())
    }

    /// Standard per-agent transitions, one per action. Only the action that
    /// ended the episode is marked terminal.
    pub fn transitions(&self) -> Vec<Transition> {
        let last = self.steps.len().saturating_sub(1);
        self.steps
            .iter()
            .enumerate()
            .map(|(k, step)| Transition {
                agent: step.agent,
                state: step.state.clone(),
                action: step.action,
                reward: step.reward,
                next_state: step.next_state.clone(),
                next_legal: step.next_legal,
                terminal: k == last,
            })
            .collect()
    }

    /// Line-delimited JSON: a header, one record per step, and an end record
    /// with the terminal perspectives.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        let header = Record::Header {
            env: self.env.clone(),
            seed: self.seed,
            players: self.players,
            observation_len: self.observation_len,
        };
        let mut write_record = |record: &Record| -> Result<()> {
            serde_json::to_writer(&mut out, record)?;
            out.write_all(b"\n")
                .map_err(|e| Error::io("<trace writer>", e))
        };
        write_record(&header)?;
        for step in &self.steps {
            write_record(&Record::Step {
                t: step.t,
                r: step.round,
                i: step.agent,
                obs: step.state.to_hex(),
                legal: step.legal.bits(),
                action: step.action,
                reward: step.reward,
                next_obs: step.next_state.to_hex(),
                next_legal: step.next_legal.bits(),
            })?;
        }
        write_record(&Record::End {
            terminal: self.terminal_observations.iter().map(Observation::to_hex).collect(),
            score: self.final_score,
        })
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let mut next_record = || -> Result<Option<Record>> {
            match lines.next() {
                None => Ok(None),
                Some(line) => {
                    let line = line.map_err(|e| Error::io("<trace reader>", e))?;
                    Ok(Some(serde_json::from_str(&line)?))
                }
            }
        };
        let Some(Record::Header {
            env,
            seed,
            players,
            observation_len,
        }) = next_record()?
        else {
            return Err(Error::MalformedTrace("missing header record".into()));
        };
        let mut steps = Vec::new();
        loop {
            match next_record()? {
                Some(Record::Step {
                    t,
                    r,
                    i,
                    obs,
                    legal,
                    action,
                    reward,
                    next_obs,
                    next_legal,
                }) => steps.push(TraceStep {
                    t,
                    round: r,
                    agent: i,
                    state: Observation::from_hex(observation_len, &obs)?,
                    legal: ActionMask::from_bits(legal),
                    action,
                    reward,
                    next_state: Observation::from_hex(observation_len, &next_obs)?,
                    next_legal: ActionMask::from_bits(next_legal),
                }),
                Some(Record::End { terminal, score }) => {
                    let terminal_observations = terminal
                        .iter()
                        .map(|h| Observation::from_hex(observation_len, h))
                        .collect::<Result<Vec<_>>>()?;
                    if next_record()?.is_some() {
                        return Err(Error::MalformedTrace("records after end".into()));
                    }
                    return Ok(EpisodeTrace {
                        env,
                        seed,
                        players,
                        observation_len,
                        steps,
                        terminal_observations,
                        final_score: score,
                    });
                }
                Some(Record::Header { .. }) => {
                    return Err(Error::MalformedTrace("duplicate header".into()))
                }
                None => return Err(Error::MalformedTrace("missing end record".into())),
            }
        }
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        Self::read_jsonl(text.as_bytes())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Record {
    Header {
        env: String,
        seed: u64,
        players: usize,
        observation_len: usize,
    },
    Step {
        t: u64,
        r: u64,
        i: AgentId,
        obs: String,
        legal: u64,
        action: usize,
        reward: f64,
        next_obs: String,
        next_legal: u64,
    },
    End {
        terminal: Vec<String>,
        score: f64,
    },
}

/// Plays one episode from `seed`, asking `policy` for every action.
pub fn record_episode<G, F>(game: &G, seed: u64, mut policy: F) -> Result<EpisodeTrace>
where
    G: Game,
    F: FnMut(&G::State, &Observation, ActionMask) -> usize,
{
    let mut state = game.reset(seed);
    let mut steps = Vec::new();
    while !state.is_terminal() {
        let clock = state.clock();
        let agent = clock.agent();
        let obs = state.observe(agent);
        let legal = state.legal_mask();
        let action = policy(&state, &obs, legal);
        let outcome = state.step(action)?;
        steps.push(TraceStep {
            t: clock.t,
            round: clock.round,
            agent,
            state: obs,
            legal,
            action,
            reward: outcome.reward,
            next_state: outcome.observations[agent].clone(),
            next_legal: outcome.masks[agent],
        });
    }
    Ok(EpisodeTrace {
        env: game.id().to_string(),
        seed,
        players: game.num_players(),
        observation_len: game.observation_len(),
        steps,
        terminal_observations: state.observe_all(),
        final_score: state.score(),
    })
}

/// Re-plays the recorded actions of `trace` from its seed.
pub fn replay_trace<G: Game>(game: &G, trace: &EpisodeTrace) -> Result<EpisodeTrace> {
    let mut actions = trace.steps.iter().map(|s| s.action);
    record_episode(game, trace.seed, |_, _, _| {
        actions.next().unwrap_or(usize::MAX)
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::hanabi::Hanabi;
    use crate::hintmatch::HintMatch;

    fn random_trace<G: Game>(game: &G, seed: u64) -> EpisodeTrace {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        record_episode(game, seed, |_, _, legal| {
            let legal = legal.to_vec();
            legal[rng.random_range(0..legal.len())]
        })
        .unwrap()
    }

    #[test]
    fn jsonl_round_trips_exactly() {
        for seed in 0..20 {
            let trace = random_trace(&Hanabi::new(), seed);
            trace.validate().unwrap();
            let text = trace.to_jsonl();
            assert_eq!(text.lines().count(), trace.len() + 2);
            assert_eq!(EpisodeTrace::from_jsonl(&text).unwrap(), trace);
        }
    }

    #[test]
    fn truncated_or_reordered_files_are_rejected() {
        let text = random_trace(&HintMatch, 4).to_jsonl();
        let lines: Vec<&str> = text.lines().collect();
        let without_end = lines[..lines.len() - 1].join("\n");
        assert!(matches!(EpisodeTrace::from_jsonl(&without_end), Err(Error::MalformedTrace(_))));
        let without_header = lines[1..].join("\n");
        assert!(matches!(EpisodeTrace::from_jsonl(&without_header), Err(Error::MalformedTrace(_))));
        assert!(EpisodeTrace::from_jsonl("not json").is_err());
    }

    #[test]
    fn replay_reproduces_the_trace() {
        for seed in 0..20 {
            let trace = random_trace(&Hanabi::new(), seed);
            assert_eq!(replay_trace(&Hanabi::new(), &trace).unwrap(), trace);
            let trace = random_trace(&HintMatch, seed);
            assert_eq!(replay_trace(&HintMatch, &trace).unwrap(), trace);
        }
    }

    #[test]
    fn validate_catches_misattributed_steps() {
        let mut trace = random_trace(&Hanabi::new(), 1);
        trace.steps[1].agent = 0;
        assert!(trace.validate().is_err());
        let mut trace = random_trace(&Hanabi::new(), 1);
        trace.terminal_observations.pop();
        assert!(trace.validate().is_err());
    }

    #[test]
    fn only_the_last_transition_is_terminal() {
        let trace = random_trace(&Hanabi::new(), 9);
        let transitions = trace.transitions();
        assert_eq!(transitions.len(), trace.len());
        assert!(transitions.last().unwrap().terminal);
        assert!(transitions[..transitions.len() - 1].iter().all(|t| !t.terminal));
    }

    proptest! {
        // actor i = t - r*P cycles 0, 1, ..., P-1 within every round
        #[test]
        fn recorded_clocks_follow_the_round_pattern(seed in any::<u64>()) {
            let trace = random_trace(&Hanabi::new(), seed);
            for (k, step) in trace.steps.iter().enumerate() {
                prop_assert_eq!(step.t, k as u64);
                prop_assert_eq!(step.round, k as u64 / 2);
                prop_assert_eq!(step.agent, k % 2);
                prop_assert_eq!(step.agent as u64, step.t - step.round * 2);
            }
        }
    }
}
