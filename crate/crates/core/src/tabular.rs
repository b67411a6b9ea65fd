//! Tabular independent Q-learning with a shared table.
//!
//! All agents read and write one [`QTable`] keyed by their own
//! observations. Three update rules are provided: one-step Q-learning,
//! per-agent n-step returns, and credit-cognisant rewards, which lag each
//! update by one round.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ccr::{CcrWindow, PendingAction};
use crate::env::{
    ActionMask, CcrTransition, Experience, Game, GameState, NStepBuffer, NStepTransition,
    Observation, Transition,
};
use crate::{Error, Result};

/// Action-value table. Unseen states read as all-zero rows and are only
/// inserted on write.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    actions: usize,
    rows: HashMap<Observation, Vec<f64>>,
}

impl QTable {
    pub fn new(actions: usize) -> Self {
        Self {
            actions,
            rows: HashMap::new(),
        }
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    /// Number of stored states.
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Key length of the stored states; `None` for an empty table.
    pub fn observation_len(&self) -> Option<usize> {
        self.rows.keys().next().map(Observation::len)
    }

    pub fn get(&self, state: &Observation, action: usize) -> f64 {
        self.rows.get(state).map_or(0.0, |row| row[action])
    }

    /// Row for `state`, or `None` when the state was never written.
    pub fn row(&self, state: &Observation) -> Option<&[f64]> {
        self.rows.get(state).map(Vec::as_slice)
    }

    /// Row for `state` with zeros for unseen states.
    pub fn values(&self, state: &Observation) -> Vec<f64> {
        self.row(state)
            .map_or_else(|| vec![0.0; self.actions], <[f64]>::to_vec)
    }

    pub fn set(&mut self, state: &Observation, action: usize, value: f64) {
        let actions = self.actions;
        self.rows
            .entry(state.clone())
            .or_insert_with(|| vec![0.0; actions])[action] = value;
    }

    /// `max_a Q(state, a)` over `legal`; zero when nothing is legal.
    pub fn max_value(&self, state: &Observation, legal: ActionMask) -> f64 {
        if legal.is_empty() {
            return 0.0;
        }
        match self.row(state) {
            Some(row) => legal
                .iter()
                .map(|a| row[a])
                .fold(f64::NEG_INFINITY, f64::max),
            None => 0.0,
        }
    }

    /// Sorted text dump: a header line, then `hex: v0,v1,...` per state.
    pub fn to_text(&self) -> String {
        let sorted: BTreeMap<String, &Vec<f64>> =
            self.rows.iter().map(|(k, v)| (k.to_hex(), v)).collect();
        let obs_len = self.rows.keys().next().map_or(0, Observation::len);
        let mut out = format!("# qtable actions={} observation_len={obs_len}\n", self.actions);
        for (key, row) in sorted {
            let values: Vec<String> = row.iter().map(f64::to_string).collect();
            let _ = writeln!(out, "{key}: {}", values.join(","));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::InvalidInput(format!("qtable dump: {msg}"));
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty".into()))?;
        let mut actions = None;
        let mut obs_len = None;
        for field in header.trim_start_matches("# qtable").split_whitespace() {
            match field.split_once('=') {
                Some(("actions", v)) => actions = v.parse::<usize>().ok(),
                Some(("observation_len", v)) => obs_len = v.parse::<usize>().ok(),
                _ => return Err(bad(format!("header field `{field}`"))),
            }
        }
        let (actions, obs_len) = actions
            .zip(obs_len)
            .ok_or_else(|| bad(format!("header `{header}`")))?;
        let mut table = QTable::new(actions);
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let (key, values) = line
                .split_once(": ")
                .ok_or_else(|| bad(format!("line `{line}`")))?;
            let row = values
                .split(',')
                .map(|v| v.parse::<f64>().map_err(|e| bad(format!("value `{v}`: {e}"))))
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != actions {
                return Err(bad(format!("row of {} values", row.len())));
            }
            table.rows.insert(Observation::from_hex(obs_len, key)?, row);
        }
        Ok(table)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TabularHyperparams {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
    /// Step count for the n-step variant.
    pub n: usize,
}

impl TabularHyperparams {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |x: f64| x > 0.0 && x <= 1.0;
        if !in_unit(self.alpha) {
            return Err(Error::Config(format!("alpha {} outside (0, 1]", self.alpha)));
        }
        if !in_unit(self.gamma) {
            return Err(Error::Config(format!("gamma {} outside (0, 1]", self.gamma)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Config(format!("epsilon {} outside (0, 1)", self.epsilon)));
        }
        if self.n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        Ok(())
    }
}

/// Index of a maximal entry of `values` among `legal`, ties broken uniformly.
pub fn greedy_action<R: Rng + ?Sized>(values: &[f64], legal: ActionMask, rng: &mut R) -> usize {
    assert!(!legal.is_empty(), "no legal action");
    let mut best = f64::NEG_INFINITY;
    let mut ties = 0u32;
    let mut choice = usize::MAX;
    for action in legal.iter() {
        let v = values[action];
        if v > best {
            best = v;
            ties = 1;
            choice = action;
        } else if v == best {
            // reservoir sampling over the tied set
            ties += 1;
            if rng.random_range(0..ties) == 0 {
                choice = action;
            }
        }
    }
    if choice == usize::MAX {
        // every legal value is NaN or -inf
        let legal = legal.to_vec();
        choice = legal[rng.random_range(0..legal.len())];
    }
    choice
}

/// Uniform legal action with probability `epsilon`, otherwise greedy.
pub fn epsilon_greedy<R: Rng + ?Sized>(
    values: &[f64],
    legal: ActionMask,
    epsilon: f64,
    rng: &mut R,
) -> usize {
    assert!(!legal.is_empty(), "no legal action");
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        let n = legal.len();
        legal.iter().nth(rng.random_range(0..n)).expect("index within mask")
    } else {
        greedy_action(values, legal, rng)
    }
}

/// `Q(S,A) += alpha * (target - Q(S,A))` for any experience tuple; returns
/// the new value.
pub fn td_update<E: Experience>(table: &mut QTable, exp: &E, alpha: f64, gamma: f64) -> f64 {
    let mut target = exp.reward();
    if !exp.terminal() {
        target += gamma.powi(exp.discount_exponent())
            * table.max_value(exp.next_state(), exp.next_legal());
    }
    let q = table.get(exp.state(), exp.action());
    let updated = q + alpha * (target - q);
    table.set(exp.state(), exp.action(), updated);
    updated
}

/// One-step update from a standard transition.
pub fn q_update(table: &mut QTable, transition: &Transition, alpha: f64, gamma: f64) -> f64 {
    td_update(table, transition, alpha, gamma)
}

/// One-step update from a credit-cognisant transition.
pub fn ccr_q_update(table: &mut QTable, transition: &CcrTransition, alpha: f64, gamma: f64) -> f64 {
    td_update(table, transition, alpha, gamma)
}

/// n-step update over one agent's consecutive transitions.
pub fn n_step_update(
    table: &mut QTable,
    segment: &[Transition],
    alpha: f64,
    gamma: f64,
    n: usize,
) -> Result<f64> {
    let tuple = NStepTransition::from_segment(segment, gamma, n)?;
    Ok(td_update(table, &tuple, alpha, gamma))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TabularMethod {
    #[serde(rename = "ql")]
    Ql,
    #[serde(rename = "ql-ccr")]
    QlCcr,
    #[serde(rename = "ql-nstep")]
    QlNStep,
}

impl TabularMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            TabularMethod::Ql => "ql",
            TabularMethod::QlCcr => "ql-ccr",
            TabularMethod::QlNStep => "ql-nstep",
        }
    }
}

impl std::fmt::Display for TabularMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TabularMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ql" => Ok(TabularMethod::Ql),
            "ql-ccr" => Ok(TabularMethod::QlCcr),
            "ql-nstep" => Ok(TabularMethod::QlNStep),
            other => Err(Error::UnknownMethod(other.to_string())),
        }
    }
}

/// Output of one tabular training run.
#[derive(Debug, Clone)]
pub struct TabularRun {
    pub table: QTable,
    /// Final score of every training episode.
    pub curve: Vec<f64>,
    pub actions_taken: u64,
    pub updates_applied: u64,
}

/// Trains one shared table for `episodes` episodes.
///
/// Episode seeds and exploration both come from one stream seeded by
/// `seed`, so a run is a pure function of its arguments.
pub fn train_tabular<G: Game>(
    game: &G,
    method: TabularMethod,
    hp: &TabularHyperparams,
    episodes: usize,
    seed: u64,
) -> Result<TabularRun> {
    hp.validate()?;
    let players = game.num_players();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = QTable::new(game.num_actions());
    let mut curve = Vec::with_capacity(episodes);
    let mut actions_taken = 0u64;
    let mut updates_applied = 0u64;
    let mut window = CcrWindow::new(players);
    let mut nstep = NStepBuffer::new(players, hp.n, hp.gamma);

    for _ in 0..episodes {
        let mut state = game.reset(rng.next_u64());
        while !state.is_terminal() {
            let agent = state.current_player();
            let obs = state.observe(agent);
            let legal = state.legal_mask();
            let action = epsilon_greedy(&table.values(&obs), legal, hp.epsilon, &mut rng);
            let outcome = state.step(action)?;
            actions_taken += 1;
            match method {
                TabularMethod::Ql => {
                    let tr = Transition {
                        agent,
                        state: obs,
                        action,
                        reward: outcome.reward,
                        next_state: outcome.observations[agent].clone(),
                        next_legal: outcome.masks[agent],
                        terminal: outcome.terminal,
                    };
                    q_update(&mut table, &tr, hp.alpha, hp.gamma);
                    updates_applied += 1;
                }
                TabularMethod::QlNStep => {
                    let tr = Transition {
                        agent,
                        state: obs,
                        action,
                        reward: outcome.reward,
                        next_state: outcome.observations[agent].clone(),
                        next_legal: outcome.masks[agent],
                        terminal: outcome.terminal,
                    };
                    if let Some(tuple) = nstep.push(tr) {
                        td_update(&mut table, &tuple, hp.alpha, hp.gamma);
                        updates_applied += 1;
                    }
                }
                TabularMethod::QlCcr => {
                    let pending = PendingAction {
                        agent,
                        state: obs,
                        legal,
                        action,
                        reward: outcome.reward,
                    };
                    if let Some(tr) = window.push(pending) {
                        ccr_q_update(&mut table, &tr, hp.alpha, hp.gamma);
                        updates_applied += 1;
                    }
                }
            }
        }
        match method {
            TabularMethod::Ql => {}
            TabularMethod::QlNStep => {
                for tuple in nstep.flush() {
                    td_update(&mut table, &tuple, hp.alpha, hp.gamma);
                    updates_applied += 1;
                }
            }
            TabularMethod::QlCcr => {
                for tr in window.flush(&state.observe_all())? {
                    ccr_q_update(&mut table, &tr, hp.alpha, hp.gamma);
                    updates_applied += 1;
                }
            }
        }
        curve.push(state.score());
    }
    Ok(TabularRun {
        table,
        curve,
        actions_taken,
        updates_applied,
    })
}
