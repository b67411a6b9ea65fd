//! Two-player hint/match game.
//!
//! Each player holds three hidden cards of rank 1..=3 and sees only the
//! partner's hand plus a shared target rank. On a turn a player either plays
//! one of their own slots, ending the game (score 1 if the rank matches the
//! target), or hints a slot of the partner's hand, which sets a persistent
//! flag the partner can see. Episodes are capped at [`STEP_CAP`] actions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{
    ActionKind, ActionMask, AgentId, EnvId, Game, GameState, Observation, ObservationBuilder,
    StepOutcome, TimeIndex,
};
use crate::{Error, Result};

pub const HAND_SIZE: usize = 3;
pub const RANKS: usize = 3;
pub const NUM_ACTIONS: usize = 2 * HAND_SIZE;
pub const STEP_CAP: u64 = 20;
/// partner ranks (3x3) + own hint flags (3) + partner hint flags (3) + target (3)
pub const OBSERVATION_LEN: usize = HAND_SIZE * RANKS + HAND_SIZE + HAND_SIZE + RANKS;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HintMatchAction {
    Play(usize),
    Hint(usize),
}

impl HintMatchAction {
    pub fn from_index(action: usize) -> Option<Self> {
        match action {
            0..HAND_SIZE => Some(HintMatchAction::Play(action)),
            HAND_SIZE..NUM_ACTIONS => Some(HintMatchAction::Hint(action - HAND_SIZE)),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        match self {
            HintMatchAction::Play(slot) => slot,
            HintMatchAction::Hint(slot) => HAND_SIZE + slot,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct HintMatch;

impl HintMatch {
    pub fn new() -> Self {
        HintMatch
    }
}

impl Game for HintMatch {
    type State = HintMatchState;

    fn id(&self) -> EnvId {
        EnvId::HintMatch
    }

    fn num_players(&self) -> usize {
        2
    }

    fn num_actions(&self) -> usize {
        NUM_ACTIONS
    }

    fn observation_len(&self) -> usize {
        OBSERVATION_LEN
    }

    fn max_score(&self) -> f64 {
        1.0
    }

    fn reset(&self, seed: u64) -> HintMatchState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut hands = [[0u8; HAND_SIZE]; 2];
        for hand in hands.iter_mut() {
            for card in hand.iter_mut() {
                *card = rng.random_range(1..=RANKS as u8);
            }
        }
        let target = rng.random_range(1..=RANKS as u8);
        HintMatchState::from_deal(hands, target)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HintMatchState {
    pub hands: [[u8; HAND_SIZE]; 2],
    pub target: u8,
    /// `hint_flags[p][k]`: slot `k` of player `p`'s hand has been hinted.
    pub hint_flags: [[bool; HAND_SIZE]; 2],
    clock: TimeIndex,
    terminal: bool,
    score: u8,
}

impl HintMatchState {
    pub fn from_deal(hands: [[u8; HAND_SIZE]; 2], target: u8) -> Self {
        assert!(
            hands.iter().flatten().chain([&target]).all(|&r| (1..=RANKS as u8).contains(&r)),
            "ranks must lie in 1..=3"
        );
        Self {
            hands,
            target,
            hint_flags: [[false; HAND_SIZE]; 2],
            clock: TimeIndex::new(2),
            terminal: false,
            score: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.clock.t
    }

    /// Slots of `player`'s hand matching the target.
    pub fn matching_slots(&self, player: AgentId) -> Vec<usize> {
        (0..HAND_SIZE)
            .filter(|&k| self.hands[player][k] == self.target)
            .collect()
    }

    /// The single matching slot of `player`'s hand, if exactly one exists.
    pub fn unique_match(&self, player: AgentId) -> Option<usize> {
        match self.matching_slots(player).as_slice() {
            [slot] => Some(*slot),
            _ => None,
        }
    }
}

impl GameState for HintMatchState {
    fn clock(&self) -> TimeIndex {
        self.clock
    }

    fn is_terminal(&self) -> bool {
        self.terminal
    }

    fn score(&self) -> f64 {
        f64::from(self.score)
    }

    fn rule_mask(&self, _agent: AgentId) -> ActionMask {
        if self.terminal {
            ActionMask::EMPTY
        } else {
            ActionMask::all(NUM_ACTIONS)
        }
    }

    fn observe(&self, agent: AgentId) -> Observation {
        let partner = 1 - agent;
        let mut b = ObservationBuilder::new(OBSERVATION_LEN);
        for &rank in &self.hands[partner] {
            b.one_hot(RANKS, usize::from(rank) - 1);
        }
        for &flag in &self.hint_flags[agent] {
            b.bit(flag);
        }
        for &flag in &self.hint_flags[partner] {
            b.bit(flag);
        }
        b.one_hot(RANKS, usize::from(self.target) - 1);
        b.finish()
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome> {
        if self.terminal {
            return Err(Error::TerminalState);
        }
        let player = self.clock.agent();
        let decoded = HintMatchAction::from_index(action)
            .ok_or(Error::IllegalAction { action, player })?;
        let (reward, kind) = match decoded {
            HintMatchAction::Play(slot) => {
                let success = self.hands[player][slot] == self.target;
                self.score = u8::from(success);
                self.terminal = true;
                (f64::from(self.score), ActionKind::Play { success })
            }
            HintMatchAction::Hint(slot) => {
                self.hint_flags[1 - player][slot] = true;
                (0.0, ActionKind::Hint)
            }
        };
        self.clock.advance();
        if !self.terminal && self.clock.t >= STEP_CAP {
            self.terminal = true;
            self.score = 0;
        }
        Ok(StepOutcome {
            reward,
            kind,
            terminal: self.terminal,
            observations: self.observe_all(),
            masks: (0..2).map(|i| self.rule_mask(i)).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unique_match_deals() -> impl Iterator<Item = HintMatchState> {
        all_deals().filter(|s| s.unique_match(1).is_some())
    }

    fn all_deals() -> impl Iterator<Item = HintMatchState> {
        (0..3usize.pow(7)).map(|code| {
            let mut digits = [0u8; 7];
            let mut rest = code;
            for d in digits.iter_mut() {
                *d = (rest % 3) as u8 + 1;
                rest /= 3;
            }
            HintMatchState::from_deal(
                [[digits[0], digits[1], digits[2]], [digits[3], digits[4], digits[5]]],
                digits[6],
            )
        })
    }

    #[test]
    fn hint_then_play_scores_in_two_steps() {
        let mut state = HintMatchState::from_deal([[1, 1, 1], [2, 3, 1]], 3);
        let out = state.step(HintMatchAction::Hint(1).index()).unwrap();
        assert_eq!(out.reward, 0.0);
        assert!(!out.terminal);
        assert!(state.hint_flags[1][1]);
        let out = state.step(HintMatchAction::Play(1).index()).unwrap();
        assert_eq!(out.reward, 1.0);
        assert!(out.terminal);
        assert_eq!(state.score(), 1.0);
        assert_eq!(state.step_count(), 2);
        assert_eq!(out.observations.len(), 2);
    }

    #[test]
    fn unhinted_mismatch_play_loses() {
        let mut state = HintMatchState::from_deal([[2, 3, 1], [1, 1, 1]], 3);
        let out = state.step(HintMatchAction::Play(0).index()).unwrap();
        assert_eq!(out.reward, 0.0);
        assert!(out.terminal);
        assert_eq!(out.kind, ActionKind::Play { success: false });
        assert_eq!(state.score(), 0.0);
        assert!(matches!(state.step(0), Err(Error::TerminalState)));
    }

    #[test]
    fn twenty_hints_hit_the_step_cap() {
        for deal in all_deals().step_by(97) {
            let mut state = deal;
            let mut steps = 0;
            while !state.is_terminal() {
                let out = state.step(HintMatchAction::Hint(steps % 3).index()).unwrap();
                assert_eq!(out.reward, 0.0);
                steps += 1;
            }
            assert_eq!(steps, STEP_CAP as usize);
            assert_eq!(state.score(), 0.0);
        }
    }

    #[test]
    fn fresh_state_has_all_actions_legal() {
        let state = HintMatch.reset(3);
        assert_eq!(state.legal_actions(0).unwrap(), (0..6).collect::<Vec<_>>());
        assert!(matches!(state.legal_actions(1), Err(Error::WrongAgent { .. })));
        assert_eq!(state.current_player(), 0);
    }

    #[test]
    fn reset_is_deterministic_per_seed() {
        let game = HintMatch;
        assert_eq!(game.reset(42), game.reset(42));
        let distinct = (0..50).map(|s| game.reset(s)).collect::<Vec<_>>();
        assert!(distinct.windows(2).any(|w| w[0] != w[1]));
    }

    #[test]
    fn reset_ranks_are_uniform() {
        // chi-square over every card position and the target, 3 categories
        // each; 13.816 is the 0.999 quantile for 2 degrees of freedom.
        let game = HintMatch;
        let mut counts = [[0usize; 3]; 7];
        let n = 10_000;
        for seed in 0..n {
            let s = game.reset(seed as u64);
            let cards = s.hands.iter().flatten().chain([&s.target]);
            for (pos, &rank) in cards.enumerate() {
                counts[pos][usize::from(rank) - 1] += 1;
            }
        }
        let expected = n as f64 / 3.0;
        for row in counts {
            let chi2: f64 = row
                .iter()
                .map(|&c| (c as f64 - expected).powi(2) / expected)
                .sum();
            assert!(chi2 < 13.816, "chi-square {chi2} for {row:?}");
        }
    }

    #[test]
    fn observation_hides_own_cards() {
        let a = HintMatchState::from_deal([[1, 1, 1], [2, 3, 1]], 2);
        let b = HintMatchState::from_deal([[3, 2, 2], [2, 3, 1]], 2);
        // only player 0's hand differs, which player 0 cannot see
        assert_eq!(a.observe(0), b.observe(0));
        assert_ne!(a.observe(1), b.observe(1));
        assert_eq!(a.observe(0).len(), 18);
    }

    #[test]
    fn swapped_players_encode_identically() {
        let mut a = HintMatchState::from_deal([[1, 2, 3], [3, 3, 1]], 2);
        let mut b = HintMatchState::from_deal([[3, 3, 1], [1, 2, 3]], 2);
        a.hint_flags = [[true, false, false], [false, false, true]];
        b.hint_flags = [[false, false, true], [true, false, false]];
        assert_eq!(a.observe(0), b.observe(1));
        assert_eq!(a.observe(1), b.observe(0));
    }

    #[test]
    fn hinting_flips_one_bit_of_partner_view() {
        let game = HintMatch;
        for seed in 0..200 {
            let mut state = game.reset(seed);
            let slot = (seed % 3) as usize;
            let before = state.observe(1);
            state.step(HintMatchAction::Hint(slot).index()).unwrap();
            let after = state.observe(1);
            assert_eq!(before.diff(&after), vec![9 + slot]);
        }
    }

    #[test]
    fn hint_then_play_wins_every_unique_match_deal() {
        let mut count = 0;
        for deal in unique_match_deals() {
            let slot = deal.unique_match(1).unwrap();
            let mut state = deal.clone();
            state.step(HintMatchAction::Hint(slot).index()).unwrap();
            assert_eq!(state.hands, deal.hands);
            assert_eq!(state.target, deal.target);
            state.step(HintMatchAction::Play(slot).index()).unwrap();
            assert!(state.is_terminal());
            assert_eq!(state.score(), 1.0);
            count += 1;
        }
        // 3 targets x 3^3 partner hands x (3 slots x 2^2 non-matching others)
        assert_eq!(count, 3 * 27 * 12);
    }
}
