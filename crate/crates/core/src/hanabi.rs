//! Colourless Hanabi for two players.
//!
//! A single suit of 20 cards (six 1s, four 2s, four 3s, four 4s, two 5s),
//! five hidden cards per hand, three life tokens and eight hint tokens. The
//! players build one stack from 1 to 5. Actions are indexed as
//! `play(slot)` = 0..5, `discard(slot)` = 5..10, `hint(rank)` = 10..15.
//!
//! Removing a card from a hand shifts the remaining cards left and appends
//! the replacement in the last slot. The deck is drawn from its back.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::env::{
    ActionKind, ActionMask, AgentId, EnvId, Game, GameState, Observation, ObservationBuilder,
    StepOutcome, TimeIndex,
};
use crate::{Error, Result};

pub const HAND_SIZE: usize = 5;
pub const MAX_RANK: u8 = 5;
pub const DECK_SIZE: usize = 20;
pub const MAX_LIFE_TOKENS: u8 = 3;
pub const MAX_HINT_TOKENS: u8 = 8;
pub const NUM_ACTIONS: usize = 3 * HAND_SIZE;
/// Copies of each rank, indexed by `rank - 1`.
pub const RANK_COUNTS: [u8; 5] = [6, 4, 4, 4, 2];

const PARTNER_RANKS_LEN: usize = HAND_SIZE * MAX_RANK as usize;
const KNOWN_LEN: usize = HAND_SIZE * (MAX_RANK as usize + 1);
const STACK_LEN: usize = MAX_RANK as usize + 1;
const HINTS_LEN: usize = MAX_HINT_TOKENS as usize + 1;
const LIVES_LEN: usize = MAX_LIFE_TOKENS as usize + 1;
const DECK_LEN: usize = DECK_SIZE + 1;
const DISCARDS_LEN: usize = DECK_SIZE + RANK_COUNTS.len();

pub const OBSERVATION_LEN: usize = PARTNER_RANKS_LEN
    + KNOWN_LEN
    + KNOWN_LEN
    + STACK_LEN
    + HINTS_LEN
    + LIVES_LEN
    + DECK_LEN
    + DISCARDS_LEN;

/// Bit offsets of each observation block.
pub mod layout {
    use super::*;

    pub const PARTNER_RANKS: usize = 0;
    pub const OWN_KNOWN: usize = PARTNER_RANKS + PARTNER_RANKS_LEN;
    pub const PARTNER_KNOWN: usize = OWN_KNOWN + KNOWN_LEN;
    pub const STACK: usize = PARTNER_KNOWN + KNOWN_LEN;
    pub const HINT_TOKENS: usize = STACK + STACK_LEN;
    pub const LIFE_TOKENS: usize = HINT_TOKENS + HINTS_LEN;
    pub const DECK: usize = LIFE_TOKENS + LIVES_LEN;
    pub const DISCARDS: usize = DECK + DECK_LEN;
    /// Width of one slot in the known-rank blocks (ranks 1..=5 plus unknown).
    pub const KNOWN_SLOT: usize = MAX_RANK as usize + 1;

    /// Offset of the discard-count block for `rank`.
    pub fn discard_block(rank: u8) -> usize {
        DISCARDS
            + RANK_COUNTS[..usize::from(rank) - 1]
                .iter()
                .map(|&c| usize::from(c) + 1)
                .sum::<usize>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HanabiAction {
    Play(usize),
    Discard(usize),
    Hint(u8),
}

impl HanabiAction {
    pub fn from_index(action: usize) -> Option<Self> {
        match action {
            0..5 => Some(HanabiAction::Play(action)),
            5..10 => Some(HanabiAction::Discard(action - 5)),
            10..15 => Some(HanabiAction::Hint((action - 10) as u8 + 1)),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        match self {
            HanabiAction::Play(slot) => slot,
            HanabiAction::Discard(slot) => HAND_SIZE + slot,
            HanabiAction::Hint(rank) => 2 * HAND_SIZE + usize::from(rank) - 1,
        }
    }
}

/// A card in a hand. `known` is the rank revealed to the holder by hints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Card {
    pub rank: u8,
    pub known: Option<u8>,
}

impl Card {
    fn hidden(rank: u8) -> Self {
        Card { rank, known: None }
    }
}

/// Which dealer [`Hanabi::reset`] uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Dealer {
    /// Uniform shuffle of the full deck.
    #[default]
    Uniform,
    /// Player 1 is dealt one card of every rank, so a hint-then-play
    /// sequence completes the stack without discards.
    BestCase,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Hanabi {
    pub dealer: Dealer,
}

impl Hanabi {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn best_case() -> Self {
        Hanabi {
            dealer: Dealer::BestCase,
        }
    }
}

fn full_deck() -> Vec<u8> {
    RANK_COUNTS
        .iter()
        .enumerate()
        .flat_map(|(r, &n)| std::iter::repeat_n(r as u8 + 1, usize::from(n)))
        .collect()
}

impl Game for Hanabi {
    type State = HanabiState;

    fn id(&self) -> EnvId {
        EnvId::HanabiColourless
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
        f64::from(MAX_RANK)
    }

    fn reset(&self, seed: u64) -> HanabiState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match self.dealer {
            Dealer::Uniform => {
                let mut deck = full_deck();
                deck.shuffle(&mut rng);
                let hand1 = deck.split_off(deck.len() - HAND_SIZE);
                let hand0 = deck.split_off(deck.len() - HAND_SIZE);
                HanabiState::deal(hand0, hand1, deck)
            }
            Dealer::BestCase => {
                let mut hand1: Vec<u8> = (1..=MAX_RANK).collect();
                hand1.shuffle(&mut rng);
                let mut rest = full_deck();
                for rank in 1..=MAX_RANK {
                    let pos = rest.iter().position(|&r| r == rank).expect("rank in deck");
                    rest.remove(pos);
                }
                rest.shuffle(&mut rng);
                let hand0 = rest.split_off(rest.len() - HAND_SIZE);
                HanabiState::deal(hand0, hand1, rest)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HanabiState {
    /// Undrawn cards; the next draw takes the last element.
    pub deck: Vec<u8>,
    pub hands: [Vec<Card>; 2],
    pub stack_top: u8,
    pub life_tokens: u8,
    pub hint_tokens: u8,
    /// Discarded and misplayed cards, counted per rank (`rank - 1`).
    pub discards: [u8; 5],
    clock: TimeIndex,
    terminal: bool,
}

impl HanabiState {
    /// Fresh game from explicit hands and deck (drawn from the back).
    pub fn deal(hand0: Vec<u8>, hand1: Vec<u8>, deck: Vec<u8>) -> Self {
        assert_eq!(hand0.len(), HAND_SIZE);
        assert_eq!(hand1.len(), HAND_SIZE);
        Self {
            deck,
            hands: [
                hand0.into_iter().map(Card::hidden).collect(),
                hand1.into_iter().map(Card::hidden).collect(),
            ],
            stack_top: 0,
            life_tokens: MAX_LIFE_TOKENS,
            hint_tokens: MAX_HINT_TOKENS,
            discards: [0; 5],
            clock: TimeIndex::new(2),
            terminal: false,
        }
    }

    /// Arbitrary mid-game position with `current_player` to move after
    /// `steps` actions.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        deck: Vec<u8>,
        hands: [Vec<Card>; 2],
        stack_top: u8,
        life_tokens: u8,
        hint_tokens: u8,
        discards: [u8; 5],
        steps: u64,
    ) -> Self {
        let mut clock = TimeIndex::new(2);
        for _ in 0..steps {
            clock.advance();
        }
        let terminal = stack_top == MAX_RANK || life_tokens == 0;
        Self {
            deck,
            hands,
            stack_top,
            life_tokens,
            hint_tokens,
            discards,
            clock,
            terminal,
        }
    }

    /// Counts of every card still in the game or removed from it, by rank.
    pub fn card_census(&self) -> [u8; 5] {
        let mut census = self.discards;
        for &rank in self.deck.iter().chain(self.hands.iter().flatten().map(|c| &c.rank)) {
            census[usize::from(rank) - 1] += 1;
        }
        for rank in 1..=self.stack_top {
            census[usize::from(rank) - 1] += 1;
        }
        census
    }

    /// Conservation, token bounds, and known-rank consistency.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        if self.card_census() != RANK_COUNTS {
            return Err(format!("card census {:?}", self.card_census()));
        }
        if self.hint_tokens > MAX_HINT_TOKENS {
            return Err(format!("{} hint tokens", self.hint_tokens));
        }
        if self.life_tokens > MAX_LIFE_TOKENS {
            return Err(format!("{} life tokens", self.life_tokens));
        }
        if self.stack_top > MAX_RANK {
            return Err(format!("stack at {}", self.stack_top));
        }
        for card in self.hands.iter().flatten() {
            if card.known.is_some_and(|k| k != card.rank) {
                return Err(format!("card {card:?} known as the wrong rank"));
            }
        }
        if !self.terminal && self.hands.iter().any(|h| h.len() != HAND_SIZE) {
            return Err("short hand in a live state".into());
        }
        Ok(())
    }

    fn take_card(&mut self, player: AgentId, slot: usize) -> Card {
        self.hands[player].remove(slot)
    }

    fn finish_turn(&mut self, player: AgentId, needs_draw: bool) {
        if self.stack_top == MAX_RANK || self.life_tokens == 0 {
            self.terminal = true;
        } else if needs_draw {
            match self.deck.pop() {
                Some(rank) => self.hands[player].push(Card::hidden(rank)),
                None => self.terminal = true,
            }
        }
        self.clock.advance();
    }

    fn encode_hand_known(b: &mut ObservationBuilder, hand: &[Card]) {
        for k in 0..HAND_SIZE {
            match hand.get(k) {
                Some(card) => {
                    let index = card.known.map_or(usize::from(MAX_RANK), |r| usize::from(r) - 1);
                    b.one_hot(layout::KNOWN_SLOT, index);
                }
                None => {
                    b.zeros(layout::KNOWN_SLOT);
                }
            }
        }
    }
}

impl GameState for HanabiState {
    fn clock(&self) -> TimeIndex {
        self.clock
    }

    fn is_terminal(&self) -> bool {
        self.terminal
    }

    fn score(&self) -> f64 {
        f64::from(self.stack_top)
    }

    fn rule_mask(&self, agent: AgentId) -> ActionMask {
        if self.terminal {
            return ActionMask::EMPTY;
        }
        let mut mask = ActionMask::EMPTY;
        for slot in 0..self.hands[agent].len() {
            mask.insert(HanabiAction::Play(slot).index());
            mask.insert(HanabiAction::Discard(slot).index());
        }
        if self.hint_tokens > 0 {
            for rank in 1..=MAX_RANK {
                mask.insert(HanabiAction::Hint(rank).index());
            }
        }
        mask
    }

    fn observe(&self, agent: AgentId) -> Observation {
        let partner = 1 - agent;
        let mut b = ObservationBuilder::new(OBSERVATION_LEN);
        for k in 0..HAND_SIZE {
            match self.hands[partner].get(k) {
                Some(card) => b.one_hot(usize::from(MAX_RANK), usize::from(card.rank) - 1),
                None => b.zeros(usize::from(MAX_RANK)),
            };
        }
        Self::encode_hand_known(&mut b, &self.hands[agent]);
        Self::encode_hand_known(&mut b, &self.hands[partner]);
        b.one_hot(STACK_LEN, usize::from(self.stack_top));
        b.one_hot(HINTS_LEN, usize::from(self.hint_tokens));
        b.one_hot(LIVES_LEN, usize::from(self.life_tokens));
        b.one_hot(DECK_LEN, self.deck.len());
        for (count, &copies) in self.discards.iter().zip(&RANK_COUNTS) {
            b.one_hot(usize::from(copies) + 1, usize::from(*count));
        }
        b.finish()
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome> {
        if self.terminal {
            return Err(Error::TerminalState);
        }
        let player = self.clock.agent();
        let illegal = Error::IllegalAction { action, player };
        if !self.rule_mask(player).contains(action) {
            return Err(illegal);
        }
        let decoded = HanabiAction::from_index(action).ok_or(illegal)?;
        let (reward, kind) = match decoded {
            HanabiAction::Play(slot) => {
                let card = self.take_card(player, slot);
                let success = card.rank == self.stack_top + 1;
                if success {
                    self.stack_top += 1;
                } else {
                    self.life_tokens -= 1;
                    self.discards[usize::from(card.rank) - 1] += 1;
                }
                self.finish_turn(player, true);
                (if success { 1.0 } else { 0.0 }, ActionKind::Play { success })
            }
            HanabiAction::Discard(slot) => {
                let card = self.take_card(player, slot);
                self.discards[usize::from(card.rank) - 1] += 1;
                self.hint_tokens = (self.hint_tokens + 1).min(MAX_HINT_TOKENS);
                self.finish_turn(player, true);
                (0.0, ActionKind::Discard)
            }
            HanabiAction::Hint(rank) => {
                self.hint_tokens -= 1;
                for card in self.hands[1 - player].iter_mut().filter(|c| c.rank == rank) {
                    card.known = Some(rank);
                }
                self.finish_turn(player, false);
                (0.0, ActionKind::Hint)
            }
        };
        Ok(StepOutcome {
            reward,
            kind,
            terminal: self.terminal,
            observations: self.observe_all(),
            masks: (0..2).map(|i| self.rule_mask(i)).collect(),
        })
    }
}

/// Hint-then-play rule policy: play a slot known to continue the stack,
/// otherwise hint the partner the next needed rank, otherwise discard slot 0.
pub fn oracle_policy(state: &HanabiState, agent: AgentId) -> usize {
    let needed = state.stack_top + 1;
    if let Some(slot) = state.hands[agent]
        .iter()
        .position(|c| c.known == Some(needed))
    {
        return HanabiAction::Play(slot).index();
    }
    if state.hint_tokens > 0 && needed <= MAX_RANK {
        return HanabiAction::Hint(needed).index();
    }
    HanabiAction::Discard(0).index()
}
