//! Helpers shared by the integration tests and the acceptance report.
#![allow(dead_code)]

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ccrl::ccr::build_ccr_transitions;
use ccrl::deep::{ccr_targets, dqn_targets, recurrent_loss_gradient};
use ccrl::env::{ActionMask, EpisodeTrace, Game, GameState, Observation, TraceStep, Transition};
use ccrl::hanabi::Hanabi;
use ccrl::hintmatch::{self, HintMatch, HintMatchAction};
use ccrl::nn::{LstmState, NetShape, Network};
use ccrl::tabular::{n_step_update, q_update, QTable};

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Network with every parameter, biases included, uniform in [-1, 1] so
/// no pre-activation sits on a ReLU kink by construction.
pub fn random_net(shape: NetShape, rng: &mut impl Rng) -> Network {
    let params = (0..shape.param_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
    Network::from_params(shape, params).unwrap()
}

pub fn random_input(len: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn random_observation(len: usize, rng: &mut impl Rng) -> Observation {
    let bits: Vec<bool> = (0..len).map(|_| rng.random_bool(0.5)).collect();
    Observation::from_bits(&bits)
}

pub fn random_mask(actions: usize, rng: &mut impl Rng) -> ActionMask {
    let mut mask = ActionMask::from_bits(rng.next_u64() & ((1u64 << actions) - 1));
    if mask.is_empty() {
        mask.insert(rng.random_range(0..actions));
    }
    mask
}

fn pick(mask: ActionMask, rng: &mut impl Rng) -> usize {
    let legal = mask.to_vec();
    legal[rng.random_range(0..legal.len())]
}

pub fn random_transition(obs_len: usize, actions: usize, rng: &mut impl Rng) -> Transition {
    let legal = random_mask(actions, rng);
    Transition {
        agent: rng.random_range(0..3),
        state: random_observation(obs_len, rng),
        action: pick(legal, rng),
        reward: rng.random_range(-2.0..2.0),
        next_state: random_observation(obs_len, rng),
        next_legal: random_mask(actions, rng),
        terminal: rng.random_bool(0.2),
    }
}

/// Largest per-parameter relative error between `analytic` and a central
/// difference of `loss`, where relative error is
/// `|a - n| / max(|a| + |n|, 1e-6)`.
pub fn max_fd_error(net: &Network, analytic: &[f64], loss: impl Fn(&Network) -> f64) -> f64 {
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for (k, &a) in analytic.iter().enumerate() {
        let base = net.params()[k];
        probe.params_mut()[k] = base + FD_STEP;
        let up = loss(&probe);
        probe.params_mut()[k] = base - FD_STEP;
        let down = loss(&probe);
        probe.params_mut()[k] = base;
        let numeric = (up - down) / (2.0 * FD_STEP);
        worst = worst.max((a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-6));
    }
    worst
}

/// Synthetic trace of `len` steps for `players` agents in round-robin order.
/// Each agent's next state is its observation at its next turn, or its
/// terminal observation after its last turn. Rewards come from `reward`.
pub fn synthetic_trace(
    players: usize,
    len: usize,
    obs_len: usize,
    actions: usize,
    rng: &mut impl Rng,
    mut reward: impl FnMut(usize, &mut dyn RngCore) -> f64,
) -> EpisodeTrace {
    let states: Vec<Observation> = (0..len).map(|_| random_observation(obs_len, rng)).collect();
    let masks: Vec<ActionMask> = (0..len).map(|_| random_mask(actions, rng)).collect();
    let terminal_observations: Vec<Observation> =
        (0..players).map(|_| random_observation(obs_len, rng)).collect();
    let steps = (0..len)
        .map(|t| {
            let agent = t % players;
            let (next_state, next_legal) = if t + players < len {
                (states[t + players].clone(), masks[t + players])
            } else {
                (terminal_observations[agent].clone(), ActionMask::EMPTY)
            };
            TraceStep {
                t: t as u64,
                round: (t / players) as u64,
                agent,
                state: states[t].clone(),
                legal: masks[t],
                action: pick(masks[t], rng),
                reward: reward(t, rng),
                next_state,
                next_legal,
            }
        })
        .collect();
    EpisodeTrace {
        env: "synthetic".into(),
        seed: 0,
        players,
        observation_len: obs_len,
        steps,
        terminal_observations,
        final_score: 0.0,
    }
}

/// Bit-exact equality of two floats, treating every NaN alike.
pub fn same_bits(a: f64, b: f64) -> bool {
    a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan())
}

/// Smooth test loss over one output vector and its gradient.
fn output_loss(out: &[f64], weights: &[f64]) -> (f64, Vec<f64>) {
    let loss = out.iter().zip(weights).map(|(o, w)| w * o + 0.5 * o * o).sum();
    let grad = out.iter().zip(weights).map(|(o, w)| w + o).collect();
    (loss, grad)
}

/// Feed-forward net with two ReLU layers.
pub fn mlp_fd_error(seed: u64) -> f64 {
    let mut rng = rng(seed);
    let net = random_net(NetShape::mlp(7, &[6, 5], 4), &mut rng);
    let x = random_input(7, &mut rng);
    let weights = random_input(4, &mut rng);
    let (out, cache) = net.forward_cached(&x).unwrap();
    let (_, dout) = output_loss(&out, &weights);
    let mut grads = net.zero_grads();
    net.backward(&cache, &[dout], &mut grads).unwrap();
    max_fd_error(&net, &grads, |n| output_loss(&n.forward(&x).unwrap(), &weights).0)
}

/// One LSTM step from a random carried state.
pub fn cell_fd_error(seed: u64) -> f64 {
    let mut rng = rng(seed);
    let net = random_net(NetShape::recurrent(5, &[4], 3, 4), &mut rng);
    let x = random_input(5, &mut rng);
    let state = LstmState {
        h: random_input(3, &mut rng),
        c: random_input(3, &mut rng),
    };
    let weights = random_input(4, &mut rng);
    let (outs, _, cache) = net.forward_sequence(&[&x], &state).unwrap();
    let (_, dout) = output_loss(&outs[0], &weights);
    let mut grads = net.zero_grads();
    net.backward(&cache, &[dout], &mut grads).unwrap();
    max_fd_error(&net, &grads, |n| {
        output_loss(&n.forward_recurrent(&x, &state).unwrap().0, &weights).0
    })
}

/// The recurrent TD loss over windows of two transitions against fixed
/// targets.
pub fn unrolled_fd_error(seed: u64) -> f64 {
    let mut rng = rng(seed);
    let net = random_net(NetShape::recurrent(6, &[5], 3, 4), &mut rng);
    let windows: Vec<Vec<Transition>> = (0..3)
        .map(|_| (0..2).map(|_| random_transition(6, 4, &mut rng)).collect())
        .collect();
    let refs: Vec<&[Transition]> = windows.iter().map(Vec::as_slice).collect();
    let targets: Vec<Vec<f64>> = (0..3).map(|_| random_input(2, &mut rng)).collect();
    let (_, grads) = recurrent_loss_gradient(&net, &refs, &targets).unwrap();
    max_fd_error(&net, &grads, |n| recurrent_loss_gradient(n, &refs, &targets).unwrap().0)
}

/// `n_step_update` with `n = 1` against `q_update` on a randomly filled
/// table: same return value and same table, bit for bit.
pub fn nstep_matches_one_step(seed: u64) -> bool {
    let mut rng = rng(seed);
    let t = random_transition(8, 5, &mut rng);
    let mut table = QTable::new(5);
    for obs in [&t.state, &t.next_state] {
        for a in 0..5 {
            table.set(obs, a, rng.random_range(-3.0..3.0));
        }
    }
    let alpha = rng.random_range(0.0..=1.0);
    let gamma = rng.random_range(0.0..=1.0);
    let mut one = table.clone();
    let mut nstep = table;
    let a = q_update(&mut one, &t, alpha, gamma);
    let b = n_step_update(&mut nstep, std::slice::from_ref(&t), alpha, gamma, 1).unwrap();
    same_bits(a, b) && one.to_text() == nstep.to_text()
}

fn random_reward(_: usize, rng: &mut dyn RngCore) -> f64 {
    (rng.next_u32() % 2001) as f64 / 1000.0 - 1.0
}

/// A single-agent trace of random length.
pub fn single_agent_trace(seed: u64) -> EpisodeTrace {
    let mut rng = rng(seed);
    let len = rng.random_range(1..30);
    synthetic_trace(1, len, 10, 6, &mut rng, random_reward)
}

/// With one agent, credit-cognisant tuples are the standard tuples.
pub fn single_agent_ccr_is_standard(seed: u64) -> bool {
    let trace = single_agent_trace(seed);
    let ccr = build_ccr_transitions(&trace).unwrap();
    let standard = trace.transitions();
    ccr.len() == standard.len()
        && ccr.iter().zip(&standard).all(|(c, s)| {
            c.agent == s.agent
                && c.state == s.state
                && c.action == s.action
                && same_bits(c.ccr, s.reward)
                && c.next_state == s.next_state
                && c.next_legal == s.next_legal
                && c.terminal == s.terminal
        })
}

/// With one agent, CCR targets equal one-step DQN targets bit for bit.
pub fn single_agent_targets_agree(seed: u64) -> bool {
    let trace = single_agent_trace(seed);
    let mut rng = rng(seed ^ 0xa5a5);
    let net = random_net(NetShape::mlp(10, &[8], 6), &mut rng);
    let gamma = rng.random_range(0.0..=1.0);
    let ccr = build_ccr_transitions(&trace).unwrap();
    let standard = trace.transitions();
    let a = ccr_targets(&ccr.iter().collect::<Vec<_>>(), &net, gamma).unwrap();
    let b = dqn_targets(&standard.iter().collect::<Vec<_>>(), &net, gamma).unwrap();
    a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| same_bits(*x, *y))
}

/// Every action yields one CCR tuple and every reward lands in between one
/// and `P` credit sums. Reward `t` is `2^t`, so each sum decodes exactly
/// into the steps it covers.
pub fn credit_coverage(seed: u64) -> std::result::Result<(), String> {
    let mut rng = rng(seed);
    let players = rng.random_range(1..=3);
    let len = rng.random_range(1..40);
    let trace = synthetic_trace(players, len, 6, 4, &mut rng, |t, _| (t as f64).exp2());
    let tuples = build_ccr_transitions(&trace).map_err(|e| e.to_string())?;
    if tuples.len() != len {
        return Err(format!("{} tuples for {len} actions (P={players})", tuples.len()));
    }
    let mut uses = vec![0usize; len];
    for tuple in &tuples {
        let bits = tuple.ccr as u64;
        if bits as f64 != tuple.ccr {
            return Err(format!("sum {} is not a set of steps", tuple.ccr));
        }
        for (t, used) in uses.iter_mut().enumerate() {
            *used += ((bits >> t) & 1) as usize;
        }
    }
    match uses.iter().enumerate().find(|(_, &u)| u < 1 || u > players) {
        Some((t, u)) => Err(format!("reward {t} used {u} times (P={players})")),
        None => Ok(()),
    }
}

/// Random legal play of colourless Hanabi until at least `min_steps`
/// actions have been taken. Checks after every step: card conservation and
/// token bounds, a non-decreasing score capped at 5, reward equal to the
/// score increase, and that terminal states refuse further actions.
/// Returns the number of steps taken.
pub fn hanabi_rollouts(min_steps: usize, seed: u64) -> std::result::Result<usize, String> {
    let game = Hanabi::new();
    let mut rng = rng(seed);
    let mut steps = 0;
    let mut episode = 0u64;
    while steps < min_steps {
        let mut state = game.reset(seed.wrapping_mul(1_000_003).wrapping_add(episode));
        episode += 1;
        state.check_invariants()?;
        while !state.is_terminal() {
            let before = state.score();
            let legal = state.legal_mask();
            let action = pick(legal, &mut rng);
            let out = state.step(action).map_err(|e| e.to_string())?;
            steps += 1;
            state.check_invariants().map_err(|e| format!("episode {episode}: {e}"))?;
            let after = state.score();
            if after < before || after > game.max_score() || out.reward != after - before {
                return Err(format!("episode {episode}: score {before} -> {after}, reward {}", out.reward));
            }
            if out.terminal != state.is_terminal() {
                return Err(format!("episode {episode}: terminal flag disagrees"));
            }
        }
        if state.step(0).is_ok() || !state.legal_mask().is_empty() {
            return Err(format!("episode {episode}: terminal state accepted an action"));
        }
    }
    Ok(steps)
}

/// `episodes` random hint-match games. Checks: games end by the first play
/// or at the step cap, hints never change hands or target, the score is 1
/// exactly when the played card matches the target, and capped games
/// score 0.
pub fn hintmatch_rollouts(episodes: u64, seed: u64) -> std::result::Result<(), String> {
    let mut rng = rng(seed);
    for episode in 0..episodes {
        let mut state = HintMatch.reset(seed.wrapping_mul(1_000_003).wrapping_add(episode));
        let (hands, target) = (state.hands, state.target);
        let mut played = None;
        while !state.is_terminal() {
            let action = rng.random_range(0..hintmatch::NUM_ACTIONS);
            let player = state.current_player();
            let out = state.step(action).map_err(|e| e.to_string())?;
            if state.hands != hands || state.target != target {
                return Err(format!("episode {episode}: deal changed"));
            }
            match HintMatchAction::from_index(action) {
                Some(HintMatchAction::Play(slot)) => {
                    if !out.terminal {
                        return Err(format!("episode {episode}: play did not end the game"));
                    }
                    played = Some(hands[player][slot]);
                }
                Some(HintMatchAction::Hint(_)) if out.reward != 0.0 => {
                    return Err(format!("episode {episode}: hint rewarded"));
                }
                _ => {}
            }
        }
        if state.step_count() > hintmatch::STEP_CAP {
            return Err(format!("episode {episode}: {} steps", state.step_count()));
        }
        let expected = match played {
            Some(rank) => f64::from(u8::from(rank == target)),
            None if state.step_count() == hintmatch::STEP_CAP => 0.0,
            None => return Err(format!("episode {episode}: ended without play or cap")),
        };
        if state.score() != expected {
            return Err(format!("episode {episode}: score {} expected {expected}", state.score()));
        }
        if state.step(0).is_ok() {
            return Err(format!("episode {episode}: terminal state accepted an action"));
        }
    }
    Ok(())
}
