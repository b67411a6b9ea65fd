//! Sequential versus rayon backends on the three parallel workloads: batch
//! gradient chunks, independent training runs, and evaluation rollouts.
//! Without the `parallel` feature only the sequential side is measured.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ccrl::deep::GRADIENT_CHUNK;
use ccrl::env::{Game, GameState, Transition};
use ccrl::hanabi::{self, Hanabi};
use ccrl::hintmatch::HintMatch;
use ccrl::nn::{NetShape, Network};
use ccrl::par;
use ccrl::tabular::{train_tabular, TabularHyperparams, TabularMethod};

type MapChunks = fn(&[Transition], usize, &(dyn Fn(&[Transition]) -> Vec<f64> + Sync)) -> Vec<Vec<f64>>;
type MapIndexed = fn(usize, &(dyn Fn(usize) -> f64 + Sync)) -> Vec<f64>;

fn backends() -> Vec<(&'static str, MapChunks, MapIndexed)> {
    #[cfg_attr(not(feature = "parallel"), allow(unused_mut))]
    let mut out: Vec<(&'static str, MapChunks, MapIndexed)> = vec![(
        "sequential",
        |items, chunk, f| par::sequential::map_chunks(items, chunk, f),
        |n, f| par::sequential::map_indexed(n, f),
    )];
    #[cfg(feature = "parallel")]
    out.push((
        "parallel",
        |items, chunk, f| par::parallel::map_chunks(items, chunk, f),
        |n, f| par::parallel::map_indexed(n, f),
    ));
    out
}

fn hanabi_batch(len: usize) -> Vec<Transition> {
    let game = Hanabi::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut batch = Vec::with_capacity(len);
    let mut state = game.reset(0);
    while batch.len() < len {
        if state.is_terminal() {
            state = game.reset(rng.random());
        }
        let agent = state.current_player();
        let obs = state.observe(agent);
        let legal = state.legal_mask().to_vec();
        let action = legal[rng.random_range(0..legal.len())];
        let out = state.step(action).unwrap();
        batch.push(Transition {
            agent,
            state: obs,
            action,
            reward: out.reward,
            next_state: out.observations[agent].clone(),
            next_legal: out.masks[agent],
            terminal: out.terminal,
        });
    }
    batch
}

fn chunk_gradient(net: &Network, chunk: &[Transition]) -> Vec<f64> {
    let mut grads = net.zero_grads();
    for t in chunk {
        let (values, cache) = net.forward_cached(&t.state.to_f64()).unwrap();
        let mut dout = vec![0.0; values.len()];
        dout[t.action] = values[t.action] - t.reward;
        net.backward(&cache, &[dout], &mut grads).unwrap();
    }
    grads
}

fn batch_gradients(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let net = Network::new(NetShape::mlp(hanabi::OBSERVATION_LEN, &[128, 128], hanabi::NUM_ACTIONS), &mut rng);
    let batch = hanabi_batch(64);
    let mut group = c.benchmark_group("batch_gradient_64");
    for (name, chunks, _) in backends() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| chunks(&batch, GRADIENT_CHUNK, &|chunk| chunk_gradient(&net, chunk)))
        });
    }
    group.finish();
}

fn training_runs(c: &mut Criterion) {
    let hp = TabularHyperparams {
        alpha: 0.01,
        gamma: 0.5,
        epsilon: 0.01,
        n: 1,
    };
    let mut group = c.benchmark_group("ql_ccr_runs_4x2000");
    group.sample_size(10);
    for (name, _, indexed) in backends() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                indexed(4, &|i| {
                    let run = train_tabular(&HintMatch, TabularMethod::QlCcr, &hp, 2000, i as u64).unwrap();
                    run.curve.iter().sum::<f64>()
                })
            })
        });
    }
    group.finish();
}

fn eval_rollouts(c: &mut Criterion) {
    let game = Hanabi::new();
    let mut group = c.benchmark_group("oracle_rollouts_256");
    for (name, _, indexed) in backends() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                indexed(256, &|i| {
                    let mut state = game.reset(i as u64);
                    while !state.is_terminal() {
                        let action = hanabi::oracle_policy(&state, state.current_player());
                        state.step(action).unwrap();
                    }
                    state.score()
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, batch_gradients, training_runs, eval_rollouts);
criterion_main!(benches);
