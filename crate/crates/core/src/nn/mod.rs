//! Small Q-network kernel: rectified dense layers, an optional LSTM cell
//! before a linear head, reverse-mode gradients and Adam.
//!
//! Parameters live in one flat `Vec<f64>` so optimizers, target copies and
//! checkpoints treat a network as a plain slice. Dense weights are stored
//! input-major (`w[i * out + j]` connects input `i` to unit `j`), which
//! keeps every inner loop contiguous and lets sparse binary inputs skip
//! their zero rows.

mod adam;
mod checkpoint;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use adam::Adam;

/// Layer sizes of a Q-network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    pub input: usize,
    /// Rectified dense layers, in order.
    pub hidden: Vec<usize>,
    /// Units of the LSTM cell between the last dense layer and the head.
    pub recurrent: Option<usize>,
    pub output: usize,
}

impl NetShape {
    pub fn mlp(input: usize, hidden: &[usize], output: usize) -> Self {
        Self {
            input,
            hidden: hidden.to_vec(),
            recurrent: None,
            output,
        }
    }

    pub fn recurrent(input: usize, hidden: &[usize], units: usize, output: usize) -> Self {
        Self {
            input,
            hidden: hidden.to_vec(),
            recurrent: Some(units),
            output,
        }
    }

    pub fn is_recurrent(&self) -> bool {
        self.recurrent.is_some()
    }

    fn dense_out(&self) -> usize {
        self.hidden.last().copied().unwrap_or(self.input)
    }

    fn head_input(&self) -> usize {
        self.recurrent.unwrap_or_else(|| self.dense_out())
    }

    pub fn param_count(&self) -> usize {
        Layout::new(self).len
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct DenseSpan {
    input: usize,
    output: usize,
    weights: usize,
    bias: usize,
}

impl DenseSpan {
    fn end(&self) -> usize {
        self.bias + self.output
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Layout {
    hidden: Vec<DenseSpan>,
    /// Gate pre-activations as a dense map from `[x, h_prev]` to `4 * units`.
    cell: Option<DenseSpan>,
    head: DenseSpan,
    len: usize,
}

impl Layout {
    fn new(shape: &NetShape) -> Self {
        let mut next = 0;
        let mut span = |input: usize, output: usize| {
            let s = DenseSpan {
                input,
                output,
                weights: next,
                bias: next + input * output,
            };
            next = s.end();
            s
        };
        let mut width = shape.input;
        let mut hidden = Vec::with_capacity(shape.hidden.len());
        for &units in &shape.hidden {
            hidden.push(span(width, units));
            width = units;
        }
        let cell = shape.recurrent.map(|units| span(width + units, 4 * units));
        let head = span(shape.head_input(), shape.output);
        Self {
            hidden,
            cell,
            head,
            len: next,
        }
    }
}

/// Hidden and cell state of the LSTM.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(units: usize) -> Self {
        Self {
            h: vec![0.0; units],
            c: vec![0.0; units],
        }
    }
}

#[derive(Debug, Clone)]
struct CellCache {
    /// `[x, h_prev]`.
    joint: Vec<f64>,
    c_prev: Vec<f64>,
    input: Vec<f64>,
    forget: Vec<f64>,
    candidate: Vec<f64>,
    output: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

#[derive(Debug, Clone)]
struct StepCache {
    /// `acts[0]` is the network input, `acts[k + 1]` the output of hidden
    /// layer `k`.
    acts: Vec<Vec<f64>>,
    cell: Option<CellCache>,
}

impl StepCache {
    fn head_input(&self) -> &[f64] {
        match &self.cell {
            Some(cell) => &cell.h,
            None => self.acts.last().expect("input is always cached"),
        }
    }
}

/// Intermediate values of a forward pass, consumed by
/// [`Network::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    steps: Vec<StepCache>,
}

impl ForwardCache {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Q-network over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    shape: NetShape,
    layout: Layout,
    params: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `out = bias + x · W` for one dense span; zero inputs are skipped.
fn dense_forward(params: &[f64], span: &DenseSpan, x: &[f64]) -> Vec<f64> {
    let mut out = params[span.bias..span.end()].to_vec();
    let weights = &params[span.weights..span.bias];
    for (xi, row) in x.iter().zip(weights.chunks_exact(span.output)) {
        if *xi != 0.0 {
            for (o, w) in out.iter_mut().zip(row) {
                *o += xi * w;
            }
        }
    }
    out
}

/// Accumulates weight and bias gradients of one dense span for the
/// pre-activation gradient `delta`; writes the input gradient into `dx`.
fn dense_backward(
    params: &[f64],
    grads: &mut [f64],
    span: &DenseSpan,
    x: &[f64],
    delta: &[f64],
    dx: Option<&mut [f64]>,
) {
    let (gw, gb) = grads[span.weights..span.end()].split_at_mut(span.input * span.output);
    for (xi, row) in x.iter().zip(gw.chunks_exact_mut(span.output)) {
        if *xi != 0.0 {
            for (g, d) in row.iter_mut().zip(delta) {
                *g += xi * d;
            }
        }
    }
    for (g, d) in gb.iter_mut().zip(delta) {
        *g += d;
    }
    if let Some(dx) = dx {
        let weights = &params[span.weights..span.bias];
        for (di, row) in dx.iter_mut().zip(weights.chunks_exact(span.output)) {
            *di = row.iter().zip(delta).map(|(w, d)| w * d).sum();
        }
    }
}

impl Network {
    /// Network with every parameter zero.
    pub fn zeros(shape: NetShape) -> Self {
        let layout = Layout::new(&shape);
        let params = vec![0.0; layout.len];
        Self {
            shape,
            layout,
            params,
        }
    }

    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn new<R: Rng + ?Sized>(shape: NetShape, rng: &mut R) -> Self {
        let mut net = Self::zeros(shape);
        let spans: Vec<DenseSpan> = net
            .layout
            .hidden
            .iter()
            .chain(&net.layout.cell)
            .chain([&net.layout.head])
            .copied()
            .collect();
        for span in spans {
            let bound = 1.0 / (span.input.max(1) as f64).sqrt();
            for w in &mut net.params[span.weights..span.bias] {
                *w = rng.random_range(-bound..=bound);
            }
        }
        net
    }

    /// Rebuilds a network from a flat parameter vector.
    pub fn from_params(shape: NetShape, params: Vec<f64>) -> Result<Self> {
        let layout = Layout::new(&shape);
        if params.len() != layout.len {
            return Err(Error::ShapeMismatch {
                expected: layout.len,
                actual: params.len(),
            });
        }
        Ok(Self {
            shape,
            layout,
            params,
        })
    }

    pub fn shape(&self) -> &NetShape {
        &self.shape
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Zero gradient buffer shaped like the parameters.
    pub fn zero_grads(&self) -> Vec<f64> {
        vec![0.0; self.params.len()]
    }

    /// Copies `other`'s parameters into `self`.
    pub fn copy_from(&mut self, other: &Network) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                expected: self.params.len(),
                actual: other.params.len(),
            });
        }
        self.params.copy_from_slice(&other.params);
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.shape.input {
            return Err(Error::ShapeMismatch {
                expected: self.shape.input,
                actual: x.len(),
            });
        }
        Ok(())
    }

    fn check_state(&self, state: &LstmState) -> Result<()> {
        let units = self.shape.recurrent.unwrap_or(0);
        for len in [state.h.len(), state.c.len()] {
            if len != units {
                return Err(Error::ShapeMismatch {
                    expected: units,
                    actual: len,
                });
            }
        }
        Ok(())
    }

    /// Zero LSTM state for this network; empty for feed-forward nets.
    pub fn initial_state(&self) -> LstmState {
        LstmState::zeros(self.shape.recurrent.unwrap_or(0))
    }

    fn step(&self, x: &[f64], state: &LstmState) -> (Vec<f64>, LstmState, StepCache) {
        let mut acts = Vec::with_capacity(self.layout.hidden.len() + 1);
        acts.push(x.to_vec());
        for span in &self.layout.hidden {
            let mut out = dense_forward(&self.params, span, acts.last().expect("non-empty"));
            for v in &mut out {
                *v = v.max(0.0);
            }
            acts.push(out);
        }
        let (cell, next) = match &self.layout.cell {
            Some(span) => {
                let units = span.output / 4;
                let mut joint = acts.last().expect("non-empty").clone();
                joint.extend_from_slice(&state.h);
                let pre = dense_forward(&self.params, span, &joint);
                let input: Vec<f64> = pre[..units].iter().map(|&v| sigmoid(v)).collect();
                let forget: Vec<f64> = pre[units..2 * units].iter().map(|&v| sigmoid(v)).collect();
                let candidate: Vec<f64> = pre[2 * units..3 * units].iter().map(|v| v.tanh()).collect();
                let output: Vec<f64> = pre[3 * units..].iter().map(|&v| sigmoid(v)).collect();
                let c: Vec<f64> = (0..units)
                    .map(|k| forget[k] * state.c[k] + input[k] * candidate[k])
                    .collect();
                let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
                let h: Vec<f64> = output.iter().zip(&tanh_c).map(|(o, t)| o * t).collect();
                let next = LstmState { h: h.clone(), c };
                let cache = CellCache {
                    joint,
                    c_prev: state.c.clone(),
                    input,
                    forget,
                    candidate,
                    output,
                    tanh_c,
                    h,
                };
                (Some(cache), next)
            }
            None => (None, state.clone()),
        };
        let step = StepCache { acts, cell };
        let values = dense_forward(&self.params, &self.layout.head, step.head_input());
        (values, next, step)
    }

    /// Action values for one input, starting from the zero LSTM state.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.step(x, &self.initial_state()).0)
    }

    /// Action values for one input and the carried LSTM state after it.
    pub fn forward_recurrent(&self, x: &[f64], state: &LstmState) -> Result<(Vec<f64>, LstmState)> {
        self.check_input(x)?;
        self.check_state(state)?;
        let (values, next, _) = self.step(x, state);
        Ok((values, next))
    }

    /// Runs `inputs` in order, threading the LSTM state from `state`, and
    /// keeps what [`Network::backward`] needs. Feed-forward nets treat each
    /// input independently.
    pub fn forward_sequence(
        &self,
        inputs: &[&[f64]],
        state: &LstmState,
    ) -> Result<(Vec<Vec<f64>>, LstmState, ForwardCache)> {
        self.check_state(state)?;
        let mut carried = state.clone();
        let mut outputs = Vec::with_capacity(inputs.len());
        let mut steps = Vec::with_capacity(inputs.len());
        for x in inputs {
            self.check_input(x)?;
            let (values, next, step) = self.step(x, &carried);
            outputs.push(values);
            steps.push(step);
            carried = next;
        }
        Ok((outputs, carried, ForwardCache { steps }))
    }

    /// Single-input forward pass with its cache.
    pub fn forward_cached(&self, x: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        let (mut outputs, _, cache) = self.forward_sequence(&[x], &self.initial_state())?;
        Ok((outputs.pop().expect("one output"), cache))
    }

    /// Adds the gradient of a loss into `grads`, given the loss gradient
    /// with respect to every output of the cached pass (one vector per
    /// step). Recurrent nets are differentiated through time; the initial
    /// state is treated as a constant.
    pub fn backward(&self, cache: &ForwardCache, output_grads: &[Vec<f64>], grads: &mut [f64]) -> Result<()> {
        if output_grads.len() != cache.steps.len() {
            return Err(Error::ShapeMismatch {
                expected: cache.steps.len(),
                actual: output_grads.len(),
            });
        }
        if grads.len() != self.params.len() {
            return Err(Error::ShapeMismatch {
                expected: self.params.len(),
                actual: grads.len(),
            });
        }
        if let Some(bad) = output_grads.iter().find(|g| g.len() != self.shape.output) {
            return Err(Error::ShapeMismatch {
                expected: self.shape.output,
                actual: bad.len(),
            });
        }
        let units = self.shape.recurrent.unwrap_or(0);
        let mut dh_next = vec![0.0; units];
        let mut dc_next = vec![0.0; units];
        for (step, dout) in cache.steps.iter().zip(output_grads).rev() {
            let head = &self.layout.head;
            let mut dhead = vec![0.0; head.input];
            dense_backward(&self.params, grads, head, step.head_input(), dout, Some(&mut dhead));

            let mut dz = match (&step.cell, &self.layout.cell) {
                (Some(cell), Some(span)) => {
                    let mut delta = vec![0.0; 4 * units];
                    for k in 0..units {
                        let dh = dhead[k] + dh_next[k];
                        let (i, f, g, o) = (cell.input[k], cell.forget[k], cell.candidate[k], cell.output[k]);
                        let t = cell.tanh_c[k];
                        let dc = dh * o * (1.0 - t * t) + dc_next[k];
                        delta[k] = dc * g * i * (1.0 - i);
                        delta[units + k] = dc * cell.c_prev[k] * f * (1.0 - f);
                        delta[2 * units + k] = dc * i * (1.0 - g * g);
                        delta[3 * units + k] = dh * t * o * (1.0 - o);
                        dc_next[k] = dc * f;
                    }
                    let mut djoint = vec![0.0; span.input];
                    dense_backward(&self.params, grads, span, &cell.joint, &delta, Some(&mut djoint));
                    let split = span.input - units;
                    dh_next.copy_from_slice(&djoint[split..]);
                    djoint.truncate(split);
                    djoint
                }
                _ => dhead,
            };

            for (k, span) in self.layout.hidden.iter().enumerate().rev() {
                for (d, a) in dz.iter_mut().zip(&step.acts[k + 1]) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
                if k == 0 {
                    dense_backward(&self.params, grads, span, &step.acts[0], &dz, None);
                    break;
                }
                let mut dx = vec![0.0; span.input];
                dense_backward(&self.params, grads, span, &step.acts[k], &dz, Some(&mut dx));
                dz = dx;
            }
        }
        Ok(())
    }
}

/// Squared TD error `(q[action] - target)^2` and its derivative with
/// respect to `q[action]`.
pub fn squared_td_error(values: &[f64], action: usize, target: f64) -> (f64, f64) {
    let diff = values[action] - target;
    (diff * diff, 2.0 * diff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_input(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
        (0..len).map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 }).collect()
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Network::zeros(NetShape::mlp(6, &[4, 4], 3));
        assert_eq!(net.forward(&[1.0; 6]).unwrap(), vec![0.0; 3]);
        let rnn = Network::zeros(NetShape::recurrent(6, &[4], 5, 3));
        let (values, state) = rnn.forward_recurrent(&[1.0; 6], &rnn.initial_state()).unwrap();
        assert_eq!(values, vec![0.0; 3]);
        // zero pre-activations give c = 0.5 * 0 + 0.5 * tanh(0) = 0
        assert_eq!(state, LstmState::zeros(5));
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mut net = Network::zeros(NetShape::mlp(4, &[], 4));
        for i in 0..4 {
            net.params_mut()[i * 4 + i] = 1.0;
        }
        let x = [0.5, -1.0, 2.0, 0.0];
        assert_eq!(net.forward(&x).unwrap(), x.to_vec());
    }

    #[test]
    fn shape_errors_are_reported() {
        let net = Network::zeros(NetShape::mlp(4, &[3], 2));
        assert!(matches!(
            net.forward(&[0.0; 5]),
            Err(Error::ShapeMismatch { expected: 4, actual: 5 })
        ));
        let rnn = Network::zeros(NetShape::recurrent(4, &[], 3, 2));
        assert!(rnn.forward_recurrent(&[0.0; 4], &LstmState::zeros(2)).is_err());
        assert!(Network::from_params(NetShape::mlp(4, &[3], 2), vec![0.0; 3]).is_err());
    }

    #[test]
    fn param_count_matches_layer_sizes() {
        let shape = NetShape::mlp(150, &[128, 128], 15);
        assert_eq!(shape.param_count(), 150 * 128 + 128 + 128 * 128 + 128 + 128 * 15 + 15);
        let shape = NetShape::recurrent(150, &[128, 128], 128, 15);
        let cell = (128 + 128) * 512 + 512;
        assert_eq!(shape.param_count(), 150 * 128 + 128 + 128 * 128 + 128 + cell + 128 * 15 + 15);
    }

    #[test]
    fn initialization_respects_fan_in_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Network::new(NetShape::mlp(16, &[8], 4), &mut rng);
        let bound = 0.25;
        assert!(net.params()[..128].iter().all(|w| w.abs() <= bound));
        assert!(net.params()[128..136].iter().all(|b| *b == 0.0));
        let bound = 1.0 / 8f64.sqrt();
        assert!(net.params()[136..168].iter().all(|w| w.abs() <= bound));
    }

    #[test]
    fn carried_state_changes_the_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Network::new(NetShape::recurrent(8, &[6], 5, 3), &mut rng);
        let x = random_input(&mut rng, 8);
        let zero = net.initial_state();
        let (first, carried) = net.forward_recurrent(&x, &zero).unwrap();
        let (again, _) = net.forward_recurrent(&x, &zero).unwrap();
        let (second, _) = net.forward_recurrent(&x, &carried).unwrap();
        assert_eq!(first, again);
        assert_ne!(first, second);
        // h = o * tanh(c) stays inside (-1, 1)
        assert!(carried.h.iter().all(|h| h.abs() < 1.0));
    }

    #[test]
    fn zero_output_gradient_gives_zero_parameter_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Network::new(NetShape::recurrent(8, &[6], 5, 3), &mut rng);
        let (a, b) = (random_input(&mut rng, 8), random_input(&mut rng, 8));
        let (_, _, cache) = net.forward_sequence(&[&a, &b], &net.initial_state()).unwrap();
        let mut grads = net.zero_grads();
        net.backward(&cache, &[vec![0.0; 3], vec![0.0; 3]], &mut grads).unwrap();
        assert!(grads.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn one_hot_output_gradient_leaves_other_head_rows_untouched() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Network::new(NetShape::mlp(8, &[6], 3), &mut rng);
        let x = random_input(&mut rng, 8);
        let (_, cache) = net.forward_cached(&x).unwrap();
        let mut grads = net.zero_grads();
        net.backward(&cache, &[vec![0.0, 1.0, 0.0]], &mut grads).unwrap();
        let head = net.layout.head;
        for i in 0..head.input {
            for j in [0, 2] {
                assert_eq!(grads[head.weights + i * head.output + j], 0.0);
            }
        }
        assert_eq!(grads[head.bias], 0.0);
        assert_eq!(grads[head.bias + 1], 1.0);
        assert_eq!(grads[head.bias + 2], 0.0);
    }

    #[test]
    fn backward_rejects_mismatched_gradients() {
        let net = Network::zeros(NetShape::mlp(2, &[2], 2));
        let (_, cache) = net.forward_cached(&[1.0, 0.0]).unwrap();
        let mut grads = net.zero_grads();
        assert!(net.backward(&cache, &[], &mut grads).is_err());
        assert!(net.backward(&cache, &[vec![0.0; 3]], &mut grads).is_err());
        assert!(net.backward(&cache, &[vec![0.0; 2]], &mut [0.0; 1]).is_err());
    }

    #[test]
    fn copied_parameters_give_identical_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let shape = NetShape::mlp(8, &[6, 6], 3);
        let policy = Network::new(shape.clone(), &mut rng);
        let mut target = Network::zeros(shape);
        target.copy_from(&policy).unwrap();
        let x = random_input(&mut rng, 8);
        let (a, b) = (policy.forward(&x).unwrap(), target.forward(&x).unwrap());
        assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
        let other = Network::zeros(NetShape::mlp(8, &[5], 3));
        assert!(target.copy_from(&other).is_err());
    }
}
