//! Stacked vanilla LSTM with a scalar linear head, plus exact BPTT.
//!
//! Cell definition (no peepholes, no layer norm):
//!
//! ```text
//! i = sigmoid(W_i x + U_i h + b_i)        input gate
//! f = sigmoid(W_f x + U_f h + b_f)        forget gate
//! g = tanh   (W_g x + U_g h + b_g)        candidate
//! o = sigmoid(W_o x + U_o h + b_o)        output gate
//! c' = f * c + i * g
//! h' = o * tanh(c')
//! ```
//!
//! The four gate blocks are packed along the first axis of each parameter
//! tensor in the fixed order input, forget, candidate, output. That order is
//! part of the checkpoint format and must never change.
//!
//! Layers are stacked bottom to top; the prediction is `w_out . h_top + b_out`.
//! The network is stateless across sequences: every sequence starts from the
//! zero state.

mod batch;

pub use batch::{backward_batch, forward_batch, BatchLayerStep, BatchStep, BatchTrace};

use crate::numerics::{mat_vec_acc, sigmoid_in_place, tanh_in_place, Matrix, Scalar, SeededRng};

/// Parameters of one LSTM layer. `w_in` is [4H x input], `w_rec` is
/// [4H x H], `bias` is [4H], gate-packed as documented on the module.
#[derive(Clone, Debug)]
pub struct LstmLayerParams<S> {
    pub input_size: usize,
    pub hidden_size: usize,
    pub w_in: Matrix<S>,
    pub w_rec: Matrix<S>,
    pub bias: Vec<S>,
}

impl<S: Scalar> LstmLayerParams<S> {
    /// Seeded uniform init. Weight bounds are `scale / sqrt(fan_in)`; biases
    /// start at zero except the forget gate, which starts at +1 so memory is
    /// initially retained. Only the two matrices consume RNG draws, in the
    /// order w_in then w_rec; changing that order would break seed
    /// reproducibility.
    pub fn init(rng: &mut SeededRng, input_size: usize, hidden_size: usize, scale: f64) -> Self {
        let w_in = Matrix::uniform(rng, 4 * hidden_size, input_size, scale / (input_size as f64).sqrt());
        let w_rec = Matrix::uniform(rng, 4 * hidden_size, hidden_size, scale / (hidden_size as f64).sqrt());
        let mut bias = vec![S::zero(); 4 * hidden_size];
        bias[hidden_size..2 * hidden_size].fill(S::one());
        LstmLayerParams { input_size, hidden_size, w_in, w_rec, bias }
    }

    pub fn from_parts(w_in: Matrix<S>, w_rec: Matrix<S>, bias: Vec<S>) -> crate::Result<Self> {
        let hidden4 = w_in.rows();
        if hidden4 == 0 || hidden4 % 4 != 0 {
            return Err(crate::PlcError::Config(format!(
                "lstm layer first axis must be a positive multiple of 4, got {hidden4}"
            )));
        }
        let hidden_size = hidden4 / 4;
        if w_rec.rows() != hidden4 || w_rec.cols() != hidden_size || bias.len() != hidden4 {
            return Err(crate::PlcError::Config(format!(
                "inconsistent lstm layer shapes: w_in {}x{}, w_rec {}x{}, bias {}",
                w_in.rows(),
                w_in.cols(),
                w_rec.rows(),
                w_rec.cols(),
                bias.len()
            )));
        }
        let input_size = w_in.cols();
        Ok(LstmLayerParams { input_size, hidden_size, w_in, w_rec, bias })
    }
}

/// Hidden and cell state of one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmState<S> {
    pub h: Vec<S>,
    pub c: Vec<S>,
}

impl<S: Scalar> LstmState<S> {
    pub fn zeros(hidden_size: usize) -> Self {
        LstmState { h: vec![S::zero(); hidden_size], c: vec![S::zero(); hidden_size] }
    }
}

/// Post-activation gate values of one step, kept for backprop and testing.
#[derive(Clone, Debug)]
pub struct GateRecord<S> {
    /// [4H], activated: sigmoid(i) | sigmoid(f) | tanh(g) | sigmoid(o).
    pub gates: Vec<S>,
    /// tanh of the new cell state, [H].
    pub tanh_c: Vec<S>,
}

/// One LSTM cell step. Used directly by the autoregressive rollout, where
/// sequences are generated sample by sample.
pub fn layer_step<S: Scalar>(
    params: &LstmLayerParams<S>,
    state: &LstmState<S>,
    x: &[S],
) -> (LstmState<S>, GateRecord<S>) {
    assert_eq!(x.len(), params.input_size, "layer_step: input length");
    assert_eq!(state.h.len(), params.hidden_size, "layer_step: state length");
    let hs = params.hidden_size;

    // Accumulation order (bias, then W x, then U h) matches the batched
    // path so both agree bitwise in f64.
    let mut pre = params.bias.clone();
    mat_vec_acc(&mut pre, &params.w_in, x);
    mat_vec_acc(&mut pre, &params.w_rec, &state.h);
    sigmoid_in_place(&mut pre[..hs]);
    sigmoid_in_place(&mut pre[hs..2 * hs]);
    tanh_in_place(&mut pre[2 * hs..3 * hs]);
    sigmoid_in_place(&mut pre[3 * hs..]);

    let mut c = vec![S::zero(); hs];
    let mut tanh_c = vec![S::zero(); hs];
    let mut h = vec![S::zero(); hs];
    for u in 0..hs {
        c[u] = pre[hs + u] * state.c[u] + pre[u] * pre[2 * hs + u];
        tanh_c[u] = c[u].tanh_elem();
        h[u] = pre[3 * hs + u] * tanh_c[u];
    }
    (LstmState { h, c }, GateRecord { gates: pre, tanh_c })
}

/// Full network: LSTM stack plus linear head.
#[derive(Clone, Debug)]
pub struct NetworkParams<S> {
    pub layers: Vec<LstmLayerParams<S>>,
    /// Head weights over the top layer's hidden state, [H].
    pub w_out: Vec<S>,
    pub b_out: S,
}

impl<S: Scalar> NetworkParams<S> {
    /// Seeded init of the whole stack. Layer 0 reads the input window;
    /// higher layers read the hidden state below. Draw order: each layer in
    /// order, then the head.
    pub fn init(window_len: usize, hidden: usize, num_layers: usize, scale: f64, rng: &mut SeededRng) -> Self {
        assert!(window_len > 0 && hidden > 0 && num_layers > 0, "network dimensions must be positive");
        let mut layers = Vec::with_capacity(num_layers);
        for l in 0..num_layers {
            let input = if l == 0 { window_len } else { hidden };
            layers.push(LstmLayerParams::init(rng, input, hidden, scale));
        }
        let head_bound = scale / (hidden as f64).sqrt();
        let w_out = (0..hidden).map(|_| S::from_f64(rng.uniform(-head_bound, head_bound))).collect();
        NetworkParams { layers, w_out, b_out: S::zero() }
    }

    pub fn from_parts(layers: Vec<LstmLayerParams<S>>, w_out: Vec<S>, b_out: S) -> crate::Result<Self> {
        if layers.is_empty() {
            return Err(crate::PlcError::Config("network needs at least one layer".into()));
        }
        let hidden = layers[0].hidden_size;
        for (l, layer) in layers.iter().enumerate() {
            let expect_in = if l == 0 { layer.input_size } else { hidden };
            if layer.hidden_size != hidden || layer.input_size != expect_in {
                return Err(crate::PlcError::Config(format!(
                    "layer {l} has shape {}x{}, expected input {expect_in}, hidden {hidden}",
                    layer.input_size, layer.hidden_size
                )));
            }
        }
        if w_out.len() != hidden {
            return Err(crate::PlcError::Config(format!(
                "head length {} does not match hidden size {hidden}",
                w_out.len()
            )));
        }
        Ok(NetworkParams { layers, w_out, b_out })
    }

    pub fn window_len(&self) -> usize {
        self.layers[0].input_size
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].hidden_size
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Fresh all-zero state for every layer; sequences are stateless.
    pub fn zero_state(&self) -> Vec<LstmState<S>> {
        self.layers.iter().map(|l| LstmState::zeros(l.hidden_size)).collect()
    }

    pub fn param_count(&self) -> usize {
        let mut n = self.w_out.len() + 1;
        for l in &self.layers {
            n += l.w_in.data().len() + l.w_rec.data().len() + l.bias.len();
        }
        n
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.w_in.all_finite() && l.w_rec.all_finite() && l.bias.iter().all(|x| x.is_finite())
        }) && self.w_out.iter().all(|x| x.is_finite())
            && self.b_out.is_finite()
    }

    /// All parameters as one flat vector: per layer w_in, w_rec, bias; then
    /// the head. Finite-difference checks and tests rely on this order
    /// matching [`Gradients::flatten`].
    pub fn flatten(&self) -> Vec<S> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(l.w_in.data());
            out.extend_from_slice(l.w_rec.data());
            out.extend_from_slice(&l.bias);
        }
        out.extend_from_slice(&self.w_out);
        out.push(self.b_out);
        out
    }

    /// Inverse of [`NetworkParams::flatten`]. Panics if the length differs.
    pub fn load_flat(&mut self, flat: &[S]) {
        assert_eq!(flat.len(), self.param_count(), "load_flat: length mismatch");
        let mut pos = 0;
        let mut take = |n: usize| {
            let s = &flat[pos..pos + n];
            pos += n;
            s
        };
        for l in &mut self.layers {
            let n = l.w_in.data().len();
            l.w_in.data_mut().copy_from_slice(take(n));
            let n = l.w_rec.data().len();
            l.w_rec.data_mut().copy_from_slice(take(n));
            let n = l.bias.len();
            l.bias.copy_from_slice(take(n));
        }
        let n = self.w_out.len();
        self.w_out.copy_from_slice(take(n));
        self.b_out = take(1)[0];
    }
}

/// Gradients with the same shape as [`NetworkParams`].
#[derive(Clone, Debug)]
pub struct Gradients<S> {
    pub layers: Vec<LayerGradients<S>>,
    pub w_out: Vec<S>,
    pub b_out: S,
}

#[derive(Clone, Debug)]
pub struct LayerGradients<S> {
    pub w_in: Matrix<S>,
    pub w_rec: Matrix<S>,
    pub bias: Vec<S>,
}

impl<S: Scalar> Gradients<S> {
    pub fn zeros_like(net: &NetworkParams<S>) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGradients {
                    w_in: Matrix::zeros(l.w_in.rows(), l.w_in.cols()),
                    w_rec: Matrix::zeros(l.w_rec.rows(), l.w_rec.cols()),
                    bias: vec![S::zero(); l.bias.len()],
                })
                .collect(),
            w_out: vec![S::zero(); net.w_out.len()],
            b_out: S::zero(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.w_in.all_finite() && l.w_rec.all_finite() && l.bias.iter().all(|x| x.is_finite())
        }) && self.w_out.iter().all(|x| x.is_finite())
            && self.b_out.is_finite()
    }

    /// Squared L2 norm over every entry, accumulated in f64 so the clipping
    /// decision does not depend on the working precision.
    pub fn sq_norm(&self) -> f64 {
        let mut acc = 0.0;
        let mut add = |xs: &[S]| {
            for &x in xs {
                let v = x.to_f64_lossy();
                acc += v * v;
            }
        };
        for l in &self.layers {
            add(l.w_in.data());
            add(l.w_rec.data());
            add(&l.bias);
        }
        add(&self.w_out);
        let b = self.b_out.to_f64_lossy();
        acc + b * b
    }

    pub fn scale(&mut self, factor: S) {
        for l in &mut self.layers {
            l.w_in.scale(factor);
            l.w_rec.scale(factor);
            for x in &mut l.bias {
                *x = *x * factor;
            }
        }
        for x in &mut self.w_out {
            *x = *x * factor;
        }
        self.b_out = self.b_out * factor;
    }

    /// Same ordering as [`NetworkParams::flatten`].
    pub fn flatten(&self) -> Vec<S> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.w_in.data());
            out.extend_from_slice(l.w_rec.data());
            out.extend_from_slice(&l.bias);
        }
        out.extend_from_slice(&self.w_out);
        out.push(self.b_out);
        out
    }
}

/// Saved activations of one forward pass over one sequence, everything
/// backprop needs.
#[derive(Clone, Debug)]
pub struct ForwardTrace<S> {
    pub(crate) inputs: Vec<Matrix<S>>,
    pub(crate) steps: BatchTrace<S>,
}

impl<S: Scalar> ForwardTrace<S> {
    pub fn num_steps(&self) -> usize {
        self.steps.steps.len()
    }

    pub fn predictions(&self) -> Vec<S> {
        self.steps.steps.iter().map(|s| s.predictions[0]).collect()
    }
}

/// Runs one sequence of input windows from the zero state. Returns the
/// per-step predictions and the trace for [`bptt_backward`].
pub fn network_forward<S: Scalar>(net: &NetworkParams<S>, windows: &[Vec<S>]) -> (Vec<S>, ForwardTrace<S>) {
    assert!(!windows.is_empty(), "network_forward: empty sequence");
    let inputs: Vec<Matrix<S>> = windows
        .iter()
        .map(|w| {
            assert_eq!(w.len(), net.window_len(), "network_forward: window length");
            Matrix::from_vec(1, w.len(), w.clone())
        })
        .collect();
    let steps = forward_batch(net, &inputs);
    let predictions = steps.steps.iter().map(|s| s.predictions[0]).collect();
    (predictions, ForwardTrace { inputs, steps })
}

/// Exact BPTT through one traced sequence under masked MSE: loss is the mean
/// of squared errors over unmasked steps (`Some` targets). Returns the
/// gradients and the loss. An all-masked target vector yields zero gradients
/// and zero loss.
pub fn bptt_backward<S: Scalar>(
    net: &NetworkParams<S>,
    trace: &ForwardTrace<S>,
    targets: &[Option<S>],
) -> (Gradients<S>, S) {
    assert_eq!(targets.len(), trace.num_steps(), "bptt_backward: target length");
    let targets_batch = vec![targets.to_vec()];
    backward_batch(net, &trace.inputs, &trace.steps, &targets_batch)
}
