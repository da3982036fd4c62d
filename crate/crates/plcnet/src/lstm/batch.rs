//! Lockstep processing of a batch of sequences.
//!
//! Online training runs N sequences of T steps per frame, all the same
//! length, all starting from the zero state. Processing them in lockstep
//! turns every per-step product into a matrix-matrix product over the whole
//! batch, which is where the SIMD kernel earns its keep. The single-sequence
//! API in the parent module wraps this with batch size one.

use super::{Gradients, NetworkParams};
use crate::numerics::{dot, gemm_acc, sigmoid_in_place, tanh_in_place, Matrix, Scalar};

/// Activations of one layer at one step, batch rows stacked.
#[derive(Clone, Debug)]
pub struct BatchLayerStep<S> {
    /// [B x 4H] activated gates: sigmoid(i) | sigmoid(f) | tanh(g) | sigmoid(o).
    pub gates: Matrix<S>,
    /// [B x H] new cell state.
    pub c: Matrix<S>,
    /// [B x H] tanh of the new cell state.
    pub tanh_c: Matrix<S>,
    /// [B x H] new hidden state.
    pub h: Matrix<S>,
}

/// All layers at one step plus the head outputs.
#[derive(Clone, Debug)]
pub struct BatchStep<S> {
    pub layers: Vec<BatchLayerStep<S>>,
    /// [B] linear head over the top layer.
    pub predictions: Vec<S>,
}

/// Forward activations of a whole batched sequence run.
#[derive(Clone, Debug)]
pub struct BatchTrace<S> {
    pub batch: usize,
    pub steps: Vec<BatchStep<S>>,
}

/// [B x 4H] matrix with every row equal to the bias vector.
fn bias_rows<S: Scalar>(batch: usize, bias: &[S]) -> Matrix<S> {
    let mut m = Matrix::zeros(batch, bias.len());
    for r in 0..batch {
        m.row_mut(r).copy_from_slice(bias);
    }
    m
}

/// Runs `inputs[t]` ([B x window]) for t = 0..T through the stack from the
/// zero state, keeping every activation.
pub fn forward_batch<S: Scalar>(net: &NetworkParams<S>, inputs: &[Matrix<S>]) -> BatchTrace<S> {
    assert!(!inputs.is_empty(), "forward_batch: empty sequence");
    let batch = inputs[0].rows();
    let window = net.window_len();
    for (t, m) in inputs.iter().enumerate() {
        assert_eq!(m.rows(), batch, "forward_batch: step {t} batch size");
        assert_eq!(m.cols(), window, "forward_batch: step {t} window length");
    }
    let hs = net.hidden();
    let num_layers = net.num_layers();

    // Weights transposed once so the per-step products are [B x in] * [in x 4H].
    let transposed: Vec<(Matrix<S>, Matrix<S>)> =
        net.layers.iter().map(|l| (l.w_in.transposed(), l.w_rec.transposed())).collect();
    let zeros = Matrix::<S>::zeros(batch, hs);

    let mut trace = BatchTrace { batch, steps: Vec::with_capacity(inputs.len()) };
    for x in inputs {
        let mut step_layers: Vec<BatchLayerStep<S>> = Vec::with_capacity(num_layers);
        for l in 0..num_layers {
            let (h_prev, c_prev) = match trace.steps.last() {
                Some(prev) => (&prev.layers[l].h, &prev.layers[l].c),
                None => (&zeros, &zeros),
            };
            let mut pre = bias_rows(batch, &net.layers[l].bias);
            {
                let x_cur: &Matrix<S> = if l == 0 { x } else { &step_layers[l - 1].h };
                gemm_acc(&mut pre, x_cur, false, &transposed[l].0);
            }
            gemm_acc(&mut pre, h_prev, false, &transposed[l].1);

            let mut c = Matrix::zeros(batch, hs);
            let mut tanh_c = Matrix::zeros(batch, hs);
            let mut h = Matrix::zeros(batch, hs);
            for r in 0..batch {
                let row = pre.row_mut(r);
                sigmoid_in_place(&mut row[..hs]);
                sigmoid_in_place(&mut row[hs..2 * hs]);
                tanh_in_place(&mut row[2 * hs..3 * hs]);
                sigmoid_in_place(&mut row[3 * hs..]);
                let cp = c_prev.row(r);
                let c_row = c.row_mut(r);
                for u in 0..hs {
                    c_row[u] = row[hs + u] * cp[u] + row[u] * row[2 * hs + u];
                }
                let tc_row = tanh_c.row_mut(r);
                for u in 0..hs {
                    tc_row[u] = c_row[u].tanh_elem();
                }
                let h_row = h.row_mut(r);
                for u in 0..hs {
                    h_row[u] = row[3 * hs + u] * tc_row[u];
                }
            }
            step_layers.push(BatchLayerStep { gates: pre, c, tanh_c, h });
        }
        let top = &step_layers[num_layers - 1].h;
        let predictions =
            (0..batch).map(|r| dot(&net.w_out, top.row(r)) + net.b_out).collect();
        trace.steps.push(BatchStep { layers: step_layers, predictions });
    }
    trace
}

/// Backward pass over a batched trace under masked MSE.
///
/// `targets[n][t]` supervises sequence n at step t; `None` is masked out.
/// Per sequence the loss is the mean of squared errors over its unmasked
/// steps; the returned loss and gradients are means over the batch, so a
/// batch of one reproduces the single-sequence definition exactly.
pub fn backward_batch<S: Scalar>(
    net: &NetworkParams<S>,
    inputs: &[Matrix<S>],
    trace: &BatchTrace<S>,
    targets: &[Vec<Option<S>>],
) -> (Gradients<S>, S) {
    let batch = trace.batch;
    let t_steps = trace.steps.len();
    let num_layers = net.num_layers();
    let hs = net.hidden();
    assert_eq!(inputs.len(), t_steps, "backward_batch: inputs/trace length");
    assert_eq!(targets.len(), batch, "backward_batch: one target row per sequence");
    for (n, row) in targets.iter().enumerate() {
        assert_eq!(row.len(), t_steps, "backward_batch: target row {n} length");
    }

    let counts: Vec<usize> =
        targets.iter().map(|row| row.iter().filter(|t| t.is_some()).count()).collect();
    // Loss term weight per unmasked step of sequence n, folded into the
    // output error so downstream gradients need no further scaling.
    let weights: Vec<S> = counts
        .iter()
        .map(|&k| if k == 0 { S::zero() } else { S::from_f64(1.0 / (k as f64 * batch as f64)) })
        .collect();

    let mut grads = Gradients::zeros_like(net);
    let zeros = Matrix::<S>::zeros(batch, hs);
    let mut dh_carry: Vec<Matrix<S>> = vec![Matrix::zeros(batch, hs); num_layers];
    let mut dc_carry: Vec<Matrix<S>> = vec![Matrix::zeros(batch, hs); num_layers];
    let mut dpre = Matrix::<S>::zeros(batch, 4 * hs);
    let mut dx = Matrix::<S>::zeros(batch, hs);
    let mut loss_acc = 0.0f64;
    let two = S::from_f64(2.0);

    for t in (0..t_steps).rev() {
        let step = &trace.steps[t];
        let prev = if t > 0 { Some(&trace.steps[t - 1]) } else { None };

        // Head: route prediction errors into the top layer's dh.
        let top = num_layers - 1;
        let top_h = &step.layers[top].h;
        for n in 0..batch {
            if let Some(y) = targets[n][t] {
                let e = step.predictions[n] - y;
                let ef = e.to_f64_lossy();
                loss_acc += ef * ef / (counts[n] as f64 * batch as f64);
                let dp = two * weights[n] * e;
                grads.b_out = grads.b_out + dp;
                let h_row = top_h.row(n);
                for (gw, &hv) in grads.w_out.iter_mut().zip(h_row) {
                    *gw = *gw + dp * hv;
                }
                let dh_row = dh_carry[top].row_mut(n);
                for (dh, &wv) in dh_row.iter_mut().zip(&net.w_out) {
                    *dh = *dh + dp * wv;
                }
            }
        }

        for l in (0..num_layers).rev() {
            let lt = &step.layers[l];
            let layer = &net.layers[l];
            let c_prev = prev.map(|p| &p.layers[l].c).unwrap_or(&zeros);

            // dh_carry[l] now holds the recurrent term from step t+1 plus
            // anything routed down from the head or the layer above at this
            // step. Turn it into gate preactivation gradients.
            for r in 0..batch {
                let g = lt.gates.row(r);
                let tc = lt.tanh_c.row(r);
                let dh = dh_carry[l].row(r);
                let cp = c_prev.row(r);
                let dpre_row = dpre.row_mut(r);
                let dcc_row = dc_carry[l].row_mut(r);
                for u in 0..hs {
                    let i_g = g[u];
                    let f_g = g[hs + u];
                    let g_g = g[2 * hs + u];
                    let o_g = g[3 * hs + u];
                    let dc = dh[u] * o_g * (S::one() - tc[u] * tc[u]) + dcc_row[u];
                    dpre_row[u] = dc * g_g * i_g * (S::one() - i_g);
                    dpre_row[hs + u] = dc * cp[u] * f_g * (S::one() - f_g);
                    dpre_row[2 * hs + u] = dc * i_g * (S::one() - g_g * g_g);
                    dpre_row[3 * hs + u] = dh[u] * tc[u] * o_g * (S::one() - o_g);
                    dcc_row[u] = dc * f_g;
                }
            }

            // Parameter gradients: dW += dpre^T x, dU += dpre^T h_prev,
            // db += column sums of dpre.
            {
                let x_cur: &Matrix<S> = if l == 0 { &inputs[t] } else { &step.layers[l - 1].h };
                gemm_acc(&mut grads.layers[l].w_in, &dpre, true, x_cur);
            }
            let h_prev = prev.map(|p| &p.layers[l].h).unwrap_or(&zeros);
            gemm_acc(&mut grads.layers[l].w_rec, &dpre, true, h_prev);
            for r in 0..batch {
                for (gb, &dp) in grads.layers[l].bias.iter_mut().zip(dpre.row(r)) {
                    *gb = *gb + dp;
                }
            }

            // Recurrent gradient for step t-1 of this layer.
            dh_carry[l].fill(S::zero());
            gemm_acc(&mut dh_carry[l], &dpre, false, &layer.w_rec);

            // Input gradient feeds the layer below at this same step.
            if l > 0 {
                dx.fill(S::zero());
                gemm_acc(&mut dx, &dpre, false, &layer.w_in);
                dh_carry[l - 1].add_assign(&dx);
            }
        }
    }

    (grads, S::from_f64(loss_acc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;

    fn net(seed: u64, window: usize, hidden: usize, layers: usize) -> NetworkParams<f64> {
        let mut rng = SeededRng::new(seed);
        NetworkParams::init(window, hidden, layers, 1.0, &mut rng)
    }

    fn random_inputs(rng: &mut SeededRng, batch: usize, window: usize, t_steps: usize) -> Vec<Matrix<f64>> {
        (0..t_steps)
            .map(|_| {
                let data = (0..batch * window).map(|_| rng.uniform(-1.0, 1.0)).collect();
                Matrix::from_vec(batch, window, data)
            })
            .collect()
    }

    #[test]
    fn batched_gradients_are_mean_of_per_sequence_gradients() {
        let net = net(31, 4, 5, 2);
        let mut rng = SeededRng::new(99);
        let batch = 5;
        let t_steps = 6;
        let inputs = random_inputs(&mut rng, batch, 4, t_steps);
        let targets: Vec<Vec<Option<f64>>> = (0..batch)
            .map(|_| {
                let mut row = vec![None; t_steps];
                row[t_steps - 1] = Some(rng.uniform(-1.0, 1.0));
                row
            })
            .collect();

        let trace = forward_batch(&net, &inputs);
        let (batched, batched_loss) = backward_batch(&net, &inputs, &trace, &targets);

        let mut mean = vec![0.0; net.param_count()];
        let mut mean_loss = 0.0;
        for n in 0..batch {
            let windows: Vec<Vec<f64>> = inputs.iter().map(|m| m.row(n).to_vec()).collect();
            let (_, trace1) = crate::lstm::network_forward(&net, &windows);
            let (g, loss) = crate::lstm::bptt_backward(&net, &trace1, &targets[n]);
            for (acc, v) in mean.iter_mut().zip(g.flatten()) {
                *acc += v / batch as f64;
            }
            mean_loss += loss / batch as f64;
        }

        assert!((batched_loss - mean_loss).abs() < 1e-12);
        for (idx, (&b, &m)) in batched.flatten().iter().zip(&mean).enumerate() {
            assert!((b - m).abs() < 1e-12, "param {idx}: batched {b} vs mean {m}");
        }
    }

    #[test]
    fn masked_rows_do_not_contribute() {
        let net = net(41, 3, 4, 1);
        let mut rng = SeededRng::new(7);
        let t_steps = 4;
        let inputs = random_inputs(&mut rng, 2, 3, t_steps);
        // Sequence 0 supervised, sequence 1 fully masked.
        let y = rng.uniform(-1.0, 1.0);
        let targets = vec![
            {
                let mut row = vec![None; t_steps];
                row[t_steps - 1] = Some(y);
                row
            },
            vec![None; t_steps],
        ];
        let trace = forward_batch(&net, &inputs);
        let (grads, loss) = backward_batch(&net, &inputs, &trace, &targets);

        // The same thing computed from sequence 0 alone, halved (mean over
        // a batch of two).
        let windows: Vec<Vec<f64>> = inputs.iter().map(|m| m.row(0).to_vec()).collect();
        let (_, trace1) = crate::lstm::network_forward(&net, &windows);
        let mut row = vec![None; t_steps];
        row[t_steps - 1] = Some(y);
        let (g1, loss1) = crate::lstm::bptt_backward(&net, &trace1, &row);

        assert!((loss - loss1 / 2.0).abs() < 1e-15);
        for (&b, &s) in grads.flatten().iter().zip(&g1.flatten()) {
            assert!((b - s / 2.0).abs() < 1e-13);
        }
    }
}
