//! The sample predictor: batch construction, online training, rollout.
//!
//! The model always sees the signal through a sliding window of the last L
//! samples. One *sequence* is T consecutive window positions; the network
//! runs them from the zero state and the prediction after the final window
//! is the next-sample estimate.
//!
//! For a frame of N samples starting at absolute index n0, the training
//! batch holds one sequence per sample. The sequence for target n ends with
//! the window [n-L, n-1]; earlier steps slide that window back one sample at
//! a time, so step t of T covers [n-L-T+t, n-T+t-1]. Under the default
//! supervision only the final step carries a target (the sample the window
//! stops short of); `AllSteps` supervises every step with the sample right
//! after its window.
//!
//! Indices before the start of the signal read as zero, so the first frames
//! of a stream train on zero-padded context rather than being skipped.

use serde::{Deserialize, Serialize};

use crate::adam::{adam_step, AdamConfig, AdamState, StepOutcome};
use crate::lstm::{backward_batch, forward_batch, layer_step, LstmState, NetworkParams};
use crate::numerics::{dot, mix_seed, Matrix, Scalar, SeededRng};
use crate::{PlcError, Result};

/// Which sequence steps carry training targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Supervision {
    /// Only the final window of each sequence is supervised.
    #[default]
    FinalStep,
    /// Every window predicts its next sample.
    AllSteps,
}

/// How the LSTM state is obtained when concealing consecutive lost frames.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RolloutMode {
    /// Keep the state from the previous lost frame and continue the rollout.
    #[default]
    Carried,
    /// Rebuild the state with a fresh warm-up for every lost frame.
    Fresh,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorConfig {
    /// N: samples per frame (80 at 8 kHz / 10 ms).
    pub frame_len: usize,
    /// L: input window length in samples.
    pub window_len: usize,
    /// T: window positions per training sequence.
    pub time_steps: usize,
    /// H: hidden units per LSTM layer.
    pub hidden: usize,
    pub num_layers: usize,
    /// P: online training passes per received frame.
    pub passes: usize,
    pub adam: AdamConfig,
    /// Weight init bound is init_bound / sqrt(fan_in).
    pub init_bound: f64,
    pub seed: u64,
    pub supervision: Supervision,
    pub rollout: RolloutMode,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig {
            frame_len: 80,
            window_len: 80,
            time_steps: 160,
            hidden: 80,
            num_layers: 1,
            passes: 20,
            adam: AdamConfig::default(),
            init_bound: 1.0,
            seed: 1,
            supervision: Supervision::FinalStep,
            rollout: RolloutMode::Carried,
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("frame_len", self.frame_len),
            ("window_len", self.window_len),
            ("time_steps", self.time_steps),
            ("hidden", self.hidden),
            ("num_layers", self.num_layers),
        ] {
            if v == 0 {
                return Err(PlcError::Config(format!("{name} must be at least 1")));
            }
        }
        if !(self.init_bound.is_finite() && self.init_bound > 0.0) {
            return Err(PlcError::Config(format!("init_bound must be positive, got {}", self.init_bound)));
        }
        self.adam.validate()
    }

    /// Seeded network for this geometry.
    pub fn build_network<S: Scalar>(&self) -> Result<NetworkParams<S>> {
        self.validate()?;
        let mut rng = SeededRng::new(self.seed);
        Ok(NetworkParams::init(self.window_len, self.hidden, self.num_layers, self.init_bound, &mut rng))
    }

    /// History depth needed by batch construction and rollout warm-up: the
    /// deepest read is L + T - 1 samples back.
    pub fn history_capacity(&self) -> usize {
        self.window_len + self.time_steps
    }

    /// True if `net` was built for this geometry.
    pub fn matches_network<S: Scalar>(&self, net: &NetworkParams<S>) -> bool {
        net.window_len() == self.window_len
            && net.hidden() == self.hidden
            && net.num_layers() == self.num_layers
    }
}

/// Ring buffer over the most recent samples of a stream, addressed by
/// absolute sample index. Reads before index 0 (or older than the capacity)
/// return zero.
#[derive(Clone, Debug)]
pub struct SampleHistory<S> {
    buf: Vec<S>,
    next_abs: i64,
}

impl<S: Scalar> SampleHistory<S> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "history capacity must be positive");
        SampleHistory { buf: vec![S::zero(); capacity], next_abs: 0 }
    }

    pub fn for_config(cfg: &PredictorConfig) -> Self {
        SampleHistory::new(cfg.history_capacity())
    }

    /// Absolute index the next pushed sample will get.
    pub fn next_index(&self) -> i64 {
        self.next_abs
    }

    pub fn capacity(&self) -> usize {
        self.buf.len()
    }

    pub fn push_frame(&mut self, samples: &[S]) {
        let cap = self.buf.len() as i64;
        for &s in samples {
            self.buf[(self.next_abs % cap) as usize] = s;
            self.next_abs += 1;
        }
    }

    /// Sample at absolute index `idx`. Indices before the signal start are
    /// zero by definition; reads of evicted or future samples are caller
    /// bugs and only checked in debug builds.
    pub fn get(&self, idx: i64) -> S {
        if idx < 0 {
            return S::zero();
        }
        debug_assert!(idx < self.next_abs, "history read of a sample not yet pushed ({idx})");
        debug_assert!(
            idx >= self.next_abs - self.buf.len() as i64,
            "history read past capacity ({idx}, next {})",
            self.next_abs
        );
        self.buf[(idx % self.buf.len() as i64) as usize]
    }
}

/// Lockstep training batch for one frame: `inputs[t]` stacks the t-th
/// window of all N sequences, `targets[n][t]` is the supervision mask.
#[derive(Clone, Debug)]
pub struct TrainingBatch<S> {
    pub inputs: Vec<Matrix<S>>,
    pub targets: Vec<Vec<Option<S>>>,
}

impl<S: Scalar> TrainingBatch<S> {
    pub fn num_sequences(&self) -> usize {
        self.targets.len()
    }

    pub fn num_steps(&self) -> usize {
        self.inputs.len()
    }

    /// Window of sequence `seq` at step `t` (0-based).
    pub fn window(&self, seq: usize, t: usize) -> &[S] {
        self.inputs[t].row(seq)
    }
}

/// Builds the training batch for the frame starting at the history's next
/// index. `frame` must hold exactly N samples; samples at or after the frame
/// start are read from it, earlier ones from the history.
pub fn build_batch<S: Scalar>(
    history: &SampleHistory<S>,
    frame: &[S],
    cfg: &PredictorConfig,
) -> TrainingBatch<S> {
    let n_seq = cfg.frame_len;
    let l = cfg.window_len as i64;
    let t_steps = cfg.time_steps as i64;
    assert_eq!(frame.len(), n_seq, "build_batch: frame must hold frame_len samples");
    let n0 = history.next_index();

    let sample_at = |idx: i64| -> S {
        if idx >= n0 {
            frame[(idx - n0) as usize]
        } else {
            history.get(idx)
        }
    };

    let mut inputs = Vec::with_capacity(t_steps as usize);
    for t in 1..=t_steps {
        let mut m = Matrix::zeros(n_seq, l as usize);
        for j in 0..n_seq {
            let n = n0 + j as i64;
            let start = n - l - t_steps + t;
            let row = m.row_mut(j);
            for (u, slot) in row.iter_mut().enumerate() {
                *slot = sample_at(start + u as i64);
            }
        }
        inputs.push(m);
    }

    let targets = (0..n_seq)
        .map(|j| {
            let n = n0 + j as i64;
            (1..=t_steps)
                .map(|t| match cfg.supervision {
                    Supervision::FinalStep if t == t_steps => Some(frame[j]),
                    Supervision::FinalStep => None,
                    Supervision::AllSteps => Some(sample_at(n - t_steps + t)),
                })
                .collect()
        })
        .collect();

    TrainingBatch { inputs, targets }
}

/// What happened during the training passes on one frame.
#[derive(Clone, Debug, Default)]
pub struct TrainOutcome {
    /// Masked-MSE loss measured at the start of each completed pass.
    pub pass_losses: Vec<f64>,
    /// A pass produced a non-finite loss; remaining passes were abandoned
    /// and the parameters kept their last finite values.
    pub aborted_nonfinite: bool,
    /// Updates skipped because the gradient contained NaN or infinity.
    pub skipped_updates: usize,
}

/// Runs `cfg.passes` train passes on one batch. Each pass recomputes the
/// forward traces, averages gradients over all sequences, and applies one
/// Adam step. With zero passes this is a no-op.
pub fn train_on_frame<S: Scalar>(
    net: &mut NetworkParams<S>,
    opt: &mut AdamState<S>,
    batch: &TrainingBatch<S>,
    cfg: &PredictorConfig,
) -> TrainOutcome {
    train_passes(net, opt, batch, &cfg.adam, cfg.passes)
}

pub(crate) fn train_passes<S: Scalar>(
    net: &mut NetworkParams<S>,
    opt: &mut AdamState<S>,
    batch: &TrainingBatch<S>,
    adam: &AdamConfig,
    passes: usize,
) -> TrainOutcome {
    let mut outcome = TrainOutcome::default();
    for _ in 0..passes {
        let trace = forward_batch(net, &batch.inputs);
        let (grads, loss) = backward_batch(net, &batch.inputs, &trace, &batch.targets);
        let loss = loss.to_f64_lossy();
        if !loss.is_finite() {
            outcome.aborted_nonfinite = true;
            break;
        }
        outcome.pass_losses.push(loss);
        if adam_step(net, &grads, opt, adam) == StepOutcome::SkippedNonFinite {
            outcome.skipped_updates += 1;
        }
    }
    outcome
}

/// LSTM stack state carried across consecutive lost frames so the rollout
/// continues instead of restarting.
#[derive(Clone, Debug)]
pub struct RolloutState<S> {
    pub layer_states: Vec<LstmState<S>>,
}

fn step_stack<S: Scalar>(net: &NetworkParams<S>, states: &mut [LstmState<S>], window: &[S]) -> S {
    let mut x: Vec<S> = window.to_vec();
    for (layer, state) in net.layers.iter().zip(states.iter_mut()) {
        let (next, _) = layer_step(layer, state, &x);
        x = next.h.clone();
        *state = next;
    }
    dot(&net.w_out, &x) + net.b_out
}

/// Synthesizes one lost frame.
///
/// Without a carried state the stack is warmed up with the T-1 true-history
/// windows leading up to the frame, exactly like the non-final steps of a
/// training sequence. Each rollout step then reads the window ending one
/// sample before the next prediction; predicted samples are clamped to
/// [-1, 1] and fed back through the window. Returns the frame and the state
/// after its last sample, which seeds the next call when the following frame
/// is also lost and the mode is [`RolloutMode::Carried`].
pub fn predict_frame<S: Scalar>(
    net: &NetworkParams<S>,
    history: &SampleHistory<S>,
    cfg: &PredictorConfig,
    carried: Option<RolloutState<S>>,
) -> (Vec<S>, RolloutState<S>) {
    let l = cfg.window_len as i64;
    let t_steps = cfg.time_steps as i64;
    let n0 = history.next_index();
    let one = S::one();

    let mut predicted: Vec<S> = Vec::with_capacity(cfg.frame_len);
    let sample_at = |predicted: &[S], idx: i64| -> S {
        if idx >= n0 {
            predicted[(idx - n0) as usize]
        } else {
            history.get(idx)
        }
    };
    let mut window_buf = vec![S::zero(); l as usize];

    let mut states = match (cfg.rollout, carried) {
        (RolloutMode::Carried, Some(s)) => {
            assert_eq!(s.layer_states.len(), net.num_layers(), "carried state layer count");
            s.layer_states
        }
        _ => {
            let mut states = net.zero_state();
            for t in 1..t_steps {
                let start = n0 - l - t_steps + t;
                for (u, slot) in window_buf.iter_mut().enumerate() {
                    *slot = history.get(start + u as i64);
                }
                step_stack(net, &mut states, &window_buf);
            }
            states
        }
    };

    for j in 0..cfg.frame_len as i64 {
        let start = n0 + j - l;
        for (u, slot) in window_buf.iter_mut().enumerate() {
            *slot = sample_at(&predicted, start + u as i64);
        }
        let y = step_stack(net, &mut states, &window_buf);
        predicted.push(y.max(-one).min(one));
    }

    (predicted, RolloutState { layer_states: states })
}

/// Per-stream outcome of a pretraining epoch.
#[derive(Clone, Debug)]
pub struct PretrainReport {
    /// Mean frame loss per input stream, in the original stream order.
    /// `None` for streams shorter than one frame.
    pub stream_losses: Vec<Option<f64>>,
    pub frames_trained: usize,
    pub updates_skipped: usize,
}

/// One offline epoch: every stream, frame by frame, one training pass and
/// one Adam step per frame, with gradient clipping disabled (the clip
/// threshold guards online adaptation only). Stream order is shuffled
/// deterministically from the config seed. Trailing samples that do not
/// fill a frame are ignored.
pub fn pretrain<S: Scalar>(
    net: &mut NetworkParams<S>,
    opt: &mut AdamState<S>,
    streams: &[Vec<S>],
    cfg: &PredictorConfig,
) -> PretrainReport {
    const PRETRAIN_SALT: u64 = 0x505245545241494E; // "PRETRAIN"
    let mut order: Vec<usize> = (0..streams.len()).collect();
    SeededRng::new(mix_seed(cfg.seed, PRETRAIN_SALT)).shuffle(&mut order);

    // Gradient clipping is an online-adaptation guard; offline epochs over
    // a whole corpus run unclipped.
    let adam = crate::adam::AdamConfig { clip_norm: None, ..cfg.adam };

    let mut report = PretrainReport {
        stream_losses: vec![None; streams.len()],
        frames_trained: 0,
        updates_skipped: 0,
    };
    for &idx in &order {
        let stream = &streams[idx];
        let frames = stream.len() / cfg.frame_len;
        if frames == 0 {
            continue;
        }
        let mut history = SampleHistory::for_config(cfg);
        let mut loss_acc = 0.0;
        let mut loss_count = 0usize;
        for f in 0..frames {
            let frame = &stream[f * cfg.frame_len..(f + 1) * cfg.frame_len];
            let batch = build_batch(&history, frame, cfg);
            let outcome = train_passes(net, opt, &batch, &adam, 1);
            if let Some(&loss) = outcome.pass_losses.first() {
                loss_acc += loss;
                loss_count += 1;
            }
            report.frames_trained += 1;
            report.updates_skipped += outcome.skipped_updates;
            history.push_frame(frame);
        }
        if loss_count > 0 {
            report.stream_losses[idx] = Some(loss_acc / loss_count as f64);
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::network_forward;
    use crate::synth;

    fn small_cfg() -> PredictorConfig {
        PredictorConfig {
            frame_len: 4,
            window_len: 3,
            time_steps: 5,
            hidden: 6,
            num_layers: 1,
            passes: 3,
            seed: 9,
            ..PredictorConfig::default()
        }
    }

    #[test]
    fn history_reads_zero_before_signal_start() {
        let mut h = SampleHistory::<f64>::new(8);
        assert_eq!(h.next_index(), 0);
        assert_eq!(h.get(-1), 0.0);
        assert_eq!(h.get(-100), 0.0);
        h.push_frame(&[1.0, 2.0, 3.0]);
        assert_eq!(h.next_index(), 3);
        assert_eq!(h.get(0), 1.0);
        assert_eq!(h.get(2), 3.0);
    }

    #[test]
    fn history_ring_keeps_the_most_recent_capacity_samples() {
        let mut h = SampleHistory::<f64>::new(4);
        for chunk in 0..5 {
            let base = chunk as f64 * 3.0;
            h.push_frame(&[base, base + 1.0, base + 2.0]);
        }
        // Sample at absolute index i was pushed with value i.
        assert_eq!(h.next_index(), 15);
        for idx in 11..15 {
            assert_eq!(h.get(idx), idx as f64, "idx {idx}");
        }
    }

    /// Encoded-value oracle: absolute sample index i carries the value
    /// (i+1)/10000, so any misplaced window cell is caught exactly.
    fn encoded(idx: i64) -> f64 {
        if idx < 0 {
            0.0
        } else {
            (idx + 1) as f64 / 10000.0
        }
    }

    fn check_batch_geometry(cfg: &PredictorConfig, frames_before: usize) {
        let n = cfg.frame_len;
        let mut history = SampleHistory::for_config(cfg);
        for f in 0..frames_before {
            let frame: Vec<f64> = (0..n).map(|j| encoded((f * n + j) as i64)).collect();
            history.push_frame(&frame);
        }
        let n0 = history.next_index();
        let frame: Vec<f64> = (0..n).map(|j| encoded(n0 + j as i64)).collect();
        let batch = build_batch(&history, &frame, cfg);

        assert_eq!(batch.num_steps(), cfg.time_steps);
        assert_eq!(batch.num_sequences(), n);
        let (l, t_steps) = (cfg.window_len as i64, cfg.time_steps as i64);
        for j in 0..n {
            let target = n0 + j as i64;
            for t in 1..=t_steps {
                let window = batch.window(j, (t - 1) as usize);
                for (u, &got) in window.iter().enumerate() {
                    let want = encoded(target - l - t_steps + t + u as i64);
                    assert_eq!(
                        got, want,
                        "cfg N={} L={} T={}, phase {frames_before}, seq {j}, step {t}, cell {u}",
                        n, cfg.window_len, cfg.time_steps
                    );
                }
            }
            // Final window must end one sample before the target.
            let last = batch.window(j, cfg.time_steps - 1);
            assert_eq!(last[cfg.window_len - 1], encoded(target - 1));
            // Supervision mask: only the final step, carrying the target.
            for t in 0..cfg.time_steps - 1 {
                assert_eq!(batch.targets[j][t], None);
            }
            assert_eq!(batch.targets[j][cfg.time_steps - 1], Some(encoded(target)));
        }
    }

    #[test]
    fn batch_geometry_exhaustive_over_small_dimensions() {
        for n in 1..=4 {
            for l in 1..=4 {
                for t in 1..=4 {
                    let cfg = PredictorConfig {
                        frame_len: n,
                        window_len: l,
                        time_steps: t,
                        ..PredictorConfig::default()
                    };
                    check_batch_geometry(&cfg, 0);
                    check_batch_geometry(&cfg, 3);
                }
            }
        }
    }

    #[test]
    fn batch_hand_case_two_sequences() {
        // N=2, L=3, T=2, frame at n0=6 after pushing samples 0..6.
        // Consecutive steps slide the window by one sample. The sequence
        // for target 6 runs windows over indices {2,3,4} then {3,4,5}; the
        // sequence for target 7 runs {3,4,5} then {4,5,6}, whose final
        // window already contains the frame's own first sample.
        let cfg = PredictorConfig {
            frame_len: 2,
            window_len: 3,
            time_steps: 2,
            ..PredictorConfig::default()
        };
        let mut history = SampleHistory::for_config(&cfg);
        history.push_frame(&(0..6).map(encoded).collect::<Vec<_>>());
        let frame = [encoded(6), encoded(7)];
        let batch = build_batch(&history, &frame, &cfg);

        assert_eq!(batch.window(0, 0), &[encoded(2), encoded(3), encoded(4)]);
        assert_eq!(batch.window(0, 1), &[encoded(3), encoded(4), encoded(5)]);
        assert_eq!(batch.window(1, 0), &[encoded(3), encoded(4), encoded(5)]);
        assert_eq!(batch.window(1, 1), &[encoded(4), encoded(5), encoded(6)]);
        assert_eq!(batch.targets[0], vec![None, Some(encoded(6))]);
        assert_eq!(batch.targets[1], vec![None, Some(encoded(7))]);
    }

    #[test]
    fn all_steps_supervision_targets_every_window() {
        let cfg = PredictorConfig {
            frame_len: 2,
            window_len: 2,
            time_steps: 3,
            supervision: Supervision::AllSteps,
            ..PredictorConfig::default()
        };
        let mut history = SampleHistory::for_config(&cfg);
        history.push_frame(&(0..4).map(encoded).collect::<Vec<_>>());
        let frame = [encoded(4), encoded(5)];
        let batch = build_batch(&history, &frame, &cfg);
        // Sequence 0 targets samples 2,3,4; sequence 1 targets 3,4,5.
        assert_eq!(batch.targets[0], vec![Some(encoded(2)), Some(encoded(3)), Some(encoded(4))]);
        assert_eq!(batch.targets[1], vec![Some(encoded(3)), Some(encoded(4)), Some(encoded(5))]);
    }

    #[test]
    fn online_training_fits_a_repeated_frame() {
        let adam = AdamConfig { alpha: 5e-3, ..AdamConfig::default() };
        let cfg = PredictorConfig { passes: 60, adam, ..small_cfg() };
        let mut net = cfg.build_network::<f64>().unwrap();
        let mut opt = AdamState::new(&net);
        let mut history = SampleHistory::for_config(&cfg);
        let wave = synth::sine::<f64>(500.0, 0.5, 8000, 64, 0.0);
        for f in 0..8 {
            history.push_frame(&wave[f * 4..(f + 1) * 4]);
        }
        let frame = &wave[32..36];
        let batch = build_batch(&history, frame, &cfg);
        let outcome = train_on_frame(&mut net, &mut opt, &batch, &cfg);
        assert_eq!(outcome.pass_losses.len(), 60);
        assert!(!outcome.aborted_nonfinite);
        let first = outcome.pass_losses[0];
        let last = *outcome.pass_losses.last().unwrap();
        assert!(last < first * 0.5, "loss should drop while fitting one batch: {first} -> {last}");
    }

    #[test]
    fn zero_passes_touch_nothing() {
        let cfg = PredictorConfig { passes: 0, ..small_cfg() };
        let mut net = cfg.build_network::<f64>().unwrap();
        let before = net.flatten();
        let mut opt = AdamState::new(&net);
        let history = SampleHistory::for_config(&cfg);
        let batch = build_batch(&history, &[0.1, 0.2, 0.3, 0.4], &cfg);
        let outcome = train_on_frame(&mut net, &mut opt, &batch, &cfg);
        assert!(outcome.pass_losses.is_empty());
        assert_eq!(net.flatten(), before, "P=0 must leave parameters bit-identical");
        assert_eq!(opt.t, 0);
    }

    #[test]
    fn non_finite_loss_aborts_and_preserves_parameters() {
        let cfg = small_cfg();
        let mut net = cfg.build_network::<f64>().unwrap();
        let mut opt = AdamState::new(&net);
        let history = SampleHistory::for_config(&cfg);
        let mut batch = build_batch(&history, &[0.1, 0.2, 0.3, 0.4], &cfg);
        batch.targets[1][cfg.time_steps - 1] = Some(f64::NAN);
        let before = net.flatten();
        let outcome = train_on_frame(&mut net, &mut opt, &batch, &cfg);
        assert!(outcome.aborted_nonfinite);
        assert!(outcome.pass_losses.is_empty());
        assert_eq!(net.flatten(), before);
    }

    #[test]
    fn first_rollout_step_equals_forward_pass_prediction() {
        // The warm-up plus first rollout step must reproduce exactly the
        // final-step prediction of a forward pass over the same windows.
        let cfg = small_cfg();
        let net = cfg.build_network::<f64>().unwrap();
        let mut history = SampleHistory::for_config(&cfg);
        let wave = synth::speech_like::<f64>(3, 8000, 64);
        for f in 0..16 {
            history.push_frame(&wave[f * 4..(f + 1) * 4]);
        }
        let n0 = history.next_index();
        let (l, t) = (cfg.window_len as i64, cfg.time_steps as i64);
        let windows: Vec<Vec<f64>> = (1..=t)
            .map(|step| {
                (0..l).map(|u| history.get(n0 - l - t + step + u)).collect()
            })
            .collect();
        let (preds, _) = network_forward(&net, &windows);
        let expect = preds[cfg.time_steps - 1].clamp(-1.0, 1.0);

        let (frame, _) = predict_frame(&net, &history, &cfg, None);
        assert_eq!(frame[0].to_bits(), expect.to_bits());
    }

    #[test]
    fn carried_rollout_equals_one_long_rollout() {
        // Two consecutive lost frames with carried state must produce the
        // same samples as a single rollout of double length.
        let cfg = small_cfg();
        let net = cfg.build_network::<f64>().unwrap();
        let mut history = SampleHistory::for_config(&cfg);
        let wave = synth::speech_like::<f64>(4, 8000, 64);
        for f in 0..16 {
            history.push_frame(&wave[f * 4..(f + 1) * 4]);
        }

        let double = PredictorConfig { frame_len: 8, ..cfg.clone() };
        let (long, _) = predict_frame(&net, &history, &double, None);

        let (first, state) = predict_frame(&net, &history, &cfg, None);
        let mut history2 = history.clone();
        history2.push_frame(&first);
        let (second, _) = predict_frame(&net, &history2, &cfg, Some(state));

        let joined: Vec<f64> = first.into_iter().chain(second).collect();
        assert_eq!(joined.len(), long.len());
        for (a, b) in joined.iter().zip(&long) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn fresh_mode_ignores_carried_state() {
        let cfg = PredictorConfig { rollout: RolloutMode::Fresh, ..small_cfg() };
        let net = cfg.build_network::<f64>().unwrap();
        let mut history = SampleHistory::for_config(&cfg);
        history.push_frame(&synth::sine::<f64>(300.0, 0.4, 8000, 16, 0.2));
        let (a, state) = predict_frame(&net, &history, &cfg, None);
        let (b, _) = predict_frame(&net, &history, &cfg, Some(state));
        assert_eq!(a, b, "fresh mode must not depend on carried state");
    }

    #[test]
    fn rollout_clamps_to_unit_range() {
        let cfg = small_cfg();
        let mut net = cfg.build_network::<f64>().unwrap();
        // Force a huge positive head so raw outputs exceed 1.
        net.b_out = 50.0;
        let mut history = SampleHistory::for_config(&cfg);
        history.push_frame(&vec![0.5; 16]);
        let (frame, _) = predict_frame(&net, &history, &cfg, None);
        assert!(frame.iter().all(|&x| x == 1.0), "all samples should clamp to 1, got {frame:?}");
    }

    #[test]
    fn pretrain_is_deterministic_and_reports_per_stream() {
        let cfg = PredictorConfig { passes: 1, ..small_cfg() };
        let streams: Vec<Vec<f64>> = (0..4)
            .map(|i| synth::speech_like::<f64>(i as u64 + 10, 8000, 40 + i * 8))
            .collect();
        let run = |cfg: &PredictorConfig| {
            let mut net = cfg.build_network::<f64>().unwrap();
            let mut opt = AdamState::new(&net);
            let report = pretrain(&mut net, &mut opt, &streams, cfg);
            (net.flatten(), report)
        };
        let (params1, report1) = run(&cfg);
        let (params2, _) = run(&cfg);
        assert_eq!(params1, params2, "same seed, same corpus, same parameters");
        assert_eq!(report1.stream_losses.len(), 4);
        assert!(report1.stream_losses.iter().all(|l| l.is_some()));
        assert_eq!(report1.frames_trained, (40 / 4) + (48 / 4) + (56 / 4) + (64 / 4));

        let shuffled = PredictorConfig { seed: cfg.seed + 1, ..cfg.clone() };
        let (params3, _) = run(&shuffled);
        assert_ne!(params1, params3, "seed change must change the outcome");
    }

    #[test]
    fn pretrain_skips_streams_shorter_than_one_frame() {
        let cfg = small_cfg();
        let mut net = cfg.build_network::<f64>().unwrap();
        let mut opt = AdamState::new(&net);
        let streams = vec![vec![0.1, 0.2], synth::sine::<f64>(200.0, 0.3, 8000, 12, 0.0)];
        let report = pretrain(&mut net, &mut opt, &streams, &cfg);
        assert_eq!(report.stream_losses[0], None);
        assert!(report.stream_losses[1].is_some());
        assert_eq!(report.frames_trained, 3);
    }

    #[test]
    fn config_validation() {
        assert!(PredictorConfig::default().validate().is_ok());
        assert!(PredictorConfig { frame_len: 0, ..PredictorConfig::default() }.validate().is_err());
        assert!(PredictorConfig { hidden: 0, ..PredictorConfig::default() }.validate().is_err());
        assert!(PredictorConfig { init_bound: 0.0, ..PredictorConfig::default() }.validate().is_err());
    }
}
