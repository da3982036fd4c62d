//! The concealment loop: copy received frames, synthesize lost ones.
//!
//! A [`PlcSession`] owns the model, the optimizer, and the sample history.
//! Every received frame is first used for online training (the frame only
//! enters the history afterwards, so training targets are never stale) and
//! then passed through unchanged. Every lost frame is synthesized by the
//! autoregressive rollout, and the synthesized samples enter the history as
//! if they had been received, so the session keeps running through long
//! loss bursts. Processing a stream involves no randomness: with the same
//! configuration, seed, and input, the output is identical bit for bit.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::adam::AdamState;
use crate::lstm::NetworkParams;
use crate::numerics::{mix_seed, Scalar, SeededRng};
use crate::predictor::{
    build_batch, predict_frame, train_on_frame, PredictorConfig, RolloutState, SampleHistory,
};
use crate::{PlcError, Result};

/// A framed signal with per-frame availability flags.
#[derive(Clone, Debug)]
pub struct FrameStream<S> {
    samples: Vec<S>,
    frame_len: usize,
    availability: Vec<bool>,
    sample_rate: u32,
}

impl<S: Scalar> FrameStream<S> {
    /// Wraps samples (length must be a whole number of frames) with every
    /// frame marked available.
    pub fn from_samples(samples: &[S], frame_len: usize, sample_rate: u32) -> Self {
        assert!(frame_len > 0, "frame_len must be positive");
        assert_eq!(
            samples.len() % frame_len,
            0,
            "sample count {} is not a whole number of {frame_len}-sample frames",
            samples.len()
        );
        let frames = samples.len() / frame_len;
        FrameStream {
            samples: samples.to_vec(),
            frame_len,
            availability: vec![true; frames],
            sample_rate,
        }
    }

    /// Replaces the availability flags (true = received).
    pub fn with_availability(mut self, availability: &[bool]) -> Self {
        assert_eq!(availability.len(), self.num_frames(), "one flag per frame");
        self.availability = availability.to_vec();
        self
    }

    pub fn num_frames(&self) -> usize {
        self.availability.len()
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn frame(&self, i: usize) -> &[S] {
        &self.samples[i * self.frame_len..(i + 1) * self.frame_len]
    }

    pub fn availability(&self) -> &[bool] {
        &self.availability
    }

    /// The full clean signal, regardless of availability.
    pub fn reference(&self) -> &[S] {
        &self.samples
    }

    pub fn lost_frames(&self) -> usize {
        self.availability.iter().filter(|&&a| !a).count()
    }
}

/// How loss positions are chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// Deterministic, evenly spaced: with period p = round(1/rate), the
    /// last frame of each period is lost.
    #[default]
    Even,
    /// Independent Bernoulli(rate) per frame, from the seed.
    Random,
}

impl std::fmt::Display for LossMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossMode::Even => "even",
            LossMode::Random => "random",
        })
    }
}

const LOSS_SALT: u64 = 0x4C4F5353; // "LOSS"

/// Availability flags (true = received) for `num_frames` frames at the
/// given loss rate. Frame 0 is never lost, whatever the mode or rate; the
/// concealer needs at least one frame of history to say anything.
pub fn generate_loss_pattern(num_frames: usize, rate: f64, mode: LossMode, seed: u64) -> Vec<bool> {
    assert!((0.0..=1.0).contains(&rate), "loss rate must be in [0, 1], got {rate}");
    match mode {
        LossMode::Even => even_loss_pattern(num_frames, rate, 0),
        LossMode::Random => {
            let mut rng = SeededRng::new(mix_seed(seed, LOSS_SALT));
            (0..num_frames).map(|i| i == 0 || !rng.chance(rate)).collect()
        }
    }
}

/// Evenly spaced pattern with an explicit phase. With period p =
/// round(1/rate), the lost frames sit at p-1, 2p-1, ... shifted earlier by
/// `phase_offset` frames (modulo the period). Frame 0 stays available.
pub fn even_loss_pattern(num_frames: usize, rate: f64, phase_offset: usize) -> Vec<bool> {
    assert!((0.0..=1.0).contains(&rate), "loss rate must be in [0, 1], got {rate}");
    if rate == 0.0 {
        return vec![true; num_frames];
    }
    let period = (1.0 / rate).round().max(1.0) as usize;
    let phase = phase_offset % period;
    (0..num_frames)
        .map(|i| {
            if i == 0 {
                return true;
            }
            (i + 1 + phase) % period != 0
        })
        .collect()
}

/// Per-frame processing record, one JSON object per line in frame logs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FrameRecord {
    pub index: usize,
    pub lost: bool,
    /// Completed training passes (0 for lost frames).
    pub train_passes: usize,
    /// Masked MSE at the first and last completed pass.
    pub first_pass_loss: Option<f64>,
    pub last_pass_loss: Option<f64>,
    pub aborted_nonfinite: bool,
    pub skipped_updates: usize,
    pub output_rms: f64,
    /// Wall time spent on this frame.
    pub micros: u64,
}

/// Online concealment session.
pub struct PlcSession<S: Scalar> {
    pub net: NetworkParams<S>,
    pub opt: AdamState<S>,
    pub cfg: PredictorConfig,
    history: SampleHistory<S>,
    carried: Option<RolloutState<S>>,
    frame_log: Vec<FrameRecord>,
    frames_processed: usize,
}

impl<S: Scalar> PlcSession<S> {
    /// Fresh session with a seeded random network.
    pub fn new(cfg: PredictorConfig) -> Result<Self> {
        let net = cfg.build_network()?;
        Ok(Self::assemble(cfg, net, None))
    }

    /// Session around an existing network (typically from a checkpoint).
    /// The optimizer starts fresh unless one is supplied: online adaptation
    /// after pretraining begins with clean Adam moments.
    pub fn with_network(cfg: PredictorConfig, net: NetworkParams<S>, opt: Option<AdamState<S>>) -> Result<Self> {
        cfg.validate()?;
        if !cfg.matches_network(&net) {
            return Err(PlcError::Config(format!(
                "network shape (window {}, hidden {}, layers {}) does not match the configuration \
                 (window {}, hidden {}, layers {})",
                net.window_len(),
                net.hidden(),
                net.num_layers(),
                cfg.window_len,
                cfg.hidden,
                cfg.num_layers
            )));
        }
        Ok(Self::assemble(cfg, net, opt))
    }

    fn assemble(cfg: PredictorConfig, net: NetworkParams<S>, opt: Option<AdamState<S>>) -> Self {
        let opt = opt.unwrap_or_else(|| AdamState::new(&net));
        let history = SampleHistory::for_config(&cfg);
        PlcSession { net, opt, cfg, history, carried: None, frame_log: Vec::new(), frames_processed: 0 }
    }

    /// Processes one frame: `Some` is a received frame (train, then copy
    /// through), `None` a lost one (synthesize). Returns the output frame.
    pub fn process_frame(&mut self, frame: Option<&[S]>) -> Vec<S> {
        let start = Instant::now();
        let index = self.frames_processed;
        self.frames_processed += 1;

        let (out, record) = match frame {
            Some(frame) => {
                assert_eq!(frame.len(), self.cfg.frame_len, "frame length must match the configuration");
                let batch = build_batch(&self.history, frame, &self.cfg);
                let outcome = train_on_frame(&mut self.net, &mut self.opt, &batch, &self.cfg);
                self.history.push_frame(frame);
                self.carried = None;
                let record = FrameRecord {
                    index,
                    lost: false,
                    train_passes: outcome.pass_losses.len(),
                    first_pass_loss: outcome.pass_losses.first().copied(),
                    last_pass_loss: outcome.pass_losses.last().copied(),
                    aborted_nonfinite: outcome.aborted_nonfinite,
                    skipped_updates: outcome.skipped_updates,
                    output_rms: rms(frame),
                    micros: 0,
                };
                (frame.to_vec(), record)
            }
            None => {
                let (synth, state) = predict_frame(&self.net, &self.history, &self.cfg, self.carried.take());
                self.history.push_frame(&synth);
                self.carried = Some(state);
                let record = FrameRecord {
                    index,
                    lost: true,
                    train_passes: 0,
                    first_pass_loss: None,
                    last_pass_loss: None,
                    aborted_nonfinite: false,
                    skipped_updates: 0,
                    output_rms: rms(&synth),
                    micros: 0,
                };
                (synth, record)
            }
        };

        let mut record = record;
        record.micros = start.elapsed().as_micros() as u64;
        self.frame_log.push(record);
        out
    }

    /// Runs a whole stream through the session and returns the output
    /// signal (same length as the input).
    pub fn process_stream(&mut self, stream: &FrameStream<S>) -> Vec<S> {
        let mut out = Vec::with_capacity(stream.num_frames() * stream.frame_len());
        for i in 0..stream.num_frames() {
            let frame = stream.availability()[i].then(|| stream.frame(i));
            out.extend_from_slice(&self.process_frame(frame));
        }
        out
    }

    pub fn frame_log(&self) -> &[FrameRecord] {
        &self.frame_log
    }

    pub fn take_frame_log(&mut self) -> Vec<FrameRecord> {
        std::mem::take(&mut self.frame_log)
    }
}

fn rms<S: Scalar>(samples: &[S]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let acc: f64 = samples.iter().map(|&x| x.to_f64_lossy().powi(2)).sum();
    (acc / samples.len() as f64).sqrt()
}
