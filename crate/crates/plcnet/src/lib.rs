//! Packet loss concealment driven by an online-adaptive LSTM sample predictor.
//!
//! The predictor is a small stack of vanilla LSTM layers that reads raw
//! speech samples through a sliding window and emits the next sample from a
//! linear head. It is trained with plain BPTT and Adam. The twist is *when*
//! training happens: besides an optional offline pretraining epoch, the model
//! keeps training online, on every frame that arrives intact, so it tracks
//! the speaker and signal characteristics of the current call. When a frame
//! is lost, the model free-runs: each predicted sample is fed back into the
//! input window to synthesize the missing frame.
//!
//! The crate is organized as a library plus a thin `plcnet` binary. The
//! `examples/` directory is the guided tour; the binary exposes the same
//! functionality as `pretrain`, `conceal`, and `sweep` subcommands.
//!
//! ```
//! use plcnet::predictor::PredictorConfig;
//! use plcnet::engine::{self, PlcSession};
//! use plcnet::eval;
//!
//! // Tiny configuration so the doctest stays fast.
//! let cfg = PredictorConfig {
//!     frame_len: 16,
//!     window_len: 8,
//!     time_steps: 12,
//!     hidden: 8,
//!     passes: 2,
//!     ..PredictorConfig::default()
//! };
//! let samples = plcnet::synth::sine::<f32>(200.0, 0.4, 8000, 16 * 40, 0.0);
//! let pattern = engine::generate_loss_pattern(40, 0.1, engine::LossMode::Even, cfg.seed);
//! let stream = engine::FrameStream::from_samples(&samples, 16, 8000).with_availability(&pattern);
//!
//! let mut session = PlcSession::<f32>::new(cfg).unwrap();
//! let output = session.process_stream(&stream);
//! let report = eval::lost_frame_metrics(stream.reference(), &output, stream.availability(), 16);
//! assert_eq!(report.lost_frames, 4);
//! ```

pub mod adam;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod engine;
mod error;
pub mod eval;
pub mod lstm;
pub mod numerics;
pub mod predictor;
pub mod sweep;
pub mod synth;
pub mod wav;

pub use error::{PlcError, Result};
pub use numerics::{Matrix, Scalar, SeededRng};
