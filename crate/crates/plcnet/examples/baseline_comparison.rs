//! Compares the online LSTM concealer against silence substitution and
//! pitch-repeat extrapolation on a synthetic speech-like signal.
//!
//! ```sh
//! cargo run --release --example baseline_comparison
//! ```

use plcnet::engine::{generate_loss_pattern, FrameStream, LossMode, PlcSession};
use plcnet::eval::{lost_frame_metrics, periodic_extrapolation, zero_fill, PeriodicConfig};
use plcnet::predictor::PredictorConfig;
use plcnet::synth;

fn main() {
    let sample_rate = 8000;
    let frame_len = 80;
    let frames = 250; // 2.5 s

    let cfg = PredictorConfig {
        frame_len,
        window_len: 40,
        time_steps: 40,
        hidden: 40,
        passes: 8,
        seed: 2,
        ..PredictorConfig::default()
    };

    let samples = synth::speech_like::<f32>(17, sample_rate, frames * frame_len);
    let pattern = generate_loss_pattern(frames, 0.1, LossMode::Even, 0);
    let stream = FrameStream::from_samples(&samples, frame_len, sample_rate).with_availability(&pattern);

    let lstm_out = PlcSession::<f32>::new(cfg).unwrap().process_stream(&stream);
    let zero_out = zero_fill(&stream);
    let periodic_out = periodic_extrapolation(&stream, &PeriodicConfig::default());

    println!("synthetic speech, 2.5 s, 10% even loss\n");
    println!("{:<22} {:>12} {:>12}", "method", "mean mse", "seg snr");
    for (name, out) in [
        ("zero fill", &zero_out),
        ("pitch repetition", &periodic_out),
        ("online lstm", &lstm_out),
    ] {
        let r = lost_frame_metrics(stream.reference(), out, stream.availability(), frame_len);
        println!(
            "{:<22} {:>12.4e} {:>9.2} dB",
            name,
            r.mean_mse.unwrap(),
            r.seg_snr_db.unwrap()
        );
    }
}
