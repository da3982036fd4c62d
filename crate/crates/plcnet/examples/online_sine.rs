//! Conceals periodic losses in a sinusoid with a fully online model (no
//! pretraining) and shows the quality climbing as the model adapts.
//!
//! ```sh
//! cargo run --release --example online_sine
//! ```

use plcnet::engine::{generate_loss_pattern, FrameStream, LossMode, PlcSession};
use plcnet::eval::lost_frame_metrics;
use plcnet::predictor::PredictorConfig;
use plcnet::synth;

fn main() {
    let sample_rate = 8000;
    let frame_len = 80;
    let seconds = 3;
    let frames = seconds * sample_rate as usize / frame_len;

    let cfg = PredictorConfig {
        frame_len,
        window_len: 40,
        time_steps: 40,
        hidden: 40,
        passes: 8,
        seed: 1,
        ..PredictorConfig::default()
    };

    let samples = synth::sine::<f32>(200.0, 0.4, sample_rate, frames * frame_len, 0.0);
    let pattern = generate_loss_pattern(frames, 0.1, LossMode::Even, cfg.seed);
    let stream = FrameStream::from_samples(&samples, frame_len, sample_rate).with_availability(&pattern);

    println!("200 Hz sine, {seconds} s, 10% even loss, no pretraining");
    println!("config: H={} L={} T={} P={}", cfg.hidden, cfg.window_len, cfg.time_steps, cfg.passes);

    let mut session = PlcSession::<f32>::new(cfg).unwrap();
    let output = session.process_stream(&stream);
    let report = lost_frame_metrics(stream.reference(), &output, stream.availability(), frame_len);

    println!("\n per lost frame:");
    for f in &report.per_frame {
        let t_ms = f.index * frame_len * 1000 / sample_rate as usize;
        let snr = f.snr_db.map_or("  n/a".into(), |s| format!("{s:5.1}"));
        println!("  frame {:3} ({t_ms:4} ms)  snr {snr} dB", f.index);
    }
    println!(
        "\noverall: {} lost frames, mean mse {:.3e}, seg snr {:.2} dB",
        report.lost_frames,
        report.mean_mse.unwrap(),
        report.seg_snr_db.unwrap()
    );

    let early: Vec<f64> = report.per_frame.iter().take(3).filter_map(|f| f.snr_db).collect();
    let late: Vec<f64> = report.per_frame.iter().rev().take(3).filter_map(|f| f.snr_db).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    println!(
        "first three losses average {:.1} dB, last three {:.1} dB",
        mean(&early),
        mean(&late)
    );
}
