//! Round-trips a signal through WAV files: synthesize, write, read back,
//! conceal simulated loss, and write both the concealed result and the
//! reference for external listening or scoring.
//!
//! ```sh
//! cargo run --release --example conceal_file
//! ```

use plcnet::engine::{generate_loss_pattern, LossMode, PlcSession};
use plcnet::eval::lost_frame_metrics;
use plcnet::predictor::PredictorConfig;
use plcnet::synth;
use plcnet::wav::{read_wav, segment_frames, write_wav, AudioBuffer};

fn main() {
    let dir = std::env::temp_dir().join("plcnet_example");
    std::fs::create_dir_all(&dir).unwrap();
    let input_path = dir.join("input.wav");
    let out_path = dir.join("concealed.wav");
    let ref_path = dir.join("reference.wav");

    let sample_rate = 8000;
    let samples = synth::speech_like::<f32>(42, sample_rate, 16010);
    write_wav(&AudioBuffer { samples, sample_rate }, &input_path).unwrap();
    println!("wrote {}", input_path.display());

    let cfg = PredictorConfig {
        frame_len: 80,
        window_len: 40,
        time_steps: 40,
        hidden: 40,
        passes: 8,
        seed: 3,
        ..PredictorConfig::default()
    };

    let buf = read_wav::<f32>(&input_path).unwrap();
    let (stream, dropped) = segment_frames(&buf, cfg.frame_len);
    println!(
        "read {} samples at {} Hz -> {} frames ({} trailing samples dropped)",
        buf.samples.len(),
        buf.sample_rate,
        stream.num_frames(),
        dropped
    );

    let pattern = generate_loss_pattern(stream.num_frames(), 0.1, LossMode::Random, 7);
    let stream = stream.with_availability(&pattern);
    println!("random loss: {} of {} frames", stream.lost_frames(), stream.num_frames());

    let mut session = PlcSession::<f32>::new(cfg.clone()).unwrap();
    let output = session.process_stream(&stream);

    write_wav(&AudioBuffer { samples: output.clone(), sample_rate }, &out_path).unwrap();
    write_wav(&AudioBuffer { samples: stream.reference().to_vec(), sample_rate }, &ref_path).unwrap();

    let report = lost_frame_metrics(stream.reference(), &output, stream.availability(), cfg.frame_len);
    println!(
        "mean mse {:.4e}, seg snr {:.2} dB over {} lost frames",
        report.mean_mse.unwrap(),
        report.seg_snr_db.unwrap(),
        report.lost_frames
    );
    println!("concealed: {}", out_path.display());
    println!("reference: {}", ref_path.display());
}
